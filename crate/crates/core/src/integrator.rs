//! Time stepping for second-order semi-discrete systems `q' = p`,
//! `p' = E(q) + L(q) p`, where `E` collects the explicit forces and `L(q)` is
//! a tridiagonal operator acting on the interior unknowns.
//!
//! The nonlinear scheme and the linearised problem both implement
//! [`SplitSystem`], so they share the stepping and run loop below.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheme::{BackgroundGrid, BoundaryAnchor, LagrangianState, NonlinearSystem, Tridiagonal};

/// Maximum number of dt halvings after a singular implicit solve.
pub const MAX_RETRIES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ExplicitRk4,
    ImexBe,
    ImexCn,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit_rk4" => Ok(Mode::ExplicitRk4),
            "imex_be" => Ok(Mode::ImexBe),
            "imex_cn" => Ok(Mode::ImexCn),
            other => Err(Error::Config(format!(
                "unknown step mode {other:?} (expected explicit_rk4, imex_be or imex_cn)"
            ))),
        }
    }
}

/// Fixed step or `dt = min(max, cfl h/(4 max|v| + 1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeStep {
    Fixed(f64),
    Adaptive { max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPolicy {
    pub mode: Mode,
    pub dt: TimeStep,
    pub cfl_safety: f64,
    pub t_end: f64,
    pub max_steps: usize,
    /// Runs stop once the monitored functional exceeds
    /// `blowup_factor * initial + 1`.
    pub blowup_factor: f64,
    /// Replace the first Crank-Nicolson step by two backward-Euler half steps.
    pub damped_start: bool,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self {
            mode: Mode::ImexCn,
            dt: TimeStep::Adaptive { max: 1e-3 },
            cfl_safety: 1.0,
            t_end: 0.0,
            max_steps: usize::MAX,
            blowup_factor: 1e4,
            damped_start: true,
        }
    }
}

impl StepPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::Config(format!("cfl_safety must lie in (0, 1], got {}", self.cfl_safety)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be finite and >= 0, got {}", self.t_end)));
        }
        match self.dt {
            TimeStep::Fixed(dt) | TimeStep::Adaptive { max: dt } if !(dt > 0.0 && dt.is_finite()) => {
                Err(Error::Config(format!("time step must be positive, got {dt}")))
            }
            _ => Ok(()),
        }
    }
}

/// Positions (or their linear analogue) and velocities at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitState {
    pub t: f64,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

pub trait SplitSystem {
    /// Number of nodes, including the centre and the slaved boundary node.
    fn nodes(&self) -> usize;

    fn grid_spacing(&self) -> f64;

    /// Largest stable step of the fully explicit scheme.
    fn explicit_dt_limit(&self) -> f64;

    /// Explicit forces on nodes `1..nodes-1`; the end entries are ignored.
    fn explicit_accel(&self, q: &[f64], out: &mut [f64]) -> Result<()>;

    /// The operator `L(q)` on the interior unknowns.
    fn implicit_operator(&self, q: &[f64], op: &mut Tridiagonal) -> Result<()>;

    /// Sets the centre and boundary entries from the interior ones.
    fn close(&self, q: &mut [f64], p: &mut [f64]) -> Result<()>;

    /// Validates a configuration before it is accepted.
    fn check(&self, _q: &[f64]) -> Result<()> {
        Ok(())
    }

    /// Functional watched for blow-up.
    fn monitor(&self, q: &[f64], p: &[f64], accel: &[f64]) -> f64;

    /// Time derivative of the boundary velocity.
    fn boundary_rate(&self, _q: &[f64], _p: &[f64], accel: &[f64]) -> f64 {
        accel[self.nodes() - 2]
    }

    /// Speed entering the velocity CFL bound.
    fn speed(&self, _q: &[f64], p: &[f64]) -> f64 {
        p.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Full acceleration `E(q) + L(q) p` with zero end entries.
pub fn acceleration<S: SplitSystem + ?Sized>(sys: &S, q: &[f64], p: &[f64]) -> Result<Vec<f64>> {
    let n = sys.nodes();
    let mut a = vec![0.0; n];
    sys.explicit_accel(q, &mut a)?;
    let mut op = Tridiagonal::default();
    sys.implicit_operator(q, &mut op)?;
    let mut lp = vec![0.0; n - 2];
    op.apply(&p[1..n - 1], &mut lp);
    for i in 1..n - 1 {
        a[i] += lp[i - 1];
    }
    a[0] = 0.0;
    a[n - 1] = 0.0;
    Ok(a)
}

fn singular(t: f64) -> Error {
    Error::StepFailure { t, reason: "singular implicit system".into() }
}

fn finite_or_fail(t: f64, q: &[f64], p: &[f64]) -> Result<()> {
    if q.iter().chain(p).all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::StepFailure { t, reason: "non-finite state".into() })
    }
}

fn rk4<S: SplitSystem + ?Sized>(sys: &S, s: &SplitState, dt: f64) -> Result<SplitState> {
    let n = sys.nodes();
    let stage = |q: &[f64], p: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
        let a = acceleration(sys, q, p)?;
        Ok((p.to_vec(), a))
    };
    let shift = |base: &SplitState, k: &(Vec<f64>, Vec<f64>), c: f64| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut q = base.q.clone();
        let mut p = base.p.clone();
        for i in 1..n - 1 {
            q[i] += c * k.0[i];
            p[i] += c * k.1[i];
        }
        sys.close(&mut q, &mut p)?;
        Ok((q, p))
    };
    let k1 = stage(&s.q, &s.p)?;
    let y2 = shift(s, &k1, 0.5 * dt)?;
    let k2 = stage(&y2.0, &y2.1)?;
    let y3 = shift(s, &k2, 0.5 * dt)?;
    let k3 = stage(&y3.0, &y3.1)?;
    let y4 = shift(s, &k3, dt)?;
    let k4 = stage(&y4.0, &y4.1)?;
    let mut q = s.q.clone();
    let mut p = s.p.clone();
    for i in 1..n - 1 {
        q[i] += dt / 6.0 * (k1.0[i] + 2.0 * k2.0[i] + 2.0 * k3.0[i] + k4.0[i]);
        p[i] += dt / 6.0 * (k1.1[i] + 2.0 * k2.1[i] + 2.0 * k3.1[i] + k4.1[i]);
    }
    sys.close(&mut q, &mut p)?;
    Ok(SplitState { t: s.t + dt, q, p })
}

fn backward_euler<S: SplitSystem + ?Sized>(sys: &S, s: &SplitState, dt: f64) -> Result<SplitState> {
    let n = sys.nodes();
    let m = n - 2;
    let mut e = vec![0.0; n];
    sys.explicit_accel(&s.q, &mut e)?;
    let mut op = Tridiagonal::default();
    sys.implicit_operator(&s.q, &mut op)?;
    let b: Vec<f64> = (1..n - 1).map(|i| s.p[i] + dt * e[i]).collect();
    let mut x = vec![0.0; m];
    op.solve_shifted(dt, &b, &mut x).ok_or_else(|| singular(s.t))?;
    let mut q = s.q.clone();
    let mut p = s.p.clone();
    p[1..n - 1].copy_from_slice(&x);
    for i in 1..n - 1 {
        q[i] += dt * p[i];
    }
    sys.close(&mut q, &mut p)?;
    Ok(SplitState { t: s.t + dt, q, p })
}

fn crank_nicolson<S: SplitSystem + ?Sized>(sys: &S, s: &SplitState, dt: f64) -> Result<SplitState> {
    let n = sys.nodes();
    let m = n - 2;
    let half = 0.5 * dt;
    let mut e0 = vec![0.0; n];
    sys.explicit_accel(&s.q, &mut e0)?;
    let mut op0 = Tridiagonal::default();
    sys.implicit_operator(&s.q, &mut op0)?;
    let mut l0p = vec![0.0; m];
    op0.apply(&s.p[1..n - 1], &mut l0p);

    // predictor with forces frozen at the step start
    let b: Vec<f64> = (1..n - 1).map(|i| s.p[i] + dt * e0[i] + half * l0p[i - 1]).collect();
    let mut x = vec![0.0; m];
    op0.solve_shifted(half, &b, &mut x).ok_or_else(|| singular(s.t))?;
    let mut q1 = s.q.clone();
    let mut p1 = s.p.clone();
    for i in 1..n - 1 {
        p1[i] = x[i - 1];
        q1[i] = s.q[i] + half * (s.p[i] + p1[i]);
    }
    sys.close(&mut q1, &mut p1)?;

    // trapezoidal corrector
    let mut e1 = vec![0.0; n];
    sys.explicit_accel(&q1, &mut e1)?;
    let mut op1 = Tridiagonal::default();
    sys.implicit_operator(&q1, &mut op1)?;
    let b: Vec<f64> =
        (1..n - 1).map(|i| s.p[i] + half * (e0[i] + e1[i]) + half * l0p[i - 1]).collect();
    op1.solve_shifted(half, &b, &mut x).ok_or_else(|| singular(s.t))?;
    let mut q = s.q.clone();
    let mut p = s.p.clone();
    for i in 1..n - 1 {
        p[i] = x[i - 1];
        q[i] = s.q[i] + half * (s.p[i] + p[i]);
    }
    sys.close(&mut q, &mut p)?;
    Ok(SplitState { t: s.t + dt, q, p })
}

/// One step of size `dt` without retries.
pub fn step_once<S: SplitSystem + ?Sized>(sys: &S, s: &SplitState, dt: f64, mode: Mode) -> Result<SplitState> {
    let next = match mode {
        Mode::ExplicitRk4 => rk4(sys, s, dt)?,
        Mode::ImexBe => backward_euler(sys, s, dt)?,
        Mode::ImexCn => crank_nicolson(sys, s, dt)?,
    };
    finite_or_fail(s.t, &next.q, &next.p)?;
    sys.check(&next.q)?;
    Ok(next)
}

/// Advances by `dt`, splitting the interval into `2^k` substeps when the
/// implicit solve fails, up to [`MAX_RETRIES`] halvings.
pub fn step<S: SplitSystem + ?Sized>(sys: &S, s: &SplitState, dt: f64, mode: Mode) -> Result<SplitState> {
    let mut last_err = None;
    for k in 0..=MAX_RETRIES {
        let pieces = 1usize << k;
        let sub = dt / pieces as f64;
        let mut cur = s.clone();
        let mut failed = None;
        for _ in 0..pieces {
            match step_once(sys, &cur, sub, mode) {
                Ok(next) => cur = next,
                Err(e @ Error::StepFailure { .. }) => {
                    failed = Some(e);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        match failed {
            None => {
                cur.t = s.t + dt;
                return Ok(cur);
            }
            Some(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| singular(s.t)))
}

/// Why a run stopped.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    MaxSteps,
    StoppedBySink,
    MeshTangling { t: f64, cell: usize, width: f64 },
    BlowUp { t: f64, value: f64, ceiling: f64 },
    StepFailure { t: f64, message: String },
}

impl Termination {
    pub fn is_success(&self) -> bool {
        matches!(self, Termination::Completed)
    }
}

/// What the sink sees at each sample time.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub t: f64,
    pub q: &'a [f64],
    pub p: &'a [f64],
    pub accel: &'a [f64],
    pub monitor: f64,
    /// Backward difference of the boundary velocity over the last step
    /// (closure-implied derivative at the first sample).
    pub boundary_rate: f64,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: SplitState,
    pub termination: Termination,
    pub steps: usize,
    pub samples: usize,
}

fn step_size<S: SplitSystem + ?Sized>(sys: &S, s: &SplitState, policy: &StepPolicy) -> Result<f64> {
    let h = sys.grid_spacing();
    let speed = sys.speed(&s.q, &s.p);
    match policy.dt {
        TimeStep::Fixed(dt) => {
            if policy.mode != Mode::ExplicitRk4 && speed > 0.0 && dt > policy.cfl_safety * h / speed {
                return Err(Error::StepFailure {
                    t: s.t,
                    reason: format!("dt = {dt} violates the velocity CFL bound h/max|v| = {}", h / speed),
                });
            }
            Ok(dt)
        }
        TimeStep::Adaptive { max } => {
            let mut dt = max.min(policy.cfl_safety * h / (4.0 * speed + 1.0));
            if policy.mode == Mode::ExplicitRk4 {
                dt = dt.min(policy.cfl_safety * sys.explicit_dt_limit());
            }
            Ok(dt)
        }
    }
}

/// Integrates from `state0` to `policy.t_end`, calling `sink` at `t = 0` and
/// at every multiple of `sample_interval` (and at the final time). The sink
/// returns `false` to stop early.
///
/// Solver failures end the run with the matching [`Termination`]; `Err` is
/// returned only for invalid policies and sink errors.
pub fn run<S, F>(
    sys: &S,
    state0: &SplitState,
    policy: &StepPolicy,
    sample_interval: f64,
    mut sink: F,
) -> Result<RunOutcome>
where
    S: SplitSystem + ?Sized,
    F: FnMut(&Sample) -> Result<bool>,
{
    policy.validate()?;
    if !(sample_interval > 0.0) {
        return Err(Error::Config(format!("sample_interval must be positive, got {sample_interval}")));
    }
    if policy.mode == Mode::ExplicitRk4 {
        if let TimeStep::Fixed(dt) = policy.dt {
            let limit = policy.cfl_safety * sys.explicit_dt_limit();
            if dt > limit {
                return Err(Error::Config(format!(
                    "explicit dt = {dt} exceeds the diffusive limit {limit:e}"
                )));
            }
        }
    }
    let n = sys.nodes();
    let mut state = state0.clone();
    let t0 = state.t;
    let t_end = policy.t_end.max(t0);

    let accel = acceleration(sys, &state.q, &state.p)?;
    let monitor0 = sys.monitor(&state.q, &state.p, &accel);
    let ceiling = policy.blowup_factor * monitor0 + 1.0;
    let rate0 = sys.boundary_rate(&state.q, &state.p, &accel);
    let mut samples = 1;
    let first = Sample {
        t: state.t,
        q: &state.q,
        p: &state.p,
        accel: &accel,
        monitor: monitor0,
        boundary_rate: rate0,
        steps: 0,
    };
    if !sink(&first)? {
        return Ok(RunOutcome { state, termination: Termination::StoppedBySink, steps: 0, samples });
    }

    let mut steps = 0usize;
    let mut k_sample = 1usize;
    let mut first_step = true;
    let termination = loop {
        if state.t >= t_end {
            break Termination::Completed;
        }
        if steps >= policy.max_steps {
            break Termination::MaxSteps;
        }
        let next_sample = (t0 + k_sample as f64 * sample_interval).min(t_end);
        let mut dt = match step_size(sys, &state, policy) {
            Ok(dt) => dt,
            Err(Error::StepFailure { t, reason }) => break Termination::StepFailure { t, message: reason },
            Err(e) => return Err(e),
        };
        let landing = next_sample - state.t <= dt * (1.0 + 1e-9);
        if landing {
            dt = next_sample - state.t;
        }
        let result = if first_step && policy.mode == Mode::ImexCn && policy.damped_start {
            step(sys, &state, 0.5 * dt, Mode::ImexBe)
                .and_then(|mid| step(sys, &mid, 0.5 * dt, Mode::ImexBe))
        } else {
            step(sys, &state, dt, policy.mode)
        };
        first_step = false;
        let next = match result {
            Ok(s) => s,
            Err(Error::MeshTangling { cell, width }) => {
                break Termination::MeshTangling { t: state.t, cell, width }
            }
            Err(Error::StepFailure { t, reason }) => break Termination::StepFailure { t, message: reason },
            Err(e) => return Err(e),
        };
        steps += 1;
        let v_prev = state.p[n - 1];
        state = next;
        if landing {
            state.t = next_sample;
            k_sample += 1;
            let accel = match acceleration(sys, &state.q, &state.p) {
                Ok(a) => a,
                Err(Error::MeshTangling { cell, width }) => {
                    break Termination::MeshTangling { t: state.t, cell, width }
                }
                Err(e) => return Err(e),
            };
            let monitor = sys.monitor(&state.q, &state.p, &accel);
            let sample = Sample {
                t: state.t,
                q: &state.q,
                p: &state.p,
                accel: &accel,
                monitor,
                boundary_rate: (state.p[n - 1] - v_prev) / dt,
                steps,
            };
            samples += 1;
            if !sink(&sample)? {
                break Termination::StoppedBySink;
            }
            if !(monitor <= ceiling) {
                break Termination::BlowUp { t: state.t, value: monitor, ceiling };
            }
        }
    };
    Ok(RunOutcome { state, termination, steps, samples })
}

/// Closure-consistent copy of a Lagrangian state as a [`SplitState`].
pub fn to_split(state: &LagrangianState) -> SplitState {
    SplitState { t: state.t, q: state.r.clone(), p: state.v.clone() }
}

pub fn from_split(state: &SplitState) -> LagrangianState {
    LagrangianState { t: state.t, r: state.q.clone(), v: state.p.clone() }
}

/// Advances a nonlinear state by one step of the policy's size.
pub fn step_state(
    bg: &BackgroundGrid,
    anchor: &BoundaryAnchor,
    state: &LagrangianState,
    policy: &StepPolicy,
) -> Result<LagrangianState> {
    policy.validate()?;
    let sys = NonlinearSystem::new(bg, *anchor);
    let s = to_split(state);
    let dt = step_size(&sys, &s, policy)?;
    Ok(from_split(&step(&sys, &s, dt, policy.mode)?))
}

/// [`run`] for the nonlinear scheme.
pub fn run_state<F>(
    bg: &BackgroundGrid,
    anchor: &BoundaryAnchor,
    state0: &LagrangianState,
    policy: &StepPolicy,
    sample_interval: f64,
    sink: F,
) -> Result<(LagrangianState, RunOutcome)>
where
    F: FnMut(&Sample) -> Result<bool>,
{
    let sys = NonlinearSystem::new(bg, *anchor);
    let out = run(&sys, &to_split(state0), policy, sample_interval, sink)?;
    Ok((from_split(&out.state), out))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `y'' = -k y - c y'` on a chain of decoupled oscillators with fixed
    /// end entries.
    struct Damped {
        nodes: usize,
        k: f64,
        c: f64,
    }

    impl SplitSystem for Damped {
        fn nodes(&self) -> usize {
            self.nodes
        }
        fn grid_spacing(&self) -> f64 {
            1.0
        }
        fn explicit_dt_limit(&self) -> f64 {
            1.0 / self.c
        }
        fn explicit_accel(&self, q: &[f64], out: &mut [f64]) -> Result<()> {
            for i in 1..self.nodes - 1 {
                out[i] = -self.k * q[i];
            }
            Ok(())
        }
        fn implicit_operator(&self, _q: &[f64], op: &mut Tridiagonal) -> Result<()> {
            *op = Tridiagonal::zeros(self.nodes - 2);
            op.diag.iter_mut().for_each(|d| *d = -self.c);
            Ok(())
        }
        fn close(&self, q: &mut [f64], p: &mut [f64]) -> Result<()> {
            q[0] = 0.0;
            p[0] = 0.0;
            let n = self.nodes;
            q[n - 1] = q[n - 2];
            p[n - 1] = p[n - 2];
            Ok(())
        }
        fn monitor(&self, q: &[f64], p: &[f64], _a: &[f64]) -> f64 {
            q.iter().zip(p).map(|(a, b)| self.k * a * a + b * b).sum()
        }
    }

    fn exact(k: f64, c: f64, t: f64) -> f64 {
        // y(0) = 1, y'(0) = 0, underdamped
        let w = (k - 0.25 * c * c).sqrt();
        (-0.5 * c * t).exp() * ((w * t).cos() + 0.5 * c / w * (w * t).sin())
    }

    fn terminal_error(mode: Mode, dt: f64) -> f64 {
        let sys = Damped { nodes: 3, k: 4.0, c: 0.5 };
        let mut s = SplitState { t: 0.0, q: vec![0.0, 1.0, 1.0], p: vec![0.0; 3] };
        let steps = (1.0 / dt).round() as usize;
        for _ in 0..steps {
            s = step(&sys, &s, dt, mode).unwrap();
        }
        (s.q[1] - exact(4.0, 0.5, 1.0)).abs()
    }

    #[test]
    fn observed_temporal_orders() {
        for (mode, expected) in [(Mode::ExplicitRk4, 4.0), (Mode::ImexBe, 1.0), (Mode::ImexCn, 2.0)] {
            let e1 = terminal_error(mode, 2f64.powi(-8));
            let e2 = terminal_error(mode, 2f64.powi(-9));
            let order = (e1 / e2).log2();
            assert!((order - expected).abs() < 0.15, "{mode:?}: order {order}");
        }
    }

    #[test]
    fn backward_euler_on_scalar_model() {
        let sys = Damped { nodes: 3, k: 0.0, c: 1e6 };
        let s = SplitState { t: 0.0, q: vec![0.0, 0.0, 0.0], p: vec![0.0, 1.0, 1.0] };
        let next = step(&sys, &s, 0.1, Mode::ImexBe).unwrap();
        assert!((next.p[1] - 1.0 / (1.0 + 0.1 * 1e6)).abs() < 1e-15);
    }

    #[test]
    fn zero_horizon_calls_sink_once() {
        let sys = Damped { nodes: 4, k: 1.0, c: 1.0 };
        let s = SplitState { t: 0.0, q: vec![0.0, 1.0, 0.5, 0.5], p: vec![0.0; 4] };
        let mut calls = 0;
        let policy = StepPolicy { t_end: 0.0, ..StepPolicy::default() };
        let out = run(&sys, &s, &policy, 0.1, |_| {
            calls += 1;
            Ok(true)
        })
        .unwrap();
        assert_eq!(calls, 1);
        assert_eq!(out.state, s);
        assert_eq!(out.termination, Termination::Completed);
    }

    #[test]
    fn samples_land_on_the_grid() {
        let sys = Damped { nodes: 4, k: 1.0, c: 1.0 };
        let s = SplitState { t: 0.0, q: vec![0.0, 1.0, 0.5, 0.5], p: vec![0.0; 4] };
        let mut times = Vec::new();
        let policy =
            StepPolicy { t_end: 1.0, dt: TimeStep::Fixed(0.03), mode: Mode::ImexBe, ..StepPolicy::default() };
        run(&sys, &s, &policy, 0.25, |smp| {
            times.push(smp.t);
            Ok(true)
        })
        .unwrap();
        assert_eq!(times, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn explicit_dt_above_limit_is_rejected() {
        let sys = Damped { nodes: 4, k: 1.0, c: 10.0 };
        let s = SplitState { t: 0.0, q: vec![0.0; 4], p: vec![0.0; 4] };
        let policy = StepPolicy {
            t_end: 1.0,
            dt: TimeStep::Fixed(0.5),
            mode: Mode::ExplicitRk4,
            ..StepPolicy::default()
        };
        assert!(matches!(run(&sys, &s, &policy, 0.1, |_| Ok(true)), Err(Error::Config(_))));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("imex_cn".parse::<Mode>().unwrap(), Mode::ImexCn);
        assert!("rk45".parse::<Mode>().is_err());
    }
}
