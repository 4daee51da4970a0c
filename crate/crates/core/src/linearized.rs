//! Linearisation about the equilibrium in `w = r/x - 1`, `v = x w_t`.
//!
//! ```text
//! x⁴ρ̄ w_tt + (3γ-4) φ x⁴ρ̄ w - γ (x⁴ρ̄^γ w_x)_x = μ [x (x² 𝔅_L)_x - 2x² w_t]
//! 𝔅_L = (x w_t)_x = 0 at x = R̄
//! ```
//!
//! Two stencils are provided. [`Stencil::Conservative`] discretises the
//! self-adjoint form with arithmetic face coefficients and satisfies a
//! discrete energy identity. [`Stencil::SchemeJacobian`] is the exact
//! linearisation of the nonlinear finite-difference scheme, which is what a
//! small-amplitude nonlinear run should follow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::initial_data::{raw_perturbation, PerturbationSpec};
use crate::integrator::{self, SplitState, SplitSystem, StepPolicy};
use crate::polytrope::PolytropeProfile;
use crate::scheme::{BackgroundGrid, Tridiagonal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    #[default]
    Conservative,
    SchemeJacobian,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearState {
    pub t: f64,
    pub w: Vec<f64>,
    pub w_t: Vec<f64>,
}

impl LinearState {
    pub fn zero(bg: &BackgroundGrid) -> Self {
        Self { t: 0.0, w: vec![0.0; bg.nodes()], w_t: vec![0.0; bg.nodes()] }
    }
}

/// The linear problem with its boundary anchor `(w⁰_N, w⁰_{N-1})`.
#[derive(Debug, Clone)]
pub struct LinearSystem<'a> {
    pub bg: &'a BackgroundGrid,
    pub stencil: Stencil,
    w0_last: f64,
    w0_prev: f64,
}

impl<'a> LinearSystem<'a> {
    pub fn new(bg: &'a BackgroundGrid, stencil: Stencil, w0: &[f64]) -> Self {
        let n = bg.n_cells;
        Self { bg, stencil, w0_last: w0[n], w0_prev: w0[n - 1] }
    }

    /// True for the normalisation `λ₂ = (2/3)λ₁ = 1/3` in which the linear
    /// problem is derived; other viscosities are an extrapolation.
    pub fn is_reference_viscosity(&self) -> bool {
        let v = self.bg.viscosity;
        (v.lambda1 - 0.5).abs() < 1e-14 && (v.lambda2 - 1.0 / 3.0).abs() < 1e-14
    }

    fn face_stiffness(&self, k: usize) -> f64 {
        let bg = self.bg;
        let a = bg.x[k].powi(4) * bg.rho_gamma[k];
        let b = bg.x[k + 1].powi(4) * bg.rho_gamma[k + 1];
        0.5 * (a + b)
    }
}

/// Even extension at the centre: `w_0 = w_1`.
fn w_left(w: &[f64], n: usize) -> f64 {
    if n == 0 {
        w[1]
    } else {
        w[n]
    }
}

impl SplitSystem for LinearSystem<'_> {
    fn nodes(&self) -> usize {
        self.bg.nodes()
    }

    fn grid_spacing(&self) -> f64 {
        self.bg.h
    }

    fn explicit_dt_limit(&self) -> f64 {
        let bg = self.bg;
        let min_rho = bg.rho[..bg.n_cells].iter().cloned().fold(f64::INFINITY, f64::min);
        bg.h * bg.h * min_rho / (2.0 * bg.mu())
    }

    fn explicit_accel(&self, w: &[f64], out: &mut [f64]) -> Result<()> {
        let bg = self.bg;
        let g = bg.gamma;
        let h = bg.h;
        let n_cells = bg.n_cells;
        out[0] = 0.0;
        out[n_cells] = 0.0;
        match self.stencil {
            Stencil::Conservative => {
                for n in 1..n_cells {
                    let x4 = bg.x[n].powi(4);
                    let mass = x4 * bg.rho[n];
                    let right = self.face_stiffness(n) * (w[n + 1] - w[n]);
                    let left = if n == 1 { 0.0 } else { self.face_stiffness(n - 1) * (w[n] - w[n - 1]) };
                    out[n] = (-(3.0 * g - 4.0) * bg.phi[n] * mass * w[n] + g / (h * h) * (right - left)) / mass;
                }
            }
            Stencil::SchemeJacobian => {
                // S_n = (x_n w_n - x_{n-1} w_{n-1})/h + 2 w_{n-1}, pressure flux ρ̄_n^γ S_n
                let strain = |n: usize| (bg.x[n] * w[n] - bg.x[n - 1] * w[n - 1]) / h + 2.0 * w_left(w, n - 1);
                for n in 1..n_cells {
                    let flux_right = if n + 1 == n_cells { 0.0 } else { bg.rho_gamma[n + 1] * strain(n + 1) };
                    let flux_left = bg.rho_gamma[n] * strain(n);
                    out[n] = (-4.0 * bg.q[n] * w[n] + g * (flux_right - flux_left) / h) / (bg.x[n] * bg.rho[n]);
                }
            }
        }
        Ok(())
    }

    fn implicit_operator(&self, _w: &[f64], op: &mut Tridiagonal) -> Result<()> {
        let bg = self.bg;
        let h = bg.h;
        let n_cells = bg.n_cells;
        let mu = bg.mu();
        let c = bg.viscosity.closure_exponent();
        op.resize(n_cells - 1);
        match self.stencil {
            Stencil::Conservative => {
                for n in 1..n_cells {
                    let x = bg.x[n];
                    let mass = x.powi(4) * bg.rho[n];
                    let xr = (n as f64 + 0.5) * h;
                    let xl = (n as f64 - 0.5) * h;
                    let i = n - 1;
                    op.lower[i] = mu * x * xl * xl * bg.x[n - 1] / (h * h) / mass;
                    if n + 1 < n_cells {
                        op.upper[i] = mu * x * xr * xr * bg.x[n + 1] / (h * h) / mass;
                        op.diag[i] = -mu * (x * x * (xr * xr + xl * xl) / (h * h) + 2.0 * x * x) / mass;
                    } else {
                        // x_N w_t,N = (x_{N-1} - c h) w_t,{N-1}
                        op.upper[i] = 0.0;
                        op.diag[i] =
                            -mu * (x * x * xl * xl / (h * h) + c * x * xr * xr / h + 2.0 * x * x) / mass;
                    }
                }
            }
            Stencil::SchemeJacobian => {
                // Φ_n = α_n ẇ_n + β_n ẇ_{n-1}
                let l1 = bg.viscosity.lambda1;
                let mut alpha = vec![0.0; n_cells + 1];
                let mut beta = vec![0.0; n_cells + 1];
                alpha[1] = mu * (bg.x[1] / h + 2.0);
                for n in 2..n_cells {
                    alpha[n] = mu * bg.x[n] / h;
                    beta[n] = mu * (2.0 - bg.x[n - 1] / h);
                }
                beta[n_cells] = 4.0 * l1;
                for n in 1..n_cells {
                    let s = 1.0 / (h * bg.x[n] * bg.rho[n]);
                    let i = n - 1;
                    op.lower[i] = if n >= 2 { -s * beta[n] } else { 0.0 };
                    op.diag[i] = s * (beta[n + 1] - alpha[n]);
                    op.upper[i] = if n + 1 < n_cells { s * alpha[n + 1] } else { 0.0 };
                }
            }
        }
        Ok(())
    }

    fn close(&self, w: &mut [f64], w_t: &mut [f64]) -> Result<()> {
        let bg = self.bg;
        let n = bg.n_cells;
        let c = bg.viscosity.closure_exponent();
        w[0] = w[1];
        w_t[0] = w_t[1];
        let factor = (bg.x[n - 1] - c * bg.h) / bg.x[n];
        w[n] = self.w0_last + factor * (w[n - 1] - self.w0_prev);
        w_t[n] = factor * w_t[n - 1];
        Ok(())
    }

    fn monitor(&self, w: &[f64], w_t: &[f64], _accel: &[f64]) -> f64 {
        linear_energy(self.bg, w, w_t).energy.abs()
    }

    fn speed(&self, _w: &[f64], w_t: &[f64]) -> f64 {
        let bg = self.bg;
        (0..bg.nodes()).fold(0.0_f64, |m, n| m.max((bg.x[n] * w_t[n]).abs()))
    }
}

/// `w_tt` on all nodes (zero at the centre and boundary entries).
pub fn linear_rhs(bg: &BackgroundGrid, stencil: Stencil, w: &[f64], w_t: &[f64]) -> Result<Vec<f64>> {
    if w.iter().chain(w_t).any(|x| !x.is_finite()) {
        return Err(Error::Domain("non-finite linear state".into()));
    }
    let sys = LinearSystem::new(bg, stencil, w);
    integrator::acceleration(&sys, w, w_t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearEnergy {
    pub energy: f64,
    pub dissipation: f64,
    /// False when `γ <= 4/3`, where the energy need not be positive.
    pub coercive: bool,
}

/// Discrete energy and dissipation of the conservative stencil:
///
/// ```text
/// E = ½ h Σ x⁴ (ρ̄ w_t² + (3γ-4) φ ρ̄ w²) + ½ γ h Σ_faces K_f ((w_{k+1} - w_k)/h)²
/// D = μ h Σ_faces x_f² ((x_{k+1} w_t,{k+1} - x_k w_t,k)/h)² + 2 μ h Σ x² w_t²
/// ```
pub fn linear_energy(bg: &BackgroundGrid, w: &[f64], w_t: &[f64]) -> LinearEnergy {
    let g = bg.gamma;
    let h = bg.h;
    let mu = bg.mu();
    let n_cells = bg.n_cells;
    let mut bulk = 0.0;
    let mut damp = 0.0;
    for n in 1..n_cells {
        let x2 = bg.x[n] * bg.x[n];
        bulk += x2 * x2 * bg.rho[n] * (w_t[n] * w_t[n] + (3.0 * g - 4.0) * bg.phi[n] * w[n] * w[n]);
        damp += 2.0 * x2 * w_t[n] * w_t[n];
    }
    let mut stiff = 0.0;
    for k in 0..n_cells {
        let kf = 0.5 * (bg.x[k].powi(4) * bg.rho_gamma[k] + bg.x[k + 1].powi(4) * bg.rho_gamma[k + 1]);
        let dw = (w[k + 1] - w_left(w, k)) / h;
        stiff += kf * dw * dw;
        let xf = (k as f64 + 0.5) * h;
        let gf = (bg.x[k + 1] * w_t[k + 1] - bg.x[k] * w_t[k]) / h;
        damp += xf * xf * gf * gf;
    }
    LinearEnergy {
        energy: 0.5 * h * bulk + 0.5 * g * h * stiff,
        dissipation: mu * h * damp,
        coercive: g > 4.0 / 3.0,
    }
}

/// Integrates the linear problem; see [`integrator::run`].
pub fn run_linear<F>(
    bg: &BackgroundGrid,
    stencil: Stencil,
    state0: &LinearState,
    policy: &StepPolicy,
    sample_interval: f64,
    sink: F,
) -> Result<(LinearState, integrator::RunOutcome)>
where
    F: FnMut(&integrator::Sample) -> Result<bool>,
{
    let sys = LinearSystem::new(bg, stencil, &state0.w);
    let mut w = state0.w.clone();
    let mut w_t = state0.w_t.clone();
    sys.close(&mut w, &mut w_t)?;
    let start = SplitState { t: state0.t, q: w, p: w_t };
    let out = integrator::run(&sys, &start, policy, sample_interval, sink)?;
    let fin = LinearState { t: out.state.t, w: out.state.q.clone(), w_t: out.state.p.clone() };
    Ok((fin, out))
}

/// Linear data `(w⁰, w⁰_t)` of a perturbation family at unit amplitude.
pub fn unit_linear_data(profile: &PolytropeProfile, bg: &BackgroundGrid, spec: &PerturbationSpec) -> Result<LinearState> {
    let delta = 1e-3;
    let mut plus = spec.clone();
    plus.epsilon = delta;
    let mut minus = spec.clone();
    minus.epsilon = -delta;
    let (rp, vp) = raw_perturbation(profile, bg, &plus)?;
    let (rm, vm) = raw_perturbation(profile, bg, &minus)?;
    let mut st = LinearState::zero(bg);
    for n in 1..=bg.n_cells {
        let x = bg.x[n];
        st.w[n] = ((rp[n] - x) - (rm[n] - x)) / (2.0 * delta * x);
        st.w_t[n] = (vp[n] - vm[n]) / (2.0 * delta * x);
    }
    st.w[0] = st.w[1];
    st.w_t[0] = st.w_t[1];
    Ok(st)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MismatchReport {
    pub epsilon: f64,
    pub horizon: f64,
    pub mismatch: f64,
    pub mismatch_half: f64,
    pub ratio: f64,
}

/// Runs the nonlinear scheme at amplitudes `ε` and `ε/2` next to the
/// scheme-linearised problem and reports
/// `sup_t max_{n>=1} |(r_n/x_n - 1) - ε w_n|` for both.
///
/// The policy should use a fixed step so that all three runs share their
/// time levels.
pub fn compare_with_nonlinear(
    profile: &PolytropeProfile,
    bg: &BackgroundGrid,
    spec: &PerturbationSpec,
    policy: &StepPolicy,
    sample_interval: f64,
) -> Result<MismatchReport> {
    let eps = spec.epsilon;
    if eps.abs() > 1e-3 {
        return Err(Error::InvalidPerturbation(format!(
            "linear comparison needs |epsilon| <= 1e-3, got {eps}"
        )));
    }
    let unit = unit_linear_data(profile, bg, spec)?;
    let mut linear_track: Vec<Vec<f64>> = Vec::new();
    run_linear(bg, Stencil::SchemeJacobian, &unit, policy, sample_interval, |s| {
        linear_track.push(s.q.to_vec());
        Ok(true)
    })?;
    let mismatch_at = |amp: f64| -> Result<f64> {
        let mut sub = spec.clone();
        sub.epsilon = amp;
        let data = crate::initial_data::build_perturbation(profile, bg, &sub, f64::INFINITY)?;
        let mut worst = 0.0_f64;
        let mut k = 0usize;
        let (_, out) = integrator::run_state(bg, &data.anchor, &data.state, policy, sample_interval, |s| {
            if let Some(w) = linear_track.get(k) {
                for n in 1..bg.nodes() {
                    let rel = (s.q[n] - bg.x[n]) / bg.x[n];
                    worst = worst.max((rel - amp * w[n]).abs());
                }
            }
            k += 1;
            Ok(true)
        })?;
        if !out.termination.is_success() {
            return Err(Error::SolverFailure(format!("nonlinear run ended with {:?}", out.termination)));
        }
        Ok(worst)
    };
    let mismatch = mismatch_at(eps)?;
    let mismatch_half = mismatch_at(0.5 * eps)?;
    let ratio = if mismatch_half > 0.0 { mismatch / mismatch_half } else { f64::NAN };
    Ok(MismatchReport { epsilon: eps, horizon: policy.t_end, mismatch, mismatch_half, ratio })
}
