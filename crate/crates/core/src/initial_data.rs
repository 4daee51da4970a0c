//! Perturbed initial data on the reference grid.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytrope::PolytropeProfile;
use crate::scheme::{apply_closure, boundary_stress, cell_width, BackgroundGrid, BoundaryAnchor, LagrangianState};

/// Default bound on `|ε|`.
pub const DEFAULT_MAX_EPSILON: f64 = 0.05;

/// Relative tolerance of the same-mass check.
pub const MASS_TOL: f64 = 1e-8;

/// Subintervals of the cumulative-mass quadrature.
const QUAD_CELLS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `r₀ = x (1 + ε (1 - β (x/R̄)²))`, `v₀ = 0`.
    RadialDilation,
    /// Eulerian density `A ρ̄ (1 + ε P((r/R̄)²))` with `A` restoring the mass.
    PolynomialBump,
    /// `r₀ = x`, `v₀ = ε x (1 - (x/R̄)²)`.
    VelocityKick,
    /// Dilation plus a kick of amplitude `kick_ratio · ε`.
    Composite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapeParams {
    /// Taper β of the dilation, in `[0, 1]`.
    pub taper: f64,
    /// Coefficients of `P(s) = Σ c_k s^k`, `s = (r/R̄)²`.
    pub bump: Vec<f64>,
    pub kick_ratio: f64,
}

impl Default for ShapeParams {
    fn default() -> Self {
        Self { taper: 1.0, bump: vec![1.0, -2.0], kick_ratio: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub family: Family,
    pub epsilon: f64,
    #[serde(default)]
    pub shape: ShapeParams,
}

impl PerturbationSpec {
    pub fn new(family: Family, epsilon: f64) -> Self {
        Self { family, epsilon, shape: ShapeParams::default() }
    }

    pub fn equilibrium() -> Self {
        Self::new(Family::RadialDilation, 0.0)
    }

    pub fn with_taper(mut self, taper: f64) -> Self {
        self.shape.taper = taper;
        self
    }

    pub fn validate(&self, max_epsilon: f64) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon.abs() > max_epsilon {
            return Err(Error::InvalidPerturbation(format!(
                "|epsilon| = {} exceeds the admissible bound {max_epsilon}",
                self.epsilon.abs()
            )));
        }
        if !(0.0..=1.0).contains(&self.shape.taper) {
            return Err(Error::InvalidPerturbation(format!(
                "taper {} outside [0, 1]",
                self.shape.taper
            )));
        }
        if !self.shape.kick_ratio.is_finite() || self.shape.bump.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPerturbation("non-finite shape parameter".into()));
        }
        Ok(())
    }
}

/// Perturbed state plus the closure anchor it defines.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub state: LagrangianState,
    pub anchor: BoundaryAnchor,
}

/// Composite 3-point Gauss rule on `[a, b]`.
fn gauss3(a: f64, b: f64, f: &dyn Fn(f64) -> f64) -> f64 {
    const NODE: f64 = 0.774_596_669_241_483_4; // sqrt(3/5)
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    half * (5.0 / 9.0 * f(mid - half * NODE) + 8.0 / 9.0 * f(mid) + 5.0 / 9.0 * f(mid + half * NODE))
}

/// Quadrature nodes on `[0, r]` refined quadratically toward `r`.
fn quad_nodes(r: f64) -> Vec<f64> {
    let bulk = QUAD_CELLS / 2;
    let mut nodes: Vec<f64> = (0..=bulk).map(|k| 0.5 * r * k as f64 / bulk as f64).collect();
    for j in 1..=QUAD_CELLS - bulk {
        let s = 1.0 - j as f64 / (QUAD_CELLS - bulk) as f64;
        nodes.push(r - 0.5 * r * s * s);
    }
    nodes
}

/// Maps an Eulerian density of equal total mass to Lagrangian positions:
/// `∫₀^{r₀(x_n)} ρ₀ s² ds = ∫₀^{x_n} ρ̄ s² ds`.
pub fn mass_match_map(
    rho0: &dyn Fn(f64) -> f64,
    support: f64,
    profile: &PolytropeProfile,
    bg: &BackgroundGrid,
) -> Result<Vec<f64>> {
    if !(support > 0.0 && support.is_finite()) {
        return Err(Error::InvalidDensity(format!("support radius {support} must be positive")));
    }
    let nodes = quad_nodes(support);
    let integrand = |s: f64| 4.0 * PI * rho0(s) * s * s;
    let mut cumulative = Vec::with_capacity(nodes.len());
    cumulative.push(0.0);
    for w in nodes.windows(2) {
        let piece = gauss3(w[0], w[1], &integrand);
        if !(piece > 0.0) {
            return Err(Error::InvalidDensity(format!(
                "cumulative mass not increasing on [{}, {}]",
                w[0], w[1]
            )));
        }
        cumulative.push(cumulative[cumulative.len() - 1] + piece);
    }
    let total = cumulative[cumulative.len() - 1];
    if (total - profile.total_mass).abs() > MASS_TOL * profile.total_mass {
        return Err(Error::MassMismatch { initial: total, expected: profile.total_mass });
    }
    let mut r0 = vec![0.0; bg.nodes()];
    for n in 1..bg.n_cells {
        let target = profile.enclosed_mass(bg.x[n])? * total / profile.total_mass;
        let k = cumulative.partition_point(|&m| m < target).clamp(1, nodes.len() - 1);
        let (a, b) = (nodes[k - 1], nodes[k]);
        let base = cumulative[k - 1];
        let (mut lo, mut hi) = (a, b);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if base + gauss3(a, mid, &integrand) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        r0[n] = 0.5 * (lo + hi);
    }
    r0[bg.n_cells] = support;
    if r0.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidDensity("mass-matched positions are not increasing".into()));
    }
    Ok(r0)
}

fn poly(coeffs: &[f64], s: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
}

/// Unclosed initial positions and velocities of `spec`.
pub fn raw_perturbation(
    profile: &PolytropeProfile,
    bg: &BackgroundGrid,
    spec: &PerturbationSpec,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let eps = spec.epsilon;
    let big_r = bg.radius;
    let dilation = |x: f64| x * (1.0 + eps * (1.0 - spec.shape.taper * (x / big_r).powi(2)));
    let kick = |x: f64, amp: f64| amp * x * (1.0 - (x / big_r).powi(2));
    let (r0, v0): (Vec<f64>, Vec<f64>) = match spec.family {
        Family::RadialDilation => (bg.x.iter().map(|&x| dilation(x)).collect(), vec![0.0; bg.nodes()]),
        Family::VelocityKick => (bg.x.clone(), bg.x.iter().map(|&x| kick(x, eps)).collect()),
        Family::Composite => (
            bg.x.iter().map(|&x| dilation(x)).collect(),
            bg.x.iter().map(|&x| kick(x, eps * spec.shape.kick_ratio)).collect(),
        ),
        Family::PolynomialBump => {
            if eps == 0.0 {
                (bg.x.clone(), vec![0.0; bg.nodes()])
            } else {
                (bump_positions(profile, bg, eps, &spec.shape.bump)?, vec![0.0; bg.nodes()])
            }
        }
    };
    Ok((r0, v0))
}

fn bump_positions(profile: &PolytropeProfile, bg: &BackgroundGrid, eps: f64, coeffs: &[f64]) -> Result<Vec<f64>> {
    let big_r = profile.radius;
    let rho_bar = |s: f64| profile.eval(s.min(big_r)).map(|p| p.rho).unwrap_or(0.0);
    let shape = |s: f64| 1.0 + eps * poly(coeffs, (s / big_r).powi(2));
    let nodes = quad_nodes(big_r);
    let mut base = 0.0;
    let mut weighted = 0.0;
    for w in nodes.windows(2) {
        base += gauss3(w[0], w[1], &|s| 4.0 * PI * rho_bar(s) * s * s);
        weighted += gauss3(w[0], w[1], &|s| 4.0 * PI * rho_bar(s) * shape(s) * s * s);
    }
    let scale = base / weighted;
    // `base` equals M up to quadrature error; normalising against it keeps
    // the two cumulative mass functions consistent.
    let renorm = profile.total_mass / base;
    let rho0 = move |s: f64| renorm * scale * rho_bar(s) * shape(s);
    mass_match_map(&rho0, big_r, profile, bg)
}

/// Builds a closure-consistent initial state for `spec`.
pub fn build_perturbation(
    profile: &PolytropeProfile,
    bg: &BackgroundGrid,
    spec: &PerturbationSpec,
    max_epsilon: f64,
) -> Result<InitialData> {
    spec.validate(max_epsilon)?;
    let (mut r0, mut v0) = raw_perturbation(profile, bg, spec)?;
    r0[0] = 0.0;
    v0[0] = 0.0;
    let anchor = BoundaryAnchor::from_initial(bg, &r0);
    let mut state = LagrangianState { t: 0.0, r: r0, v: v0 };
    for n in 1..=bg.n_cells {
        let w = cell_width(bg, &state.r, n);
        if !(w > 0.0) {
            return Err(Error::InvalidPerturbation(format!(
                "amplitude {} folds cell {n}: (r_n - r_(n-1))/h = {}",
                spec.epsilon,
                w / bg.h
            )));
        }
    }
    apply_closure(bg, &mut state, &anchor)?;
    Ok(InitialData { state, anchor })
}

/// Tolerances of [`check_compatibility`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityTolerances {
    pub stress: f64,
    pub mass: f64,
    pub min_rx: f64,
    pub max_rx: f64,
}

impl Default for CompatibilityTolerances {
    fn default() -> Self {
        Self { stress: 1e-12, mass: 1e-12, min_rx: 0.5, max_rx: 1.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatibilityReport {
    pub v0_residual: f64,
    /// `|𝔅_N| / (|v_{N-1}|/h + 1)`.
    pub stress_residual: f64,
    /// Relative difference of the discrete Lagrangian and Eulerian masses.
    pub mass_residual: f64,
    pub min_rx: f64,
    pub max_rx: f64,
    pub violations: Vec<String>,
    pub pass: bool,
}

pub fn check_compatibility(state: &LagrangianState, bg: &BackgroundGrid) -> CompatibilityReport {
    check_compatibility_with(state, bg, &CompatibilityTolerances::default())
}

pub fn check_compatibility_with(
    state: &LagrangianState,
    bg: &BackgroundGrid,
    tol: &CompatibilityTolerances,
) -> CompatibilityReport {
    let n_cells = bg.n_cells;
    let h = bg.h;
    let v0_residual = state.v[0].abs().max(state.r[0].abs());
    let stress_residual = boundary_stress(bg, state).abs() / (state.v[n_cells - 1].abs() / h + 1.0);
    let mut min_rx = f64::INFINITY;
    let mut max_rx = f64::NEG_INFINITY;
    let mut lagrangian = 0.0;
    let mut eulerian = 0.0;
    for n in 1..=n_cells {
        let w = cell_width(bg, &state.r, n);
        min_rx = min_rx.min(w / h);
        max_rx = max_rx.max(w / h);
        let x2 = bg.x[n] * bg.x[n];
        lagrangian += bg.rho[n] * x2 * h;
        if w > 0.0 && state.r[n] > 0.0 {
            let rho = x2 * bg.rho[n] * h / (state.r[n] * state.r[n] * w);
            eulerian += rho * state.r[n] * state.r[n] * w;
        }
    }
    let mass_residual = if lagrangian > 0.0 { (eulerian - lagrangian).abs() / lagrangian } else { 0.0 };
    let mut violations = Vec::new();
    if v0_residual != 0.0 {
        violations.push(format!("centre condition r_0 = v_0 = 0 violated by {v0_residual:e}"));
    }
    if !(stress_residual <= tol.stress) {
        violations.push(format!("boundary stress residual {stress_residual:e} above {:e}", tol.stress));
    }
    if !(mass_residual <= tol.mass) {
        violations.push(format!("mass residual {mass_residual:e} above {:e}", tol.mass));
    }
    if !(min_rx >= tol.min_rx && max_rx <= tol.max_rx) {
        violations.push(format!(
            "discrete r_x range [{min_rx}, {max_rx}] leaves [{}, {}]",
            tol.min_rx, tol.max_rx
        ));
    }
    let pass = violations.is_empty();
    CompatibilityReport { v0_residual, stress_residual, mass_residual, min_rx, max_rx, violations, pass }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytrope::{solve_lane_emden, DEFAULT_TOL};
    use crate::scheme::{sample_background, Viscosity};
    use proptest::prelude::*;

    fn setup(n: usize) -> (PolytropeProfile, BackgroundGrid) {
        let p = solve_lane_emden(1.5, 1.0, DEFAULT_TOL).unwrap();
        let bg = sample_background(&p, n, Viscosity::UNIT).unwrap();
        (p, bg)
    }

    #[test]
    fn zero_amplitude_is_equilibrium() {
        let (p, bg) = setup(32);
        for family in [Family::RadialDilation, Family::PolynomialBump, Family::VelocityKick, Family::Composite] {
            let d = build_perturbation(&p, &bg, &PerturbationSpec::new(family, 0.0), 0.05).unwrap();
            assert_eq!(d.state, LagrangianState::equilibrium(&bg), "{family:?}");
        }
    }

    #[test]
    fn dilation_strain_bound() {
        let (p, bg) = setup(64);
        let d = build_perturbation(&p, &bg, &PerturbationSpec::new(Family::RadialDilation, 0.01), 0.05).unwrap();
        let worst = (1..=64)
            .map(|n| (cell_width(&bg, &d.state.r, n) / bg.h - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 0.03);
        assert!(check_compatibility(&d.state, &bg).pass);
    }

    #[test]
    fn kick_satisfies_compatibility() {
        let (p, bg) = setup(64);
        let d = build_perturbation(&p, &bg, &PerturbationSpec::new(Family::VelocityKick, 0.01), 0.05).unwrap();
        assert_eq!(d.state.v[0], 0.0);
        let rep = check_compatibility(&d.state, &bg);
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn equilibrium_report_is_exact() {
        let (_, bg) = setup(32);
        let rep = check_compatibility(&LagrangianState::equilibrium(&bg), &bg);
        assert_eq!(rep.v0_residual, 0.0);
        assert_eq!(rep.stress_residual, 0.0);
        assert_eq!(rep.mass_residual, 0.0);
        assert!(rep.pass);
    }

    #[test]
    fn centre_velocity_violation_is_named() {
        let (_, bg) = setup(32);
        let mut s = LagrangianState::equilibrium(&bg);
        s.v[0] = 1e-3;
        let rep = check_compatibility(&s, &bg);
        assert!(!rep.pass);
        assert!(rep.violations[0].contains("centre"));
    }

    #[test]
    fn amplitude_limit() {
        let (p, bg) = setup(32);
        let spec = PerturbationSpec::new(Family::RadialDilation, 0.2);
        assert!(matches!(build_perturbation(&p, &bg, &spec, 0.05), Err(Error::InvalidPerturbation(_))));
    }

    #[test]
    fn identity_and_scaling_mass_maps() {
        let (p, bg) = setup(32);
        let rho = |s: f64| p.eval(s.min(p.radius)).unwrap().rho;
        let r0 = mass_match_map(&rho, p.radius, &p, &bg).unwrap();
        for n in 0..=32 {
            assert!((r0[n] - bg.x[n]).abs() < 1e-8 * p.radius, "n = {n}");
        }
        let lambda = 1.03;
        let scaled = |s: f64| rho((s / lambda).min(p.radius)) / lambda.powi(3);
        let r0 = mass_match_map(&scaled, lambda * p.radius, &p, &bg).unwrap();
        for n in 0..=32 {
            assert!((r0[n] - lambda * bg.x[n]).abs() < 1e-8 * p.radius, "n = {n}");
        }
    }

    #[test]
    fn mass_mismatch_is_rejected() {
        let (p, bg) = setup(32);
        let heavy = |s: f64| 1.1 * p.eval(s.min(p.radius)).unwrap().rho;
        assert!(matches!(mass_match_map(&heavy, p.radius, &p, &bg), Err(Error::MassMismatch { .. })));
    }

    #[test]
    fn bump_conserves_mass() {
        let (p, bg) = setup(64);
        let spec = PerturbationSpec::new(Family::PolynomialBump, 0.02);
        let d = build_perturbation(&p, &bg, &spec, 0.05).unwrap();
        assert!(d.state.r.windows(2).all(|w| w[1] > w[0]));
        assert!((d.state.r[64] - p.radius).abs() < 1e-12);
        // denser centre: 1 + ε(1 - 2s) > 1 near the origin pulls shells inward
        assert!(d.state.r[10] < bg.x[10]);
        assert!(check_compatibility(&d.state, &bg).pass);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn admissible_specs_stay_in_the_strain_band(
            eps in -0.05f64..0.05,
            taper in 0.0f64..=1.0,
            family in prop_oneof![
                Just(Family::RadialDilation),
                Just(Family::VelocityKick),
                Just(Family::Composite)
            ],
        ) {
            let (p, bg) = setup(32);
            let spec = PerturbationSpec::new(family, eps).with_taper(taper);
            let d = build_perturbation(&p, &bg, &spec, 0.05).unwrap();
            let a = build_perturbation(&p, &bg, &spec, 0.05).unwrap();
            prop_assert_eq!(&d.state, &a.state);
            let band = 3.0 * eps.abs();
            for n in 1..=32 {
                let rx = cell_width(&bg, &d.state.r, n) / bg.h;
                prop_assert!(rx >= 1.0 - band - 1e-12);
                let ratio = d.state.r[n] / bg.x[n];
                prop_assert!((ratio - 1.0).abs() <= band + 1e-12);
            }
        }
    }
}
