//! Semi-discrete finite-difference scheme on the uniform Lagrangian grid.
//!
//! Nodes `x_n = n h`, `n = 0..=N`, `h = R̄/N`. Node 0 is the centre
//! (`r_0 = v_0 = 0`), node `N` is the vacuum boundary whose position and
//! velocity are slaved to node `N-1` through the stress-free closure. Nodes
//! `1..N-1` carry the momentum equation
//!
//! ```text
//! ρ̄_n (x_n/r_n)² dv_n/dt = q̄_n ((x_n/r_n)⁴ - 1)
//!                         + (P_{n+1} - P_n)/h + (F_{n+1} - F_n)/h
//! P_n = ρ̄_n^γ [1 - (h/(r_n - r_{n-1}))^γ (x_{n-1}/r_{n-1})^{2γ}]
//! F_n = 𝔅_n + 4λ₁ v_{n-1}/r_{n-1}
//! 𝔅_n = μ (v_n - v_{n-1})/(r_n - r_{n-1}) + (2λ₂ - 4λ₁/3) v_{n-1}/r_{n-1}
//! ```
//!
//! Ratios at the centre (`x_0/r_0`, `v_0/r_0`, `r_0/x_0`) take the value of
//! the same ratio at node 1, the discrete limit along the first cell.
//!
//! Positions are differenced through their displacement `r_n - x_n`, so that
//! the equilibrium `r = x` produces exactly zero residuals.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::polytrope::PolytropeProfile;

/// Smallest grid accepted by [`sample_background`].
pub const MIN_CELLS: usize = 4;

/// Shear and bulk viscosity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Viscosity {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Viscosity {
    /// The normalisation `λ₂ = (2/3) λ₁ = 1/3`, for which `μ = 1`.
    pub const UNIT: Viscosity = Viscosity { lambda1: 0.5, lambda2: 1.0 / 3.0 };

    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        if !(lambda1 > 0.0 && lambda2 > 0.0 && lambda1.is_finite() && lambda2.is_finite()) {
            return Err(Error::Domain(format!(
                "viscosities must be positive (shear λ₁ = {lambda1}, bulk λ₂ = {lambda2})"
            )));
        }
        Ok(Self { lambda1, lambda2 })
    }

    /// `μ = 4λ₁/3 + λ₂`.
    pub fn mu(&self) -> f64 {
        4.0 * self.lambda1 / 3.0 + self.lambda2
    }

    /// `2λ₂ - 4λ₁/3`, the coefficient of `v/r` in the normal stress.
    pub fn stress_coefficient(&self) -> f64 {
        2.0 * self.lambda2 - 4.0 * self.lambda1 / 3.0
    }

    /// `(2λ₂ - 4λ₁/3)/μ`, the exponent of the boundary closure.
    pub fn closure_exponent(&self) -> f64 {
        self.stress_coefficient() / self.mu()
    }
}

/// Background coefficients sampled on the grid.
#[derive(Debug, Clone)]
pub struct BackgroundGrid {
    pub gamma: f64,
    pub n_cells: usize,
    pub h: f64,
    pub radius: f64,
    pub total_mass: f64,
    pub x: Vec<f64>,
    pub rho: Vec<f64>,
    /// `ρ̄_n^γ`.
    pub rho_gamma: Vec<f64>,
    /// `q̄_n = (ρ̄^γ)_x(x_n) = -x_n φ(x_n) ρ̄_n`.
    pub q: Vec<f64>,
    pub phi: Vec<f64>,
    pub viscosity: Viscosity,
}

/// Samples the equilibrium on `N` uniform cells.
pub fn sample_background(
    profile: &PolytropeProfile,
    n_cells: usize,
    viscosity: Viscosity,
) -> Result<BackgroundGrid> {
    if n_cells < MIN_CELLS {
        return Err(Error::Domain(format!("need at least {MIN_CELLS} cells, got {n_cells}")));
    }
    let radius = profile.radius;
    let h = radius / n_cells as f64;
    let mut x = Vec::with_capacity(n_cells + 1);
    let mut rho = Vec::with_capacity(n_cells + 1);
    let mut q = Vec::with_capacity(n_cells + 1);
    let mut phi = Vec::with_capacity(n_cells + 1);
    for n in 0..=n_cells {
        let xn = if n == n_cells { radius } else { n as f64 * h };
        let p = profile.eval(xn)?;
        x.push(xn);
        rho.push(p.rho);
        q.push(p.q);
        phi.push(p.phi);
    }
    rho[n_cells] = 0.0;
    q[0] = 0.0;
    q[n_cells] = 0.0;
    let rho_gamma = rho.iter().map(|r| r.powf(profile.gamma)).collect();
    Ok(BackgroundGrid {
        gamma: profile.gamma,
        n_cells,
        h,
        radius,
        total_mass: profile.total_mass,
        x,
        rho,
        rho_gamma,
        q,
        phi,
        viscosity,
    })
}

impl BackgroundGrid {
    pub fn nodes(&self) -> usize {
        self.n_cells + 1
    }

    pub fn mu(&self) -> f64 {
        self.viscosity.mu()
    }
}

/// Grid positions and velocities at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LagrangianState {
    pub t: f64,
    pub r: Vec<f64>,
    pub v: Vec<f64>,
}

impl LagrangianState {
    pub fn equilibrium(bg: &BackgroundGrid) -> Self {
        Self { t: 0.0, r: bg.x.clone(), v: vec![0.0; bg.nodes()] }
    }

    /// `R(t) = r_N`.
    pub fn boundary_radius(&self) -> f64 {
        self.r[self.r.len() - 1]
    }
}

/// Initial positions of the last two nodes, which anchor the closure
/// `r_N = r_{N-1} + (r⁰_N - r⁰_{N-1}) (r⁰_{N-1}/r_{N-1})^{(2λ₂-4λ₁/3)/μ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryAnchor {
    pub r0_last: f64,
    pub r0_prev: f64,
    /// `r⁰_N - r⁰_{N-1} - h`, kept separately to avoid cancellation.
    width_excess: f64,
}

impl BoundaryAnchor {
    pub fn new(bg: &BackgroundGrid, r0_last: f64, r0_prev: f64) -> Self {
        let n = bg.n_cells;
        let width_excess = (r0_last - bg.x[n]) - (r0_prev - bg.x[n - 1]);
        Self { r0_last, r0_prev, width_excess }
    }

    pub fn from_initial(bg: &BackgroundGrid, r0: &[f64]) -> Self {
        let n = bg.n_cells;
        Self::new(bg, r0[n], r0[n - 1])
    }

    pub fn equilibrium(bg: &BackgroundGrid) -> Self {
        Self::new(bg, bg.x[bg.n_cells], bg.x[bg.n_cells - 1])
    }

    pub fn initial_width(&self, h: f64) -> f64 {
        h + self.width_excess
    }
}

#[inline]
fn deviation(bg: &BackgroundGrid, r: &[f64], n: usize) -> f64 {
    r[n] - bg.x[n]
}

/// `r_n - r_{n-1}` for `n >= 1`, computed through displacements.
#[inline]
pub fn cell_width(bg: &BackgroundGrid, r: &[f64], n: usize) -> f64 {
    bg.h + (deviation(bg, r, n) - deviation(bg, r, n - 1))
}

/// Cell widths for `n = 1..=N` (index 0 unused), failing on tangled cells.
pub fn cell_widths(bg: &BackgroundGrid, r: &[f64]) -> Result<Vec<f64>> {
    let mut w = vec![0.0; bg.nodes()];
    for n in 1..=bg.n_cells {
        let d = cell_width(bg, r, n);
        if !(d > 0.0) {
            return Err(Error::MeshTangling { cell: n, width: d });
        }
        w[n] = d;
    }
    Ok(w)
}

/// `ln(r_n/x_n)` at every node, with the centre value copied from node 1.
fn log_stretch(bg: &BackgroundGrid, r: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; bg.nodes()];
    for n in 1..=bg.n_cells {
        let rel = deviation(bg, r, n) / bg.x[n];
        if !(rel > -1.0) {
            return Err(Error::MeshTangling { cell: n, width: r[n] - r[n - 1] });
        }
        out[n] = rel.ln_1p();
    }
    out[0] = out[1];
    Ok(out)
}

/// `r_n / x_n` with the centre convention.
pub fn stretch(bg: &BackgroundGrid, r: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = (0..bg.nodes())
        .map(|n| if n == 0 { 0.0 } else { 1.0 + deviation(bg, r, n) / bg.x[n] })
        .collect();
    out[0] = out[1];
    out
}

/// `v_n / r_n` with the centre convention.
pub fn velocity_ratio(r: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = (0..r.len()).map(|n| if n == 0 { 0.0 } else { v[n] / r[n] }).collect();
    out[0] = out[1];
    out
}

/// Pressure brackets `P_n`, `n = 1..=N` (index 0 unused, `P_N = 0`).
fn pressure_brackets(bg: &BackgroundGrid, r: &[f64], widths: &[f64]) -> Result<Vec<f64>> {
    let ln_stretch = log_stretch(bg, r)?;
    let g = bg.gamma;
    let mut p = vec![0.0; bg.nodes()];
    for n in 1..bg.n_cells {
        // (h/Δr)^γ (x_{n-1}/r_{n-1})^{2γ} = exp(-γ [ln(Δr/h) + 2 ln(r_{n-1}/x_{n-1})])
        let ln_width = ((widths[n] - bg.h) / bg.h).ln_1p();
        p[n] = bg.rho_gamma[n] * -(-g * (ln_width + 2.0 * ln_stretch[n - 1])).exp_m1();
    }
    Ok(p)
}

/// Pressure and gravity part of the acceleration, nodes `1..N-1`.
pub fn explicit_acceleration(bg: &BackgroundGrid, r: &[f64], out: &mut [f64]) -> Result<()> {
    let widths = cell_widths(bg, r)?;
    let p = pressure_brackets(bg, r, &widths)?;
    let h = bg.h;
    out[0] = 0.0;
    out[bg.n_cells] = 0.0;
    for n in 1..bg.n_cells {
        let ln_s = (deviation(bg, r, n) / bg.x[n]).ln_1p();
        let gravity = bg.q[n] * (-4.0 * ln_s).exp_m1();
        let inv_mass = (2.0 * ln_s).exp() / bg.rho[n];
        out[n] = inv_mass * (gravity + (p[n + 1] - p[n]) / h);
    }
    Ok(())
}

/// Tridiagonal operator acting on the interior unknowns `1..N-1`.
///
/// Row `i` belongs to node `i + 1`; `lower[0]` and `upper[m-1]` are unused.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(m: usize) -> Self {
        Self { lower: vec![0.0; m], diag: vec![0.0; m], upper: vec![0.0; m] }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn resize(&mut self, m: usize) {
        self.lower.resize(m, 0.0);
        self.diag.resize(m, 0.0);
        self.upper.resize(m, 0.0);
    }

    /// `y = T x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let m = self.len();
        for i in 0..m {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.lower[i] * x[i - 1];
            }
            if i + 1 < m {
                s += self.upper[i] * x[i + 1];
            }
            y[i] = s;
        }
    }

    /// Solves `(I - c T) x = b` by the Thomas recurrence. Returns `None` when
    /// a pivot vanishes.
    pub fn solve_shifted(&self, c: f64, b: &[f64], x: &mut [f64]) -> Option<()> {
        let m = self.len();
        if m == 0 {
            return Some(());
        }
        let mut cp = vec![0.0; m];
        let mut dp = vec![0.0; m];
        let mut pivot = 1.0 - c * self.diag[0];
        if !(pivot.abs() > f64::MIN_POSITIVE) || !pivot.is_finite() {
            return None;
        }
        cp[0] = -c * self.upper[0] / pivot;
        dp[0] = b[0] / pivot;
        for i in 1..m {
            let a = -c * self.lower[i];
            pivot = (1.0 - c * self.diag[i]) - a * cp[i - 1];
            if !(pivot.abs() > f64::MIN_POSITIVE) || !pivot.is_finite() {
                return None;
            }
            cp[i] = if i + 1 < m { -c * self.upper[i] / pivot } else { 0.0 };
            dp[i] = (b[i] - a * dp[i - 1]) / pivot;
        }
        x[m - 1] = dp[m - 1];
        for i in (0..m - 1).rev() {
            x[i] = dp[i] - cp[i] * x[i + 1];
        }
        Some(())
    }
}

/// Viscous part of the acceleration as a tridiagonal operator in `v_1..v_{N-1}`.
///
/// The boundary stress `𝔅_N` is taken as exactly zero, which is what the
/// closure enforces.
pub fn viscous_operator(bg: &BackgroundGrid, r: &[f64], op: &mut Tridiagonal) -> Result<()> {
    let n_cells = bg.n_cells;
    let m = n_cells - 1;
    op.resize(m);
    let widths = cell_widths(bg, r)?;
    let mu = bg.mu();
    let two_mu = 2.0 * mu; // 2λ₂ - 4λ₁/3 + 4λ₁
    let lambda1 = bg.viscosity.lambda1;
    // F_n = alpha_n v_n + beta_n v_{n-1}
    let mut alpha = vec![0.0; n_cells + 1];
    let mut beta = vec![0.0; n_cells + 1];
    alpha[1] = mu / widths[1] + two_mu / r[1];
    for n in 2..n_cells {
        alpha[n] = mu / widths[n];
        beta[n] = -mu / widths[n] + two_mu / r[n - 1];
    }
    beta[n_cells] = 4.0 * lambda1 / r[n_cells - 1];
    for n in 1..n_cells {
        let ln_s = (deviation(bg, r, n) / bg.x[n]).ln_1p();
        let s = (2.0 * ln_s).exp() / (bg.rho[n] * bg.h);
        let i = n - 1;
        op.lower[i] = if n >= 2 { -s * beta[n] } else { 0.0 };
        op.diag[i] = s * (beta[n + 1] - alpha[n]);
        op.upper[i] = if n + 1 < n_cells { s * alpha[n + 1] } else { 0.0 };
    }
    Ok(())
}

/// Discrete normal stress `𝔅_N` at the vacuum node.
pub fn boundary_stress(bg: &BackgroundGrid, state: &LagrangianState) -> f64 {
    let n = bg.n_cells;
    let width = cell_width(bg, &state.r, n);
    let vis = bg.viscosity;
    vis.mu() * (state.v[n] - state.v[n - 1]) / width
        + vis.stress_coefficient() * state.v[n - 1] / state.r[n - 1]
}

/// Acceleration `dv_n/dt` for `n = 1..N-1` by direct evaluation of the
/// momentum equation. Entries 0 and `N` are zero.
///
/// The boundary flux uses the stress `𝔅_N` of the given state, so the
/// closure should have been applied beforehand.
pub fn rhs(bg: &BackgroundGrid, state: &LagrangianState) -> Result<Vec<f64>> {
    let r = &state.r;
    let v = &state.v;
    let n_cells = bg.n_cells;
    let widths = cell_widths(bg, r)?;
    let p = pressure_brackets(bg, r, &widths)?;
    let vr = velocity_ratio(r, v);
    let vis = bg.viscosity;
    let mu = vis.mu();
    let cs = vis.stress_coefficient();
    let l1 = vis.lambda1;
    let mut flux = vec![0.0; n_cells + 1];
    for n in 1..n_cells {
        let stress = mu * (v[n] - v[n - 1]) / widths[n] + cs * vr[n - 1];
        flux[n] = stress + 4.0 * l1 * vr[n - 1];
    }
    flux[n_cells] = boundary_stress(bg, state) + 4.0 * l1 * vr[n_cells - 1];
    let h = bg.h;
    let mut a = vec![0.0; n_cells + 1];
    for n in 1..n_cells {
        let ln_s = (deviation(bg, r, n) / bg.x[n]).ln_1p();
        let gravity = bg.q[n] * (-4.0 * ln_s).exp_m1();
        let inv_mass = (2.0 * ln_s).exp() / bg.rho[n];
        a[n] = inv_mass * (gravity + (p[n + 1] - p[n]) / h + (flux[n + 1] - flux[n]) / h);
    }
    Ok(a)
}

/// Boundary position and velocity `(r_N, v_N)` implied by the stress-free
/// closure.
pub fn close_boundary(
    bg: &BackgroundGrid,
    state: &LagrangianState,
    anchor: &BoundaryAnchor,
) -> Result<(f64, f64)> {
    let n = bg.n_cells;
    let r_prev = state.r[n - 1];
    if !(r_prev > 0.0) {
        return Err(Error::MeshTangling { cell: n - 1, width: r_prev });
    }
    let c = bg.viscosity.closure_exponent();
    let ratio_m1 = if c == 0.0 { 0.0 } else { (c * (anchor.r0_prev / r_prev).ln()).exp_m1() };
    let width0 = anchor.initial_width(bg.h);
    // r_N - x_N = (r_{N-1} - x_{N-1}) + (width0 * ratio - h)
    let excess = bg.h * ratio_m1 + anchor.width_excess * (1.0 + ratio_m1);
    let r_last = bg.x[n] + (deviation(bg, &state.r, n - 1) + excess);
    let v_prev = state.v[n - 1];
    let v_last = v_prev - c * width0 * (1.0 + ratio_m1) * v_prev / r_prev;
    Ok((r_last, v_last))
}

/// Writes the closure values and the centre conditions into `state`.
pub fn apply_closure(
    bg: &BackgroundGrid,
    state: &mut LagrangianState,
    anchor: &BoundaryAnchor,
) -> Result<()> {
    state.r[0] = 0.0;
    state.v[0] = 0.0;
    let (r_last, v_last) = close_boundary(bg, state, anchor)?;
    let n = bg.n_cells;
    state.r[n] = r_last;
    state.v[n] = v_last;
    Ok(())
}

/// Time derivative of `v_N` implied by the closure, given `dv_{N-1}/dt`.
pub fn boundary_acceleration(
    bg: &BackgroundGrid,
    state: &LagrangianState,
    anchor: &BoundaryAnchor,
    accel_prev: f64,
) -> f64 {
    let n = bg.n_cells;
    let c = bg.viscosity.closure_exponent();
    let r = state.r[n - 1];
    let v = state.v[n - 1];
    let k = c * anchor.initial_width(bg.h) * (anchor.r0_prev / r).powf(c);
    (1.0 - k / r) * accel_prev + k * (c + 1.0) * v * v / (r * r)
}

/// Discrete counterpart of the higher-order functional 𝔈:
///
/// ```text
/// max_n {((r_n-r_{n-1})/h - 1)² + ((v_n-v_{n-1})/h)²} + h Σ ρ̄_n (dv_n/dt)²
///   + h Σ ρ̄_n^{2γ-1} {(Δ²r_n/h²)² + ((r_n/x_n - r_{n-1}/x_{n-1})/h)²}
/// ```
///
/// with the sums over `n = 1..N-1`.
pub fn discrete_energy_functional(bg: &BackgroundGrid, state: &LagrangianState, accel: &[f64]) -> f64 {
    let parts = FunctionalParts::new(bg, state, accel);
    parts.sup_strain + parts.kinetic_rate + parts.curvature
}

/// Pieces shared by the discrete 𝔈 and its variants.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FunctionalParts {
    pub sup_strain: f64,
    pub kinetic_rate: f64,
    pub curvature: f64,
    pub second_difference: f64,
}

impl FunctionalParts {
    pub fn new(bg: &BackgroundGrid, state: &LagrangianState, accel: &[f64]) -> Self {
        Self::with_weight(bg, state, accel, None)
    }

    /// `extra_weight_exponent` adds `h Σ ρ̄_n^e (Δ²r_n/h²)²` as `second_difference`.
    pub fn with_weight(
        bg: &BackgroundGrid,
        state: &LagrangianState,
        accel: &[f64],
        extra_weight_exponent: Option<f64>,
    ) -> Self {
        let r = &state.r;
        let v = &state.v;
        let h = bg.h;
        let n_cells = bg.n_cells;
        let mut sup_strain = 0.0_f64;
        for n in 1..=n_cells {
            let dr = (deviation(bg, r, n) - deviation(bg, r, n - 1)) / h;
            let dv = (v[n] - v[n - 1]) / h;
            sup_strain = sup_strain.max(dr * dr + dv * dv);
        }
        let rel: Vec<f64> = {
            let mut s: Vec<f64> = (0..=n_cells)
                .map(|n| if n == 0 { 0.0 } else { deviation(bg, r, n) / bg.x[n] })
                .collect();
            s[0] = s[1];
            s
        };
        let mut kinetic_rate = 0.0;
        let mut curvature = 0.0;
        let mut second_difference = 0.0;
        let w_exp = 2.0 * bg.gamma - 1.0;
        for n in 1..n_cells {
            kinetic_rate += bg.rho[n] * accel[n] * accel[n];
            let d2 = (deviation(bg, r, n + 1) - 2.0 * deviation(bg, r, n) + deviation(bg, r, n - 1))
                / (h * h);
            let ds = (rel[n] - rel[n - 1]) / h;
            curvature += bg.rho[n].powf(w_exp) * (d2 * d2 + ds * ds);
            if let Some(e) = extra_weight_exponent {
                second_difference += bg.rho[n].powf(e) * d2 * d2;
            }
        }
        Self {
            sup_strain,
            kinetic_rate: h * kinetic_rate,
            curvature: h * curvature,
            second_difference: h * second_difference,
        }
    }
}

/// Logarithmic strain `𝒢_n = ln((r_n - r_{n-1})/h) + 2 ln(r_{n-1}/x_{n-1})`.
///
/// Element `k` of the result is `𝒢_{k+1}`, `k = 0..N-1`.
pub fn discrete_g(bg: &BackgroundGrid, state: &LagrangianState) -> Result<Vec<f64>> {
    let widths = cell_widths(bg, &state.r)?;
    let ln_stretch = log_stretch(bg, &state.r)?;
    Ok((1..=bg.n_cells)
        .map(|n| ((widths[n] - bg.h) / bg.h).ln_1p() + 2.0 * ln_stretch[n - 1])
        .collect())
}

/// The nonlinear scheme together with its closure anchor, in the split form
/// used by the time integrators.
#[derive(Debug, Clone)]
pub struct NonlinearSystem<'a> {
    pub bg: &'a BackgroundGrid,
    pub anchor: BoundaryAnchor,
}

impl<'a> NonlinearSystem<'a> {
    pub fn new(bg: &'a BackgroundGrid, anchor: BoundaryAnchor) -> Self {
        Self { bg, anchor }
    }
}

impl crate::integrator::SplitSystem for NonlinearSystem<'_> {
    fn nodes(&self) -> usize {
        self.bg.nodes()
    }

    fn grid_spacing(&self) -> f64 {
        self.bg.h
    }

    fn explicit_dt_limit(&self) -> f64 {
        let h = self.bg.h;
        let min_rho = self.bg.rho[..self.bg.n_cells].iter().cloned().fold(f64::INFINITY, f64::min);
        h * h * min_rho / (2.0 * self.bg.mu())
    }

    fn explicit_accel(&self, q: &[f64], out: &mut [f64]) -> Result<()> {
        explicit_acceleration(self.bg, q, out)
    }

    fn implicit_operator(&self, q: &[f64], op: &mut Tridiagonal) -> Result<()> {
        viscous_operator(self.bg, q, op)
    }

    fn close(&self, q: &mut [f64], p: &mut [f64]) -> Result<()> {
        let n = self.bg.n_cells;
        q[0] = 0.0;
        p[0] = 0.0;
        let r_prev = q[n - 1];
        if !(r_prev > 0.0) {
            return Err(Error::MeshTangling { cell: n - 1, width: r_prev });
        }
        let c = self.bg.viscosity.closure_exponent();
        let ratio_m1 = if c == 0.0 { 0.0 } else { (c * (self.anchor.r0_prev / r_prev).ln()).exp_m1() };
        let excess = self.bg.h * ratio_m1 + self.anchor.width_excess * (1.0 + ratio_m1);
        q[n] = self.bg.x[n] + ((q[n - 1] - self.bg.x[n - 1]) + excess);
        let width0 = self.anchor.initial_width(self.bg.h);
        p[n] = p[n - 1] - c * width0 * (1.0 + ratio_m1) * p[n - 1] / r_prev;
        Ok(())
    }

    fn check(&self, q: &[f64]) -> Result<()> {
        cell_widths(self.bg, q).map(|_| ())
    }

    fn monitor(&self, q: &[f64], p: &[f64], accel: &[f64]) -> f64 {
        let state = LagrangianState { t: 0.0, r: q.to_vec(), v: p.to_vec() };
        discrete_energy_functional(self.bg, &state, accel)
    }

    fn boundary_rate(&self, q: &[f64], p: &[f64], accel: &[f64]) -> f64 {
        let n = self.bg.n_cells;
        let state = LagrangianState { t: 0.0, r: q.to_vec(), v: p.to_vec() };
        boundary_acceleration(self.bg, &state, &self.anchor, accel[n - 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytrope::{solve_lane_emden, DEFAULT_TOL};
    use approx::assert_relative_eq;

    fn grid(gamma: f64, n: usize, vis: Viscosity) -> BackgroundGrid {
        let p = solve_lane_emden(gamma, 1.0, DEFAULT_TOL).unwrap();
        sample_background(&p, n, vis).unwrap()
    }

    #[test]
    fn background_boundary_values() {
        let bg = grid(1.5, 32, Viscosity::UNIT);
        assert_eq!(bg.rho[32], 0.0);
        assert_eq!(bg.q[0], 0.0);
        assert_eq!(bg.q[32], 0.0);
        assert_eq!(bg.x[32], bg.radius);
        assert!(bg.rho.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn closed_form_background_for_gamma_two() {
        let p = solve_lane_emden(2.0, 1.0, DEFAULT_TOL).unwrap();
        let bg = sample_background(&p, 4, Viscosity::UNIT).unwrap();
        let rc = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let alpha = rc; // (2π)^{-1/2}
        for n in 1..4 {
            let x = n as f64 * (std::f64::consts::PI / 2.0).sqrt() / 4.0;
            let xi = x / alpha;
            assert_relative_eq!(bg.rho[n], rc * xi.sin() / xi, max_relative = 1e-9);
        }
    }

    #[test]
    fn rejects_tiny_grid() {
        let p = solve_lane_emden(1.5, 1.0, DEFAULT_TOL).unwrap();
        assert!(sample_background(&p, 3, Viscosity::UNIT).is_err());
    }

    #[test]
    fn equilibrium_is_exact() {
        let bg = grid(1.5, 64, Viscosity::new(1.0, 1.0).unwrap());
        let state = LagrangianState::equilibrium(&bg);
        let a = rhs(&bg, &state).unwrap();
        assert!(a.iter().all(|&x| x == 0.0));
        assert_eq!(boundary_stress(&bg, &state), 0.0);
        assert!(discrete_g(&bg, &state).unwrap().iter().all(|&g| g == 0.0));
        assert_eq!(discrete_energy_functional(&bg, &state, &a), 0.0);
    }

    #[test]
    fn tangled_mesh_is_reported() {
        let bg = grid(1.5, 16, Viscosity::UNIT);
        let mut state = LagrangianState::equilibrium(&bg);
        state.r[5] = state.r[4] - 1e-3;
        assert!(matches!(rhs(&bg, &state), Err(Error::MeshTangling { cell: 5, .. })));
        assert!(matches!(discrete_g(&bg, &state), Err(Error::MeshTangling { .. })));
    }

    #[test]
    fn closure_with_vanishing_exponent_keeps_last_cell_rigid() {
        let bg = grid(1.5, 16, Viscosity::new(0.75, 0.5).unwrap());
        assert_eq!(bg.viscosity.closure_exponent(), 0.0);
        let anchor = BoundaryAnchor::new(&bg, bg.x[16] * 1.01, bg.x[15] * 1.005);
        let mut state = LagrangianState::equilibrium(&bg);
        state.r[15] *= 0.97;
        state.v[15] = 0.3;
        let (r_last, v_last) = close_boundary(&bg, &state, &anchor).unwrap();
        assert_relative_eq!(r_last - state.r[15], anchor.r0_last - anchor.r0_prev, max_relative = 1e-12);
        assert_eq!(v_last, 0.3);
    }

    #[test]
    fn closure_zeroes_the_boundary_stress() {
        let bg = grid(1.5, 16, Viscosity::new(1.0, 1.0).unwrap());
        let anchor = BoundaryAnchor::new(&bg, bg.x[16] * 1.01, bg.x[15] * 1.01);
        let mut state = LagrangianState::equilibrium(&bg);
        for n in 1..16 {
            state.r[n] *= 1.02;
            state.v[n] = 0.1 * bg.x[n];
        }
        apply_closure(&bg, &mut state, &anchor).unwrap();
        let b = boundary_stress(&bg, &state);
        assert!(b.abs() <= 1e-12 * (state.v[15].abs() / bg.h + 1.0), "stress {b}");
    }

    #[test]
    fn split_form_matches_direct_rhs() {
        use crate::integrator::SplitSystem;
        let bg = grid(1.5, 24, Viscosity::new(1.0, 0.7).unwrap());
        let anchor = BoundaryAnchor::equilibrium(&bg);
        let sys = NonlinearSystem::new(&bg, anchor);
        let mut state = LagrangianState::equilibrium(&bg);
        for n in 1..24 {
            let y = bg.x[n] / bg.radius;
            state.r[n] = bg.x[n] * (1.0 + 0.01 * (1.0 - y * y));
            state.v[n] = 0.02 * bg.x[n] * (1.0 - y);
        }
        apply_closure(&bg, &mut state, &anchor).unwrap();
        let direct = rhs(&bg, &state).unwrap();
        let mut e = vec![0.0; bg.nodes()];
        sys.explicit_accel(&state.r, &mut e).unwrap();
        let mut op = Tridiagonal::default();
        sys.implicit_operator(&state.r, &mut op).unwrap();
        let mut lv = vec![0.0; 23];
        op.apply(&state.v[1..24], &mut lv);
        for n in 1..24 {
            let split = e[n] + lv[n - 1];
            assert_relative_eq!(split, direct[n], max_relative = 1e-10, epsilon = 1e-10);
        }
    }

    #[test]
    fn thomas_solve_inverts_shifted_operator() {
        let t = Tridiagonal {
            lower: vec![0.0, 1.0, -2.0, 0.5],
            diag: vec![-4.0, -3.0, -5.0, -2.0],
            upper: vec![1.5, 0.3, 1.0, 0.0],
        };
        let x = [1.0, -2.0, 0.5, 3.0];
        let c = 0.7;
        let mut tx = [0.0; 4];
        t.apply(&x, &mut tx);
        let b: Vec<f64> = x.iter().zip(&tx).map(|(a, b)| a - c * b).collect();
        let mut sol = [0.0; 4];
        t.solve_shifted(c, &b, &mut sol).unwrap();
        for (a, b) in sol.iter().zip(&x) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
    }
}
