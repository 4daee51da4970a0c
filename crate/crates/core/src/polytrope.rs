//! Lane-Emden equilibria with compact support.
//!
//! The background gas ball solves `(ρ̄^γ)' = -ρ̄ m(x)/x²` with `K = G = 1`.
//! It is computed through the classical dimensionless form
//!
//! ```text
//! (ξ² θ')' = -ξ² θⁿ,   θ(0) = 1, θ'(0) = 0,   n = 1/(γ-1)
//! ```
//!
//! and mapped back with `ρ̄ = ρ_c θⁿ`, `x = α ξ`, `α² = (n+1) ρ_c^{1/n-1} / (4π)`.
//! The central density is fixed by the total mass
//! `M = 4π ρ_c α³ (-ξ₁² θ'(ξ₁))`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};

/// Default tolerance of the dimensionless solve.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Where the integration leaves the series expansion around the origin.
const SERIES_START: f64 = 1e-4;
/// RK4 step used in the bulk of the profile.
const BULK_STEP: f64 = 1e-4;
/// Fraction of `[0, ξ₁]` covered by the uniform part of the table.
const BULK_FRACTION: f64 = 0.9;
/// Number of clustered nodes in the outer part of the table.
const OUTER_NODES: usize = 8000;

/// Solution of the dimensionless Lane-Emden equation on `[0, ξ₁]`.
#[derive(Debug, Clone)]
pub struct DimensionlessSolution {
    pub index_n: f64,
    /// First zero of θ.
    pub xi1: f64,
    /// `-ξ₁² θ'(ξ₁)`.
    pub mass_integral: f64,
    pub xi: Vec<f64>,
    pub theta: Vec<f64>,
    pub dtheta: Vec<f64>,
    /// Largest integral-form ODE residual over the table intervals.
    pub max_residual: f64,
}

#[inline]
fn le_rhs(n: f64, xi: f64, theta: f64, dtheta: f64) -> (f64, f64) {
    (dtheta, -theta.max(0.0).powf(n) - 2.0 * dtheta / xi)
}

fn rk4(n: f64, xi: f64, y: (f64, f64), h: f64) -> (f64, f64) {
    let (k1a, k1b) = le_rhs(n, xi, y.0, y.1);
    let (k2a, k2b) = le_rhs(n, xi + 0.5 * h, y.0 + 0.5 * h * k1a, y.1 + 0.5 * h * k1b);
    let (k3a, k3b) = le_rhs(n, xi + 0.5 * h, y.0 + 0.5 * h * k2a, y.1 + 0.5 * h * k2b);
    let (k4a, k4b) = le_rhs(n, xi + h, y.0 + h * k3a, y.1 + h * k3b);
    (
        y.0 + h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a),
        y.1 + h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b),
    )
}

fn series(n: f64, xi: f64) -> (f64, f64) {
    let x2 = xi * xi;
    (1.0 - x2 / 6.0 + n * x2 * x2 / 120.0, -xi / 3.0 + n * xi * x2 / 30.0)
}

/// Cubic Hermite interpolation of θ on `[a, b]`.
#[inline]
fn hermite(a: f64, b: f64, ya: f64, yb: f64, da: f64, db: f64, x: f64) -> (f64, f64) {
    let h = b - a;
    let s = (x - a) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let y = h00 * ya + h10 * h * da + h01 * yb + h11 * h * db;
    let dy = ((6.0 * s2 - 6.0 * s) * ya + (3.0 * s2 - 4.0 * s + 1.0) * h * da
        + (-6.0 * s2 + 6.0 * s) * yb
        + (3.0 * s2 - 2.0 * s) * h * db)
        / h;
    (y, dy)
}

/// Integrates from the series start until θ changes sign, then bisects the
/// last step for the zero.
fn locate_first_zero(n: f64, tol: f64) -> Result<(f64, f64)> {
    let mut xi = SERIES_START;
    let mut y = series(n, xi);
    let max_xi = 50.0;
    while xi < max_xi {
        let next = rk4(n, xi, y, BULK_STEP);
        if next.0 <= 0.0 {
            let (mut lo, mut hi) = (0.0_f64, BULK_STEP);
            let mut iterations = 0;
            while hi - lo > tol.min(1e-15 * xi.max(1.0)).max(f64::EPSILON * xi) {
                let mid = 0.5 * (lo + hi);
                if rk4(n, xi, y, mid).0 > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                iterations += 1;
                if iterations > 200 {
                    return Err(Error::SolverFailure("bisection for ξ₁ did not converge".into()));
                }
            }
            let xi1 = xi + hi;
            let at_zero = rk4(n, xi, y, hi);
            return Ok((xi1, at_zero.1));
        }
        xi += BULK_STEP;
        y = next;
    }
    Err(Error::SolverFailure(format!(
        "no zero of θ found below ξ = {max_xi} for n = {n}"
    )))
}

/// Solves the dimensionless Lane-Emden equation for `1 <= n < 5`.
pub fn solve_dimensionless(index_n: f64, tol: f64) -> Result<DimensionlessSolution> {
    if !(index_n.is_finite() && (1.0..5.0).contains(&index_n)) {
        return Err(Error::UnsupportedIndex { index: index_n });
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let n = index_n;
    let (xi1, _) = locate_first_zero(n, tol)?;

    // Second pass: uniform bulk, then nodes clustered quadratically toward ξ₁.
    let xi_bulk = BULK_FRACTION * xi1;
    let bulk_steps = ((xi_bulk - SERIES_START) / BULK_STEP).ceil() as usize;
    let dxi = (xi_bulk - SERIES_START) / bulk_steps as f64;
    let capacity = bulk_steps + OUTER_NODES + 2;
    let mut xs = Vec::with_capacity(capacity);
    let mut th = Vec::with_capacity(capacity);
    let mut dth = Vec::with_capacity(capacity);
    xs.push(0.0);
    th.push(1.0);
    dth.push(0.0);
    let mut y = series(n, SERIES_START);
    let mut xi = SERIES_START;
    xs.push(xi);
    th.push(y.0);
    dth.push(y.1);
    for k in 1..=bulk_steps {
        let target = SERIES_START + k as f64 * dxi;
        y = rk4(n, xi, y, target - xi);
        xi = target;
        xs.push(xi);
        th.push(y.0);
        dth.push(y.1);
    }
    let span = xi1 - xi_bulk;
    for j in 1..=OUTER_NODES {
        let s = 1.0 - j as f64 / OUTER_NODES as f64;
        let target = xi1 - span * s * s;
        y = rk4(n, xi, y, target - xi);
        xi = target;
        xs.push(xi);
        th.push(y.0);
        dth.push(y.1);
    }
    if th[th.len() - 1].abs() > 1e3 * tol.max(1e-13) {
        return Err(Error::SolverFailure(format!(
            "θ(ξ₁) = {:e} after table pass, expected 0",
            th[th.len() - 1]
        )));
    }
    let last = th.len() - 1;
    th[last] = 0.0;
    let mass_integral = -xi1 * xi1 * dth[last];

    // Integral-form residual: ξ²θ'|_a^b + ∫_a^b ξ² θⁿ dξ on every table interval.
    let gauss = [
        (-(0.6_f64).sqrt(), 5.0 / 9.0),
        (0.0, 8.0 / 9.0),
        ((0.6_f64).sqrt(), 5.0 / 9.0),
    ];
    let mut max_residual = 0.0_f64;
    for k in 1..xs.len() - 1 {
        let (a, b) = (xs[k], xs[k + 1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let integral: f64 = gauss
            .iter()
            .map(|&(g, w)| {
                let s = mid + half * g;
                let (t, _) = hermite(a, b, th[k], th[k + 1], dth[k], dth[k + 1], s);
                w * s * s * t.max(0.0).powf(n)
            })
            .sum::<f64>()
            * half;
        let flux = b * b * dth[k + 1] - a * a * dth[k];
        max_residual = max_residual.max((flux + integral).abs());
    }
    if !(max_residual < tol) {
        return Err(Error::SolverFailure(format!(
            "ODE residual {max_residual:e} exceeds tolerance {tol:e}"
        )));
    }

    Ok(DimensionlessSolution {
        index_n: n,
        xi1,
        mass_integral,
        xi: xs,
        theta: th,
        dtheta: dth,
        max_residual,
    })
}

impl DimensionlessSolution {
    /// θ and θ' at `xi ∈ [0, ξ₁]`.
    pub fn eval(&self, xi: f64) -> (f64, f64) {
        if xi <= SERIES_START {
            return series(self.index_n, xi);
        }
        if xi >= self.xi1 {
            return (0.0, self.dtheta[self.dtheta.len() - 1]);
        }
        let k = self.xi.partition_point(|&s| s <= xi).saturating_sub(1);
        let k = k.min(self.xi.len() - 2);
        let (t, d) = hermite(
            self.xi[k],
            self.xi[k + 1],
            self.theta[k],
            self.theta[k + 1],
            self.dtheta[k],
            self.dtheta[k + 1],
            xi,
        );
        (t.max(0.0), d)
    }

    /// `-θ'(ξ)/ξ`, continuous at the origin with value 1/3.
    fn mean_density_ratio(&self, xi: f64) -> f64 {
        if xi <= SERIES_START {
            1.0 / 3.0 - self.index_n * xi * xi / 30.0
        } else {
            -self.eval(xi).1 / xi
        }
    }
}

/// Equilibrium density `ρ̄` with compact support `[0, R̄]`.
///
/// Immutable after construction; share it freely between threads.
#[derive(Debug, Clone)]
pub struct PolytropeProfile {
    pub gamma: f64,
    pub total_mass: f64,
    /// Support radius R̄.
    pub radius: f64,
    /// ρ̄(0).
    pub rho_center: f64,
    pub polytropic_index: f64,
    /// Length scale α with `x = α ξ`.
    pub length_scale: f64,
    pub tol: f64,
    solution: DimensionlessSolution,
}

/// Value of the background at one radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub rho: f64,
    /// `(ρ̄^γ)_x = -x φ ρ̄`.
    pub q: f64,
    /// `φ = x⁻³ ∫₀ˣ 4π ρ̄ s² ds`.
    pub phi: f64,
}

/// Solves for the equilibrium of total mass `total_mass` with `K = G = 1`.
///
/// Any `γ` with index `1 <= n < 5`, `n != 3` is accepted here; the stability
/// range `γ ∈ (4/3, 2)` is policed by the run configuration.
pub fn solve_lane_emden(gamma: f64, total_mass: f64, tol: f64) -> Result<PolytropeProfile> {
    if !(total_mass > 0.0 && total_mass.is_finite()) {
        return Err(Error::Domain(format!("total mass must be positive, got {total_mass}")));
    }
    if !(gamma > 1.0 && gamma.is_finite()) {
        return Err(Error::Domain(format!("gamma must exceed 1, got {gamma}")));
    }
    let n = 1.0 / (gamma - 1.0);
    let solution = solve_dimensionless(n, tol)?;
    // M = 4π ω ((n+1)/4π)^{3/2} ρ_c^{(3-n)/(2n)}
    let exponent = (3.0 - n) / (2.0 * n);
    if exponent.abs() < 1e-12 {
        return Err(Error::Domain(
            "gamma = 4/3: the mass does not determine the central density".into(),
        ));
    }
    let coefficient = 4.0 * PI * solution.mass_integral * ((n + 1.0) / (4.0 * PI)).powf(1.5);
    let rho_center = (total_mass / coefficient).powf(1.0 / exponent);
    let length_scale = ((n + 1.0) * rho_center.powf(1.0 / n - 1.0) / (4.0 * PI)).sqrt();
    let radius = length_scale * solution.xi1;
    Ok(PolytropeProfile {
        gamma,
        total_mass,
        radius,
        rho_center,
        polytropic_index: n,
        length_scale,
        tol,
        solution,
    })
}

impl PolytropeProfile {
    pub fn dimensionless(&self) -> &DimensionlessSolution {
        &self.solution
    }

    /// ρ̄, `(ρ̄^γ)_x` and φ at `x ∈ [0, R̄]`.
    pub fn eval(&self, x: f64) -> Result<ProfilePoint> {
        let slack = 1e-12 * self.radius;
        if !(x >= -slack && x <= self.radius + slack) {
            return Err(Error::Domain(format!(
                "x = {x} outside the support [0, {}]",
                self.radius
            )));
        }
        if x <= 0.0 {
            return Ok(ProfilePoint {
                rho: self.rho_center,
                q: 0.0,
                phi: 4.0 * PI * self.rho_center / 3.0,
            });
        }
        if x >= self.radius {
            return Ok(ProfilePoint {
                rho: 0.0,
                q: 0.0,
                phi: self.total_mass / self.radius.powi(3),
            });
        }
        let xi = x / self.length_scale;
        let (theta, _) = self.solution.eval(xi);
        let rho = self.rho_center * theta.powf(self.polytropic_index);
        let phi = 4.0 * PI * self.rho_center * self.solution.mean_density_ratio(xi);
        Ok(ProfilePoint { rho, q: -x * phi * rho, phi })
    }

    /// Mass enclosed in the ball of radius `x`, `∫₀ˣ 4π ρ̄ s² ds = x³ φ(x)`.
    pub fn enclosed_mass(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        if x >= self.radius {
            return Ok(self.total_mass);
        }
        Ok(x.powi(3) * self.eval(x)?.phi)
    }

    /// Radii of the internal table in physical units, clustered toward R̄.
    pub fn table_radii(&self) -> impl Iterator<Item = f64> + '_ {
        self.solution.xi.iter().map(move |&xi| (xi * self.length_scale).min(self.radius))
    }

    /// `(x, ρ̄, (ρ̄^γ)_x, φ)` on the internal table.
    pub fn table(&self) -> Vec<(f64, ProfilePoint)> {
        self.table_radii()
            .map(|x| (x, self.eval(x).expect("table node inside support")))
            .collect()
    }
}

/// Outcome of the log-log fit of `ρ̄^{γ-1}` against the distance to the
/// vacuum boundary.
#[derive(Debug, Clone, Serialize)]
pub struct HolderReport {
    pub slope: f64,
    pub window: (f64, f64),
    pub samples: usize,
    pub pass: bool,
}

/// Fraction of the support used by the vacuum fit.
pub const VACUUM_WINDOW: f64 = 0.05;
const MIN_VACUUM_SAMPLES: usize = 8;

/// Fits the slope of `log ρ^{γ-1}` against `log(R̄ - x)` over the outer 5% of
/// the support from arbitrary `(x, ρ)` samples.
pub fn holder_slope(gamma: f64, radius: f64, samples: &[(f64, f64)]) -> Result<HolderReport> {
    let lo = (1.0 - VACUUM_WINDOW) * radius;
    let points: Vec<(f64, f64)> = samples
        .iter()
        .filter(|&&(x, rho)| x >= lo && x < radius && rho > 0.0)
        .map(|&(x, rho)| ((radius - x).ln(), (gamma - 1.0) * rho.ln()))
        .collect();
    if points.len() < MIN_VACUUM_SAMPLES {
        return Err(Error::InsufficientResolution {
            found: points.len(),
            needed: MIN_VACUUM_SAMPLES,
        });
    }
    let (slope, _, _) = crate::diagnostics::least_squares_line(&points);
    Ok(HolderReport {
        slope,
        window: (lo, radius),
        samples: points.len(),
        pass: (0.95..=1.05).contains(&slope),
    })
}

/// Checks the physical vacuum law `ρ̄^{γ-1} ~ R̄ - x` on the profile table.
pub fn verify_physical_vacuum(profile: &PolytropeProfile) -> Result<HolderReport> {
    let samples: Vec<(f64, f64)> = profile
        .table_radii()
        .map(|x| (x, profile.eval(x).map(|p| p.rho).unwrap_or(0.0)))
        .collect();
    holder_slope(profile.gamma, profile.radius, &samples)
}
