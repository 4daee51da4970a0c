use std::f64::consts::PI;

use approx::assert_relative_eq;
use proptest::prelude::*;
use vacuum_nsp::polytrope::{holder_slope, solve_dimensionless, solve_lane_emden, verify_physical_vacuum, DEFAULT_TOL};

// Independent RK integration of the ξ-form at step 1e-6 from the series start.
const XI1_N2: f64 = 4.352_874_595_946_076;
const OMEGA_N2: f64 = 2.411_046_012_096_899;
const XI1_N3: f64 = 6.896_848_619_376_001;
const RADIUS_G15_M1: f64 = 7.516_476_421_083_174;
const RHO_C_G15_M1: f64 = 0.006_410_179_719_441_172;

#[test]
fn dimensionless_golden_values() {
    let s = solve_dimensionless(1.0, DEFAULT_TOL).unwrap();
    assert_relative_eq!(s.xi1, PI, max_relative = 1e-10);
    assert_relative_eq!(s.mass_integral, PI, max_relative = 1e-9);

    let s = solve_dimensionless(2.0, DEFAULT_TOL).unwrap();
    assert!((s.xi1 - XI1_N2).abs() < 1e-9);
    assert!((s.mass_integral - OMEGA_N2).abs() < 1e-9);

    let s = solve_dimensionless(3.0, DEFAULT_TOL).unwrap();
    assert!((s.xi1 - XI1_N3).abs() < 1e-8);
}

#[test]
fn profile_golden_values() {
    let p = solve_lane_emden(1.5, 1.0, DEFAULT_TOL).unwrap();
    assert_relative_eq!(p.radius, RADIUS_G15_M1, max_relative = 1e-9);
    assert_relative_eq!(p.rho_center, RHO_C_G15_M1, max_relative = 1e-9);

    let p = solve_lane_emden(2.0, 1.0, DEFAULT_TOL).unwrap();
    assert!((p.radius - (PI / 2.0).sqrt()).abs() < 1e-8);
    assert!((p.rho_center - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-8);
}

#[test]
fn gamma_two_closed_form_at_half_radius() {
    let p = solve_lane_emden(2.0, 1.0, DEFAULT_TOL).unwrap();
    let alpha = 1.0 / (2.0 * PI).sqrt();
    let x = p.radius / 2.0;
    let xi = x / alpha;
    let rho_c = p.rho_center;
    let rho = rho_c * xi.sin() / xi;
    let dtheta = (xi * xi.cos() - xi.sin()) / (xi * xi);
    // φ = 4π ρ_c α³ (-ξ² θ') / x³
    let phi = 4.0 * PI * rho_c * alpha.powi(3) * (-xi * xi * dtheta) / x.powi(3);
    let e = p.eval(x).unwrap();
    assert_relative_eq!(e.rho, rho, max_relative = 1e-8);
    assert_relative_eq!(e.phi, phi, max_relative = 1e-8);
    assert_relative_eq!(e.q, -x * phi * rho, max_relative = 1e-8);
}

#[test]
fn gamma_two_vacuum_slope_is_one() {
    let p = solve_lane_emden(2.0, 1.0, DEFAULT_TOL).unwrap();
    let r = verify_physical_vacuum(&p).unwrap();
    assert!((r.slope - 1.0).abs() < 1e-2, "slope {}", r.slope);
    assert!(r.pass);
}

#[test]
fn quadratic_vacuum_is_rejected() {
    // ρ ∝ (R - x)² gives slope 2(γ - 1), which differs from 1 away from γ = 3/2.
    for gamma in [1.4, 1.8] {
        let samples: Vec<(f64, f64)> = (0..200).map(|k| k as f64 / 200.0).map(|x| (x, (1.0 - x).powi(2))).collect();
        let r = holder_slope(gamma, 1.0, &samples).unwrap();
        assert_relative_eq!(r.slope, 2.0 * (gamma - 1.0), epsilon = 1e-9);
        assert!(!r.pass);
    }
}

#[test]
fn gamma_two_radius_is_mass_independent() {
    let r1 = solve_lane_emden(2.0, 1.0, DEFAULT_TOL).unwrap();
    for m in [0.5, 3.0, 40.0] {
        let p = solve_lane_emden(2.0, m, DEFAULT_TOL).unwrap();
        assert_relative_eq!(p.radius, r1.radius, max_relative = 1e-12);
        assert_relative_eq!(p.rho_center, m * r1.rho_center, max_relative = 1e-12);
    }
}

fn gamma_strategy() -> impl Strategy<Value = f64> {
    (1.35f64..1.99).prop_filter("n = 3 excluded", |g| (g - 4.0 / 3.0).abs() > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn table_invariants(gamma in gamma_strategy(), mass in 0.2f64..20.0) {
        let p = solve_lane_emden(gamma, mass, DEFAULT_TOL).unwrap();
        let table = p.table();
        let tol = p.tol;
        let phi_lo = mass / p.radius.powi(3) - tol;
        let phi_hi = 4.0 * PI * p.rho_center / 3.0 + tol;
        let mut quad = 0.0;
        for w in table.windows(2) {
            let ((x0, a), (x1, b)) = (w[0], w[1]);
            if x1 < p.radius {
                prop_assert!(b.rho < a.rho, "density not decreasing at x = {x1}");
            }
            quad += 0.5 * (x1 - x0) * 4.0 * PI * (a.rho * x0 * x0 + b.rho * x1 * x1);
        }
        for (_, e) in &table {
            prop_assert!(e.phi >= phi_lo * (1.0 - 1e-12) && e.phi <= phi_hi * (1.0 + 1e-12));
            prop_assert!(e.q <= 0.0);
        }
        prop_assert!((quad - mass).abs() <= 10.0 * tol * mass, "mass {quad} vs {mass}");
        let (x_end, e_end) = table.last().copied().unwrap();
        prop_assert_eq!(x_end, p.radius);
        prop_assert_eq!(e_end.rho, 0.0);
    }

    #[test]
    fn mass_scaling(gamma in gamma_strategy(), mass in 0.2f64..20.0) {
        // x = α ξ with α ∝ ρ_c^{(1-n)/(2n)} and M ∝ ρ_c α³.
        let a = solve_lane_emden(gamma, mass, DEFAULT_TOL).unwrap();
        let b = solve_lane_emden(gamma, 2.0 * mass, DEFAULT_TOL).unwrap();
        let n = 1.0 / (gamma - 1.0);
        let k = 2.0f64.powf(2.0 * n / (3.0 - n));
        prop_assert!((b.rho_center / a.rho_center / k - 1.0).abs() < 1e-9);
        let radius_ratio = k.powf((1.0 - n) / (2.0 * n));
        prop_assert!((b.radius / a.radius / radius_ratio - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pressure_gradient_matches_q(gamma in gamma_strategy(), frac in 0.05f64..0.9) {
        let p = solve_lane_emden(gamma, 1.0, DEFAULT_TOL).unwrap();
        let x = frac * p.radius;
        let d = 1e-4 * p.radius;
        let pg = |x: f64| p.eval(x).unwrap().rho.powf(gamma);
        let fd = (pg(x + d) - pg(x - d)) / (2.0 * d);
        let q = p.eval(x).unwrap().q;
        prop_assert!((fd - q).abs() <= 1e-6 * q.abs().max(1e-12) + 1e-9 * p.rho_center.powf(gamma) / p.radius,
            "fd {fd} vs q {q}");
    }

    #[test]
    fn physical_vacuum_holds(gamma in 1.35f64..1.99) {
        let p = solve_lane_emden(gamma, 1.0, DEFAULT_TOL).unwrap();
        let r = verify_physical_vacuum(&p).unwrap();
        prop_assert!(r.pass, "slope {}", r.slope);
    }
}
