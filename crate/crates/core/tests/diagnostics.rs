use proptest::prelude::*;
use vacuum_nsp::diagnostics::{fit_decay, physical_energy, FitStatus};
use vacuum_nsp::harness::run_experiment;
use vacuum_nsp::polytrope::{solve_lane_emden, DEFAULT_TOL};
use vacuum_nsp::scheme::{cell_width, sample_background};
use vacuum_nsp::{Family, LagrangianState, PerturbationSpec, RunConfig, Viscosity};

#[test]
fn energy_functionals_stay_comparable() {
    let dir = tempfile::tempdir().unwrap();
    for (k, family) in [Family::RadialDilation, Family::VelocityKick, Family::Composite].into_iter().enumerate() {
        let config = RunConfig {
            total_mass: 8.0,
            n_cells: 100,
            t_end: 20.0,
            perturbation: PerturbationSpec::new(family, 0.01),
            ..Default::default()
        };
        let rep = run_experiment(&config, &dir.path().join(k.to_string())).unwrap();
        assert!(rep.termination.is_success());
        for r in &rep.records {
            let ratio = r.e_n / r.e_script;
            assert!((1.0 / 50.0..=50.0).contains(&ratio), "{family:?} t = {}: ratio {ratio}", r.t);
        }
    }
}

#[test]
fn synthetic_power_law_is_recovered() {
    let series: Vec<(f64, f64)> = (0..400).map(|k| 0.5 * k as f64).map(|t| (t, 3.0 * (1.0 + t).powf(-0.7))).collect();
    let fit = fit_decay("synthetic", &series, [20.0, 199.5], 0.7, 0.02).unwrap();
    assert_eq!(fit.status, FitStatus::Fitted);
    let p = fit.fitted_exponent.unwrap();
    assert!((p - 0.7).abs() <= 0.02, "exponent {p}");
    assert!(fit.pass);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn physical_energy_dominates_the_strain(
        gamma in 1.4f64..1.95,
        n_cells in 16usize..200,
        a in -0.04f64..0.04,
        b in -0.04f64..0.04,
        kick in -0.1f64..0.1,
    ) {
        let p = solve_lane_emden(gamma, 1.0, DEFAULT_TOL).unwrap();
        let bg = sample_background(&p, n_cells, Viscosity::UNIT).unwrap();
        let r: Vec<f64> = bg.x.iter().map(|&x| x * (1.0 + a + b * (x / bg.radius).powi(2))).collect();
        let v: Vec<f64> = bg.x.iter().map(|&x| kick * x).collect();
        let state = LagrangianState { t: 0.0, r, v };
        let mut bound = 0.0;
        for n in 1..n_cells {
            let s = state.r[n] / bg.x[n] - 1.0;
            let t = cell_width(&bg, &state.r, n) / bg.h - 1.0;
            prop_assume!(s.abs() <= 0.1 && t.abs() <= 0.1);
            bound += bg.x[n].powi(2) * bg.rho_gamma[n] * (2.0 * s * s + t * t);
        }
        bound *= (3.0 * gamma - 4.0) / 4.0 * bg.h;
        let (energy, dissipation) = physical_energy(&bg, &state);
        prop_assert!(energy >= bound * (1.0 - 1e-12), "energy {energy:e} < bound {bound:e}");
        prop_assert!(dissipation >= 0.0);
    }
}
