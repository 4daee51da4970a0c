//! Shared fixtures for the benchmarks.

use vacuum_nsp::initial_data::build_perturbation;
use vacuum_nsp::polytrope::{solve_lane_emden, DEFAULT_TOL};
use vacuum_nsp::scheme::sample_background;
use vacuum_nsp::{BackgroundGrid, Family, InitialData, PerturbationSpec, Viscosity};

/// Mass of the benchmark star.
pub const MASS: f64 = 8.0;

/// Dilated `γ = 3/2` star on `n_cells` cells.
pub fn dilated_star(n_cells: usize) -> (BackgroundGrid, InitialData) {
    let profile = solve_lane_emden(1.5, MASS, DEFAULT_TOL).expect("profile");
    let bg = sample_background(&profile, n_cells, Viscosity::UNIT).expect("grid");
    let spec = PerturbationSpec::new(Family::RadialDilation, 0.01).with_taper(0.0);
    let data = build_perturbation(&profile, &bg, &spec, 0.05).expect("initial data");
    (bg, data)
}
