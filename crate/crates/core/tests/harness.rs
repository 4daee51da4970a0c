use std::fs;
use std::path::{Path, PathBuf};

use vacuum_nsp::harness::{cauchy_differences, exit, run_experiment, sweep, SweepAxes, DIAGNOSTICS_FILE};
use vacuum_nsp::{Family, PerturbationSpec, RunConfig};

fn base() -> RunConfig {
    RunConfig {
        total_mass: 8.0,
        n_cells: 48,
        t_end: 10.0,
        sample_interval: 0.5,
        perturbation: PerturbationSpec::new(Family::RadialDilation, 0.01),
        ..Default::default()
    }
}

fn point_dir(dir: &Path, k: usize) -> PathBuf {
    let prefix = format!("point_{k:03}_");
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_str().unwrap().starts_with(&prefix))
        .unwrap_or_else(|| panic!("no directory for point {k}"))
}

#[test]
fn single_point_sweep_matches_a_direct_run() {
    let dir = tempfile::tempdir().unwrap();
    let c = base();
    run_experiment(&c, &dir.path().join("direct")).unwrap();
    let rows = sweep(&c, &SweepAxes::default(), &dir.path().join("sweep"), 1).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].exit_code, exit::OK);
    let direct = fs::read(dir.path().join("direct").join(DIAGNOSTICS_FILE)).unwrap();
    let swept = fs::read(point_dir(&dir.path().join("sweep"), 0).join(DIAGNOSTICS_FILE)).unwrap();
    assert_eq!(direct, swept);
}

#[test]
fn refinement_sweep_converges() {
    let dir = tempfile::tempdir().unwrap();
    let axes = SweepAxes { n_cells: vec![50, 100, 200], ..Default::default() };
    let rows = sweep(&base(), &axes, dir.path(), 3).unwrap();
    assert!(rows.iter().all(|r| r.exit_code == exit::OK));
    let diffs = cauchy_differences(&rows);
    assert_eq!(diffs.len(), 2);
    assert!(diffs[1].1 < diffs[0].1, "{diffs:?}");
}

#[test]
fn failing_points_do_not_disturb_the_others() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = base();
    c.perturbation = PerturbationSpec::new(Family::VelocityKick, 0.01);
    // the first amplitude is beyond the admissible range
    let axes = SweepAxes { epsilon: vec![0.5, 0.01], ..Default::default() };
    let rows = sweep(&c, &axes, &dir.path().join("sweep"), 2).unwrap();
    assert_eq!(rows[0].exit_code, exit::CONFIG, "{:?}", rows[0]);
    assert!(rows[0].error.is_some());
    assert_eq!(rows[1].exit_code, exit::OK, "{:?}", rows[1]);

    run_experiment(&c, &dir.path().join("alone")).unwrap();
    let alone = fs::read(dir.path().join("alone").join(DIAGNOSTICS_FILE)).unwrap();
    let swept = fs::read(point_dir(&dir.path().join("sweep"), 1).join(DIAGNOSTICS_FILE)).unwrap();
    assert_eq!(alone, swept);
}
