//! Run configuration, experiment orchestration and on-disk artifacts.
//!
//! A run directory holds four files:
//!
//! | file | content |
//! |------|---------|
//! | `profile.csv` | `# {json header}` then `x,rho,q,phi` |
//! | `diagnostics.csv` | one [`DiagnosticRecord`] per sample |
//! | `metadata.jsonl` | config echo, then the termination record |
//! | `fits.json` | fitted decay exponents against the theoretical floors |
//!
//! Numbers are written with 17 significant digits so that reruns compare
//! byte for byte.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    fit_decay, theoretical_exponents, weighted_norms, DecayExponentTable, DecayFitResult, DiagnosticOptions,
    DiagnosticRecord,
};
use crate::error::{Error, Result};
use crate::initial_data::{build_perturbation, check_compatibility, CompatibilityReport, PerturbationSpec};
use crate::integrator::{self, Mode, StepPolicy, Termination, TimeStep};
use crate::linearized::{linear_energy, run_linear, unit_linear_data, Stencil};
use crate::polytrope::{solve_lane_emden, PolytropeProfile, DEFAULT_TOL};
use crate::scheme::{sample_background, BackgroundGrid, LagrangianState, Viscosity};

pub const SCHEMA_VERSION: u32 = 1;

/// Smallest grid accepted from a config file.
pub const MIN_CONFIG_CELLS: usize = 16;

/// Environment variable holding the sweep worker count.
pub const WORKERS_ENV: &str = "VACUUM_NSP_WORKERS";

pub const PROFILE_FILE: &str = "profile.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const METADATA_FILE: &str = "metadata.jsonl";
pub const FITS_FILE: &str = "fits.json";
pub const LINEAR_FILE: &str = "linear.csv";

pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const SOLVER: i32 = 3;
    pub const MESH: i32 = 4;
    pub const BLOWUP: i32 = 5;
}

impl Error {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::UnsupportedIndex { .. }
            | Error::Domain(_)
            | Error::MassMismatch { .. }
            | Error::InvalidDensity(_)
            | Error::InvalidPerturbation(_)
            | Error::InsufficientResolution { .. } => exit::CONFIG,
            Error::MeshTangling { .. } => exit::MESH,
            Error::SolverFailure(_) | Error::StepFailure { .. } | Error::CannotFit(_) | Error::Io(_) => exit::SOLVER,
        }
    }
}

pub fn termination_exit_code(t: &Termination) -> i32 {
    match t {
        Termination::Completed | Termination::MaxSteps | Termination::StoppedBySink => exit::OK,
        Termination::MeshTangling { .. } => exit::MESH,
        Termination::BlowUp { .. } => exit::BLOWUP,
        Termination::StepFailure { .. } => exit::SOLVER,
    }
}

/// Time-stepping keys of the `[policy]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub mode: Mode,
    /// Step size, or its upper bound when `adaptive`.
    pub dt: f64,
    pub adaptive: bool,
    pub cfl_safety: f64,
    pub max_steps: Option<usize>,
    pub blowup_factor: f64,
    pub damped_start: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        let p = StepPolicy::default();
        Self {
            mode: p.mode,
            dt: 1e-3,
            adaptive: true,
            cfl_safety: p.cfl_safety,
            max_steps: None,
            blowup_factor: p.blowup_factor,
            damped_start: p.damped_start,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub gamma: f64,
    pub total_mass: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub n_cells: usize,
    pub t_end: f64,
    pub sample_interval: f64,
    pub theta: f64,
    /// Indices of the reported 𝔉_α; `None` means `{γ-1, γ, 2γ-1}`.
    pub alpha_list: Option<Vec<f64>>,
    pub delta: f64,
    /// Fit window; `None` means `[t_end/4, t_end]`.
    pub fit_window: Option<[f64; 2]>,
    pub fit_slack: f64,
    pub max_epsilon: f64,
    /// Admits `γ = 2`.
    pub allow_edge: bool,
    pub stencil: Stencil,
    pub output_dir: Option<PathBuf>,
    pub perturbation: PerturbationSpec,
    pub policy: PolicyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            gamma: 1.5,
            total_mass: 1.0,
            lambda1: Viscosity::UNIT.lambda1,
            lambda2: Viscosity::UNIT.lambda2,
            n_cells: 400,
            t_end: 200.0,
            sample_interval: 0.5,
            theta: 0.05,
            alpha_list: None,
            delta: 0.5,
            fit_window: None,
            fit_slack: 0.05,
            max_epsilon: crate::initial_data::DEFAULT_MAX_EPSILON,
            allow_edge: false,
            stencil: Stencil::Conservative,
            output_dir: None,
            perturbation: PerturbationSpec::equilibrium(),
            policy: PolicyConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let g = self.gamma;
        let upper_ok = if self.allow_edge { g <= 2.0 } else { g < 2.0 };
        if !(g > 4.0 / 3.0 && upper_ok) {
            return Err(Error::Config(format!(
                "gamma = {g} outside the stability range gamma in (4/3, 2){}",
                if self.allow_edge { "" } else { " (allow_edge admits gamma = 2)" }
            )));
        }
        if !(self.total_mass > 0.0 && self.total_mass.is_finite()) {
            return Err(Error::Config(format!("total_mass must be positive, got {}", self.total_mass)));
        }
        if !(self.lambda1 > 0.0 && self.lambda2 > 0.0) {
            return Err(Error::Config(format!(
                "viscosities must be positive (lambda1 shear, lambda2 bulk), got lambda1 = {}, lambda2 = {}",
                self.lambda1, self.lambda2
            )));
        }
        if self.n_cells < MIN_CONFIG_CELLS {
            return Err(Error::Config(format!("n_cells = {} below the minimum {MIN_CONFIG_CELLS}", self.n_cells)));
        }
        if !(self.sample_interval > 0.0) {
            return Err(Error::Config(format!("sample_interval must be positive, got {}", self.sample_interval)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.fit_slack >= 0.0) {
            return Err(Error::Config(format!("fit_slack must be >= 0, got {}", self.fit_slack)));
        }
        theoretical_exponents(g, self.theta, None).map_err(|e| Error::Config(e.to_string()))?;
        self.perturbation.validate(self.max_epsilon).map_err(|e| Error::Config(e.to_string()))?;
        self.step_policy().validate()
    }

    pub fn viscosity(&self) -> Result<Viscosity> {
        Viscosity::new(self.lambda1, self.lambda2)
    }

    pub fn step_policy(&self) -> StepPolicy {
        let p = &self.policy;
        StepPolicy {
            mode: p.mode,
            dt: if p.adaptive { TimeStep::Adaptive { max: p.dt } } else { TimeStep::Fixed(p.dt) },
            cfl_safety: p.cfl_safety,
            t_end: self.t_end,
            max_steps: p.max_steps.unwrap_or(usize::MAX),
            blowup_factor: p.blowup_factor,
            damped_start: p.damped_start,
        }
    }

    pub fn diagnostic_options(&self) -> DiagnosticOptions {
        let mut o = DiagnosticOptions::for_gamma(self.gamma);
        if let Some(a) = &self.alpha_list {
            o.alphas = a.clone();
        }
        o.delta = self.delta;
        o
    }

    pub fn window(&self) -> [f64; 2] {
        self.fit_window.unwrap_or([self.t_end / 4.0, self.t_end])
    }
}

/// Parses and validates a TOML config; unknown keys are errors.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// The equilibrium of a config and its sampled grid.
pub struct Setup {
    pub profile: PolytropeProfile,
    pub bg: BackgroundGrid,
}

pub fn setup(config: &RunConfig) -> Result<Setup> {
    let profile = solve_lane_emden(config.gamma, config.total_mass, DEFAULT_TOL)?;
    let bg = sample_background(&profile, config.n_cells, config.viscosity()?)?;
    Ok(Setup { profile, bg })
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Io(e.to_string())
}

#[derive(Debug, Clone, Serialize)]
struct ProfileHeader {
    gamma: f64,
    total_mass: f64,
    radius: f64,
    rho_center: f64,
    polytropic_index: f64,
    tol: f64,
}

/// Writes `# {header}` and the `x,rho,q,phi` table.
pub fn write_profile(profile: &PolytropeProfile, path: &Path) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    let header = ProfileHeader {
        gamma: profile.gamma,
        total_mass: profile.total_mass,
        radius: profile.radius,
        rho_center: profile.rho_center,
        polytropic_index: profile.polytropic_index,
        tol: profile.tol,
    };
    writeln!(file, "# {}", serde_json::to_string(&header).map_err(json_error)?)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["x", "rho", "q", "phi"]).map_err(csv_error)?;
    for (x, p) in profile.table() {
        w.write_record([fmt(x), fmt(p.rho), fmt(p.q), fmt(p.phi)]).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Incremental CSV writer for diagnostic records.
struct RecordWriter {
    inner: csv::Writer<BufWriter<File>>,
    header_done: bool,
}

impl RecordWriter {
    fn create(path: &Path) -> Result<Self> {
        Ok(Self { inner: csv::Writer::from_writer(BufWriter::new(File::create(path)?)), header_done: false })
    }

    fn push(&mut self, cols: &[(String, f64)]) -> Result<()> {
        if !self.header_done {
            self.inner.write_record(cols.iter().map(|c| c.0.as_str())).map_err(csv_error)?;
            self.header_done = true;
        }
        self.inner.write_record(cols.iter().map(|c| fmt(c.1))).map_err(csv_error)?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// One fitted quantity of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitEntry {
    pub column: String,
    pub floor: f64,
    pub result: Option<DecayFitResult>,
    pub error: Option<String>,
}

impl FitEntry {
    pub fn pass(&self) -> bool {
        self.result.as_ref().is_some_and(|r| r.pass)
    }

    pub fn exponent(&self) -> Option<f64> {
        self.result.as_ref().and_then(|r| r.fitted_exponent)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub gamma: f64,
    pub theta: f64,
    pub window: [f64; 2],
    pub slack: f64,
    pub fits: Vec<FitEntry>,
    pub all_pass: bool,
}

impl FitReport {
    pub fn get(&self, column: &str) -> Option<&FitEntry> {
        self.fits.iter().find(|f| f.column == column)
    }
}

/// Diagnostic columns paired with the theorem's exponent for each.
pub fn fitted_columns(table: &DecayExponentTable) -> Vec<(&'static str, f64)> {
    vec![
        ("sup_r_minus_x", table.p_r_linf),
        ("sup_v", table.p_u_linf),
        ("L2_v", table.p_v_l2),
        ("sup_vx", table.p_ur_linf),
        ("density_deviation", table.p_rho_weighted),
    ]
}

/// Fits every column of [`fitted_columns`] found in `series`.
pub fn fit_series(
    columns: &[String],
    rows: &[Vec<f64>],
    gamma: f64,
    theta: f64,
    window: [f64; 2],
    slack: f64,
) -> Result<FitReport> {
    let table = theoretical_exponents(gamma, theta, None)?;
    let t_col = columns
        .iter()
        .position(|c| c == "t")
        .ok_or_else(|| Error::CannotFit("missing t column".into()))?;
    let mut fits = Vec::new();
    for (name, floor) in fitted_columns(&table) {
        let Some(k) = columns.iter().position(|c| c == name) else { continue };
        let series: Vec<(f64, f64)> = rows.iter().map(|r| (r[t_col], r[k])).collect();
        let entry = match fit_decay(name, &series, window, floor, slack) {
            Ok(r) => FitEntry { column: name.into(), floor, result: Some(r), error: None },
            Err(e) => FitEntry { column: name.into(), floor, result: None, error: Some(e.to_string()) },
        };
        fits.push(entry);
    }
    let all_pass = !fits.is_empty() && fits.iter().all(FitEntry::pass);
    Ok(FitReport { schema_version: SCHEMA_VERSION, gamma, theta, window, slack, fits, all_pass })
}

/// Reads a diagnostics CSV into its header and numeric rows.
pub fn read_diagnostics(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let columns: Vec<String> = r.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_error)?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Io(format!("{}: {s:?}: {e}", path.display()))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((columns, rows))
}

/// The `fit` step on a diagnostics file written earlier.
pub fn fit_csv(path: &Path, gamma: f64, theta: f64, window: [f64; 2], slack: f64) -> Result<FitReport> {
    let (columns, rows) = read_diagnostics(path)?;
    fit_series(&columns, &rows, gamma, theta, window, slack)
}

#[derive(Debug, Clone, Serialize)]
struct MetadataHead<'a> {
    schema_version: u32,
    kind: &'static str,
    config: &'a RunConfig,
    radius: f64,
    rho_center: f64,
    compatibility: &'a CompatibilityReport,
}

#[derive(Debug, Clone, Serialize)]
struct MetadataTail<'a> {
    schema_version: u32,
    kind: &'static str,
    termination: &'a Termination,
    exit_code: i32,
    steps: usize,
    samples: usize,
    wall_time_s: f64,
    final_record: Option<&'a DiagnosticRecord>,
    all_fits_pass: bool,
}

#[derive(Debug, Clone, Serialize)]
struct FailureRecord<'a> {
    schema_version: u32,
    kind: &'static str,
    stage: &'a str,
    error: String,
    exit_code: i32,
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub radius: f64,
    pub termination: Termination,
    pub exit_code: i32,
    pub steps: usize,
    pub records: Vec<DiagnosticRecord>,
    /// Sampled scaled boundary stress `|𝔅_N| / (|v_{N-1}|/h + 1)`.
    pub boundary_stress: Vec<f64>,
    pub fits: FitReport,
    pub wall_time_s: f64,
    pub dir: PathBuf,
}

fn append_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{}", serde_json::to_string(value).map_err(json_error)?)?;
    Ok(())
}

/// Records a failure before any trajectory exists, so the directory is
/// never left without an explanation.
fn write_failure(dir: &Path, stage: &str, err: &Error) -> Result<()> {
    let rec = FailureRecord {
        schema_version: SCHEMA_VERSION,
        kind: "failure",
        stage,
        error: err.to_string(),
        exit_code: err.exit_code(),
    };
    append_json(&dir.join(METADATA_FILE), &rec)
}

/// Runs one configuration and writes its artifacts into `dir`.
///
/// Setup errors are returned (after a failure record is written); a run
/// that stops on mesh tangling, blow-up or a failed step still returns a
/// report, with the matching exit code.
pub fn run_experiment(config: &RunConfig, dir: &Path) -> Result<ExperimentReport> {
    fs::create_dir_all(dir)?;
    let _ = fs::remove_file(dir.join(METADATA_FILE));
    let staged = (|| {
        config.validate()?;
        let s = setup(config)?;
        let data = build_perturbation(&s.profile, &s.bg, &config.perturbation, config.max_epsilon)?;
        Ok((s, data))
    })();
    let (s, data) = match staged {
        Ok(v) => v,
        Err(e) => {
            write_failure(dir, "setup", &e)?;
            return Err(e);
        }
    };
    let Setup { profile, bg } = s;
    write_profile(&profile, &dir.join(PROFILE_FILE))?;
    let compat = check_compatibility(&data.state, &bg);
    append_json(
        &dir.join(METADATA_FILE),
        &MetadataHead {
            schema_version: SCHEMA_VERSION,
            kind: "config",
            config,
            radius: profile.radius,
            rho_center: profile.rho_center,
            compatibility: &compat,
        },
    )?;

    let options = config.diagnostic_options();
    let policy = config.step_policy();
    let mut writer = RecordWriter::create(&dir.join(DIAGNOSTICS_FILE))?;
    let mut records = Vec::new();
    let mut stresses = Vec::new();
    let clock = Instant::now();
    let (_, out) = integrator::run_state(&bg, &data.anchor, &data.state, &policy, config.sample_interval, |smp| {
        let st = LagrangianState { t: smp.t, r: smp.q.to_vec(), v: smp.p.to_vec() };
        let rec = weighted_norms(&bg, &st, smp.accel, smp.boundary_rate, &options);
        writer.push(&rec.columns())?;
        let v_prev = st.v[bg.n_cells - 1].abs();
        stresses.push(crate::scheme::boundary_stress(&bg, &st).abs() / (v_prev / bg.h + 1.0));
        records.push(rec);
        Ok(true)
    })?;
    let wall_time_s = clock.elapsed().as_secs_f64();
    writer.finish()?;

    let cols: Vec<String> = records.first().map(|r| r.columns().into_iter().map(|c| c.0).collect()).unwrap_or_default();
    let rows: Vec<Vec<f64>> = records.iter().map(|r| r.columns().into_iter().map(|c| c.1).collect()).collect();
    let fits = fit_series(&cols, &rows, config.gamma, config.theta, config.window(), config.fit_slack)?;
    fs::write(dir.join(FITS_FILE), serde_json::to_string_pretty(&fits).map_err(json_error)?)?;

    let exit_code = termination_exit_code(&out.termination);
    append_json(
        &dir.join(METADATA_FILE),
        &MetadataTail {
            schema_version: SCHEMA_VERSION,
            kind: "result",
            termination: &out.termination,
            exit_code,
            steps: out.steps,
            samples: out.samples,
            wall_time_s,
            final_record: records.last(),
            all_fits_pass: fits.all_pass,
        },
    )?;
    Ok(ExperimentReport {
        radius: profile.radius,
        termination: out.termination,
        exit_code,
        steps: out.steps,
        records,
        boundary_stress: stresses,
        fits,
        wall_time_s,
        dir: dir.to_path_buf(),
    })
}

/// One sample of a linear run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearRecord {
    pub t: f64,
    pub energy: f64,
    pub dissipation: f64,
    pub sup_w: f64,
    pub sup_w_t: f64,
    /// `E(t) - E(0) + ∫₀ᵗ D`, trapezoid in time over the samples.
    pub balance: f64,
}

impl LinearRecord {
    pub const COLUMNS: [&'static str; 6] = ["t", "energy", "dissipation", "sup_w", "sup_w_t", "balance"];

    fn row(&self) -> [f64; 6] {
        [self.t, self.energy, self.dissipation, self.sup_w, self.sup_w_t, self.balance]
    }
}

#[derive(Debug, Clone)]
pub struct LinearReport {
    pub termination: Termination,
    pub exit_code: i32,
    pub records: Vec<LinearRecord>,
    pub reference_viscosity: bool,
}

/// Runs the linear problem with data `ε · (unit data of the perturbation)`
/// and writes `linear.csv` and `metadata.jsonl` into `dir`.
pub fn run_linear_experiment(config: &RunConfig, dir: &Path) -> Result<LinearReport> {
    fs::create_dir_all(dir)?;
    let _ = fs::remove_file(dir.join(METADATA_FILE));
    let staged = (|| {
        config.validate()?;
        let s = setup(config)?;
        let mut st = unit_linear_data(&s.profile, &s.bg, &config.perturbation)?;
        let eps = config.perturbation.epsilon;
        st.w.iter_mut().chain(st.w_t.iter_mut()).for_each(|x| *x *= eps);
        Ok((s, st))
    })();
    let (s, st) = match staged {
        Ok(v) => v,
        Err(e) => {
            write_failure(dir, "setup", &e)?;
            return Err(e);
        }
    };
    let bg = &s.bg;
    let reference_viscosity = crate::linearized::LinearSystem::new(bg, config.stencil, &st.w).is_reference_viscosity();
    #[derive(Serialize)]
    struct Head<'a> {
        schema_version: u32,
        kind: &'static str,
        config: &'a RunConfig,
        reference_viscosity: bool,
    }
    append_json(
        &dir.join(METADATA_FILE),
        &Head { schema_version: SCHEMA_VERSION, kind: "linear_config", config, reference_viscosity },
    )?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join(LINEAR_FILE))?));
    w.write_record(LinearRecord::COLUMNS).map_err(csv_error)?;
    let mut records: Vec<LinearRecord> = Vec::new();
    let mut integral = 0.0;
    let (_, out) = run_linear(bg, config.stencil, &st, &config.step_policy(), config.sample_interval, |smp| {
        let e = linear_energy(bg, smp.q, smp.p);
        if let Some(prev) = records.last() {
            integral += 0.5 * (prev.dissipation + e.dissipation) * (smp.t - prev.t);
        }
        let e0 = records.first().map_or(e.energy, |r| r.energy);
        let rec = LinearRecord {
            t: smp.t,
            energy: e.energy,
            dissipation: e.dissipation,
            sup_w: smp.q.iter().map(|x| x.abs()).fold(0.0, f64::max),
            sup_w_t: smp.p.iter().map(|x| x.abs()).fold(0.0, f64::max),
            balance: e.energy - e0 + integral,
        };
        w.write_record(rec.row().iter().map(|&x| fmt(x))).map_err(csv_error)?;
        records.push(rec);
        Ok(true)
    })?;
    w.flush()?;
    let exit_code = termination_exit_code(&out.termination);
    #[derive(Serialize)]
    struct Tail<'a> {
        schema_version: u32,
        kind: &'static str,
        termination: &'a Termination,
        exit_code: i32,
        steps: usize,
        final_record: Option<&'a LinearRecord>,
    }
    append_json(
        &dir.join(METADATA_FILE),
        &Tail {
            schema_version: SCHEMA_VERSION,
            kind: "result",
            termination: &out.termination,
            exit_code,
            steps: out.steps,
            final_record: records.last(),
        },
    )?;
    Ok(LinearReport { termination: out.termination, exit_code, records, reference_viscosity })
}

/// Summary of the initial data a config produces.
#[derive(Debug, Clone, Serialize)]
pub struct InitialDataSummary {
    pub radius: f64,
    pub rho_center: f64,
    pub boundary_radius: f64,
    pub sup_r_minus_x: f64,
    pub sup_v: f64,
    pub compatibility: CompatibilityReport,
}

pub fn describe_initial_data(config: &RunConfig) -> Result<InitialDataSummary> {
    config.validate()?;
    let s = setup(config)?;
    let data = build_perturbation(&s.profile, &s.bg, &config.perturbation, config.max_epsilon)?;
    let st = &data.state;
    Ok(InitialDataSummary {
        radius: s.profile.radius,
        rho_center: s.profile.rho_center,
        boundary_radius: st.boundary_radius(),
        sup_r_minus_x: st.r.iter().zip(&s.bg.x).map(|(r, x)| (r - x).abs()).fold(0.0, f64::max),
        sup_v: st.v.iter().map(|v| v.abs()).fold(0.0, f64::max),
        compatibility: check_compatibility(st, &s.bg),
    })
}

/// Parameter lists of a sweep; the points are their Cartesian product.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepAxes {
    pub gamma: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub n_cells: Vec<usize>,
    pub total_mass: Vec<f64>,
}

impl SweepAxes {
    pub fn points(&self, base: &RunConfig) -> Vec<RunConfig> {
        fn or<T: Copy>(v: &[T], d: T) -> Vec<T> {
            if v.is_empty() {
                vec![d]
            } else {
                v.to_vec()
            }
        }
        let mut out = Vec::new();
        for &g in &or(&self.gamma, base.gamma) {
            for &e in &or(&self.epsilon, base.perturbation.epsilon) {
                for &n in &or(&self.n_cells, base.n_cells) {
                    for &m in &or(&self.total_mass, base.total_mass) {
                        let mut c = base.clone();
                        c.gamma = g;
                        c.perturbation.epsilon = e;
                        c.n_cells = n;
                        c.total_mass = m;
                        c.alpha_list = base.alpha_list.clone().filter(|_| g == base.gamma);
                        out.push(c);
                    }
                }
            }
        }
        out
    }
}

/// One row of the aggregate sweep CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub point: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub n_cells: usize,
    pub total_mass: f64,
    pub exit_code: i32,
    pub termination: String,
    pub terminal_sup_r_minus_x: Option<f64>,
    pub exponent_sup_r_minus_x: Option<f64>,
    pub exponent_sup_v: Option<f64>,
    pub exponent_l2_v: Option<f64>,
    pub pass_sup_r_minus_x: bool,
    pub pass_sup_v: bool,
    pub pass_l2_v: bool,
    pub error: Option<String>,
}

pub const SWEEP_FILE: &str = "sweep.csv";

/// Worker count from [`WORKERS_ENV`], falling back to the available
/// parallelism.
pub fn workers_from_env() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn point_dir(dir: &Path, k: usize, c: &RunConfig) -> PathBuf {
    dir.join(format!("point_{k:03}_g{}_e{}_n{}_m{}", c.gamma, c.perturbation.epsilon, c.n_cells, c.total_mass))
}

fn sweep_row(k: usize, c: &RunConfig, result: Result<ExperimentReport>) -> SweepRow {
    let mut row = SweepRow {
        point: k,
        gamma: c.gamma,
        epsilon: c.perturbation.epsilon,
        n_cells: c.n_cells,
        total_mass: c.total_mass,
        exit_code: exit::OK,
        termination: String::new(),
        terminal_sup_r_minus_x: None,
        exponent_sup_r_minus_x: None,
        exponent_sup_v: None,
        exponent_l2_v: None,
        pass_sup_r_minus_x: false,
        pass_sup_v: false,
        pass_l2_v: false,
        error: None,
    };
    match result {
        Ok(rep) => {
            row.exit_code = rep.exit_code;
            row.termination = serde_json::to_value(&rep.termination)
                .ok()
                .and_then(|v| v.get("reason").and_then(|r| r.as_str()).map(str::to_string))
                .unwrap_or_default();
            row.terminal_sup_r_minus_x = rep.records.last().map(|r| r.sup_r_minus_x);
            let pick = |name: &str| rep.fits.get(name).map(|f| (f.exponent(), f.pass())).unwrap_or((None, false));
            (row.exponent_sup_r_minus_x, row.pass_sup_r_minus_x) = pick("sup_r_minus_x");
            (row.exponent_sup_v, row.pass_sup_v) = pick("sup_v");
            (row.exponent_l2_v, row.pass_l2_v) = pick("L2_v");
        }
        Err(e) => {
            row.exit_code = e.exit_code();
            row.termination = "setup_failure".into();
            row.error = Some(e.to_string());
        }
    }
    row
}

/// Runs every point of `axes` on `workers` threads, one sub-directory per
/// point, and writes the aggregate `sweep.csv`. Failed points are recorded
/// in their row and do not stop the sweep.
pub fn sweep(base: &RunConfig, axes: &SweepAxes, dir: &Path, workers: usize) -> Result<Vec<SweepRow>> {
    fs::create_dir_all(dir)?;
    let points = axes.points(base);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(k, c)| sweep_row(k, c, run_experiment(c, &point_dir(dir, k, c))))
            .collect()
    });
    let mut w = csv::Writer::from_path(dir.join(SWEEP_FILE)).map_err(csv_error)?;
    w.write_record([
        "point",
        "gamma",
        "epsilon",
        "n_cells",
        "total_mass",
        "exit_code",
        "termination",
        "terminal_sup_r_minus_x",
        "exponent_sup_r_minus_x",
        "exponent_sup_v",
        "exponent_L2_v",
        "pass_sup_r_minus_x",
        "pass_sup_v",
        "pass_L2_v",
        "error",
    ])
    .map_err(csv_error)?;
    let opt = |x: Option<f64>| x.map(fmt).unwrap_or_default();
    for r in &rows {
        w.write_record([
            r.point.to_string(),
            fmt(r.gamma),
            fmt(r.epsilon),
            r.n_cells.to_string(),
            fmt(r.total_mass),
            r.exit_code.to_string(),
            r.termination.clone(),
            opt(r.terminal_sup_r_minus_x),
            opt(r.exponent_sup_r_minus_x),
            opt(r.exponent_sup_v),
            opt(r.exponent_l2_v),
            r.pass_sup_r_minus_x.to_string(),
            r.pass_sup_v.to_string(),
            r.pass_l2_v.to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(rows)
}

/// `|a_{k+1} - a_k|` for the terminal `sup|r - x|` of rows sorted by grid
/// size; rows without a terminal value are skipped.
pub fn cauchy_differences(rows: &[SweepRow]) -> Vec<(usize, f64)> {
    let mut v: Vec<(usize, f64)> =
        rows.iter().filter_map(|r| r.terminal_sup_r_minus_x.map(|x| (r.n_cells, x))).collect();
    v.sort_by_key(|p| p.0);
    v.windows(2).map(|w| (w[1].0, (w[1].1 - w[0].1).abs())).collect()
}
