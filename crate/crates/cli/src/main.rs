//! `vacuum-nsp` command-line driver.
//!
//! Exit codes: 0 success, 2 config, 3 solver failure, 4 mesh tangling,
//! 5 blow-up ceiling.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vacuum_nsp::harness::{self, exit, RunConfig, SweepAxes};
use vacuum_nsp::initial_data::Family;
use vacuum_nsp::polytrope::{solve_lane_emden, DEFAULT_TOL};
use vacuum_nsp::{Error, Mode, Stencil};

#[derive(Parser)]
#[command(name = "vacuum-nsp", version, about = "Viscous gas spheres with a physical vacuum boundary")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Lane-Emden equilibrium and write x, rho, q, phi as CSV.
    Profile {
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        mass: f64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the nonlinear scheme and write the run artifacts.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the linearised problem.
    Linearize {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_parser = parse_stencil)]
        stencil: Option<Stencil>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a parameter sweep, one sub-directory per point.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',')]
        gammas: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        epsilons: Vec<f64>,
        #[arg(long = "cells", value_delimiter = ',')]
        cells: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        masses: Vec<f64>,
        #[arg(long, env = harness::WORKERS_ENV)]
        workers: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit decay exponents to a diagnostics CSV and print a JSON report.
    Fit {
        csv: PathBuf,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 0.05)]
        theta: f64,
        /// `t_a,t_b`
        #[arg(long, value_delimiter = ',', required = true)]
        window: Vec<f64>,
        #[arg(long, default_value_t = 0.05)]
        slack: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the initial data of a config and print its compatibility report.
    DescribeIc {
        #[command(flatten)]
        run: RunArgs,
    },
}

/// Config file plus overrides; flags win over file values.
#[derive(Args, Clone, Default)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    total_mass: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    n_cells: Option<usize>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    sample_interval: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    fit_slack: Option<f64>,
    #[arg(long)]
    max_epsilon: Option<f64>,
    #[arg(long)]
    allow_edge: bool,
    #[arg(long, value_parser = parse_family)]
    family: Option<Family>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    taper: Option<f64>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    dt: Option<f64>,
    /// Use `dt` as a fixed step instead of an upper bound.
    #[arg(long)]
    fixed_dt: bool,
}

fn parse_family(s: &str) -> Result<Family, String> {
    match s {
        "radial_dilation" => Ok(Family::RadialDilation),
        "polynomial_bump" => Ok(Family::PolynomialBump),
        "velocity_kick" => Ok(Family::VelocityKick),
        "composite" => Ok(Family::Composite),
        _ => Err(format!("unknown family {s:?}")),
    }
}

fn parse_stencil(s: &str) -> Result<Stencil, String> {
    match s {
        "conservative" => Ok(Stencil::Conservative),
        "scheme_jacobian" => Ok(Stencil::SchemeJacobian),
        _ => Err(format!("unknown stencil {s:?}")),
    }
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut c = match &self.config {
            Some(p) => harness::load_config(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field { $target = v; })*
            };
        }
        set!(
            gamma => c.gamma,
            total_mass => c.total_mass,
            lambda1 => c.lambda1,
            lambda2 => c.lambda2,
            n_cells => c.n_cells,
            t_end => c.t_end,
            sample_interval => c.sample_interval,
            theta => c.theta,
            delta => c.delta,
            fit_slack => c.fit_slack,
            max_epsilon => c.max_epsilon,
            family => c.perturbation.family,
            epsilon => c.perturbation.epsilon,
            taper => c.perturbation.shape.taper,
            mode => c.policy.mode,
            dt => c.policy.dt,
        );
        c.allow_edge |= self.allow_edge;
        if self.fixed_dt {
            c.policy.adaptive = false;
        }
        c.validate()?;
        Ok(c)
    }
}

fn output_dir(out: &Option<PathBuf>, config: &RunConfig) -> PathBuf {
    out.clone().or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("run"))
}

fn print_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => {
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{text}") {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                r => r?,
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Profile { gamma, mass, tol, out } => {
            let p = solve_lane_emden(gamma, mass, tol)?;
            harness::write_profile(&p, &out)?;
            eprintln!("R = {:.16e}, rho(0) = {:.16e}", p.radius, p.rho_center);
            Ok(exit::OK)
        }
        Command::Simulate { run, out } => {
            let c = run.resolve()?;
            let dir = output_dir(&out, &c);
            let rep = harness::run_experiment(&c, &dir)?;
            eprintln!(
                "{:?} after {} steps ({:.1} s); fits pass: {}; artifacts in {}",
                rep.termination,
                rep.steps,
                rep.wall_time_s,
                rep.fits.all_pass,
                dir.display()
            );
            Ok(rep.exit_code)
        }
        Command::Linearize { run, stencil, out } => {
            let mut c = run.resolve()?;
            if let Some(s) = stencil {
                c.stencil = s;
            }
            let dir = output_dir(&out, &c);
            let rep = harness::run_linear_experiment(&c, &dir)?;
            if !rep.reference_viscosity {
                eprintln!("warning: the linear problem is derived for lambda2 = (2/3) lambda1 = 1/3 only");
            }
            if let Some(last) = rep.records.last() {
                eprintln!("{:?}; E = {:.6e}, balance = {:.3e}", rep.termination, last.energy, last.balance);
            }
            Ok(rep.exit_code)
        }
        Command::Sweep { run, gammas, epsilons, cells, masses, workers, out } => {
            let c = run.resolve()?;
            let axes = SweepAxes { gamma: gammas, epsilon: epsilons, n_cells: cells, total_mass: masses };
            let workers = workers.unwrap_or_else(harness::workers_from_env);
            let rows = harness::sweep(&c, &axes, &out, workers)?;
            let failed = rows.iter().filter(|r| r.exit_code != exit::OK).count();
            eprintln!("{} points, {failed} failed; aggregate in {}", rows.len(), out.join(harness::SWEEP_FILE).display());
            Ok(exit::OK)
        }
        Command::Fit { csv, gamma, theta, window, slack, out } => {
            let window = match window.as_slice() {
                [a, b] => [*a, *b],
                _ => return Err(Error::Config("--window needs t_a,t_b".into())),
            };
            let rep = harness::fit_csv(&csv, gamma, theta, window, slack)?;
            print_json(&rep, out.as_deref())?;
            Ok(exit::OK)
        }
        Command::DescribeIc { run } => {
            let c = run.resolve()?;
            let s = harness::describe_initial_data(&c)?;
            print_json(&s, None)?;
            Ok(if s.compatibility.pass { exit::OK } else { exit::CONFIG })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
