//! `cqed-pairs`: command-line front end for the cavity-QED pair source.
//!
//! Every subcommand reads an optional JSON config, applies flag overrides,
//! and writes CSV and JSON files to the output directory. Exit codes:
//! 0 success, 1 usage error, 2 numerical or validation failure.

mod commands;
mod config;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cqed_pairs::mcwf::{JumpScheme, Window};

use config::{CalibrationKind, CalibrationTarget, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] cqed_pairs::Error),
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}", path = .0.display(), source = .1)]
    Io(PathBuf, std::io::Error),
    #[error("json: {0}")]
    Json(serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(..) | CliError::Core(cqed_pairs::Error::Argument(_)) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cqed-pairs", version, about = "Cavity-QED source of polarization-entangled photon pairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

/// Overrides applied on top of the config document.
#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Named parameter set (fig4, fig4-calibrated, fig4-square, fig6a, fig6b, optical).
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,
    #[arg(long, global = true, value_name = "INT")]
    n_traj: Option<usize>,
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "INT")]
    workers: Option<usize>,
    /// Integration step in units of 1/g.
    #[arg(long, global = true, value_name = "FLOAT")]
    dt: Option<f64>,
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Uniform cavity decay rate in units of g.
    #[arg(long, global = true, value_name = "FLOAT")]
    kappa: Option<f64>,
    /// Spontaneous emission rate in units of g.
    #[arg(long, global = true, value_name = "FLOAT")]
    gamma: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WindowArg {
    Exit,
    LeakOut,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchemeArg {
    FirstOrder,
    NormThreshold,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-system populations and coupling profiles over the passage.
    Coherent {
        /// Keep every STRIDE-th integration step.
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Quantum-jump ensemble: manifold populations, merit figures, event classes.
    Trajectories {
        #[arg(long, value_enum)]
        window: Option<WindowArg>,
        /// Cavity decay rate after the exit (implies the leak-out window).
        #[arg(long)]
        leak_kappa: Option<f64>,
        /// Time simulated after the exit (implies the leak-out window).
        #[arg(long)]
        leak_duration: Option<f64>,
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
        #[arg(long)]
        stride: Option<usize>,
        /// Write every trajectory to trajectories.ndjson.
        #[arg(long)]
        dump: bool,
    },
    /// Merit figures over a grid of cavity and spontaneous decay rates.
    SweepDecay {
        #[arg(long, value_delimiter = ',')]
        kappa_grid: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        gamma_grid: Option<Vec<f64>>,
    },
    /// Success probability over single- and two-photon detunings or magnetic fields.
    SweepDetuning {
        /// Delta+ + Delta- values in units of g.
        #[arg(long, value_delimiter = ',')]
        single_grid: Option<Vec<f64>>,
        /// Delta+ - Delta- values in units of g.
        #[arg(long, value_delimiter = ',')]
        two_grid: Option<Vec<f64>>,
        /// Magnetic fields in tesla; Delta+- = +-mu_B g_J B / hbar.
        #[arg(long, value_delimiter = ',')]
        b_grid: Option<Vec<f64>>,
        #[arg(long)]
        lande_g: Option<f64>,
        /// g / 2pi in MHz, used to express field-induced detunings in units of g.
        #[arg(long)]
        g_mhz: Option<f64>,
    },
    /// Adjusts pulse amplitudes or widths to a target area.
    Calibrate {
        #[arg(long, value_enum)]
        cavity: Option<CalibrationTarget>,
        #[arg(long, value_enum)]
        mode: Option<CalibrationKind>,
        #[arg(long)]
        target_area: Option<f64>,
    },
    /// Compares trajectory and master-equation populations at the exit time.
    OracleCheck,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Coherent { .. } => "coherent",
            Command::Trajectories { .. } => "trajectories",
            Command::SweepDecay { .. } => "sweep-decay",
            Command::SweepDetuning { .. } => "sweep-detuning",
            Command::Calibrate { .. } => "calibrate",
            Command::OracleCheck => "oracle-check",
        }
    }

    fn apply(&self, c: &mut RunConfig) {
        match self {
            Command::Coherent { stride } => c.stride = stride.or(c.stride),
            Command::Trajectories { window, leak_kappa, leak_duration, scheme, stride, dump } => {
                let leak = leak_kappa.is_some() || leak_duration.is_some();
                match window {
                    Some(WindowArg::Exit) => c.window = Window::Exit,
                    Some(WindowArg::LeakOut) => c.window = Window::leak_out(),
                    None if leak && c.window == Window::Exit => c.window = Window::leak_out(),
                    None => {}
                }
                if let Window::LeakOut { duration, kappa } = &mut c.window {
                    *duration = leak_duration.or(*duration);
                    *kappa = leak_kappa.or(*kappa);
                }
                match scheme {
                    Some(SchemeArg::FirstOrder) => c.scheme = JumpScheme::FirstOrder,
                    Some(SchemeArg::NormThreshold) => c.scheme = JumpScheme::NormThreshold,
                    None => {}
                }
                c.stride = stride.or(c.stride);
                c.dump_trajectories |= dump;
            }
            Command::SweepDecay { kappa_grid, gamma_grid } => {
                set(&mut c.kappa_grid, kappa_grid);
                set(&mut c.gamma_grid, gamma_grid);
            }
            Command::SweepDetuning { single_grid, two_grid, b_grid, lande_g, g_mhz } => {
                set(&mut c.single_photon_grid, single_grid);
                set(&mut c.two_photon_grid, two_grid);
                if b_grid.is_some() {
                    c.b_grid = b_grid.clone();
                }
                c.lande_g = lande_g.unwrap_or(c.lande_g);
                c.g_over_2pi_mhz = g_mhz.unwrap_or(c.g_over_2pi_mhz);
            }
            Command::Calibrate { cavity, mode, target_area } => {
                let cal = &mut c.calibration;
                cal.cavity = cavity.unwrap_or(cal.cavity);
                cal.mode = mode.unwrap_or(cal.mode);
                cal.target_area = target_area.unwrap_or(cal.target_area);
            }
            Command::OracleCheck => {}
        }
    }
}

fn set(field: &mut Vec<f64>, value: &Option<Vec<f64>>) {
    if let Some(v) = value {
        field.clone_from(v);
    }
}

fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let o = &cli.common;
    let mut c = match &o.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(name) = &o.preset {
        c.preset = Some(name.clone());
        c.params = None;
    }
    c.n_traj = o.n_traj.unwrap_or(c.n_traj);
    c.seed = o.seed.unwrap_or(c.seed);
    c.workers = o.workers.unwrap_or(c.workers);
    c.dt = o.dt.or(c.dt);
    c.kappa = o.kappa.or(c.kappa);
    c.gamma = o.gamma.or(c.gamma);
    if let Some(out) = &o.out {
        c.out.clone_from(out);
    }
    cli.command.apply(&mut c);
    Ok(c)
}

fn run(cli: &Cli) -> Result<Vec<String>, CliError> {
    let resolved = build_config(cli)?.resolve()?;
    match cli.command {
        Command::Coherent { .. } => commands::coherent(&resolved),
        Command::Trajectories { .. } => commands::trajectories(&resolved),
        Command::SweepDecay { .. } => commands::sweep_decay(&resolved),
        Command::SweepDetuning { .. } => commands::sweep_detuning(&resolved),
        Command::Calibrate { .. } => commands::calibrate(&resolved),
        Command::OracleCheck => commands::oracle_check(&resolved),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(lines) => {
            let mut stdout = std::io::stdout().lock();
            for line in lines {
                if writeln!(stdout, "{line}").is_err() {
                    break;
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("cqed-pairs {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
