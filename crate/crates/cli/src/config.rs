use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cqed_pairs::mcwf::{EnsembleConfig, JumpScheme, TrajectoryConfig, Window, DEFAULT_DT};
use cqed_pairs::model::{DEFAULT_G_OVER_2PI_HZ, DEFAULT_LANDE_G};
use cqed_pairs::ModelParams;

use crate::CliError;

pub const DEFAULT_PRESET: &str = "fig4-calibrated";

/// One JSON document describing a run. Rates and times are in units of `g`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<String>,
    /// Full parameter set; mutually exclusive with `preset`.
    pub params: Option<ModelParams>,
    /// Uniform cavity decay rate applied on top of the preset or params.
    pub kappa: Option<f64>,
    pub gamma: Option<f64>,
    pub n_traj: usize,
    pub seed: u64,
    /// Results do not depend on it, so it is not echoed into outputs.
    #[serde(skip_serializing)]
    pub workers: usize,
    pub dt: Option<f64>,
    pub scheme: JumpScheme,
    pub window: Window,
    /// Keep every `stride`-th integration step in time series.
    pub stride: Option<usize>,
    pub out: PathBuf,
    pub dump_trajectories: bool,
    pub kappa_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    /// `Delta+ + Delta-`
    pub single_photon_grid: Vec<f64>,
    /// `Delta+ - Delta-`
    pub two_photon_grid: Vec<f64>,
    /// Magnetic fields in tesla; replaces the detuning grids when present.
    pub b_grid: Option<Vec<f64>>,
    pub lande_g: f64,
    pub g_over_2pi_mhz: f64,
    pub calibration: CalibrationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: None,
            params: None,
            kappa: None,
            gamma: None,
            n_traj: 1000,
            seed: 0,
            workers: 1,
            dt: None,
            scheme: JumpScheme::FirstOrder,
            window: Window::Exit,
            stride: None,
            out: PathBuf::from("out"),
            dump_trajectories: false,
            kappa_grid: vec![0.01, 0.05, 0.1, 0.2],
            gamma_grid: vec![0.01, 0.05, 0.1, 0.2],
            single_photon_grid: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            two_photon_grid: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            b_grid: None,
            lande_g: DEFAULT_LANDE_G,
            g_over_2pi_mhz: DEFAULT_G_OVER_2PI_HZ * 1e-6,
            calibration: CalibrationConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationTarget {
    One,
    Two,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationKind {
    Amplitude,
    Width,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub cavity: CalibrationTarget,
    pub mode: CalibrationKind,
    pub target_area: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            cavity: CalibrationTarget::Both,
            mode: CalibrationKind::Amplitude,
            target_area: std::f64::consts::PI,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Applies the preset and overrides. The resolved document carries explicit
    /// `params` and `dt` only, so it reproduces the run when fed back in.
    pub fn resolve(mut self) -> Result<Resolved, CliError> {
        let (mut params, preset) = match (self.preset.take(), self.params.take()) {
            (Some(_), Some(_)) => {
                return Err(CliError::Usage("config sets both 'preset' and 'params'".into()))
            }
            (None, Some(p)) => (p, None),
            (name, None) => {
                let name = name.unwrap_or_else(|| DEFAULT_PRESET.to_string());
                let p = ModelParams::preset(&name).map_err(|e| CliError::Usage(e.to_string()))?;
                (p, Some(name))
            }
        };
        if let Some(k) = self.kappa.take() {
            params = params.with_kappa(k);
        }
        if let Some(g) = self.gamma.take() {
            params = params.with_gamma(g);
        }
        params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.params = Some(params);
        let dt = *self.dt.get_or_insert(DEFAULT_DT);
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(CliError::Usage(format!("dt must be positive, got {dt}")));
        }
        if self.n_traj == 0 {
            return Err(CliError::Usage("n_traj must be at least 1".into()));
        }
        Ok(Resolved { config: self, preset })
    }
}

/// A config with explicit parameters, plus the preset it came from.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: RunConfig,
    pub preset: Option<String>,
}

impl Resolved {
    pub fn model(&self) -> &ModelParams {
        self.config.params.as_ref().expect("resolved config has params")
    }

    pub fn step(&self) -> f64 {
        self.config.dt.unwrap_or(DEFAULT_DT)
    }

    pub fn ensemble(&self, window: Window) -> EnsembleConfig {
        let c = &self.config;
        EnsembleConfig {
            n_traj: c.n_traj,
            master_seed: c.seed,
            workers: c.workers,
            trajectory: TrajectoryConfig {
                t_end: None,
                dt: self.step(),
                scheme: c.scheme,
                window,
                stride: c.stride,
            },
        }
    }
}
