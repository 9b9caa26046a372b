//! Experiment configuration: one TOML file per run, schema-validated, with
//! every default made explicit before it is echoed into the manifest.

use serde::{Deserialize, Serialize};

use peierls::drive::PulseSpec;
use peierls::dynamics::{ConstraintConfig, ConstraintMode, TimeGrid, TrackedObservable};
use peierls::spectral::WindowKind;
use peierls::SystemParams;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub system: SystemBlock,
    #[serde(default)]
    pub drive: Option<DriveBlock>,
    #[serde(default)]
    pub tracking: Option<TrackingBlock>,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub filter: Option<FilterBlock>,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub sites: usize,
    pub n_up: usize,
    pub n_down: usize,
    #[serde(default = "one")]
    pub hopping: f64,
    #[serde(default)]
    pub repulsion: f64,
    #[serde(default = "one")]
    pub lattice_constant: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveBlock {
    pub amplitude: f64,
    #[serde(default = "default_omega0")]
    pub omega0: f64,
    #[serde(default = "default_cycles")]
    pub cycles: u32,
}

fn default_omega0() -> f64 {
    0.26
}

fn default_cycles() -> u32 {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingBlock {
    #[serde(default = "default_observable")]
    pub observable: String,
    pub target: TargetBlock,
    #[serde(default)]
    pub scale: ScaleBlock,
    #[serde(default = "default_eps1")]
    pub eps1: f64,
    #[serde(default = "default_eps2")]
    pub eps2: f64,
}

fn default_observable() -> String {
    "current".into()
}

fn default_eps1() -> f64 {
    1e-3
}

fn default_eps2() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum TargetBlock {
    /// Two-column (time, value) delimited file starting at t = 0.
    File { path: String },
    /// A prior run's trajectory file; the current column becomes the target.
    Run { path: String },
    /// Hold the observable at its initial expectation.
    Hold,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "mode", rename_all = "kebab-case")]
pub enum ScaleBlock {
    Fixed {
        k: f64,
    },
    /// Scale from a low-amplitude pilot run: k = safety (1 - eps1) 2 e a t0
    /// R_min / max|J_T|, halved on failure.
    Auto {
        #[serde(default = "default_safety")]
        safety: f64,
        #[serde(default = "default_pilot_fraction")]
        pilot_fraction: f64,
    },
}

fn default_safety() -> f64 {
    0.8
}

fn default_pilot_fraction() -> f64 {
    0.05
}

impl Default for ScaleBlock {
    fn default() -> Self {
        ScaleBlock::Fixed { k: 1.0 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub steps_per_cycle: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default)]
    pub directory: Option<String>,
    #[serde(default)]
    pub snapshot_stride: usize,
    #[serde(default = "default_window")]
    pub spectrum_window: String,
    /// Write the final state vector (ground command).
    #[serde(default)]
    pub write_state: bool,
}

fn default_window() -> String {
    "blackman".into()
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            directory: None,
            snapshot_stride: 0,
            spectrum_window: default_window(),
            write_state: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterBlock {
    /// Trajectory file of a completed tracking run (control field source).
    pub phi_source: String,
    /// Cut-offs in units of omega0.
    pub cutoffs: Vec<f64>,
    #[serde(default = "default_omega0")]
    pub omega0: f64,
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{e}")))?;
        config.system_params()?; // validate eagerly
        Ok(config)
    }

    pub fn system_params(&self) -> Result<SystemParams> {
        let s = &self.system;
        Ok(SystemParams::new(
            s.sites,
            s.n_up,
            s.n_down,
            s.hopping,
            s.repulsion,
            s.lattice_constant,
        )?)
    }

    pub fn pulse(&self) -> Result<PulseSpec> {
        let d = self
            .drive
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs a [drive] block".into()))?;
        Ok(PulseSpec::new(d.amplitude, d.omega0, d.cycles)?)
    }

    /// Time grid from either an explicit (dt, steps) pair or steps per
    /// drive cycle (default 2000 when a [drive] block is present).
    pub fn time_grid(&self) -> Result<TimeGrid> {
        match (&self.grid.dt, &self.grid.steps, &self.grid.steps_per_cycle) {
            (Some(dt), Some(steps), None) => Ok(TimeGrid::new(*dt, *steps)?),
            (None, None, spc) => {
                let pulse = self.pulse().map_err(|_| {
                    CliError::Config(
                        "grid needs either dt+steps or a [drive] block for steps_per_cycle".into(),
                    )
                })?;
                Ok(TimeGrid::for_pulse(&pulse, spc.unwrap_or(2000))?)
            }
            _ => Err(CliError::Config(
                "grid takes either both dt and steps, or steps_per_cycle".into(),
            )),
        }
    }

    pub fn constraints(&self, mode: ConstraintMode) -> ConstraintConfig {
        match &self.tracking {
            Some(t) => ConstraintConfig {
                eps1: t.eps1,
                eps2: t.eps2,
                mode,
            },
            None => ConstraintConfig {
                mode,
                ..Default::default()
            },
        }
    }

    pub fn window(&self) -> Result<WindowKind> {
        parse_window(&self.output.spectrum_window)
    }

    pub fn observable(&self, cli_override: Option<&str>) -> Result<TrackedObservable> {
        let name = cli_override
            .map(str::to_owned)
            .or_else(|| self.tracking.as_ref().map(|t| t.observable.clone()))
            .unwrap_or_else(default_observable);
        match name.as_str() {
            "current" => Ok(TrackedObservable::Current),
            "doublon" => Ok(TrackedObservable::Doublon),
            "bond-real" => Ok(TrackedObservable::BondReal),
            other => Err(CliError::Config(format!(
                "unknown observable '{other}' (expected current | doublon | bond-real)"
            ))),
        }
    }
}

pub fn parse_window(name: &str) -> Result<WindowKind> {
    match name {
        "rectangular" => Ok(WindowKind::Rectangular),
        "hann" => Ok(WindowKind::Hann),
        "blackman" => Ok(WindowKind::Blackman),
        other => Err(CliError::Config(format!(
            "unknown spectrum window '{other}' (expected rectangular | hann | blackman)"
        ))),
    }
}
