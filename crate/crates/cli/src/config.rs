//! The JSON run configuration.
//!
//! Every struct rejects unknown keys. [`RunConfig::canonical`] is the echo
//! written next to every result; parsing it again reproduces the same bytes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use wsdiag_core::boundary_flux::VerdictOptions;
use wsdiag_core::energy_balance::TimeWindow;
use wsdiag_core::ns_solver::SolverConfig;
use wsdiag_core::synth::GeneratorSpec;
use wsdiag_core::{AxisKind, Grid};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Seed for generators and pair sampling when a section does not set its own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Worker threads; `None` lets the pool pick.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen: Option<GenConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnose: Option<DiagnoseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundaryConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Thresholds of the boundary verdict.
    pub verdict: VerdictOptions,
    /// Largest wall intercept of the normal-velocity envelope.
    pub modulus_intercept: f64,
    /// Largest admissible increase of the discrete energy inequality.
    pub leray_residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            verdict: VerdictOptions::default(),
            modulus_intercept: 1e-6,
            leray_residual: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dims: Vec<usize>,
    /// Defaults to `2π` per periodic axis and 1 across the walls.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_axis: Option<usize>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        let n = self.dims.len();
        if let Some(w) = self.wall_axis {
            if w >= n {
                return Err(CliError::Config(format!("grid.wall_axis {w} out of range for {n} axes")));
            }
        }
        let kinds: Vec<AxisKind> = (0..n)
            .map(|a| if Some(a) == self.wall_axis { AxisKind::Wall } else { AxisKind::Periodic })
            .collect();
        let extent = match &self.extent {
            Some(e) => e.clone(),
            None => kinds
                .iter()
                .map(|k| match k {
                    AxisKind::Periodic => 2.0 * std::f64::consts::PI,
                    AxisKind::Wall => 1.0,
                })
                .collect(),
        };
        Ok(Grid::new(&self.dims, &extent, &kinds)?)
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            dims: vec![128, 128],
            extent: None,
            wall_axis: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    #[serde(default)]
    pub grid: GridSpec,
    pub generator: GeneratorSpec,
    #[serde(default = "default_name")]
    pub name: String,
    /// Recover the pressure when the generator does not supply one.
    #[serde(default)]
    pub pressure: bool,
}

fn default_name() -> String {
    "field".into()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    /// Regularity exponent; estimated from the first snapshot when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Decreasing kernel radii.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    /// Margin between nested regions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Time kernel radius; 0 disables time mollification.
    #[serde(default)]
    pub kappa: f64,
    /// Time margin of the region chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<TimeWindow>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    /// Decreasing shell widths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub etas: Option<Vec<f64>>,
    /// Near-wall layer of the modulus check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_base")]
    pub base: SolverConfig,
    pub nus: Vec<f64>,
    pub t_star: f64,
    /// Shell widths of the viscous flux criterion (channel runs only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub etas: Option<Vec<f64>>,
    #[serde(default)]
    pub save_trajectories: bool,
}

pub fn default_base() -> SolverConfig {
    SolverConfig::periodic(64, 0.01, 0.02, 1.0, GeneratorSpec::TaylorGreenSteady)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        RunConfig::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Pretty JSON with a trailing newline.
    pub fn canonical(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
