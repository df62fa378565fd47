//! JSON run configuration. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use volsurf::monotone::{MonotoneConfig, DEFAULT_K_MAX, DEFAULT_OUTER_TOL};
use volsurf::{GridGeometry, InitialCondition, ModelParams, StepConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometrySpec,
    pub params: ParamsSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub step: StepSpec,
    pub t_end: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monotone: Option<MonotoneSpec>,
    /// Written by the tool into run manifests; ignored on input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<ManifestInfo>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometrySpec {
    Interval { n_cells: usize, length: f64 },
    PeriodicStrip { nx: usize, ny: usize, width: f64, height: f64 },
    PolarDisk { n_r: usize, n_theta: usize, radius: f64 },
}

impl GeometrySpec {
    pub fn build(&self) -> volsurf::Result<GridGeometry> {
        match *self {
            GeometrySpec::Interval { n_cells, length } => GridGeometry::build_interval(n_cells, length),
            GeometrySpec::PeriodicStrip { nx, ny, width, height } => {
                GridGeometry::build_periodic_strip(nx, ny, width, height)
            }
            GeometrySpec::PolarDisk { n_r, n_theta, radius } => GridGeometry::build_polar_disk(n_r, n_theta, radius),
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub alpha: f64,
    pub beta: f64,
    pub delta_u: f64,
    pub delta_v: f64,
    #[serde(default = "one")]
    pub k_u: f64,
    #[serde(default = "one")]
    pub k_v: f64,
}

impl ParamsSpec {
    pub fn build(&self) -> volsurf::Result<ModelParams> {
        ModelParams::new(self.alpha, self.beta, self.delta_u, self.delta_v, self.k_u, self.k_v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Constant { u: f64, v: f64 },
    Step { u_low: f64, u_high: f64, v_low: f64, v_high: f64 },
    Cosine { u_mean: f64, v_mean: f64, amplitude: f64 },
}

impl InitialSpec {
    pub fn condition(&self) -> InitialCondition {
        match *self {
            InitialSpec::Constant { u, v } => InitialCondition::Constant { u, v },
            InitialSpec::Step { u_low, u_high, v_low, v_high } => InitialCondition::Step { u_low, u_high, v_low, v_high },
            InitialSpec::Cosine { u_mean, v_mean, amplitude } => InitialCondition::Cosine { u_mean, v_mean, amplitude },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepSpec {
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub linear_tol: f64,
}

impl Default for StepSpec {
    fn default() -> Self {
        let d = StepConfig::default();
        StepSpec { dt: d.dt, newton_tol: d.newton_tol, newton_max_iter: d.newton_max_iter, linear_tol: d.linear_tol }
    }
}

impl StepSpec {
    pub fn config(&self) -> StepConfig {
        StepConfig {
            dt: self.dt,
            newton_tol: self.newton_tol,
            newton_max_iter: self.newton_max_iter,
            linear_tol: self.linear_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonotoneSpec {
    pub outer_tol: f64,
    pub k_max: usize,
}

impl Default for MonotoneSpec {
    fn default() -> Self {
        MonotoneSpec { outer_tol: DEFAULT_OUTER_TOL, k_max: DEFAULT_K_MAX }
    }
}

impl MonotoneSpec {
    pub fn config(&self) -> MonotoneConfig {
        MonotoneConfig { outer_tol: self.outer_tol, k_max: self.k_max }
    }
}

/// Provenance block stored in manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestInfo {
    pub command: String,
    pub tool_version: String,
    pub dissipation_floor: f64,
    pub rate_fit_skip_fraction: f64,
    pub sandwich_slack: f64,
    pub comparison_slack: f64,
}

/// Validated objects built from a `RunConfig`.
pub struct Problem {
    pub geom: GridGeometry,
    pub params: ModelParams,
    pub step: StepConfig,
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("{}: {e}", origin.display())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// Builds geometry, parameters and step settings, naming the offending
    /// field on failure.
    pub fn problem(&self) -> Result<Problem, CliError> {
        let field = |name: &str, e: volsurf::Error| CliError::Usage(format!("field `{name}`: {e}"));
        let geom = self.geometry.build().map_err(|e| field("geometry", e))?;
        let params = self.params.build().map_err(|e| field("params", e))?;
        let step = self.step.config();
        step.validate().map_err(|e| field("step", e))?;
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(CliError::Usage(format!("field `t_end`: must be finite and nonnegative, got {}", self.t_end)));
        }
        Ok(Problem { geom, params, step })
    }

    pub fn initial_state(&self, geom: &GridGeometry) -> Result<volsurf::State, CliError> {
        self.initial
            .condition()
            .build(geom)
            .map_err(|e| CliError::Usage(format!("field `initial`: {e}")))
    }

    pub fn monotone_config(&self) -> MonotoneConfig {
        self.monotone.unwrap_or_default().config()
    }
}
