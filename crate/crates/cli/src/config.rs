//! Run configuration: the problem, a seed, an output directory, tolerance
//! overrides and one parameter block per subcommand. Unknown keys are
//! rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use strongdamp::action::Functional;
use strongdamp::exit::ExitConfig;
use strongdamp::front::{FrontPathConfig, GridSpec};
use strongdamp::ldpcheck::{ConvergenceConfig, HScalingConfig, LaplaceConfig};
use strongdamp::quasipotential::MamConfig;
use strongdamp::sde::Scheme;
use strongdamp::suite::Tolerances;
use strongdamp::{presets, ProblemDefinition, ProblemFile};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// A bundled preset by name, a path to a problem JSON file, or an inline
/// problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemRef {
    Preset(String),
    File {
        #[serde(rename = "file")]
        path: String,
    },
    Inline(Box<ProblemFile>),
}

impl ProblemRef {
    pub fn resolve(&self, base: &Path) -> Result<ProblemDefinition, CliError> {
        let file = match self {
            ProblemRef::Preset(name) => presets::by_name(name)
                .ok_or_else(|| CliError::Config(format!("unknown preset `{name}` (have {:?})", presets::NAMES)))?,
            ProblemRef::File { path } => {
                let full = base.join(path);
                let text =
                    std::fs::read_to_string(&full).map_err(|e| CliError::Config(format!("{}: {e}", full.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", full.display())))?
            }
            ProblemRef::Inline(f) => (**f).clone(),
        };
        ProblemDefinition::from_file(file).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validate: Option<ValidateParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quasipotential: Option<QuasipotentialParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit: Option<ExitParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub front: Option<FrontParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub all: Option<AllParams>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(v) = cfg.schema_version {
            if v != SCHEMA_VERSION {
                return Err(CliError::Config(format!(
                    "schema_version {v} is not supported (expected {SCHEMA_VERSION})"
                )));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    pub fn problem(&self, base: &Path) -> Result<ProblemDefinition, CliError> {
        self.problem
            .as_ref()
            .ok_or_else(|| CliError::Config("config has no `problem`".into()))?
            .resolve(base)
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tolerances.clone().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateParams {
    pub samples: usize,
    pub sigma_tolerance: f64,
    pub gradient_tolerance: f64,
    pub boundary_resolution: usize,
}

impl Default for ValidateParams {
    fn default() -> Self {
        ValidateParams {
            samples: 1000,
            sigma_tolerance: 1e-6,
            gradient_tolerance: 1e-8,
            boundary_resolution: 64,
        }
    }
}

/// A control on a uniform grid: constant, given by expressions in `t`, or
/// read from a CSV with header `t,u1..ur`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
pub enum ControlSpec {
    Constant(Vec<f64>),
    Expressions(Vec<String>),
    File(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub eps: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub h: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default)]
    pub q0: Option<Vec<f64>>,
    #[serde(default)]
    pub p0: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub paths: usize,
    /// integrate the first-order limit instead of the inertial system
    #[serde(default)]
    pub first_order: bool,
    #[serde(default)]
    pub compute_h: bool,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub control: Option<ControlSpec>,
    /// keep every `stride`-th grid point in the CSV output
    #[serde(default = "one")]
    pub stride: usize,
}

fn default_scheme() -> Scheme {
    Scheme::Exponential
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
pub enum PathSpec {
    File(String),
    Line(LineSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionParams {
    /// the path to evaluate; alternatively `control` generates the skeleton
    #[serde(default)]
    pub path: Option<PathSpec>,
    #[serde(default)]
    pub control: Option<ControlSpec>,
    #[serde(default, rename = "T")]
    pub t_end: Option<f64>,
    #[serde(default, rename = "N")]
    pub n: Option<usize>,
    #[serde(default)]
    pub q0: Option<Vec<f64>>,
    #[serde(default)]
    pub running_cost: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuasipotentialParams {
    /// target point; omit together with `boundary = true` for the exit problem
    #[serde(default)]
    pub q: Option<Vec<f64>>,
    /// start point, the equilibrium by default
    #[serde(default)]
    pub from: Option<Vec<f64>>,
    #[serde(default)]
    pub functional: Option<Functional>,
    #[serde(default)]
    pub mam: Option<MamConfig>,
    #[serde(default)]
    pub boundary: bool,
    #[serde(default = "default_boundary_samples")]
    pub boundary_samples: usize,
    #[serde(default)]
    pub check_equivalence: bool,
}

fn default_boundary_samples() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitParams {
    pub eps_ladder: Vec<f64>,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(default)]
    pub config: ExitConfig,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// barrier height used to warn about infeasible budgets
    #[serde(default)]
    pub v0_hint: Option<f64>,
}

fn default_bins() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontPoint {
    pub q: Vec<f64>,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeynmanKacParams {
    pub q: Vec<f64>,
    #[serde(default)]
    pub p: Option<Vec<f64>>,
    pub t: f64,
    pub eps: f64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(default = "default_h_max")]
    pub h_max: f64,
}

fn default_h_max() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontParams {
    #[serde(default)]
    pub grid: Option<GridSpec>,
    /// times at which the constant-rate front is extracted
    #[serde(default)]
    pub times: Vec<f64>,
    /// points for the path-optimized `R` and `R~`
    #[serde(default)]
    pub points: Vec<FrontPoint>,
    #[serde(default = "default_front_n", rename = "N")]
    pub n: usize,
    #[serde(default)]
    pub path: FrontPathConfig,
    #[serde(default)]
    pub feynman_kac: Option<FeynmanKacParams>,
}

fn default_front_n() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HCheck {
    pub eps_ladder: Vec<f64>,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(default)]
    pub config: HScalingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceCheck {
    pub eps_ladder: Vec<f64>,
    #[serde(rename = "M")]
    pub m: usize,
    pub control: ControlSpec,
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default)]
    pub config: ConvergenceConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaplaceParams {
    pub terminal_cost: String,
    pub eps_ladder: Vec<f64>,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(default)]
    pub config: LaplaceConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyParams {
    #[serde(default)]
    pub h_scaling: Option<HCheck>,
    #[serde(default)]
    pub convergence: Option<ConvergenceCheck>,
    #[serde(default)]
    pub laplace: Option<LaplaceParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AllParams {
    pub criteria: Vec<u32>,
    /// rerun the suite and compare artifact bytes
    pub determinism: bool,
}

impl Default for AllParams {
    fn default() -> Self {
        AllParams {
            criteria: (1..=9).collect(),
            determinism: true,
        }
    }
}

/// Directory relative paths in the config are resolved against.
pub fn config_base(path: Option<&Path>) -> PathBuf {
    path.and_then(|p| p.parent())
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from("."))
}
