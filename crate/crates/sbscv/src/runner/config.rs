//! Scenario files: parsing, defaults and validation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cvgrid::{cat_state, gaussian_wavepacket, CvDensity, Grid};
use crate::dynamics::GammaFactor;
use crate::envmodel::{check_truncation, make_oscillator_env, EnvModel, OscillatorKind};
use crate::error::{Error, Result};
use crate::numkit::c;
use crate::sbs::{EnvPvm, Partition};
use crate::DEFAULT_CAP;

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable overriding the dimension cap.
pub const CAP_ENV: &str = "SBSCV_CAP";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub grid: GridConfig,
    pub system: SystemConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    pub times: Vec<f64>,
    #[serde(default)]
    pub partition: PartitionConfig,
    /// Partitions that replace the default one at particular times.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub partition_schedule: Vec<ScheduledPartition>,
    #[serde(default)]
    pub pvm: PvmConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { x_min: -8.0, x_max: 8.0, n: 128 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Gaussian {
        center: f64,
        width: f64,
        #[serde(default)]
        momentum: f64,
    },
    Cat {
        centers: Vec<f64>,
        /// Complex amplitudes as `[re, im]`; equal weights when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<[f64; 2]>>,
        width: f64,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default)]
    pub traced: Vec<EnvConfig>,
    #[serde(default)]
    pub observed: Vec<EnvConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Position,
    Momentum,
    Number,
}

impl From<GeneratorKind> for OscillatorKind {
    fn from(g: GeneratorKind) -> Self {
        match g {
            GeneratorKind::Position => OscillatorKind::Position,
            GeneratorKind::Momentum => OscillatorKind::Momentum,
            GeneratorKind::Number => OscillatorKind::Number,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn position() -> GeneratorKind {
    GeneratorKind::Position
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    Oscillator {
        dim: usize,
        #[serde(default = "position")]
        generator: GeneratorKind,
        #[serde(default = "one")]
        coupling: f64,
        #[serde(default)]
        occupation: f64,
    },
    Qubit {
        #[serde(default = "one")]
        coupling: f64,
    },
    /// Closed-form factor e^{-tⁿα(x-y)²}; traced side only.
    GaussianGamma {
        alpha: f64,
        #[serde(default = "one")]
        n_exp: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionConfig {
    Uniform { cells: usize },
    Cuts { cuts: Vec<f64> },
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self::Uniform { cells: 2 }
    }
}

impl PartitionConfig {
    pub fn build(&self, grid: &Grid) -> Result<Partition> {
        match self {
            Self::Uniform { cells } => Partition::uniform(grid, *cells),
            Self::Cuts { cuts } => Partition::cuts(grid, cuts),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledPartition {
    pub t: f64,
    pub partition: PartitionConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case", deny_unknown_fields)]
pub enum PvmConfig {
    #[default]
    Heuristic,
    /// Best of the heuristic and the exhaustive search.
    Exhaustive,
    /// Identity on every environment; one cell only.
    Identity,
    /// `assignment[k][i]`: Fock indices of environment k given to cell i.
    Fixed { assignment: Vec<Vec<Vec<usize>>> },
}

impl PvmConfig {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Heuristic => "heuristic",
            Self::Exhaustive => "exhaustive",
            Self::Identity => "identity",
            Self::Fixed { .. } => "fixed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_bound_tol")]
    pub bound: f64,
    /// Slack for the two links of the objective chain.
    #[serde(default = "default_chain_tol")]
    pub chain: f64,
    #[serde(default = "default_jensen_tol")]
    pub jensen: f64,
}

fn default_bound_tol() -> f64 {
    crate::bounds::DEFAULT_TOL
}

fn default_chain_tol() -> f64 {
    1e-9
}

fn default_jensen_tol() -> f64 {
    1e-12
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { bound: default_bound_tol(), chain: default_chain_tol(), jensen: default_jensen_tol() }
    }
}

impl Tolerances {
    /// Tolerance a row named `name` was checked with.
    pub fn for_bound(&self, name: &str) -> f64 {
        match name {
            "chain_split" | "chain_total" => self.chain,
            "jensen" => self.jensen,
            _ => self.bound,
        }
    }
}

/// A validated, runnable scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    /// SHA-256 of the normalised config.
    pub config_hash: String,
    pub grid: Grid,
    pub rho_s: CvDensity,
    /// Factors of Γ: Gaussian tags and traced environments, in config order.
    pub gamma_factors: Vec<GammaFactor>,
    pub observed: Vec<EnvModel>,
    pub default_partition: Partition,
    pub scheduled: Vec<(f64, Partition)>,
    pub cap: usize,
}

impl Scenario {
    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.config.tolerances
    }

    pub fn times(&self) -> &[f64] {
        &self.config.times
    }

    pub fn observed_dims(&self) -> Vec<usize> {
        self.observed.iter().map(|e| e.dim()).collect()
    }

    pub fn partition_at(&self, t: f64) -> &Partition {
        self.scheduled
            .iter()
            .find(|(s, _)| (s - t).abs() <= 1e-12 * (1.0 + t.abs()))
            .map_or(&self.default_partition, |(_, p)| p)
    }

    /// `(alpha, n_exp)` when Γ is a single Gaussian factor.
    pub fn gaussian_tag(&self) -> Option<(f64, f64)> {
        match self.gamma_factors.as_slice() {
            [GammaFactor::Gaussian { alpha, n_exp }] => Some((*alpha, *n_exp)),
            _ => None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.config.seed = seed;
        self.config_hash = config_hash(&self.config);
        self
    }
}

fn invalid(field: impl Into<String>, e: impl std::fmt::Display) -> Error {
    Error::Validation { field: field.into(), msg: e.to_string() }
}

fn config_hash(cfg: &ScenarioConfig) -> String {
    let text = serde_json::to_string(cfg).expect("config serialises");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), column: e.column(), msg: e.to_string() })
}

/// Reads and validates a scenario. The cap comes from `cap_override`, then
/// `SBSCV_CAP`, then the file, then the default.
pub fn load_scenario_with(path: &Path, cap_override: Option<usize>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    let cfg = parse_config(&text)?;
    let env_cap = match std::env::var(CAP_ENV) {
        Ok(v) => Some(v.trim().parse::<usize>().map_err(|e| invalid(CAP_ENV, e))?),
        Err(_) => None,
    };
    Scenario::from_config(cfg, cap_override.or(env_cap))
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    load_scenario_with(path, None)
}

fn build_env(cfg: &EnvConfig, field: &str) -> Result<EnvModel> {
    match cfg {
        EnvConfig::Oscillator { dim, generator, coupling, occupation } => {
            let env = make_oscillator_env(*dim, (*generator).into(), *occupation).map_err(|e| invalid(field, e))?;
            if !coupling.is_finite() {
                return Err(invalid(field, "coupling must be finite"));
            }
            Ok(env.with_coupling(*coupling))
        }
        EnvConfig::Qubit { coupling } => EnvModel::qubit(*coupling).map_err(|e| invalid(field, e)),
        EnvConfig::GaussianGamma { .. } => Err(invalid(field, "gaussian_gamma can only be traced")),
    }
}

impl Scenario {
    pub fn from_config(cfg: ScenarioConfig, cap_override: Option<usize>) -> Result<Self> {
        if cfg.schema != SCHEMA_VERSION {
            return Err(invalid("schema", format!("unsupported schema {}, expected {SCHEMA_VERSION}", cfg.schema)));
        }
        let g = cfg.grid;
        let grid = Grid::new(g.x_min, g.x_max, g.n).map_err(|e| invalid("grid", e))?;
        let cap = cap_override.or(cfg.cap).unwrap_or(DEFAULT_CAP);
        if cap == 0 {
            return Err(invalid("cap", "cap must be positive"));
        }

        let rho_s = match &cfg.system {
            SystemConfig::Gaussian { center, width, momentum } => {
                let psi = gaussian_wavepacket(&grid, *center, *width, *momentum).map_err(|e| invalid("system", e))?;
                CvDensity::pure(grid, &psi)?
            }
            SystemConfig::Cat { centers, weights, width } => {
                let w: Vec<_> = match weights {
                    Some(ws) => ws.iter().map(|[re, im]| c(*re, *im)).collect(),
                    None => vec![c(1.0, 0.0); centers.len()],
                };
                cat_state(&grid, centers, &w, *width).map_err(|e| invalid("system", e))?
            }
        };

        if cfg.times.is_empty() {
            return Err(invalid("times", "need at least one time"));
        }
        if let Some(t) = cfg.times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(invalid("times", format!("time {t} is not finite and >= 0")));
        }

        let span = grid.x_max() - grid.x_min();
        let mut gamma_factors = Vec::new();
        for (k, e) in cfg.ensemble.traced.iter().enumerate() {
            let field = format!("ensemble.traced[{k}]");
            match e {
                EnvConfig::GaussianGamma { alpha, n_exp } => {
                    if !(*alpha > 0.0 && alpha.is_finite()) || !(*n_exp > 0.0 && n_exp.is_finite()) {
                        return Err(invalid(field, "alpha and n_exp must be positive"));
                    }
                    gamma_factors.push(GammaFactor::Gaussian { alpha: *alpha, n_exp: *n_exp });
                }
                _ => {
                    let env = build_env(e, &field)?;
                    // γ is needed at s = t(x - y)g for every time and grid offset.
                    let n_s = 2 * grid.n() - 1;
                    let g = env.coupling();
                    let s: Vec<f64> = cfg
                        .times
                        .iter()
                        .flat_map(|&t| {
                            (0..n_s).map(move |i| t * g * span * (i as f64 / (n_s - 1) as f64 - 0.5) * 2.0)
                        })
                        .collect();
                    check_truncation(&env, &s).map_err(|err| invalid(&field, err))?;
                    gamma_factors.push(GammaFactor::Env(env));
                }
            }
        }
        let observed: Vec<EnvModel> = cfg
            .ensemble
            .observed
            .iter()
            .enumerate()
            .map(|(k, e)| build_env(e, &format!("ensemble.observed[{k}]")))
            .collect::<Result<_>>()?;

        let env_dim: usize = observed.iter().map(|e| e.dim()).product();
        let joint = grid.n().saturating_mul(env_dim);
        if joint > cap {
            return Err(invalid("cap", Error::Resource { dim: joint, cap }));
        }

        let default_partition = cfg.partition.build(&grid).map_err(|e| invalid("partition", e))?;
        let mut scheduled = Vec::new();
        for (k, s) in cfg.partition_schedule.iter().enumerate() {
            let field = format!("partition_schedule[{k}]");
            if !cfg.times.iter().any(|t| (t - s.t).abs() <= 1e-12 * (1.0 + s.t.abs())) {
                return Err(invalid(field, format!("time {} is not in the time list", s.t)));
            }
            scheduled.push((s.t, s.partition.build(&grid).map_err(|e| invalid(&field, e))?));
        }

        let dims: Vec<usize> = observed.iter().map(|e| e.dim()).collect();
        let all_cells = std::iter::once(&default_partition).chain(scheduled.iter().map(|(_, p)| p));
        for p in all_cells {
            match &cfg.pvm {
                PvmConfig::Identity if p.len() != 1 => {
                    return Err(invalid("pvm", "identity PVM needs a single-cell partition"));
                }
                PvmConfig::Fixed { assignment } => {
                    let pvm = EnvPvm::fixed(&dims, assignment).map_err(|e| invalid("pvm", e))?;
                    if !dims.is_empty() && pvm.cells() != p.len() {
                        return Err(invalid("pvm", format!("assignment has {} cells, partition has {}", pvm.cells(), p.len())));
                    }
                }
                _ => {}
            }
        }
        for (name, v) in [
            ("tolerances.bound", cfg.tolerances.bound),
            ("tolerances.chain", cfg.tolerances.chain),
            ("tolerances.jensen", cfg.tolerances.jensen),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, "tolerance must be finite and >= 0"));
            }
        }

        let config_hash = config_hash(&cfg);
        Ok(Self { config: cfg, config_hash, grid, rho_s, gamma_factors, observed, default_partition, scheduled, cap })
    }
}
