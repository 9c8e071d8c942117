//! TOML configuration for the pipelines.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use salp::basis::BasisMatrix;
use salp::formulation::{default_theta_schedule, validate_schedule};
use salp::linalg::Matrix;
use salp::lp::LpOptions;
use salp::sampling::BaselineSampling;
use salp_tetris::{BASELINE_WEIGHTS, DEFAULT_DISCOUNT, NUM_FEATURES};
use serde::{Deserialize, Serialize};

use crate::error::{read_file, CliError, Result};

/// How to build the basis of an explicit MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BasisSpec {
    Identity,
    Constant,
    /// Constant column plus `k − 1` random columns.
    Random { k: usize, seed: u64 },
    /// JSON array of rows, one per state.
    File(PathBuf),
}

impl BasisSpec {
    pub fn build(&self, n_states: usize) -> Result<BasisMatrix<f64>> {
        Ok(match self {
            Self::Identity => BasisMatrix::identity(n_states),
            Self::Constant => BasisMatrix::constant(n_states),
            Self::Random { k, seed } => BasisMatrix::random(n_states, *k, &mut ChaCha8Rng::seed_from_u64(*seed))?,
            Self::File(path) => {
                let rows: Vec<Vec<f64>> = serde_json::from_str(&read_file(path)?)?;
                if rows.len() != n_states {
                    return Err(CliError::config(format!("basis file has {} rows, model has {n_states} states", rows.len())));
                }
                BasisMatrix::new(Matrix::from_rows(&rows)?)?
            }
        })
    }
}

impl fmt::Display for BasisSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => f.write_str("identity"),
            Self::Constant => f.write_str("constant"),
            Self::Random { k, seed } => write!(f, "random:{k}:{seed}"),
            Self::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for BasisSpec {
    type Err = CliError;

    /// `identity`, `constant`, `random:K:SEED` or `file:PATH`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || CliError::config(format!("bad basis spec `{s}` (identity | constant | random:K:SEED | file:PATH)"));
        match s.split_once(':') {
            None if s == "identity" => Ok(Self::Identity),
            None if s == "constant" => Ok(Self::Constant),
            Some(("file", path)) if !path.is_empty() => Ok(Self::File(path.into())),
            Some(("random", rest)) => {
                let (k, seed) = rest.split_once(':').ok_or_else(bad)?;
                let k: usize = k.parse().map_err(|_| bad())?;
                if k == 0 {
                    return Err(bad());
                }
                Ok(Self::Random { k, seed: seed.parse().map_err(|_| bad())? })
            }
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for BasisSpec {
    type Error = CliError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<BasisSpec> for String {
    fn from(b: BasisSpec) -> String {
        b.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvSpec {
    Tetris {
        #[serde(default = "default_discount")]
        discount: f64,
    },
    ExplicitMdp {
        model: PathBuf,
        basis: BasisSpec,
    },
}

fn default_discount() -> f64 {
    DEFAULT_DISCOUNT
}

/// Policy that generates the sampled states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSpec {
    /// Greedy weights for Tetris; the built-in baseline when absent.
    pub weights: Option<Vec<f64>>,
    pub burn_in: usize,
    pub stride: usize,
}

impl Default for BaselineSpec {
    fn default() -> Self {
        let d = BaselineSampling::default();
        Self { weights: None, burn_in: d.burn_in, stride: d.stride }
    }
}

impl BaselineSpec {
    pub fn sampling(&self) -> BaselineSampling {
        BaselineSampling { burn_in: self.burn_in, stride: self.stride, ..BaselineSampling::default() }
    }

    pub fn tetris_weights(&self) -> Vec<f64> {
        self.weights.clone().unwrap_or_else(|| BASELINE_WEIGHTS.to_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let d = LpOptions::<f64>::default();
        Self { tol: d.tol, max_iter: d.max_iter }
    }
}

impl SolverSpec {
    pub fn options(&self) -> LpOptions<f64> {
        LpOptions { tol: self.tol, max_iter: self.max_iter, ..LpOptions::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) || self.max_iter == 0 {
            return Err(CliError::config("solver tolerance must lie in (0, 1) and max_iter be positive"));
        }
        Ok(())
    }
}

fn default_schedule() -> Vec<f64> {
    default_theta_schedule()
}

fn default_output() -> PathBuf {
    PathBuf::from("salp-out")
}

/// The sample → solve → evaluate experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    /// `S`, sampled states per seed.
    pub sample_size: usize,
    /// One sampled state collection per seed.
    pub seeds: Vec<u64>,
    #[serde(default = "default_schedule")]
    pub theta_schedule: Vec<f64>,
    #[serde(default = "ExperimentConfig::default_games")]
    pub eval_games: u64,
    /// Piece sequences of evaluation games derive from this seed alone.
    #[serde(default = "ExperimentConfig::default_eval_seed")]
    pub eval_seed: u64,
    #[serde(default = "ExperimentConfig::default_max_steps")]
    pub max_eval_steps: u64,
    #[serde(default)]
    pub baseline: BaselineSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    fn default_games() -> u64 {
        500
    }

    fn default_eval_seed() -> u64 {
        2024
    }

    fn default_max_steps() -> u64 {
        1_000_000
    }

    /// Tetris at `S = 5000` with three seeds and 500 evaluation games.
    pub fn desk_tetris() -> Self {
        Self {
            env: EnvSpec::Tetris { discount: DEFAULT_DISCOUNT },
            sample_size: 5000,
            seeds: vec![1, 2, 3],
            theta_schedule: default_schedule(),
            eval_games: Self::default_games(),
            eval_seed: Self::default_eval_seed(),
            max_eval_steps: Self::default_max_steps(),
            baseline: BaselineSpec::default(),
            solver: SolverSpec::default(),
            output_dir: default_output(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&read_file(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_size == 0 {
            return Err(CliError::config("sample_size must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(CliError::config("at least one seed is required"));
        }
        if self.eval_games == 0 || self.max_eval_steps == 0 {
            return Err(CliError::config("eval_games and max_eval_steps must be positive"));
        }
        if self.baseline.burn_in == 0 || self.baseline.stride == 0 {
            return Err(CliError::config("baseline burn_in and stride must be positive"));
        }
        validate_schedule(&self.theta_schedule).map_err(|e| CliError::config(e.to_string()))?;
        self.solver.validate()?;
        match &self.env {
            EnvSpec::Tetris { discount } => {
                if !(0.0..1.0).contains(discount) {
                    return Err(CliError::config(format!("discount {discount} outside [0, 1)")));
                }
                let w = self.baseline.tetris_weights();
                if w.len() != NUM_FEATURES || w.iter().any(|v| !v.is_finite()) {
                    return Err(CliError::config(format!("baseline needs {NUM_FEATURES} finite weights")));
                }
            }
            EnvSpec::ExplicitMdp { .. } => {
                if self.baseline.weights.is_some() {
                    return Err(CliError::config("baseline weights apply to Tetris only"));
                }
            }
        }
        Ok(())
    }
}

/// The random-instance bound sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub instances: usize,
    pub n_states: usize,
    pub n_actions: usize,
    /// Basis size, constant column included.
    pub k: usize,
    /// Instances cycle through these discount factors.
    pub discounts: Vec<f64>,
    pub seed: u64,
    pub theta_grid: Vec<f64>,
    /// Replace the last random instance by one with the identity basis.
    pub identity_instance: bool,
    pub output_dir: PathBuf,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            instances: 50,
            n_states: 30,
            n_actions: 4,
            k: 6,
            discounts: vec![0.8, 0.95],
            seed: 0,
            theta_grid: vec![0.0, 0.005, 0.01, 0.02, 0.05, 0.1],
            identity_instance: true,
            output_dir: default_output(),
        }
    }
}

impl BoundsConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.instances == 0 || self.n_states == 0 || self.n_actions == 0 || self.k == 0 {
            return Err(CliError::config("instance counts and sizes must be positive"));
        }
        if self.k > self.n_states {
            return Err(CliError::config("basis cannot have more functions than states"));
        }
        if self.discounts.is_empty() || self.discounts.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(CliError::config("discounts must be nonempty and lie in (0, 1)"));
        }
        validate_schedule(&self.theta_grid).map_err(|e| CliError::config(e.to_string()))?;
        Ok(())
    }
}

/// Sampled-SALP convergence experiment on one explicit MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveConfig {
    pub n_states: usize,
    pub n_actions: usize,
    pub k: usize,
    pub discount: f64,
    pub model_seed: u64,
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub epsilon: f64,
    pub delta: f64,
    pub output_dir: PathBuf,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            n_states: 200,
            n_actions: 4,
            k: 8,
            discount: 0.9,
            model_seed: 7,
            sizes: vec![100, 1000, 10_000],
            seeds: (0..10).collect(),
            epsilon: 0.1,
            delta: 0.1,
            output_dir: default_output(),
        }
    }
}

impl CurveConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_actions == 0 || self.k == 0 || self.k > self.n_states {
            return Err(CliError::config("need positive sizes and k ≤ n_states"));
        }
        if self.sizes.is_empty() || self.sizes.contains(&0) || self.seeds.is_empty() {
            return Err(CliError::config("sample sizes must be positive and at least one seed given"));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(CliError::config("discount must lie in (0, 1)"));
        }
        if !(self.epsilon > 0.0) || !(self.delta > 0.0 && self.delta <= 0.5) {
            return Err(CliError::config("need ε > 0 and δ ∈ (0, 1/2]"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_config_round_trips_through_toml() {
        let cfg = ExperimentConfig::desk_tetris();
        cfg.validate().unwrap();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn minimal_toml_uses_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "sample_size = 100\nseeds = [4]\n[env]\nkind = \"tetris\"\n",
        )
        .unwrap();
        assert_eq!(cfg.eval_games, 500);
        assert_eq!(cfg.theta_schedule.len(), 10);
        assert_eq!(cfg.theta_schedule[0], 0.0);
        assert_eq!(cfg.env, EnvSpec::Tetris { discount: 0.9 });
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = "seeds = [1]\n[env]\nkind = \"tetris\"\n";
        assert!(ExperimentConfig::from_toml_str(&format!("sample_size = 0\n{base}")).is_err());
        assert!(ExperimentConfig::from_toml_str(&format!("sample_size = 5\ntheta_schedule = [0.1, 0.2]\n{base}")).is_err());
        assert!(ExperimentConfig::from_toml_str(&format!("sample_size = 5\neval_games = 0\n{base}")).is_err());
        assert!(ExperimentConfig::from_toml_str("sample_size = 5\nseeds = []\n[env]\nkind = \"tetris\"\n").is_err());
        assert!(ExperimentConfig::from_toml_str(&format!("sample_size = 5\nbogus = 1\n{base}")).is_err());
        let mut cfg = ExperimentConfig::desk_tetris();
        cfg.baseline.weights = Some(vec![1.0; 3]);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn basis_specs_parse() {
        assert_eq!("identity".parse::<BasisSpec>().unwrap(), BasisSpec::Identity);
        assert_eq!("random:6:42".parse::<BasisSpec>().unwrap(), BasisSpec::Random { k: 6, seed: 42 });
        assert_eq!("file:phi.json".parse::<BasisSpec>().unwrap(), BasisSpec::File("phi.json".into()));
        for bad in ["", "random:0:1", "random:3", "file:", "cubic"] {
            assert!(bad.parse::<BasisSpec>().is_err(), "{bad}");
        }
        let b = BasisSpec::Random { k: 3, seed: 1 }.build(10).unwrap();
        assert_eq!((b.n_states(), b.k()), (10, 3));
        assert!(b.has_constant());
    }

    #[test]
    fn sweep_configs_validate() {
        BoundsConfig::default().validate().unwrap();
        CurveConfig::default().validate().unwrap();
        assert!(BoundsConfig::from_toml_str("k = 40").is_err());
        assert!(CurveConfig::from_toml_str("sizes = [0]").is_err());
        assert_eq!(BoundsConfig::from_toml_str("instances = 3").unwrap().instances, 3);
    }
}
