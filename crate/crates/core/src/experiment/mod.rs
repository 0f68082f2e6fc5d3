//! Batch experiments driven by TOML specs. Runs write CSV traces plus a JSON
//! summary; sweeps repeat a run over one parameter.
//!
//! A spec names the MDP and critic features together with the algorithm
//! settings. Seeds and the output directory are optional:
//!
//! ```toml
//! seeds = [0, 1, 2]
//! output_dir = "runs/ca"
//!
//! [mdp]
//! builder = "conflict_chain"   # or "random", or "file" with `path`
//! gamma = 0.5
//!
//! [features]
//! kind = "one_hot"             # or "random" (dim, seed), "duplicated_one_hot" (column)
//!
//! [algorithm]
//! option = "ca"                # "fc", or "fixed" with `fixed_weights`
//! iterations = 200
//!
//! [sweep]                      # optional
//! parameter = "n_ca"
//! values = [100, 1000, 10000]
//! ```
//!
//! Unknown keys are rejected at every level. `MTAC_OUTPUT_DIR` overrides
//! `output_dir`.

mod check;
mod metrics;
mod run;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use check::{oracle_check, CheckResult, OracleReport};
pub use metrics::{compare_summaries, delta_m_percent, ComparisonRow, ComparisonTable, Mt10Row, Mt10Table};
pub use run::{run_experiment, run_sweep, write_atomic, RunSummary, SummaryReport, SweepPoint, SweepReport};

use crate::driver::{MtacConfig, WeightOption};
use crate::error::{Error, Result};
use crate::mdp::{
    build_duplicated_one_hot, build_one_hot_features, build_random_features, build_random_mdp, conflict_chain_with,
    ConflictChainParams, FeatureMap, MultiTaskMdp,
};

/// Environment variable that replaces a spec's `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "MTAC_OUTPUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub mdp: MdpSpec,
    #[serde(default)]
    pub features: FeatureSpec,
    #[serde(default)]
    pub algorithm: AlgorithmSpec,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Concurrent jobs; defaults to the machine's parallelism.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builder", rename_all = "snake_case", deny_unknown_fields)]
pub enum MdpSpec {
    ConflictChain(ConflictChainParams),
    Random(RandomMdpSpec),
    /// JSON file in the [`MultiTaskMdp`] serialization format, resolved
    /// relative to the spec file.
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomMdpSpec {
    pub seed: u64,
    pub num_states: usize,
    pub num_actions: usize,
    pub num_tasks: usize,
    pub gamma: f64,
    #[serde(default = "default_mixing")]
    pub mixing: f64,
}

fn default_mixing() -> f64 {
    0.1
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureSpec {
    #[default]
    OneHot,
    Random {
        dim: usize,
        seed: u64,
    },
    /// One-hot plus a copy of one column: rank deficient on purpose.
    DuplicatedOneHot {
        column: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    Ca,
    Fc,
    Fixed,
}

/// Algorithm settings; every field defaults to [`MtacConfig::default`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmSpec {
    pub option: OptionKind,
    /// Weights for the fixed option; uniform when omitted.
    pub fixed_weights: Option<Vec<f64>>,
    pub iterations: usize,
    pub n_critic: usize,
    pub n_actor: usize,
    pub n_ca: usize,
    pub n_fc: usize,
    pub beta: f64,
    pub c: f64,
    pub c_prime: f64,
    pub oracle_diagnostics: bool,
    pub radius: Option<f64>,
    pub lambda_a: Option<f64>,
    pub clamp_beta: bool,
    pub record_timing: bool,
    pub critic_trace: bool,
}

impl Default for AlgorithmSpec {
    fn default() -> Self {
        let c = MtacConfig::default();
        AlgorithmSpec {
            option: OptionKind::Ca,
            fixed_weights: None,
            iterations: c.iterations,
            n_critic: c.n_critic,
            n_actor: c.n_actor,
            n_ca: c.n_ca,
            n_fc: c.n_fc,
            beta: c.beta,
            c: c.c,
            c_prime: c.c_prime,
            oracle_diagnostics: c.oracle_diagnostics,
            radius: c.radius,
            lambda_a: c.lambda_a,
            clamp_beta: c.clamp_beta,
            record_timing: c.record_timing,
            critic_trace: c.critic_trace,
        }
    }
}

impl AlgorithmSpec {
    pub fn to_config(&self, seed: u64, num_tasks: usize) -> Result<MtacConfig> {
        let option = match self.option {
            OptionKind::Ca => WeightOption::Ca,
            OptionKind::Fc => WeightOption::Fc,
            OptionKind::Fixed => WeightOption::Fixed(
                self.fixed_weights.clone().unwrap_or_else(|| vec![1.0 / num_tasks as f64; num_tasks]),
            ),
        };
        if self.fixed_weights.is_some() && self.option != OptionKind::Fixed {
            return Err(Error::config("fixed_weights is only valid with option = \"fixed\""));
        }
        let config = MtacConfig {
            iterations: self.iterations,
            n_critic: self.n_critic,
            n_actor: self.n_actor,
            n_ca: self.n_ca,
            n_fc: self.n_fc,
            beta: self.beta,
            c: self.c,
            c_prime: self.c_prime,
            option,
            seed,
            oracle_diagnostics: self.oracle_diagnostics,
            radius: self.radius,
            lambda_a: self.lambda_a,
            clamp_beta: self.clamp_beta,
            record_timing: self.record_timing,
            critic_trace: self.critic_trace,
        };
        config.validate(num_tasks)?;
        Ok(config)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    NCa,
    NFc,
    NCritic,
    NActor,
    Beta,
    C,
    CPrime,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::NCa => "n_ca",
            SweepParameter::NFc => "n_fc",
            SweepParameter::NCritic => "n_critic",
            SweepParameter::NActor => "n_actor",
            SweepParameter::Beta => "beta",
            SweepParameter::C => "c",
            SweepParameter::CPrime => "c_prime",
        }
    }

    fn is_count(self) -> bool {
        matches!(self, SweepParameter::NCa | SweepParameter::NFc | SweepParameter::NCritic | SweepParameter::NActor)
    }

    /// `base` with this parameter set to `value`.
    pub fn apply(self, base: &AlgorithmSpec, value: f64) -> Result<AlgorithmSpec> {
        if self.is_count() && (value < 1.0 || value.fract() != 0.0) {
            return Err(Error::config(format!("{} must be a positive integer, got {value}", self.name())));
        }
        let mut out = base.clone();
        match self {
            SweepParameter::NCa => out.n_ca = value as usize,
            SweepParameter::NFc => out.n_fc = value as usize,
            SweepParameter::NCritic => out.n_critic = value as usize,
            SweepParameter::NActor => out.n_actor = value as usize,
            SweepParameter::Beta => out.beta = value,
            SweepParameter::C => out.c = value,
            SweepParameter::CPrime => out.c_prime = value,
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

impl ExperimentSpec {
    /// Parses and validates a TOML spec. Relative `file` MDP paths resolve
    /// against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let (Some(base), MdpSpec::File { path }) = (base_dir, &mut spec.mdp) {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Reads a spec file and applies the output-directory override from the
    /// environment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec = Self::from_toml_str(&text, path.parent())?;
        Ok(spec.with_output_override(std::env::var(OUTPUT_DIR_ENV).ok()))
    }

    pub fn with_output_override(mut self, dir: Option<String>) -> Self {
        if let Some(dir) = dir.filter(|d| !d.is_empty()) {
            self.output_dir = PathBuf::from(dir);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seed list is empty"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::config("seed list has duplicates"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers must be at least 1"));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::config("sweep has no values"));
            }
            for &v in &sweep.values {
                sweep.parameter.apply(&self.algorithm, v)?;
            }
        }
        Ok(())
    }

    pub fn build_mdp(&self) -> Result<MultiTaskMdp> {
        match &self.mdp {
            MdpSpec::ConflictChain(p) => conflict_chain_with(p),
            MdpSpec::Random(r) => build_random_mdp(r.seed, r.num_states, r.num_actions, r.num_tasks, r.gamma, r.mixing),
            MdpSpec::File { path } => {
                let text = std::fs::read_to_string(path)?;
                serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
            }
        }
    }

    pub fn build_features(&self, mdp: &MultiTaskMdp) -> Result<FeatureMap> {
        match &self.features {
            FeatureSpec::OneHot => Ok(build_one_hot_features(mdp)),
            FeatureSpec::Random { dim, seed } => build_random_features(mdp, *dim, *seed),
            FeatureSpec::DuplicatedOneHot { column } => build_duplicated_one_hot(mdp, *column),
        }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| format!("{:?}", self.algorithm.option).to_lowercase())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[mdp]\nbuilder = \"conflict_chain\"\n";

    #[test]
    fn minimal_spec_takes_defaults() {
        let spec = ExperimentSpec::from_toml_str(MINIMAL, None).unwrap();
        assert_eq!(spec.seeds, vec![0]);
        assert_eq!(spec.features, FeatureSpec::OneHot);
        assert_eq!(spec.algorithm, AlgorithmSpec::default());
        assert_eq!(spec.mdp, MdpSpec::ConflictChain(ConflictChainParams::default()));
    }

    #[test]
    fn unknown_keys_are_named() {
        for (text, key) in [
            ("bogus = 1\n[mdp]\nbuilder = \"conflict_chain\"\n", "bogus"),
            ("[mdp]\nbuilder = \"conflict_chain\"\ngama = 0.5\n", "gama"),
            ("[mdp]\nbuilder = \"conflict_chain\"\n[algorithm]\nn_crtic = 5\n", "n_crtic"),
            ("[mdp]\nbuilder = \"conflict_chain\"\n[features]\nkind = \"random\"\ndim = 3\nseed = 1\nscale = 2\n", "scale"),
            ("[mdp]\nbuilder = \"random\"\nseed = 1\nnum_states = 3\nnum_actions = 2\nnum_tasks = 2\ngamma = 0.9\nextra = 1\n", "extra"),
        ] {
            let err = ExperimentSpec::from_toml_str(text, None).unwrap_err();
            assert!(matches!(err, Error::Config(_)));
            assert!(err.to_string().contains(key), "{err}");
        }
    }

    #[test]
    fn full_spec_round_trip() {
        let text = r#"
            name = "sweep-demo"
            seeds = [3, 4]
            output_dir = "out"
            workers = 2
            [mdp]
            builder = "random"
            seed = 9
            num_states = 4
            num_actions = 3
            num_tasks = 3
            gamma = 0.8
            [features]
            kind = "random"
            dim = 6
            seed = 2
            [algorithm]
            option = "fixed"
            fixed_weights = [0.2, 0.3, 0.5]
            iterations = 3
            [sweep]
            parameter = "n_actor"
            values = [10, 20]
        "#;
        let spec = ExperimentSpec::from_toml_str(text, None).unwrap();
        let again = ExperimentSpec::from_toml_str(&toml::to_string(&spec).unwrap(), None).unwrap();
        assert_eq!(spec, again);
        let mdp = spec.build_mdp().unwrap();
        assert_eq!(spec.build_features(&mdp).unwrap().dim(), 6);
        let cfg = spec.algorithm.to_config(3, 3).unwrap();
        assert_eq!(cfg.option, WeightOption::Fixed(vec![0.2, 0.3, 0.5]));
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in [
            "seeds = []\n[mdp]\nbuilder = \"conflict_chain\"\n",
            "seeds = [1, 1]\n[mdp]\nbuilder = \"conflict_chain\"\n",
            "workers = 0\n[mdp]\nbuilder = \"conflict_chain\"\n",
            "[mdp]\nbuilder = \"conflict_chain\"\n[sweep]\nparameter = \"n_ca\"\nvalues = [0.5]\n",
            "[mdp]\nbuilder = \"maze\"\n",
        ] {
            assert!(ExperimentSpec::from_toml_str(text, None).is_err(), "{text}");
        }
        let spec = ExperimentSpec::from_toml_str("[mdp]\nbuilder = \"conflict_chain\"\n[algorithm]\nbeta = -1.0\n", None)
            .unwrap();
        assert!(spec.algorithm.to_config(0, 2).is_err());
        let spec =
            ExperimentSpec::from_toml_str("[mdp]\nbuilder = \"conflict_chain\"\n[algorithm]\nfixed_weights = [1.0, 0.0]\n", None)
                .unwrap();
        assert!(spec.algorithm.to_config(0, 2).is_err());
    }

    #[test]
    fn output_override() {
        let spec = ExperimentSpec::from_toml_str(MINIMAL, None).unwrap();
        assert_eq!(spec.clone().with_output_override(None).output_dir, PathBuf::from("runs"));
        assert_eq!(spec.clone().with_output_override(Some(String::new())).output_dir, PathBuf::from("runs"));
        assert_eq!(spec.with_output_override(Some("/tmp/x".into())).output_dir, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn file_paths_resolve_against_the_spec() {
        let spec = ExperimentSpec::from_toml_str("[mdp]\nbuilder = \"file\"\npath = \"m.json\"\n", Some(Path::new("/a/b")))
            .unwrap();
        assert_eq!(spec.mdp, MdpSpec::File { path: PathBuf::from("/a/b/m.json") });
    }
}
