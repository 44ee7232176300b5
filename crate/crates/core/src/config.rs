//! TOML run configuration with defaults, strict key checking and a
//! content fingerprint.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::{Catalog, EmbeddingInit};
use crate::error::{Error, Result};
use crate::harness::Variant;
use crate::hsp::{LlmConfig, DEFAULT_CATEGORIES_PER_STEP, DEFAULT_POOL_CAPACITY, DEFAULT_RETRIES, DEFAULT_SAMPLED_REFLECTIONS};
use crate::lpl::PolicyConfig;
use crate::simenv::EnvConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub catalog: CatalogSection,
    #[serde(default)]
    pub environment: EnvironmentSection,
    #[serde(default)]
    pub planner: PlannerSection,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub training: TrainingSection,
}

/// Either a CSV file (`item_id,category`) or a synthetic catalog.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_items: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_categories: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentSection {
    pub max_session_length: usize,
    pub list_length: usize,
    pub click_sharpness: f64,
    pub item_noise: f64,
    /// Size of the training population.
    pub n_users: usize,
}

impl Default for EnvironmentSection {
    fn default() -> Self {
        let env = EnvConfig::default();
        EnvironmentSection {
            max_session_length: env.max_session_length,
            list_length: env.list_length,
            click_sharpness: env.click_sharpness,
            item_noise: env.item_noise,
            n_users: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Heuristic,
    Llm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticKindConfig {
    Template,
    Llm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerSection {
    pub backend: BackendKind,
    pub categories_per_step: usize,
    pub pool_capacity: usize,
    pub sampled_reflections: usize,
    /// Sharpness of the reflection sampling softmax.
    pub alpha: f64,
    pub retries: usize,
    pub critic: CriticKindConfig,
    pub llm: LlmConfig,
}

impl Default for PlannerSection {
    fn default() -> Self {
        PlannerSection {
            backend: BackendKind::Heuristic,
            categories_per_step: DEFAULT_CATEGORIES_PER_STEP,
            pool_capacity: DEFAULT_POOL_CAPACITY,
            sampled_reflections: DEFAULT_SAMPLED_REFLECTIONS,
            alpha: 1.0,
            retries: DEFAULT_RETRIES,
            critic: CriticKindConfig::Template,
            llm: LlmConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySection {
    pub d: usize,
    pub hidden: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub init_sigma: f64,
    pub gamma: f64,
    /// PPO clip range of the hierarchical learner.
    pub clip_eps: f64,
    /// Clip range used by the `ppo_only` baseline.
    pub baseline_clip_eps: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub target_sync: u64,
    pub value_coef: f64,
}

impl Default for PolicySection {
    fn default() -> Self {
        let net = PolicyConfig::default();
        PolicySection {
            d: net.d,
            hidden: net.hidden,
            sigma_min: net.sigma_min,
            sigma_max: net.sigma_max,
            init_sigma: net.init_sigma,
            gamma: 0.9,
            clip_eps: 0.2,
            baseline_clip_eps: 0.8,
            learning_rate: 1e-3,
            epochs: 4,
            target_sync: 10,
            value_coef: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub iterations: usize,
    pub episodes_per_iteration: usize,
    pub eval_sessions: usize,
    /// Seed of the evaluation population; defaults to the run seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_seed: Option<u64>,
    pub variant: Variant,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            iterations: 50,
            episodes_per_iteration: 8,
            eval_sessions: 200,
            eval_seed: None,
            variant: Variant::Full,
        }
    }
}

impl RunConfig {
    /// A config with the given seed and synthetic catalog and defaults elsewhere.
    pub fn synthetic(seed: u64, n_items: usize, n_categories: usize) -> Self {
        RunConfig {
            seed,
            output_dir: None,
            catalog: CatalogSection {
                path: None,
                n_items: Some(n_items),
                n_categories: Some(n_categories),
            },
            environment: EnvironmentSection::default(),
            planner: PlannerSection::default(),
            policy: PolicySection::default(),
            training: TrainingSection::default(),
        }
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string().trim().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads and validates a config file. A missing file is a configuration error.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.catalog;
        match (&c.path, c.n_items, c.n_categories) {
            (Some(_), None, None) | (None, Some(_), Some(_)) => {}
            (Some(_), _, _) => return Err(Error::config("catalog: give either `path` or `n_items`/`n_categories`, not both")),
            _ => return Err(Error::config("catalog: missing key `path` or `n_items` + `n_categories`")),
        }
        self.env_config().validate()?;
        if self.environment.n_users == 0 {
            return Err(Error::config("environment.n_users must be >= 1"));
        }
        self.policy_config().validate()?;
        let p = &self.planner;
        if p.categories_per_step == 0 {
            return Err(Error::config("planner.categories_per_step must be >= 1"));
        }
        if p.pool_capacity == 0 || p.retries == 0 {
            return Err(Error::config("planner.pool_capacity and planner.retries must be >= 1"));
        }
        if !p.alpha.is_finite() {
            return Err(Error::config("planner.alpha must be finite"));
        }
        let pol = &self.policy;
        if !(0.0..=1.0).contains(&pol.gamma) {
            return Err(Error::config("policy.gamma must lie in [0, 1]"));
        }
        if !(pol.clip_eps > 0.0 && pol.baseline_clip_eps > 0.0) {
            return Err(Error::config("policy clip ranges must be positive"));
        }
        if !(pol.learning_rate > 0.0 && pol.learning_rate.is_finite()) || !pol.value_coef.is_finite() {
            return Err(Error::config("policy.learning_rate must be positive and value_coef finite"));
        }
        if pol.epochs == 0 || pol.target_sync == 0 {
            return Err(Error::config("policy.epochs and policy.target_sync must be >= 1"));
        }
        let t = &self.training;
        if t.episodes_per_iteration == 0 || t.eval_sessions == 0 {
            return Err(Error::config("training.episodes_per_iteration and training.eval_sessions must be >= 1"));
        }
        Ok(())
    }

    pub fn env_config(&self) -> EnvConfig {
        let e = &self.environment;
        EnvConfig {
            max_session_length: e.max_session_length,
            list_length: e.list_length,
            click_sharpness: e.click_sharpness,
            item_noise: e.item_noise,
            seed: self.seed,
        }
    }

    pub fn policy_config(&self) -> PolicyConfig {
        let p = &self.policy;
        PolicyConfig {
            d: p.d,
            hidden: p.hidden,
            max_len: self.environment.max_session_length,
            sigma_min: p.sigma_min,
            sigma_max: p.sigma_max,
            init_sigma: p.init_sigma,
        }
    }

    pub fn eval_seed(&self) -> u64 {
        self.training.eval_seed.unwrap_or(self.seed)
    }

    /// Builds the catalog; relative paths resolve against `base`.
    pub fn build_catalog(&self, base: Option<&Path>) -> Result<Catalog> {
        let init = EmbeddingInit {
            dim: self.policy.d,
            seed: self.seed,
        };
        match (&self.catalog.path, self.catalog.n_items, self.catalog.n_categories) {
            (Some(path), _, _) => {
                let full = match base {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                Catalog::load(&full, init)
            }
            (None, Some(n), Some(c)) => Catalog::synthetic(n, c, init),
            _ => Err(Error::config("catalog: missing key `path` or `n_items` + `n_categories`")),
        }
    }

    /// The fully resolved document, defaults included.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialise config: {e}")))
    }

    /// SHA-256 of the resolved document without `output_dir`, in hex.
    pub fn fingerprint(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.output_dir = None;
        let digest = Sha256::digest(copy.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}
