//! Episode rollout across planner and learner, training, evaluation and
//! the ablation matrix.

mod check;
mod checkpoint;
mod episode;
mod export;
mod report;
mod train;

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::config::{BackendKind, CriticKindConfig, RunConfig};
use crate::error::{Error, Result};
use crate::hsp::{ChatClient, CriticBackend, HttpChatClient, PlannerBackend, ReflectionPool};
use crate::lpl::PolicyParams;
use crate::simenv::{EnvConfig, Environment};

pub use check::{self_check, CheckResult};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use episode::{run_episode, EpisodeContext, Trajectory};
pub use export::{case_study_export, read_step_logs, write_step_logs};
pub use report::{mean_std, reports_to_csv, reports_to_table, MetricsReport, METRICS};
pub use train::{ablate, curve_to_csv, evaluate, train, AblationRow, EvalOutcome, IterationStats, TrainOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Planner with reflections plus the learner.
    Full,
    /// No planner: the learner chooses from all categories.
    WoHsp,
    /// Planner without reflections.
    WoHc,
    /// Like `WoHsp`, trained with the baseline clip range.
    PpoOnly,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::WoHsp, Variant::WoHc, Variant::PpoOnly];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WoHsp => "wo_hsp",
            Variant::WoHc => "wo_hc",
            Variant::PpoOnly => "ppo_only",
        }
    }

    pub fn uses_planner(self) -> bool {
        matches!(self, Variant::Full | Variant::WoHc)
    }

    pub fn uses_reflections(self) -> bool {
        self == Variant::Full
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config(format!("unknown variant `{s}` (full, wo_hsp, wo_hc, ppo_only)")))
    }
}

/// A resolved run: config, catalog and the planner/critic back-ends.
pub struct Setup {
    pub config: RunConfig,
    pub catalog: Catalog,
    pub env: EnvConfig,
    pub planner: PlannerBackend,
    pub critic: CriticBackend,
    pub fingerprint: String,
}

impl Setup {
    /// Builds the catalog (relative paths resolve against `base`) and the
    /// back-ends. LLM back-ends read their API key here.
    pub fn from_config(config: RunConfig, base: Option<&Path>) -> Result<Self> {
        config.validate()?;
        let catalog = config.build_catalog(base)?;
        let needs_client = config.planner.backend == BackendKind::Llm || config.planner.critic == CriticKindConfig::Llm;
        let client: Option<Arc<dyn ChatClient>> = if needs_client {
            let c = HttpChatClient::from_config(config.planner.llm.clone()).map_err(|e| Error::config(e.to_string()))?;
            Some(Arc::new(c))
        } else {
            None
        };
        let planner = match (config.planner.backend, &client) {
            (BackendKind::Llm, Some(c)) => PlannerBackend::Llm {
                client: c.clone(),
                retries: config.planner.retries,
            },
            _ => PlannerBackend::Heuristic,
        };
        let critic = match (config.planner.critic, &client) {
            (CriticKindConfig::Llm, Some(c)) => CriticBackend::Llm(c.clone()),
            _ => CriticBackend::Template,
        };
        Self::with_backends(config, catalog, planner, critic)
    }

    pub fn with_backends(config: RunConfig, catalog: Catalog, planner: PlannerBackend, critic: CriticBackend) -> Result<Self> {
        config.validate()?;
        if config.planner.categories_per_step > catalog.n_categories() {
            return Err(Error::config(format!(
                "planner.categories_per_step {} exceeds the {} catalog categories",
                config.planner.categories_per_step,
                catalog.n_categories()
            )));
        }
        let env = config.env_config();
        Environment::new(&catalog, &env)?;
        let fingerprint = config.fingerprint()?;
        Ok(Setup {
            config,
            catalog,
            env,
            planner,
            critic,
            fingerprint,
        })
    }

    pub fn environment(&self) -> Result<Environment<'_>> {
        Environment::new(&self.catalog, &self.env)
    }

    pub fn episode_context<'a>(
        &'a self,
        policy: &'a PolicyParams,
        pool: &'a ReflectionPool,
        variant: Variant,
        deterministic: bool,
    ) -> Result<EpisodeContext<'a>> {
        Ok(EpisodeContext {
            env: self.environment()?,
            planner: &self.planner,
            policy,
            pool,
            variant,
            categories_per_step: self.config.planner.categories_per_step,
            sampled_reflections: self.config.planner.sampled_reflections,
            alpha: self.config.planner.alpha,
            deterministic,
            capture_contexts: false,
        })
    }
}
