use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::hsp::ReflectionPool;
use crate::lpl::PolicyParams;

use super::Variant;

pub const CHECKPOINT_FORMAT: &str = "lerl-checkpoint/1";

/// Trained policy, reflection pool and the run identity, stored as one JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub fingerprint: String,
    pub seed: u64,
    pub variant: Variant,
    pub completed_iterations: usize,
    /// Set when training stopped on a numerical error.
    pub aborted: Option<String>,
    pub policy: PolicyParams,
    pub pool: ReflectionPool,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::format(format!("cannot serialise checkpoint: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cp: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::format(format!("malformed checkpoint: {e}")))?;
        if cp.format != CHECKPOINT_FORMAT {
            return Err(Error::format(format!(
                "checkpoint format `{}`, expected `{CHECKPOINT_FORMAT}`",
                cp.format
            )));
        }
        cp.policy.validate()?;
        Ok(cp)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Configuration error unless the policy fits `catalog`.
    pub fn check_catalog(&self, catalog: &Catalog) -> Result<()> {
        if self.policy.n_items() != catalog.n_items() || self.policy.config.d != catalog.embedding_dim() {
            return Err(Error::config(format!(
                "checkpoint covers {} items of width {}, catalog has {} of width {}",
                self.policy.n_items(),
                self.policy.config.d,
                catalog.n_items(),
                catalog.embedding_dim()
            )));
        }
        Ok(())
    }
}
