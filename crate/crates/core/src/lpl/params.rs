use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::numeric::{streams, ParamSet, RngStream, Tensor};

/// Network sizes and the bounds of the actor's standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    /// Embedding width `d`, shared by items, encoder and the virtual item.
    pub d: usize,
    pub hidden: usize,
    /// Longest history the position table covers.
    pub max_len: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Standard deviation of the freshly initialised actor.
    pub init_sigma: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            d: 16,
            hidden: 32,
            max_len: 20,
            sigma_min: 1e-3,
            sigma_max: 2.0,
            init_sigma: 0.5,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.hidden == 0 || self.max_len == 0 {
            return Err(Error::config("policy.d, policy.hidden and policy.max_len must be >= 1"));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min < self.sigma_max && self.sigma_max.is_finite()) {
            return Err(Error::config("policy sigma bounds must satisfy 0 < sigma_min < sigma_max"));
        }
        if !(self.init_sigma >= self.sigma_min && self.init_sigma <= self.sigma_max) {
            return Err(Error::config("policy.init_sigma must lie within the sigma bounds"));
        }
        Ok(())
    }

    pub fn log_sigma_bounds(&self) -> (f64, f64) {
        (self.sigma_min.ln(), self.sigma_max.ln())
    }
}

pub const ITEM_EMBEDDINGS: &str = "item_emb";

/// Critic tensor names; the target critic holds exactly these.
pub const CRITIC_NAMES: [&str; 4] = ["critic.b1", "critic.b2", "critic.w1", "critic.w2"];

/// Online actor/encoder/critic parameters plus the target critic copy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub config: PolicyConfig,
    pub online: ParamSet,
    pub target_critic: ParamSet,
}

fn xavier(rows: usize, cols: usize, rng: &mut RngStream) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::uniform(vec![rows, cols], -bound, bound, rng)
}

fn zeros(rows: usize, cols: usize) -> Tensor {
    Tensor::zeros(vec![rows, cols])
}

impl PolicyParams {
    /// Fresh parameters; item embeddings are copied from the catalog and
    /// everything else is drawn from the policy-init stream of `seed`.
    pub fn init(config: PolicyConfig, catalog: &Catalog, seed: u64) -> Result<Self> {
        config.validate()?;
        if catalog.embedding_dim() != config.d {
            return Err(Error::config(format!(
                "catalog embeddings have width {}, policy.d is {}",
                catalog.embedding_dim(),
                config.d
            )));
        }
        let (d, h) = (config.d, config.hidden);
        let mut rng = RngStream::new(seed, streams::POLICY_INIT);
        let mut p = ParamSet::new();
        p.insert(ITEM_EMBEDDINGS, catalog.item_embeddings().clone());

        p.insert("enc.w_item", xavier(d, d, &mut rng));
        p.insert("enc.w_reward", xavier(1, d, &mut rng));
        p.insert("enc.b_in", zeros(1, d));
        p.insert("enc.start", Tensor::uniform(vec![1, d], -0.1, 0.1, &mut rng));
        p.insert("enc.pos", Tensor::uniform(vec![config.max_len + 1, d], -0.1, 0.1, &mut rng));
        for name in ["enc.wq", "enc.wk", "enc.wv", "enc.wo"] {
            p.insert(name, xavier(d, d, &mut rng));
        }
        p.insert("enc.ff_w1", xavier(d, h, &mut rng));
        p.insert("enc.ff_b1", zeros(1, h));
        p.insert("enc.ff_w2", xavier(h, d, &mut rng));
        p.insert("enc.ff_b2", zeros(1, d));

        p.insert("actor.w1", xavier(d, h, &mut rng));
        p.insert("actor.b1", zeros(1, h));
        p.insert("actor.w_mu", xavier(h, d, &mut rng));
        p.insert("actor.b_mu", zeros(1, d));
        let mut w_sigma = xavier(h, d, &mut rng);
        w_sigma.try_map_inplace(|_, x| 0.1 * x)?;
        p.insert("actor.w_sigma", w_sigma);
        p.insert("actor.b_sigma", Tensor::matrix(1, d, vec![config.init_sigma.ln(); d])?);

        p.insert("critic.w1", xavier(d, h, &mut rng));
        p.insert("critic.b1", zeros(1, h));
        p.insert("critic.w2", xavier(h, 1, &mut rng));
        p.insert("critic.b2", zeros(1, 1));

        let mut params = PolicyParams {
            config,
            online: p,
            target_critic: ParamSet::new(),
        };
        params.sync_target();
        Ok(params)
    }

    /// Hard copy of the online critic into the target critic.
    pub fn sync_target(&mut self) {
        let mut target = ParamSet::new();
        for name in CRITIC_NAMES {
            let t = self.online.get(name).expect("critic tensor present").clone();
            target.insert(name, t);
        }
        self.target_critic = target;
    }

    pub fn item_embeddings(&self) -> &Tensor {
        self.online.get(ITEM_EMBEDDINGS).expect("item embeddings present")
    }

    pub fn n_items(&self) -> usize {
        self.item_embeddings().shape()[0]
    }

    /// Checks every tensor is present with the expected shape.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let (d, h, n) = (self.config.d, self.config.hidden, self.n_items());
        let expected: Vec<(&str, [usize; 2])> = vec![
            (ITEM_EMBEDDINGS, [n, d]),
            ("enc.w_item", [d, d]),
            ("enc.w_reward", [1, d]),
            ("enc.b_in", [1, d]),
            ("enc.start", [1, d]),
            ("enc.pos", [self.config.max_len + 1, d]),
            ("enc.wq", [d, d]),
            ("enc.wk", [d, d]),
            ("enc.wv", [d, d]),
            ("enc.wo", [d, d]),
            ("enc.ff_w1", [d, h]),
            ("enc.ff_b1", [1, h]),
            ("enc.ff_w2", [h, d]),
            ("enc.ff_b2", [1, d]),
            ("actor.w1", [d, h]),
            ("actor.b1", [1, h]),
            ("actor.w_mu", [h, d]),
            ("actor.b_mu", [1, d]),
            ("actor.w_sigma", [h, d]),
            ("actor.b_sigma", [1, d]),
            ("critic.w1", [d, h]),
            ("critic.b1", [1, h]),
            ("critic.w2", [h, 1]),
            ("critic.b2", [1, 1]),
        ];
        if self.online.len() != expected.len() {
            return Err(Error::format(format!(
                "policy has {} tensors, expected {}",
                self.online.len(),
                expected.len()
            )));
        }
        for (name, shape) in expected {
            let t = self
                .online
                .get(name)
                .ok_or_else(|| Error::format(format!("missing tensor `{name}`")))?;
            if t.shape() != shape {
                return Err(Error::format(format!(
                    "tensor `{name}` has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            if CRITIC_NAMES.contains(&name) {
                let target = self
                    .target_critic
                    .get(name)
                    .ok_or_else(|| Error::format(format!("missing target tensor `{name}`")))?;
                if target.shape() != shape {
                    return Err(Error::format(format!("target tensor `{name}` has the wrong shape")));
                }
            }
        }
        if self.target_critic.len() != CRITIC_NAMES.len() {
            return Err(Error::format("target critic has unexpected tensors"));
        }
        Ok(())
    }
}
