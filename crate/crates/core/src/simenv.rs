//! Offline user simulator: synthetic population, logistic click model,
//! session lifecycle and the diversity-aware quit rule.
//!
//! Every step consumes one unit of the session budget. A list that shares
//! any category with the previous list consumes one extra unit, so a
//! session that keeps repeating categories ends early.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ItemRecord};
use crate::error::{Error, Result};
use crate::numeric::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: usize,
    /// One value in `[-1, 1]` per category.
    pub category_affinity: Vec<f64>,
    pub item_noise_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub max_session_length: usize,
    pub list_length: usize,
    pub click_sharpness: f64,
    /// Scale of a per-(user, item) Gaussian offset added to the affinity; 0 disables it.
    pub item_noise: f64,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            max_session_length: 20,
            list_length: 6,
            click_sharpness: 3.0,
            item_noise: 0.0,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_session_length == 0 {
            return Err(Error::config("environment.max_session_length must be >= 1"));
        }
        if self.list_length == 0 {
            return Err(Error::config("environment.list_length must be >= 1"));
        }
        if !self.click_sharpness.is_finite() || !self.item_noise.is_finite() || self.item_noise < 0.0 {
            return Err(Error::config("environment.click_sharpness/item_noise must be finite, noise >= 0"));
        }
        Ok(())
    }
}

/// One entry of the item-level history `H^a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemStep {
    pub items: Vec<usize>,
    pub reward: f64,
}

/// One entry of the category-level history `H^c`: the categories shown and the reward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryStep {
    pub categories: Vec<usize>,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionState {
    pub user_id: usize,
    pub t: usize,
    pub remaining_budget: i64,
    pub previous_list_categories: Vec<usize>,
    pub item_history: Vec<ItemStep>,
    pub category_history: Vec<CategoryStep>,
    pub done: bool,
}

/// Per-step record written to trajectory logs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub t: usize,
    pub item_ids: Vec<usize>,
    pub category_ids: Vec<usize>,
    pub clicks: Vec<bool>,
    pub reward: f64,
    pub penalty_applied: bool,
    pub remaining_budget: i64,
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub clicks: Vec<bool>,
    pub reward: f64,
    pub next: SessionState,
    pub quit_penalty_applied: bool,
    pub log: StepLog,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Affinities drawn i.i.d. uniform on `[-1, 1]`.
pub fn generate_population(n_users: usize, catalog: &Catalog, rng: &mut RngStream) -> Result<Vec<UserProfile>> {
    if n_users == 0 {
        return Err(Error::domain("population must contain at least one user"));
    }
    Ok((0..n_users)
        .map(|user_id| UserProfile {
            user_id,
            category_affinity: (0..catalog.n_categories())
                .map(|_| rng.uniform_range(-1.0, 1.0))
                .collect(),
            item_noise_seed: rng.next_u64(),
        })
        .collect())
}

/// `logistic(sharpness * affinity[category(item)])`.
pub fn click_probability(user: &UserProfile, item: &ItemRecord, sharpness: f64) -> f64 {
    logistic(sharpness * user.category_affinity[item.category_id])
}

/// Session metrics held as exact rationals so that `r_sin * t_int == r_cum`
/// holds without rounding.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionMetrics {
    pub t_int: usize,
    r_cum: BigRational,
    r_sin: BigRational,
}

impl SessionMetrics {
    pub fn r_cum(&self) -> f64 {
        self.r_cum.to_f64().unwrap_or(f64::NAN)
    }

    pub fn r_sin(&self) -> f64 {
        self.r_sin.to_f64().unwrap_or(f64::NAN)
    }

    pub fn r_cum_exact(&self) -> &BigRational {
        &self.r_cum
    }

    pub fn r_sin_exact(&self) -> &BigRational {
        &self.r_sin
    }

    /// `r_sin * t_int == r_cum`, evaluated exactly.
    pub fn identity_holds(&self) -> bool {
        &self.r_sin * BigRational::from_integer(BigInt::from(self.t_int)) == self.r_cum
    }
}

/// `(T_int, R_cum, R_sin)` of a finished session's reward sequence.
pub fn session_metrics(rewards: &[f64]) -> Result<SessionMetrics> {
    if rewards.is_empty() {
        return Err(Error::domain("metrics of an empty trajectory"));
    }
    let mut total = BigRational::zero();
    for r in rewards {
        total += BigRational::from_float(*r)
            .ok_or_else(|| Error::numerical(format!("non-finite reward {r}")))?;
    }
    let t_int = rewards.len();
    let r_sin = &total / BigRational::from_integer(BigInt::from(t_int));
    Ok(SessionMetrics {
        t_int,
        r_cum: total,
        r_sin,
    })
}

/// A simulator bound to one catalog and configuration.
#[derive(Clone, Copy, Debug)]
pub struct Environment<'a> {
    pub catalog: &'a Catalog,
    pub config: &'a EnvConfig,
}

impl<'a> Environment<'a> {
    pub fn new(catalog: &'a Catalog, config: &'a EnvConfig) -> Result<Self> {
        config.validate()?;
        if catalog.n_items() < config.list_length {
            return Err(Error::config(format!(
                "catalog has {} items, fewer than the list length {}",
                catalog.n_items(),
                config.list_length
            )));
        }
        Ok(Environment { catalog, config })
    }

    pub fn reset(&self, user: &UserProfile) -> SessionState {
        SessionState {
            user_id: user.user_id,
            t: 0,
            remaining_budget: self.config.max_session_length as i64,
            previous_list_categories: Vec::new(),
            item_history: Vec::new(),
            category_history: Vec::new(),
            done: false,
        }
    }

    /// Click probability including the optional per-item offset.
    pub fn click_probability(&self, user: &UserProfile, item: &ItemRecord) -> f64 {
        if self.config.item_noise == 0.0 {
            return click_probability(user, item, self.config.click_sharpness);
        }
        let offset = RngStream::new(user.item_noise_seed, item.item_id as u64).standard_normal();
        let affinity = user.category_affinity[item.category_id] + self.config.item_noise * offset;
        logistic(self.config.click_sharpness * affinity)
    }

    pub fn step(
        &self,
        state: &SessionState,
        user: &UserProfile,
        rec_list: &[usize],
        rng: &mut RngStream,
    ) -> Result<StepResult> {
        if state.done {
            return Err(Error::State(format!(
                "session of user {} already terminated at t={}",
                state.user_id, state.t
            )));
        }
        if user.user_id != state.user_id {
            return Err(Error::domain("user does not own this session"));
        }
        let k = self.config.list_length;
        if rec_list.len() != k {
            return Err(Error::domain(format!(
                "list has {} items, expected {k}",
                rec_list.len()
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(k);
        for &i in rec_list {
            self.catalog.item(i)?;
            if !seen.insert(i) {
                return Err(Error::domain(format!("item {i} listed twice")));
            }
        }

        let clicks: Vec<bool> = rec_list
            .iter()
            .map(|&i| {
                let p = self.click_probability(user, &self.catalog.items()[i]);
                rng.bernoulli(p)
            })
            .collect();
        let reward = clicks.iter().filter(|c| **c).count() as f64 / k as f64;

        let categories = self.catalog.categories_of_list(rec_list);
        let repeated = state.t >= 1
            && categories
                .iter()
                .any(|c| state.previous_list_categories.contains(c));
        let consumption = 1 + i64::from(repeated);
        let remaining_budget = state.remaining_budget - consumption;
        let done = remaining_budget <= 0 || state.t + 1 >= self.config.max_session_length;

        let mut next = state.clone();
        next.t += 1;
        next.remaining_budget = remaining_budget;
        next.previous_list_categories = categories.clone();
        next.item_history.push(ItemStep {
            items: rec_list.to_vec(),
            reward,
        });
        next.category_history.push(CategoryStep { categories, reward });
        next.done = done;

        let log = StepLog {
            t: state.t,
            item_ids: rec_list.to_vec(),
            category_ids: rec_list.iter().map(|&i| self.catalog.category_of(i)).collect(),
            clicks: clicks.clone(),
            reward,
            penalty_applied: repeated,
            remaining_budget,
        };
        Ok(StepResult {
            clicks,
            reward,
            next,
            quit_penalty_applied: repeated,
            log,
        })
    }
}
