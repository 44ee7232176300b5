use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{ParamVars, Tape, Var};
use crate::simenv::ItemStep;

use super::network::{actor_head, critic_head, encode_history, log_prob};
use super::params::{PolicyConfig, PolicyParams};
use super::policy::CriticKind;

/// One step of experience with the bookkeeping PPO needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Item-level history before the step.
    pub state: Vec<ItemStep>,
    pub categories: Vec<usize>,
    pub p: Vec<f64>,
    pub old_log_prob: f64,
    pub reward: f64,
    pub next_state: Vec<ItemStep>,
    pub done: bool,
}

/// `R_t = r_t + gamma V'(s_{t+1}) (1 - done_t)` with the target critic.
pub fn td_targets(batch: &[Transition], gamma: f64, params: &PolicyParams) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::domain(format!("gamma {gamma} outside [0, 1]")));
    }
    batch
        .iter()
        .map(|tr| {
            if tr.done || gamma == 0.0 {
                Ok(tr.reward)
            } else {
                Ok(tr.reward + gamma * params.critic_value(&tr.next_state, CriticKind::Target)?)
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossTerms {
    pub actor: f64,
    pub value: f64,
    pub total: f64,
}

/// `min(rho A, clip(rho, 1 - eps, 1 + eps) A)` for a scalar ratio node.
pub fn clipped_surrogate(tape: &mut Tape, ratio: Var, advantage: f64, eps: f64) -> Result<Var> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::domain(format!("clip epsilon {eps} must be positive")));
    }
    let unclipped = tape.scale(ratio, advantage)?;
    let clipped = tape.clamp(ratio, 1.0 - eps, 1.0 + eps)?;
    let clipped = tape.scale(clipped, advantage)?;
    tape.min(unclipped, clipped)
}

/// `A_t = R_t - V(s_t)` under the online critic.
pub fn advantages(batch: &[Transition], targets: &[f64], params: &PolicyParams) -> Result<Vec<f64>> {
    batch
        .iter()
        .zip(targets)
        .map(|(tr, r)| Ok(r - params.critic_value(&tr.state, CriticKind::Online)?))
        .collect()
}

/// Targets and advantages for a batch, both held fixed while differentiating.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchTargets {
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl BatchTargets {
    pub fn compute(batch: &[Transition], gamma: f64, params: &PolicyParams) -> Result<Self> {
        let returns = td_targets(batch, gamma, params)?;
        let advantages = advantages(batch, &returns, params)?;
        Ok(BatchTargets { returns, advantages })
    }
}

/// Builds the loss `L_a + value_coef * L_v` on `tape`.
pub fn ppo_objective(
    tape: &mut Tape,
    vars: &ParamVars,
    config: &PolicyConfig,
    batch: &[Transition],
    targets: &BatchTargets,
    eps: f64,
    value_coef: f64,
) -> Result<(Var, LossTerms)> {
    if batch.is_empty() {
        return Err(Error::domain("empty PPO batch"));
    }
    if batch.len() != targets.returns.len() || batch.len() != targets.advantages.len() {
        return Err(Error::domain("one target and advantage per transition required"));
    }
    let mut surrogate_sum: Option<Var> = None;
    let mut value_sum: Option<Var> = None;
    for ((tr, &target), &advantage) in batch.iter().zip(&targets.returns).zip(&targets.advantages) {
        if !tr.old_log_prob.is_finite() {
            return Err(Error::numerical("non-finite stored log-probability"));
        }
        let e = encode_history(tape, vars, config, &tr.state)?;
        let (mu, ls) = actor_head(tape, vars, config, e)?;
        let lp = log_prob(tape, &tr.p, mu, ls)?;
        let log_ratio = tape.add_scalar(lp, -tr.old_log_prob)?;
        let ratio = tape.exp(log_ratio).map_err(|_| {
            Error::numerical(format!(
                "importance ratio overflow (log ratio {})",
                tape.scalar(log_ratio)
            ))
        })?;

        let v = critic_head(tape, vars, e)?;
        let term = clipped_surrogate(tape, ratio, advantage, eps)?;
        surrogate_sum = Some(match surrogate_sum {
            None => term,
            Some(s) => tape.add(s, term)?,
        });

        let err = tape.add_scalar(v, -target)?;
        let sq = tape.mul(err, err)?;
        let sq = tape.sum(sq)?;
        value_sum = Some(match value_sum {
            None => sq,
            Some(s) => tape.add(s, sq)?,
        });
    }
    let n = batch.len() as f64;
    let actor = tape.scale(surrogate_sum.expect("non-empty batch"), -1.0 / n)?;
    let value = tape.scale(value_sum.expect("non-empty batch"), 1.0 / n)?;
    let weighted = tape.scale(value, value_coef)?;
    let total = tape.add(actor, weighted)?;
    let terms = LossTerms {
        actor: tape.scalar(actor),
        value: tape.scalar(value),
        total: tape.scalar(total),
    };
    Ok((total, terms))
}

/// Loss values for a batch under the current parameters.
pub fn ppo_losses(batch: &[Transition], params: &PolicyParams, gamma: f64, eps: f64, value_coef: f64) -> Result<LossTerms> {
    let targets = BatchTargets::compute(batch, gamma, params)?;
    let mut tape = Tape::new();
    let vars = tape.register_constants(&params.online);
    Ok(ppo_objective(&mut tape, &vars, &params.config, batch, &targets, eps, value_coef)?.1)
}
