//! Forward pass of the sequence encoder and the actor/critic heads, built
//! on a [`Tape`] so the same code serves rollouts and gradient updates.

use crate::error::{Error, Result};
use crate::numeric::{ParamVars, Tape, Tensor, Var};
use crate::simenv::ItemStep;

use super::params::{PolicyConfig, ITEM_EMBEDDINGS};

const MASKED: f64 = -1e9;

/// Output of [`encode`]: every position's representation plus the
/// attention weights, for inspection.
pub struct Encoded {
    /// `len × d`.
    pub states: Var,
    /// `1 × d`, the final position.
    pub output: Var,
    /// `len × len`, row-stochastic and lower-triangular.
    pub attention: Var,
}

/// One vector per history step: the mean embedding of the listed items and
/// the step reward, projected to width `d`. An empty history becomes the
/// learned start token.
pub fn embed_history(tape: &mut Tape, vars: &ParamVars, history: &[ItemStep]) -> Result<Var> {
    if history.is_empty() {
        return Ok(vars["enc.start"]);
    }
    let n_items = tape.value(vars[ITEM_EMBEDDINGS]).rows()?;
    let t = history.len();
    let mut select = vec![0.0; t * n_items];
    let mut rewards = Vec::with_capacity(t);
    for (row, step) in history.iter().enumerate() {
        if step.items.is_empty() {
            return Err(Error::domain(format!("history step {row} lists no items")));
        }
        let w = 1.0 / step.items.len() as f64;
        for &i in &step.items {
            if i >= n_items {
                return Err(Error::domain(format!("unknown item id {i}")));
            }
            select[row * n_items + i] += w;
        }
        rewards.push(step.reward);
    }
    let s = tape.constant(Tensor::matrix(t, n_items, select)?);
    let r = tape.constant(Tensor::matrix(t, 1, rewards)?);
    let mean_emb = tape.matmul(s, vars[ITEM_EMBEDDINGS])?;
    let x = tape.matmul(mean_emb, vars["enc.w_item"])?;
    let xr = tape.matmul(r, vars["enc.w_reward"])?;
    let v = tape.add(x, xr)?;
    tape.add_row(v, vars["enc.b_in"])
}

fn causal_mask(len: usize) -> Result<Tensor> {
    let data = (0..len * len)
        .map(|i| if i % len > i / len { MASKED } else { 0.0 })
        .collect();
    Tensor::matrix(len, len, data)
}

/// One causal self-attention block with position embeddings, residual
/// connections and a tanh feed-forward layer.
pub fn encode(tape: &mut Tape, vars: &ParamVars, config: &PolicyConfig, seq: Var) -> Result<Encoded> {
    let (len, d) = tape.value(seq).dims2()?;
    if len == 0 || len > config.max_len + 1 {
        return Err(Error::domain(format!(
            "sequence length {len} outside 1..={}",
            config.max_len + 1
        )));
    }
    let pos = tape.slice_rows(vars["enc.pos"], 0, len)?;
    let h = tape.add(seq, pos)?;

    let q = tape.matmul(h, vars["enc.wq"])?;
    let k = tape.matmul(h, vars["enc.wk"])?;
    let v = tape.matmul(h, vars["enc.wv"])?;
    let kt = tape.transpose(k)?;
    let raw = tape.matmul(q, kt)?;
    let scaled = tape.scale(raw, 1.0 / (d as f64).sqrt())?;
    let mask = tape.constant(causal_mask(len)?);
    let masked = tape.add(scaled, mask)?;
    let attention = tape.softmax_rows(masked)?;
    let mixed = tape.matmul(attention, v)?;
    let projected = tape.matmul(mixed, vars["enc.wo"])?;
    let h1 = tape.add(h, projected)?;

    let f = tape.matmul(h1, vars["enc.ff_w1"])?;
    let f = tape.add_row(f, vars["enc.ff_b1"])?;
    let f = tape.tanh(f)?;
    let f = tape.matmul(f, vars["enc.ff_w2"])?;
    let f = tape.add_row(f, vars["enc.ff_b2"])?;
    let states = tape.add(h1, f)?;
    let output = tape.slice_rows(states, len - 1, len)?;
    Ok(Encoded {
        states,
        output,
        attention,
    })
}

/// `(mu, log sigma)`, each `1 × d`; log sigma is clamped to the configured bounds.
pub fn actor_head(tape: &mut Tape, vars: &ParamVars, config: &PolicyConfig, e: Var) -> Result<(Var, Var)> {
    let h = tape.matmul(e, vars["actor.w1"])?;
    let h = tape.add_row(h, vars["actor.b1"])?;
    let h = tape.tanh(h)?;
    let mu = tape.matmul(h, vars["actor.w_mu"])?;
    let mu = tape.add_row(mu, vars["actor.b_mu"])?;
    let raw = tape.matmul(h, vars["actor.w_sigma"])?;
    let raw = tape.add_row(raw, vars["actor.b_sigma"])?;
    let (lo, hi) = config.log_sigma_bounds();
    let log_sigma = tape.clamp(raw, lo, hi)?;
    Ok((mu, log_sigma))
}

/// `1 × 1` state value. `critic` may hold the online or the target critic.
pub fn critic_head(tape: &mut Tape, critic: &ParamVars, e: Var) -> Result<Var> {
    let h = tape.matmul(e, critic["critic.w1"])?;
    let h = tape.add_row(h, critic["critic.b1"])?;
    let h = tape.tanh(h)?;
    let v = tape.matmul(h, critic["critic.w2"])?;
    tape.add(v, critic["critic.b2"])
}

/// Diagonal Gaussian log density of the constant point `p`.
pub fn log_prob(tape: &mut Tape, p: &[f64], mu: Var, log_sigma: Var) -> Result<Var> {
    let d = p.len();
    let point = tape.constant(Tensor::row(p.to_vec())?);
    let diff = tape.sub(point, mu)?;
    let neg = tape.scale(log_sigma, -1.0)?;
    let inv_sigma = tape.exp(neg)?;
    let z = tape.mul(diff, inv_sigma)?;
    let z2 = tape.mul(z, z)?;
    let quad = tape.sum(z2)?;
    let quad = tape.scale(quad, -0.5)?;
    let log_det = tape.sum(log_sigma)?;
    let lp = tape.sub(quad, log_det)?;
    tape.add_scalar(lp, -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Encoder output for a history.
pub fn encode_history(tape: &mut Tape, vars: &ParamVars, config: &PolicyConfig, history: &[ItemStep]) -> Result<Var> {
    let seq = embed_history(tape, vars, history)?;
    Ok(encode(tape, vars, config, seq)?.output)
}
