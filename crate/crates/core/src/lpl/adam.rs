use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Gradients, ParamSet};

use super::params::PolicyParams;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adaptive-moment optimiser state for a [`ParamSet`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    step: u64,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every tensor that has a gradient. Nothing is written
    /// if any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients, learning_rate: f64) -> Result<()> {
        for (name, g) in grads.iter() {
            if let Some(bad) = g.data().iter().find(|x| !x.is_finite()) {
                return Err(Error::numerical(format!("gradient of `{name}` contains {bad}")));
            }
            let p = params
                .get(name)
                .ok_or_else(|| Error::domain(format!("gradient for unknown parameter `{name}`")))?;
            if p.len() != g.len() {
                return Err(Error::domain(format!("gradient of `{name}` has the wrong size")));
            }
        }
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        let mut staged: Vec<(String, Vec<f64>)> = Vec::with_capacity(grads.len());
        for (name, g) in grads.iter() {
            let n = g.len();
            let m = self.first.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let v = self.second.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let current = params.get(name).expect("checked above").data();
            let mut next = Vec::with_capacity(n);
            for i in 0..n {
                let gi = g.data()[i];
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                next.push(current[i] - learning_rate * m_hat / (v_hat.sqrt() + EPSILON));
            }
            staged.push((name.clone(), next));
        }
        for (name, next) in staged {
            params
                .get_mut(&name)
                .expect("checked above")
                .try_map_inplace(|i, _| next[i])?;
        }
        Ok(())
    }
}

/// Adam step on the online parameters; the target critic is not touched.
pub fn apply_update(params: &mut PolicyParams, optimizer: &mut Adam, grads: &Gradients, learning_rate: f64) -> Result<()> {
    optimizer.step(&mut params.online, grads, learning_rate)
}

/// Copies the critic into the target critic when `update_count` is a
/// multiple of `interval`. Returns whether a copy happened.
pub fn target_sync(params: &mut PolicyParams, update_count: u64, interval: u64) -> bool {
    if interval > 0 && update_count.is_multiple_of(interval) {
        params.sync_target();
        true
    } else {
        false
    }
}
