use crate::error::Result;
use crate::numeric::{gaussian_sample, RngStream, Tape};
use crate::simenv::ItemStep;

use super::network::{actor_head, critic_head, encode_history, log_prob};
use super::params::PolicyParams;
use super::select::score_and_select;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CriticKind {
    Online,
    Target,
}

/// One decision of the learner.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSample {
    /// Virtual item embedding `p_t`.
    pub p: Vec<f64>,
    pub log_prob: f64,
    pub items: Vec<usize>,
    pub scores: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Draws `p ~ N(mu, sigma^2)`, or returns `mu` itself when `rng` is `None`.
pub fn sample_virtual_item(mu: &[f64], sigma: &[f64], rng: Option<&mut RngStream>) -> Result<(Vec<f64>, f64)> {
    match rng {
        Some(rng) => gaussian_sample(mu, sigma, rng),
        None => {
            let lp = crate::numeric::gaussian_log_density(mu, mu, sigma)?;
            Ok((mu.to_vec(), lp))
        }
    }
}

impl PolicyParams {
    /// `(mu, sigma)` of the actor for a history.
    pub fn actor_output(&self, history: &[ItemStep]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new();
        let vars = tape.register_constants(&self.online);
        let e = encode_history(&mut tape, &vars, &self.config, history)?;
        let (mu, ls) = actor_head(&mut tape, &vars, &self.config, e)?;
        let sigma = tape.value(ls).data().iter().map(|x| x.exp()).collect();
        Ok((tape.value(mu).data().to_vec(), sigma))
    }

    pub fn critic_value(&self, history: &[ItemStep], which: CriticKind) -> Result<f64> {
        let mut tape = Tape::new();
        let vars = tape.register_constants(&self.online);
        let e = encode_history(&mut tape, &vars, &self.config, history)?;
        let v = match which {
            CriticKind::Online => critic_head(&mut tape, &vars, e)?,
            CriticKind::Target => {
                let target = tape.register_constants(&self.target_critic);
                critic_head(&mut tape, &target, e)?
            }
        };
        Ok(tape.scalar(v))
    }

    /// Samples (or, without `rng`, takes the mean) virtual item and selects
    /// the top-`k` eligible items under `mask`.
    pub fn act(&self, history: &[ItemStep], mask: &[u8], k: usize, rng: Option<&mut RngStream>) -> Result<ActionSample> {
        let mut tape = Tape::new();
        let vars = tape.register_constants(&self.online);
        let e = encode_history(&mut tape, &vars, &self.config, history)?;
        let (mu_v, ls_v) = actor_head(&mut tape, &vars, &self.config, e)?;
        let mu = tape.value(mu_v).data().to_vec();
        let sigma: Vec<f64> = tape.value(ls_v).data().iter().map(|x| x.exp()).collect();
        let (p, _) = sample_virtual_item(&mu, &sigma, rng)?;
        // same graph as the training loss, so an unchanged policy has ratio 1
        let lp = log_prob(&mut tape, &p, mu_v, ls_v)?;
        let log_prob = tape.scalar(lp);
        let selection = score_and_select(&p, self.item_embeddings(), mask, k)?;
        Ok(ActionSample {
            p,
            log_prob,
            items: selection.items,
            scores: selection.scores,
            mu,
            sigma,
        })
    }
}
