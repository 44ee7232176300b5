//! Differentiation and randomness kernel: finite tensors, a recording tape,
//! reproducible random streams and a finite-difference gradient oracle.

mod gradcheck;
mod rng;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, GradCheckReport, ParamCheck};
pub use rng::{streams, RngStream};
pub use tape::{Gradients, ParamSet, ParamVars, Tape, Var};
pub use tensor::Tensor;

use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Probabilities proportional to `exp(temperature_scale * v_i)`.
pub fn softmax(v: &[f64], temperature_scale: f64) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::domain("softmax of empty vector"));
    }
    if !temperature_scale.is_finite() || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("softmax inputs must be finite"));
    }
    Ok(tape::softmax_slice(v, temperature_scale))
}

/// Log density of `x` under `N(mu, diag(sigma^2))`.
pub fn gaussian_log_density(x: &[f64], mu: &[f64], sigma: &[f64]) -> Result<f64> {
    check_gaussian(mu, sigma)?;
    if x.len() != mu.len() {
        return Err(Error::domain("sample and mean lengths differ"));
    }
    Ok(x.iter()
        .zip(mu)
        .zip(sigma)
        .map(|((x, m), s)| {
            let z = (x - m) / s;
            -HALF_LN_2PI - s.ln() - 0.5 * z * z
        })
        .sum())
}

/// Draws `x ~ N(mu, diag(sigma^2))` and returns it with its log density.
pub fn gaussian_sample(mu: &[f64], sigma: &[f64], rng: &mut RngStream) -> Result<(Vec<f64>, f64)> {
    check_gaussian(mu, sigma)?;
    let x: Vec<f64> = mu
        .iter()
        .zip(sigma)
        .map(|(m, s)| m + s * rng.standard_normal())
        .collect();
    let lp = gaussian_log_density(&x, mu, sigma)?;
    Ok((x, lp))
}

fn check_gaussian(mu: &[f64], sigma: &[f64]) -> Result<()> {
    if mu.len() != sigma.len() {
        return Err(Error::domain(format!(
            "mean has {} entries, sigma {}",
            mu.len(),
            sigma.len()
        )));
    }
    if let Some(s) = sigma.iter().find(|s| **s <= 0.0 || !s.is_finite()) {
        return Err(Error::domain(format!("sigma must be positive, got {s}")));
    }
    if mu.iter().any(|m| !m.is_finite()) {
        return Err(Error::domain("mean must be finite"));
    }
    Ok(())
}
