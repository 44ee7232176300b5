use crate::error::{Error, Result};

use super::tape::{ParamSet, ParamVars, Tape, Var};

const ABS_FLOOR: f64 = 1e-8;

/// Finite-difference comparison for one parameter tensor.
#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    /// Flat indices whose relative error exceeded the tolerance.
    pub flagged: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.flagged.is_empty())
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_error)
            .fold(0.0, f64::max)
    }
}

/// Compares tape gradients of `loss_fn` against central differences
/// `(f(p + eps) - f(p - eps)) / 2 eps`, one scalar at a time.
///
/// Relative error is `|analytic - numeric| / max(|analytic|, |numeric|)`; entries whose
/// absolute disagreement is below `1e-8` count as exact agreement, so round-off on
/// vanishing gradients is not reported.
pub fn finite_diff_check<F>(loss_fn: F, params: &ParamSet, epsilon: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamVars) -> Result<Var>,
{
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::domain(format!("epsilon {epsilon} outside (0, 1e-2]")));
    }

    let eval = |p: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = tape.register(p);
        let loss = loss_fn(&mut tape, &vars)?;
        let v = tape.scalar(loss);
        if !v.is_finite() {
            return Err(Error::numerical("non-finite loss while probing"));
        }
        Ok(v)
    };

    let analytic = {
        let mut tape = Tape::new();
        let vars = tape.register(params);
        let loss = loss_fn(&mut tape, &vars)?;
        tape.backward(loss)?
    };

    let mut probe = params.clone();
    let mut checks = Vec::new();
    for (name, tensor) in params.iter() {
        let grad = analytic
            .get(name)
            .ok_or_else(|| Error::numerical(format!("no gradient for `{name}`")))?;
        let mut max_rel: f64 = 0.0;
        let mut flagged = Vec::new();
        for i in 0..tensor.len() {
            let orig = tensor.data()[i];
            let slot = probe.get_mut(name).expect("cloned parameter");
            slot.set(i, orig + epsilon)?;
            let plus = eval(&probe)?;
            probe.get_mut(name).expect("cloned parameter").set(i, orig - epsilon)?;
            let minus = eval(&probe)?;
            probe.get_mut(name).expect("cloned parameter").set(i, orig)?;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = grad.data()[i];
            let diff = (a - numeric).abs();
            let rel = if diff <= ABS_FLOOR {
                0.0
            } else {
                diff / a.abs().max(numeric.abs())
            };
            if rel > tol {
                flagged.push(i);
            }
            max_rel = max_rel.max(rel);
        }
        checks.push(ParamCheck {
            name: name.clone(),
            max_rel_error: max_rel,
            flagged,
        });
    }
    Ok(GradCheckReport { params: checks, tol })
}
