//! Quick oracle suite behind the `check` command.

use std::sync::Arc;

use crate::catalog::{Catalog, EmbeddingInit};
use crate::error::Result;
use crate::hsp::{plan_categories, ChatClient, ChatMessage, LlmError, PlannerBackend, PlannerContext, ReflectionEntry, ReflectionPool};
use crate::lpl::{clipped_surrogate, ppo_objective, score_and_select, BatchTargets, PolicyConfig, PolicyParams, Transition};
use crate::numeric::{finite_diff_check, RngStream, Tape, Tensor};
use crate::simenv::{session_metrics, EnvConfig, Environment, ItemStep, UserProfile};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn result(name: &'static str, outcome: Result<(bool, String)>) -> CheckResult {
    match outcome {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn gradient_check() -> Result<(bool, String)> {
    let catalog = Catalog::synthetic(8, 2, EmbeddingInit { dim: 4, seed: 1 })?;
    let cfg = PolicyConfig {
        d: 4,
        hidden: 4,
        max_len: 4,
        ..PolicyConfig::default()
    };
    let mut worst: f64 = 0.0;
    for seed in 0..3 {
        let params = PolicyParams::init(cfg.clone(), &catalog, seed)?;
        let mut rng = RngStream::new(seed, 100);
        let mut batch = Vec::new();
        let mut history: Vec<ItemStep> = Vec::new();
        for t in 0..4 {
            let mask = catalog.category_mask(&[t % 2])?;
            let a = params.act(&history, &mask, 2, Some(&mut rng))?;
            let reward = rng.index(3) as f64 / 2.0;
            let mut next = history.clone();
            next.push(ItemStep {
                items: a.items.clone(),
                reward,
            });
            batch.push(Transition {
                state: history.clone(),
                categories: vec![t % 2],
                p: a.p,
                old_log_prob: a.log_prob + [0.4, -0.5, 0.6, -0.3][t],
                reward,
                next_state: next.clone(),
                done: t == 3,
            });
            history = next;
        }
        let targets = BatchTargets::compute(&batch, 0.9, &params)?;
        let report = finite_diff_check(
            |tape, vars| Ok(ppo_objective(tape, vars, &cfg, &batch, &targets, 0.2, 0.5)?.0),
            &params.online,
            1e-6,
            1e-4,
        )?;
        worst = worst.max(report.max_rel_error());
    }
    Ok((worst < 1e-4, format!("max relative error {worst:.2e} over 3 seeds")))
}

fn selection_check() -> Result<(bool, String)> {
    let mut rng = RngStream::new(7, 0);
    let trials = 2000;
    for _ in 0..trials {
        let n = 2 + rng.index(28);
        let d = 1 + rng.index(4);
        let emb: Vec<f64> = (0..n * d).map(|_| rng.index(5) as f64 - 2.0).collect();
        let p: Vec<f64> = (0..d).map(|_| rng.index(5) as f64 - 2.0).collect();
        let mask: Vec<u8> = (0..n).map(|_| u8::from(rng.bernoulli(0.5))).collect();
        let eligible = mask.iter().filter(|m| **m == 1).count();
        if eligible == 0 {
            continue;
        }
        let k = 1 + rng.index(eligible);
        let e = Tensor::matrix(n, d, emb.clone())?;
        let got = score_and_select(&p, &e, &mask, k)?.items;
        let mut expected: Vec<(f64, usize)> = (0..n)
            .filter(|&j| mask[j] == 1)
            .map(|j| ((0..d).map(|c| emb[j * d + c] * p[c]).sum(), j))
            .collect();
        expected.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite").then(a.1.cmp(&b.1)));
        let expected: Vec<usize> = expected.into_iter().take(k).map(|x| x.1).collect();
        if got != expected {
            return Ok((false, format!("mismatch: {got:?} vs {expected:?}")));
        }
    }
    Ok((true, format!("{trials} random instances match the sort oracle")))
}

fn quit_check() -> Result<(bool, String)> {
    let catalog = Catalog::synthetic(4, 2, EmbeddingInit { dim: 2, seed: 0 })?;
    let user = UserProfile {
        user_id: 0,
        category_affinity: vec![0.0, 0.0],
        item_noise_seed: 0,
    };
    for max_len in 1..=20usize {
        let cfg = EnvConfig {
            max_session_length: max_len,
            list_length: 1,
            ..EnvConfig::default()
        };
        let env = Environment::new(&catalog, &cfg)?;
        for same in [true, false] {
            let mut rng = RngStream::new(0, max_len as u64);
            let mut state = env.reset(&user);
            while !state.done {
                let item = if same { 0 } else { state.t % 2 };
                state = env.step(&state, &user, &[item], &mut rng)?.next;
            }
            let expected = if same { (max_len + 2) / 2 } else { max_len };
            if state.t != expected {
                return Ok((false, format!("max_len {max_len}, same={same}: {} steps, expected {expected}", state.t)));
            }
        }
    }
    Ok((true, "session lengths match the budget formula for max_len 1..=20".into()))
}

fn metric_check() -> Result<(bool, String)> {
    let mut rng = RngStream::new(3, 0);
    for _ in 0..200 {
        let len = 1 + rng.index(20);
        let k = 1 + rng.index(10);
        let rewards: Vec<f64> = (0..len).map(|_| rng.index(k + 1) as f64 / k as f64).collect();
        if !session_metrics(&rewards)?.identity_holds() {
            return Ok((false, format!("identity fails for {rewards:?}")));
        }
    }
    Ok((true, "R_sin * T_int == R_cum on 200 random sessions".into()))
}

fn clip_check() -> Result<(bool, String)> {
    let mut ok = true;
    for (rho, adv, expected) in [(1.0, 1.0, -1.0), (2.0, 1.0, -1.2), (0.5, -1.0, 0.8)] {
        let mut tape = Tape::new();
        let r = tape.constant_scalar(rho)?;
        let t = clipped_surrogate(&mut tape, r, adv, 0.2)?;
        ok &= -tape.scalar(t) == expected;
    }
    Ok((ok, "clipped surrogate worked cases".into()))
}

fn pool_check() -> Result<(bool, String)> {
    let mut pool = ReflectionPool::new(200);
    let mut rng = RngStream::new(5, 0);
    let mut scores = Vec::new();
    for i in 0..1000 {
        let s = rng.index(50) as f64;
        scores.push(s);
        pool.insert(ReflectionEntry::from_session(format!("r{i}"), &[s], i)?);
    }
    let mut kept = pool.scores();
    kept.sort_by(|a, b| b.total_cmp(a));
    scores.sort_by(|a, b| b.total_cmp(a));
    scores.truncate(200);
    Ok((kept == scores, format!("{} entries kept", pool.len())))
}

struct Garbage;

impl ChatClient for Garbage {
    fn chat(&self, messages: &[ChatMessage]) -> std::result::Result<String, LlmError> {
        let n = messages.iter().map(|m| m.content.len()).sum::<usize>();
        match n % 4 {
            0 => Ok("sure!".into()),
            1 => Ok("[\"nonexistent\"".into()),
            2 => Err(LlmError::Transport("timeout".into())),
            _ => Ok("[1, 2, 3]".into()),
        }
    }
}

fn fallback_check() -> Result<(bool, String)> {
    let catalog = Catalog::synthetic(16, 8, EmbeddingInit { dim: 2, seed: 0 })?;
    let backend = PlannerBackend::Llm {
        client: Arc::new(Garbage),
        retries: 3,
    };
    let ctx = PlannerContext::new(&catalog, &[], vec![], 3);
    let out = plan_categories(&backend, &ctx, &catalog)?;
    let ok = out.categories.len() == 3 && out.categories.windows(2).all(|w| w[0] < w[1]);
    Ok((ok, format!("fallback plan {:?}", out.categories)))
}

/// Runs every check; none of them touches the filesystem or network.
pub fn self_check() -> Vec<CheckResult> {
    vec![
        result("gradient", gradient_check()),
        result("selection", selection_check()),
        result("quit_rule", quit_check()),
        result("metrics", metric_check()),
        result("ppo_clip", clip_check()),
        result("pool_capacity", pool_check()),
        result("planner_fallback", fallback_check()),
    ]
}
