use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hsp::{plan_categories, PlannerBackend, PlannerContext, ReflectionPool};
use crate::lpl::{PolicyParams, Transition};
use crate::numeric::RngStream;
use crate::simenv::{session_metrics, CategoryStep, Environment, SessionMetrics, StepLog, UserProfile};

use super::Variant;

/// Everything an episode reads; shared read-only across workers.
#[derive(Clone, Copy)]
pub struct EpisodeContext<'a> {
    pub env: Environment<'a>,
    pub planner: &'a PlannerBackend,
    pub policy: &'a PolicyParams,
    pub pool: &'a ReflectionPool,
    pub variant: Variant,
    pub categories_per_step: usize,
    pub sampled_reflections: usize,
    pub alpha: f64,
    /// Use the actor mean instead of sampling.
    pub deterministic: bool,
    /// Keep a copy of every planner context.
    pub capture_contexts: bool,
}

/// One terminated session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub user_id: usize,
    pub transitions: Vec<Transition>,
    /// Category set `c_t` each step was constrained to.
    pub planned: Vec<Vec<usize>>,
    /// Categories actually shown, with rewards.
    pub category_history: Vec<CategoryStep>,
    pub logs: Vec<StepLog>,
    #[serde(skip)]
    pub contexts: Vec<PlannerContext>,
    pub incidents: Vec<String>,
    pub terminated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.logs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logs.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.logs.iter().map(|l| l.reward).collect()
    }

    pub fn metrics(&self) -> Result<SessionMetrics> {
        if !self.terminated {
            return Err(Error::State("trajectory not terminated".into()));
        }
        session_metrics(&self.rewards())
    }

    /// Steps whose shown categories overlap the previous step's.
    pub fn consecutive_overlaps(&self) -> usize {
        self.category_history
            .windows(2)
            .filter(|w| w[1].categories.iter().any(|c| w[0].categories.contains(c)))
            .count()
    }
}

/// Runs one session to termination. `rng` drives user feedback and action
/// sampling; `reflection_rng` only draws the reflections shown to the planner.
pub fn run_episode(
    ctx: &EpisodeContext<'_>,
    user: &UserProfile,
    rng: &mut RngStream,
    reflection_rng: &mut RngStream,
) -> Result<Trajectory> {
    let catalog = ctx.env.catalog;
    let k = ctx.env.config.list_length;
    let all: Vec<usize> = (0..catalog.n_categories()).collect();
    if ctx.policy.n_items() != catalog.n_items() || ctx.policy.config.d != catalog.embedding_dim() {
        return Err(Error::config("policy dimensions do not match the catalog"));
    }
    let reflections = if ctx.variant.uses_reflections() {
        ctx.pool.sample(ctx.alpha, ctx.sampled_reflections, reflection_rng)?
    } else {
        Vec::new()
    };

    let mut state = ctx.env.reset(user);
    let mut traj = Trajectory {
        user_id: user.user_id,
        transitions: Vec::new(),
        planned: Vec::new(),
        category_history: Vec::new(),
        logs: Vec::new(),
        contexts: Vec::new(),
        incidents: Vec::new(),
        terminated: false,
    };
    while !state.done {
        let mut planned = if ctx.variant.uses_planner() {
            let pc = PlannerContext::new(catalog, &state.category_history, reflections.clone(), ctx.categories_per_step);
            let outcome = plan_categories(ctx.planner, &pc, catalog)?;
            traj.incidents.extend(outcome.incidents);
            if ctx.capture_contexts {
                traj.contexts.push(pc);
            }
            outcome.categories
        } else {
            all.clone()
        };
        let mask = catalog.category_mask(&planned)?;
        let sample_rng = if ctx.deterministic { None } else { Some(&mut *rng) };
        let action = match ctx.policy.act(&state.item_history, &mask, k, sample_rng) {
            Ok(a) => a,
            Err(Error::InfeasibleMask { eligible, .. }) => {
                log::info!("step {}: {eligible} eligible items, widening to all categories", state.t);
                traj.incidents.push(format!(
                    "step {}: only {eligible} eligible items, widened to all categories",
                    state.t
                ));
                planned = all.clone();
                let sample_rng = if ctx.deterministic { None } else { Some(&mut *rng) };
                ctx.policy.act(&state.item_history, &vec![1; catalog.n_items()], k, sample_rng)?
            }
            Err(e) => return Err(e),
        };
        let step = ctx.env.step(&state, user, &action.items, rng)?;
        traj.transitions.push(Transition {
            state: state.item_history.clone(),
            categories: planned.clone(),
            p: action.p,
            old_log_prob: action.log_prob,
            reward: step.reward,
            next_state: step.next.item_history.clone(),
            done: step.next.done,
        });
        traj.planned.push(planned);
        traj.logs.push(step.log);
        state = step.next;
    }
    traj.category_history = state.category_history;
    traj.terminated = true;
    Ok(traj)
}
