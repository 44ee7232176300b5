use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hsp::{generate_reflection, ReflectionPool, SessionStats};
use crate::lpl::{apply_update, ppo_objective, target_sync, Adam, BatchTargets, PolicyParams, Transition};
use crate::numeric::{streams, RngStream, Tape};
use crate::simenv::{generate_population, UserProfile};

use super::checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
use super::episode::{run_episode, Trajectory};
use super::report::{mean_std, MetricsReport};
use super::{Setup, Variant};

#[derive(Clone, Debug, PartialEq)]
pub struct IterationStats {
    pub iteration: usize,
    pub mean_r_cum: f64,
    pub mean_t_int: f64,
    /// Losses of the last epoch.
    pub actor_loss: f64,
    pub value_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub curve: Vec<IterationStats>,
    pub incidents: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct EvalOutcome {
    pub report: MetricsReport,
    pub trajectories: Vec<Trajectory>,
}

/// Runs `f(0..n)` on `workers` threads (all cores when `None`), results in index order.
pub(crate) fn parallel_map<T, F>(workers: Option<usize>, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if workers == Some(1) {
        return (0..n).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

fn training_population(setup: &Setup) -> Result<Vec<UserProfile>> {
    let mut rng = RngStream::new(setup.config.seed, streams::POPULATION);
    generate_population(setup.config.environment.n_users, &setup.catalog, &mut rng)
}

/// Four PPO epochs (configurable) on one batch, syncing the target critic
/// every `target_sync` updates. Returns the last epoch's losses.
fn ppo_update(
    setup: &Setup,
    params: &mut PolicyParams,
    optimizer: &mut Adam,
    batch: &[Transition],
    eps: f64,
    updates: &mut u64,
) -> Result<(f64, f64)> {
    let pol = &setup.config.policy;
    let mut last = (0.0, 0.0);
    for _ in 0..pol.epochs {
        let targets = BatchTargets::compute(batch, pol.gamma, params)?;
        let mut tape = Tape::new();
        let vars = tape.register(&params.online);
        let (loss, terms) = ppo_objective(&mut tape, &vars, &params.config, batch, &targets, eps, pol.value_coef)?;
        let grads = tape.backward(loss)?;
        apply_update(params, optimizer, &grads, pol.learning_rate)?;
        *updates += 1;
        target_sync(params, *updates, pol.target_sync);
        last = (terms.actor, terms.value);
    }
    Ok(last)
}

/// Trains one variant. A numerical failure stops training and returns the
/// parameters from before the failing iteration with `aborted` set.
pub fn train(setup: &Setup, variant: Variant, workers: Option<usize>) -> Result<TrainOutcome> {
    let cfg = &setup.config;
    let seed = cfg.seed;
    let mut params = PolicyParams::init(cfg.policy_config(), &setup.catalog, seed)?;
    let population = training_population(setup)?;
    let mut pool = ReflectionPool::new(cfg.planner.pool_capacity);
    let mut optimizer = Adam::new();
    let mut updates = 0u64;
    let mut curve = Vec::new();
    let mut incidents = Vec::new();
    let mut aborted = None;
    let eps = if variant == Variant::PpoOnly {
        cfg.policy.baseline_clip_eps
    } else {
        cfg.policy.clip_eps
    };
    let b = cfg.training.episodes_per_iteration;

    for iteration in 0..cfg.training.iterations {
        let last_good = params.clone();
        let result = (|| -> Result<(Vec<Trajectory>, (f64, f64))> {
            let ctx = setup.episode_context(&params, &pool, variant, false)?;
            let trajectories = parallel_map(workers, b, |j| {
                let index = (iteration * b + j) as u64;
                let mut rng = RngStream::new(seed, streams::episode(index));
                let mut reflection_rng = RngStream::new(seed, streams::reflection(index));
                let user = &population[rng.index(population.len())];
                run_episode(&ctx, user, &mut rng, &mut reflection_rng)
            })?;
            let batch: Vec<Transition> = trajectories.iter().flat_map(|t| t.transitions.iter().cloned()).collect();
            let losses = ppo_update(setup, &mut params, &mut optimizer, &batch, eps, &mut updates)?;
            Ok((trajectories, losses))
        })();
        let (trajectories, (actor_loss, value_loss)) = match result {
            Ok(r) => r,
            Err(Error::Numerical(msg)) => {
                log::error!("iteration {iteration}: {msg}; keeping the last good parameters");
                params = last_good;
                aborted = Some(format!("iteration {iteration}: {msg}"));
                break;
            }
            Err(e) => return Err(e),
        };

        let mut r_cum = Vec::with_capacity(b);
        let mut t_int = Vec::with_capacity(b);
        for traj in &trajectories {
            let m = traj.metrics()?;
            r_cum.push(m.r_cum());
            t_int.push(m.t_int as f64);
            incidents.extend(traj.incidents.iter().cloned());
            if variant.uses_reflections() {
                let stats = SessionStats {
                    interaction_length: m.t_int,
                    cumulative_reward: m.r_cum(),
                };
                if let Some(incident) =
                    generate_reflection(&setup.critic, &setup.catalog, &traj.category_history, &stats, traj.user_id, &mut pool)?
                {
                    incidents.push(incident);
                }
            }
        }
        let stats = IterationStats {
            iteration: iteration + 1,
            mean_r_cum: mean_std(&r_cum).0,
            mean_t_int: mean_std(&t_int).0,
            actor_loss,
            value_loss,
        };
        log::info!(
            "{variant} iteration {}: R_cum {:.3} T_int {:.2}",
            stats.iteration,
            stats.mean_r_cum,
            stats.mean_t_int
        );
        curve.push(stats);
    }

    let checkpoint = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        fingerprint: setup.fingerprint.clone(),
        seed,
        variant,
        completed_iterations: curve.len(),
        aborted,
        policy: params,
        pool,
    };
    Ok(TrainOutcome {
        checkpoint,
        curve,
        incidents,
    })
}

/// `iteration,mean_r_cum,mean_t_int,actor_loss,value_loss`.
pub fn curve_to_csv(curve: &[IterationStats]) -> String {
    let mut out = String::from("iteration,mean_r_cum,mean_t_int,actor_loss,value_loss\n");
    for s in curve {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            s.iteration, s.mean_r_cum, s.mean_t_int, s.actor_loss, s.value_loss
        );
    }
    out
}

/// Deterministic-action evaluation on `n_sessions` fresh users. Neither the
/// policy nor the reflection pool is modified.
pub fn evaluate(
    setup: &Setup,
    checkpoint: &Checkpoint,
    variant: Variant,
    n_sessions: usize,
    seed: u64,
    workers: Option<usize>,
) -> Result<EvalOutcome> {
    if n_sessions == 0 {
        return Err(Error::domain("evaluation needs at least one session"));
    }
    checkpoint.check_catalog(&setup.catalog)?;
    let mut rng = RngStream::new(seed, streams::EVAL_POPULATION);
    let users = generate_population(n_sessions, &setup.catalog, &mut rng)?;
    let ctx = setup.episode_context(&checkpoint.policy, &checkpoint.pool, variant, true)?;
    let trajectories = parallel_map(workers, n_sessions, |j| {
        let mut rng = RngStream::new(seed, streams::eval_episode(j as u64));
        let mut reflection_rng = RngStream::new(seed, streams::eval_reflection(j as u64));
        run_episode(&ctx, &users[j], &mut rng, &mut reflection_rng)
    })?;
    let sessions = trajectories.iter().map(Trajectory::metrics).collect::<Result<Vec<_>>>()?;
    let report = MetricsReport::new(variant, seed, setup.fingerprint.clone(), sessions)?;
    Ok(EvalOutcome { report, trajectories })
}

#[derive(Clone, Debug)]
pub struct AblationRow {
    pub variant: Variant,
    pub train: TrainOutcome,
    pub eval: EvalOutcome,
}

/// Trains and evaluates every variant under the same seed and evaluation population.
pub fn ablate(setup: &Setup, workers: Option<usize>) -> Result<Vec<AblationRow>> {
    let cfg = &setup.config;
    Variant::ALL
        .iter()
        .map(|&variant| {
            let train = train(setup, variant, workers)?;
            let eval = evaluate(
                setup,
                &train.checkpoint,
                variant,
                cfg.training.eval_sessions,
                cfg.eval_seed(),
                workers,
            )?;
            Ok(AblationRow { variant, train, eval })
        })
        .collect()
}
