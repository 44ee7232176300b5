use std::sync::Arc;

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::simenv::CategoryStep;

use super::llm::{ChatClient, ChatMessage};
use super::prompt::{parse_category_response, render_actor_prompt, PlannerContext};

pub const DEFAULT_RETRIES: usize = 3;

/// Where category plans come from.
#[derive(Clone)]
pub enum PlannerBackend {
    Heuristic,
    Llm {
        client: Arc<dyn ChatClient>,
        /// Total attempts before falling back to the heuristic.
        retries: usize,
    },
}

impl std::fmt::Debug for PlannerBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlannerBackend::Heuristic => f.write_str("Heuristic"),
            PlannerBackend::Llm { retries, .. } => write!(f, "Llm {{ retries: {retries} }}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlanSource {
    Heuristic,
    Llm,
    /// LLM answer padded with heuristic picks to reach `m` categories.
    LlmPadded,
    Fallback,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanOutcome {
    /// Exactly `m` distinct category ids, ascending.
    pub categories: Vec<usize>,
    pub source: PlanSource,
    pub incidents: Vec<String>,
}

/// All categories ordered by preference: never shown first, then least
/// recently shown, then lower reward-weighted exposure, then lower id.
pub fn heuristic_ranking(history: &[CategoryStep], n_categories: usize) -> Vec<usize> {
    let mut last_seen = vec![0usize; n_categories];
    let mut weighted = vec![0.0f64; n_categories];
    for (step, entry) in history.iter().enumerate() {
        for &c in &entry.categories {
            if c < n_categories {
                last_seen[c] = step + 1;
                weighted[c] += entry.reward;
            }
        }
    }
    let mut order: Vec<usize> = (0..n_categories).collect();
    order.sort_by(|&a, &b| {
        last_seen[a]
            .cmp(&last_seen[b])
            .then(weighted[a].total_cmp(&weighted[b]))
            .then(a.cmp(&b))
    });
    order
}

/// The `m` most preferred categories under [`heuristic_ranking`], ascending by id.
pub fn heuristic_plan(history: &[CategoryStep], catalog: &Catalog, m: usize) -> Result<Vec<usize>> {
    if m > catalog.n_categories() {
        return Err(Error::domain(format!(
            "cannot plan {m} categories out of {}",
            catalog.n_categories()
        )));
    }
    let mut picked: Vec<usize> = heuristic_ranking(history, catalog.n_categories())
        .into_iter()
        .take(m)
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Chooses `c_t`. The LLM backend renders the actor prompt, queries, and
/// parses; after the allowed attempts it falls back to the heuristic.
pub fn plan_categories(backend: &PlannerBackend, ctx: &PlannerContext, catalog: &Catalog) -> Result<PlanOutcome> {
    let m = ctx.categories_per_step;
    let heuristic = heuristic_plan(&ctx.history, catalog, m)?;
    let (client, attempts) = match backend {
        PlannerBackend::Heuristic => {
            return Ok(PlanOutcome {
                categories: heuristic,
                source: PlanSource::Heuristic,
                incidents: Vec::new(),
            })
        }
        PlannerBackend::Llm { client, retries } => (client, (*retries).max(1)),
    };

    let prompt = render_actor_prompt(ctx);
    let messages = [ChatMessage::user(prompt)];
    let mut incidents = Vec::new();
    for attempt in 1..=attempts {
        match client.chat(&messages) {
            Ok(text) => match parse_category_response(&text, catalog, m) {
                Ok(mut ids) => {
                    let source = if ids.len() < m {
                        for c in heuristic_ranking(&ctx.history, catalog.n_categories()) {
                            if ids.len() == m {
                                break;
                            }
                            if !ids.contains(&c) {
                                ids.push(c);
                            }
                        }
                        PlanSource::LlmPadded
                    } else {
                        PlanSource::Llm
                    };
                    ids.sort_unstable();
                    return Ok(PlanOutcome {
                        categories: ids,
                        source,
                        incidents,
                    });
                }
                Err(fail) => incidents.push(format!("planner attempt {attempt}: {}", fail.reason)),
            },
            Err(e) => incidents.push(format!("planner attempt {attempt}: {e}")),
        }
    }
    log::warn!("planner fell back to heuristic after {attempts} attempts");
    incidents.push("planner fell back to heuristic".into());
    Ok(PlanOutcome {
        categories: heuristic,
        source: PlanSource::Fallback,
        incidents,
    })
}
