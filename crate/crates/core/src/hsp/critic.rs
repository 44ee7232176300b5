use std::sync::Arc;

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::simenv::CategoryStep;

use super::llm::{ChatClient, ChatMessage};
use super::pool::{ReflectionEntry, ReflectionPool};
use super::prompt::{render_critic_prompt, SessionStats};

#[derive(Clone)]
pub enum CriticBackend {
    /// Canned summary naming the over-exposed categories.
    Template,
    Llm(Arc<dyn ChatClient>),
}

impl std::fmt::Debug for CriticBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CriticBackend::Template => f.write_str("Template"),
            CriticBackend::Llm(_) => f.write_str("Llm"),
        }
    }
}

/// Offline reflection: flags categories shown in back-to-back rounds or in
/// more than half of the rounds, and names the best-rewarded category.
pub fn template_reflection(catalog: &Catalog, trajectory: &[CategoryStep], stats: &SessionStats) -> String {
    let n = catalog.n_categories();
    let mut shown = vec![0usize; n];
    let mut back_to_back = vec![0usize; n];
    let mut reward = vec![0.0f64; n];
    for (i, step) in trajectory.iter().enumerate() {
        for &c in &step.categories {
            shown[c] += 1;
            reward[c] += step.reward;
            if i > 0 && trajectory[i - 1].categories.contains(&c) {
                back_to_back[c] += 1;
            }
        }
    }
    let rounds = trajectory.len();
    let over: Vec<String> = (0..n)
        .filter(|&c| back_to_back[c] > 0 || (rounds > 1 && 2 * shown[c] > rounds))
        .map(|c| format!("{} ({} of {rounds} rounds)", catalog.category_name(c), shown[c]))
        .collect();

    let mut text = format!(
        "Session lasted {} rounds with cumulative reward {}. ",
        stats.interaction_length, stats.cumulative_reward
    );
    if over.is_empty() {
        text.push_str("No category was repeated back-to-back; keep rotating categories every round. ");
    } else {
        text.push_str(&format!(
            "Over-exposed categories: {}. Rotate away from a category right after showing it. ",
            over.join(", ")
        ));
    }
    let best = (0..n)
        .filter(|&c| shown[c] > 0)
        .max_by(|&a, &b| {
            (reward[a] / shown[a] as f64)
                .total_cmp(&(reward[b] / shown[b] as f64))
                .then(b.cmp(&a))
        });
    if let Some(c) = best {
        text.push_str(&format!(
            "Best-rewarded category: {} (mean reward {:.2}); return to it after a break.",
            catalog.category_name(c),
            reward[c] / shown[c] as f64
        ));
    }
    text
}

/// Writes a reflection for a finished session and inserts it with score
/// `S_u = R_cum`. A failing backend leaves the pool unchanged and returns
/// the incident.
pub fn generate_reflection(
    backend: &CriticBackend,
    catalog: &Catalog,
    trajectory: &[CategoryStep],
    stats: &SessionStats,
    source_user: usize,
    pool: &mut ReflectionPool,
) -> Result<Option<String>> {
    let rewards: Vec<f64> = trajectory.iter().map(|s| s.reward).collect();
    if stats.interaction_length != trajectory.len() {
        return Err(Error::domain(format!(
            "stats report {} interactions for a trajectory of {}",
            stats.interaction_length,
            trajectory.len()
        )));
    }
    let prompt = render_critic_prompt(catalog, trajectory, stats)?;
    let text = match backend {
        CriticBackend::Template => template_reflection(catalog, trajectory, stats),
        CriticBackend::Llm(client) => match client.chat(&[ChatMessage::user(prompt)]) {
            Ok(t) if !t.trim().is_empty() => t.trim().to_string(),
            Ok(_) => return Ok(Some("critic returned an empty reflection".into())),
            Err(e) => {
                log::warn!("critic failed: {e}");
                return Ok(Some(format!("critic failed: {e}")));
            }
        },
    };
    let entry = ReflectionEntry::from_session(text, &rewards, source_user)?;
    if entry.score() != stats.cumulative_reward {
        return Err(Error::domain(format!(
            "stats cumulative reward {} differs from trajectory sum {}",
            stats.cumulative_reward,
            entry.score()
        )));
    }
    pool.insert(entry);
    Ok(None)
}
