use std::fmt::Write as _;

use serde::Serialize;

use crate::catalog::Catalog;
use crate::simenv::CategoryStep;

pub const DEFAULT_SAMPLED_REFLECTIONS: usize = 3;
pub const DEFAULT_CATEGORIES_PER_STEP: usize = 3;

/// Leading words of the actor prompt's output-format instruction.
pub const OUTPUT_FORMAT_INSTRUCTION: &str = "Respond with only a JSON array of exactly";

const ACTOR_ROLE: &str = "You are the high-level planner of an interactive recommender system. \
Each round you decide which item categories the recommender may draw from. \
Keep the user engaged over the whole session: users leave early when consecutive rounds \
repeat the same categories, but they also need content they enjoy.";

const CRITIC_ROLE: &str = "You are the critic of a category-level recommendation planner. \
Review one finished user session and write a reflection that will guide category planning \
for future users.";

/// Inputs of the actor prompt.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlannerContext {
    pub categories: Vec<(usize, String)>,
    pub history: Vec<CategoryStep>,
    pub reflections: Vec<String>,
    pub categories_per_step: usize,
}

impl PlannerContext {
    pub fn new(catalog: &Catalog, history: &[CategoryStep], reflections: Vec<String>, categories_per_step: usize) -> Self {
        PlannerContext {
            categories: catalog.categories().iter().cloned().enumerate().collect(),
            history: history.to_vec(),
            reflections,
            categories_per_step,
        }
    }
}

/// `Q_u`: auxiliary statistics of a finished session.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SessionStats {
    pub interaction_length: usize,
    pub cumulative_reward: f64,
}

fn write_categories(out: &mut String, categories: &[(usize, String)]) {
    out.push_str("Candidate categories (id: name):\n");
    for (id, name) in categories {
        let _ = writeln!(out, "{id}: {name}");
    }
}

fn names_of(ids: &[usize], categories: &[(usize, String)]) -> String {
    let names: Vec<&str> = ids
        .iter()
        .map(|id| {
            categories
                .iter()
                .find(|(c, _)| c == id)
                .map(|(_, n)| n.as_str())
                .unwrap_or("?")
        })
        .collect();
    format!("[{}]", names.join(", "))
}

fn write_history(out: &mut String, title: &str, history: &[CategoryStep], categories: &[(usize, String)]) {
    let _ = writeln!(out, "{title} (step, categories, reward):");
    if history.is_empty() {
        out.push_str("(none)\n");
    }
    for (i, step) in history.iter().enumerate() {
        let _ = writeln!(
            out,
            "{}, {}, {}",
            i + 1,
            names_of(&step.categories, categories),
            step.reward
        );
    }
}

/// The high-level actor prompt: role, categories, history, sampled
/// reflections, output format.
pub fn render_actor_prompt(ctx: &PlannerContext) -> String {
    let mut out = String::new();
    out.push_str(ACTOR_ROLE);
    out.push_str("\n\n");
    write_categories(&mut out, &ctx.categories);
    out.push('\n');
    write_history(&mut out, "Category-level interaction history", &ctx.history, &ctx.categories);
    out.push('\n');
    out.push_str("Lessons from past users:\n");
    if ctx.reflections.is_empty() {
        out.push_str("(none)\n");
    }
    for (i, r) in ctx.reflections.iter().enumerate() {
        let _ = writeln!(out, "{}. {}", i + 1, r.trim());
    }
    out.push('\n');
    let m = ctx.categories_per_step;
    let example: Vec<String> = ctx
        .categories
        .iter()
        .take(m)
        .map(|(_, n)| format!("\"{n}\""))
        .collect();
    let _ = write!(
        out,
        "Choose exactly {m} categories for the next round. {OUTPUT_FORMAT_INSTRUCTION} {m} category names \
         from the candidate list and nothing else, for example [{}].",
        example.join(", ")
    );
    out
}

/// The high-level critic prompt for a finished session.
pub fn render_critic_prompt(catalog: &Catalog, trajectory: &[CategoryStep], stats: &SessionStats) -> crate::Result<String> {
    if trajectory.is_empty() {
        return Err(crate::Error::domain("critic prompt needs a non-empty trajectory"));
    }
    let categories: Vec<(usize, String)> = catalog.categories().iter().cloned().enumerate().collect();
    let mut out = String::new();
    out.push_str(CRITIC_ROLE);
    out.push_str("\n\n");
    write_categories(&mut out, &categories);
    out.push('\n');
    write_history(&mut out, "Session trajectory", trajectory, &categories);
    out.push('\n');
    let _ = writeln!(out, "Interaction length: {}", stats.interaction_length);
    let _ = writeln!(out, "Cumulative reward: {}", stats.cumulative_reward);
    out.push('\n');
    out.push_str(
        "Write a short, actionable reflection (at most 80 words) on the category plan: which \
         categories were over-exposed, when rotating would have kept the user longer, and which \
         categories earned rewards.",
    );
    Ok(out)
}

/// The actor response did not contain a usable category list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseFailure {
    pub reason: String,
}

/// Extracts the first JSON array of strings in `text`, maps names to ids
/// case-insensitively, drops unknown names and duplicates, and keeps at most `m`.
pub fn parse_category_response(text: &str, catalog: &Catalog, m: usize) -> Result<Vec<usize>, ParseFailure> {
    let names = first_string_array(text).ok_or_else(|| ParseFailure {
        reason: "no JSON array of strings in response".into(),
    })?;
    let mut ids = Vec::new();
    for name in names {
        if let Some(id) = catalog.category_id(&name) {
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
    }
    ids.truncate(m);
    if ids.is_empty() {
        return Err(ParseFailure {
            reason: "no known category names in response".into(),
        });
    }
    Ok(ids)
}

fn first_string_array(text: &str) -> Option<Vec<String>> {
    text.char_indices()
        .filter(|(_, c)| *c == '[')
        .find_map(|(i, _)| {
            let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Vec<String>>();
            stream.next().and_then(Result::ok)
        })
}
