//! High-level semantic planner: reflection memory, prompt rendering,
//! category planning back-ends and the reflective critic.

mod critic;
pub mod llm;
mod planner;
mod pool;
mod prompt;

pub use critic::{generate_reflection, template_reflection, CriticBackend};
pub use llm::{ChatClient, ChatMessage, HttpChatClient, LlmConfig, LlmError};
pub use planner::{heuristic_plan, heuristic_ranking, plan_categories, PlanOutcome, PlanSource, PlannerBackend, DEFAULT_RETRIES};
pub use pool::{sample_reflections, ReflectionEntry, ReflectionPool, DEFAULT_POOL_CAPACITY};
pub use prompt::{
    parse_category_response, render_actor_prompt, render_critic_prompt, ParseFailure, PlannerContext, SessionStats,
    DEFAULT_CATEGORIES_PER_STEP, DEFAULT_SAMPLED_REFLECTIONS, OUTPUT_FORMAT_INSTRUCTION,
};
