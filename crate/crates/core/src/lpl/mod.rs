//! Low-level policy learner: causal-attention history encoder, Gaussian
//! virtual-item actor, masked top-k selection, value critic and PPO.

mod adam;
pub mod network;
mod params;
mod policy;
mod ppo;
mod select;

pub use adam::{apply_update, target_sync, Adam};
pub use params::{PolicyConfig, PolicyParams, CRITIC_NAMES, ITEM_EMBEDDINGS};
pub use policy::{sample_virtual_item, ActionSample, CriticKind};
pub use ppo::{advantages, clipped_surrogate, ppo_losses, ppo_objective, td_targets, BatchTargets, LossTerms, Transition};
pub use select::{score_and_select, Selection};
