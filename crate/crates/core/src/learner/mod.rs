//! Independent PPO learners with Gaussian policies over effort.

mod agent;
mod checkpoint;
mod mlp;
mod policy;
mod ppo;

pub use agent::{Agent, ConstantAgent, Decision, Policy, PpoAgent};
pub use checkpoint::Checkpoint;
pub use mlp::{MlpCache, MlpShape};
pub use policy::{
    gaussian_entropy, gaussian_log_prob, sample_action, ActionSample, Observation, PolicyOutput, PolicyParams,
    DEFAULT_HIDDEN,
};
pub use ppo::{
    gae_advantages, loss, loss_and_grad, ppo_update, Adam, LossStats, PpoHyper, SampleBatch, Transition, UpdateStats,
};
