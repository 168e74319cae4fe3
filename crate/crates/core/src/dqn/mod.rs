//! Deep Q-learning for the localization environment.

mod network;
mod replay;
mod trainer;

pub use network::{Dense, Gradients, QNetwork, Scalar};
pub use replay::{ReplayBuffer, Transition};
pub use trainer::{
    argmax, greedy_action, greedy_rollout, has_plateaued, select_action, td_target, train_agent,
    train_step, TrainConfig, TrainOutcome,
};
