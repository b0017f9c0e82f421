//! The learned policy tier.

mod agent;
mod config;
pub mod net;
pub mod ppo;
pub mod reward;
pub mod state;
pub mod train;

pub use agent::AgentPolicy;
pub use config::{CurriculumParams, RewardParams, RlConfig, TrainMode};
pub use train::{train, TrainOutput};
