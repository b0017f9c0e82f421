use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// One shared agent trained on each type in turn, with a type one-hot in the state.
    #[default]
    Single,
    /// One independent agent per type, trained concurrently.
    Parallel,
}

/// Reward weights and penalties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardParams {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    /// Penalty for a capacity-redundancy violation.
    pub p2: f64,
    /// Additional penalty per RRU of missing redundancy.
    pub p2_deficit: f64,
    /// Penalty per datacenter for an affinity violation.
    pub p3: f64,
    pub gamma: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            w1: 1.0,
            w2: 1.0,
            w3: 1.0,
            w4: 1.0,
            p2: 30000.0,
            p2_deficit: 20.0,
            p3: 30000.0,
            gamma: 0.0,
        }
    }
}

/// Progressive reward schedule: terms are switched on in the order o1, o2,
/// o3, o4, penalties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumParams {
    pub enabled: bool,
    /// Moving-average window in episodes.
    pub window: usize,
    /// The average is compared with its value this many episodes earlier.
    pub lag: usize,
    /// Relative change below which a stage counts as converged.
    pub threshold: f64,
    /// A stage advances after this many episodes regardless; 0 disables.
    pub max_stage_episodes: usize,
}

impl Default for CurriculumParams {
    fn default() -> Self {
        CurriculumParams {
            enabled: true,
            window: 50,
            lag: 25,
            threshold: 0.02,
            max_stage_episodes: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlConfig {
    pub mode: TrainMode,
    /// Training episodes per server type.
    pub episodes: u32,
    pub hidden: usize,
    pub log_std_init: f64,
    pub clip: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch: usize,
    /// Episodes of transitions collected per update.
    pub update_every: u32,
    pub max_grad_norm: f64,
    /// Weight of the policy entropy bonus.
    pub entropy_coef: f64,
    /// Rewards are divided by this before learning.
    pub reward_scale: f64,
    /// Drop transitions of reservations with no demand.
    pub skip_idle: bool,
    /// Once every reward term is active, score the deterministic policy on
    /// held-out episodes this often and keep the best snapshot (fewest
    /// violations, then lowest objective). 0 keeps the final weights.
    pub validation_every: u32,
    pub validation_episodes: u32,
    pub reward: RewardParams,
    pub curriculum: CurriculumParams,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            mode: TrainMode::Single,
            episodes: 400,
            hidden: 64,
            log_std_init: -0.5,
            clip: 0.2,
            gae_lambda: 0.95,
            learning_rate: 3e-4,
            epochs: 10,
            minibatch: 64,
            update_every: 5,
            max_grad_norm: 0.5,
            entropy_coef: 0.0,
            reward_scale: 1000.0,
            skip_idle: true,
            validation_every: 10,
            validation_episodes: 20,
            reward: RewardParams::default(),
            curriculum: CurriculumParams::default(),
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("rl.{m}")));
        if self.hidden == 0 {
            return bad("hidden must be >= 1");
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if self.validation_every > 0 && self.validation_episodes == 0 {
            return bad("validation_episodes must be >= 1 when validation is on");
        }
        if self.epochs == 0 || self.minibatch == 0 || self.update_every == 0 {
            return bad("epochs, minibatch and update_every must be >= 1");
        }
        if !(self.reward_scale > 0.0 && self.max_grad_norm > 0.0) {
            return bad("reward_scale and max_grad_norm must be > 0");
        }
        if !(self.entropy_coef >= 0.0 && self.entropy_coef.is_finite()) {
            return bad("entropy_coef must be finite and >= 0");
        }
        if !self.log_std_init.is_finite() {
            return bad("log_std_init must be finite");
        }
        let r = &self.reward;
        if !(0.0..1.0).contains(&r.gamma) {
            return bad("reward.gamma must lie in [0, 1)");
        }
        if [r.w1, r.w2, r.w3, r.w4].iter().any(|w| !w.is_finite()) {
            return bad("reward weights must be finite");
        }
        if !(r.p2 >= 0.0 && r.p3 >= 0.0 && r.p2_deficit >= 0.0) {
            return bad("reward penalties must be >= 0");
        }
        let c = &self.curriculum;
        if c.window == 0 || c.lag == 0 || !(c.threshold >= 0.0) {
            return bad("curriculum window and lag must be >= 1 and threshold >= 0");
        }
        Ok(())
    }
}
