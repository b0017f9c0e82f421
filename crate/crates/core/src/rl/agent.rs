//! Trained agents as a [`Policy`], and their checkpoint format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainMode;
use super::ppo::Agent;
use super::state::{build_state, demand_scale, state_dim};
use crate::error::{Error, Result};
use crate::policies::{DecisionContext, Policy, PolicyOutput};
use crate::topology::{RegionTopology, TypeId};

const FORMAT: &str = "rasim-agent";
const VERSION: u32 = 1;

/// One agent shared by all types (single mode) or one agent per type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPolicy {
    pub mode: TrainMode,
    pub num_msbs: usize,
    pub num_types: usize,
    pub lookahead: u32,
    pub agents: Vec<Agent>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    state_dim: usize,
    action_dim: usize,
    /// Demand normalizer per type.
    demand_scale: Vec<f64>,
    policy: AgentPolicy,
}

impl AgentPolicy {
    pub fn one_hot(&self) -> Option<usize> {
        match self.mode {
            TrainMode::Single => Some(self.num_types),
            TrainMode::Parallel => None,
        }
    }

    pub fn state_dim(&self) -> usize {
        state_dim(self.num_msbs, self.lookahead as usize, self.one_hot())
    }

    pub fn agent(&self, type_id: TypeId) -> &Agent {
        match self.mode {
            TrainMode::Single => &self.agents[0],
            TrainMode::Parallel => &self.agents[type_id],
        }
    }

    /// Checks that the agents fit a topology and look-ahead.
    pub fn check_compatible(&self, topo: &RegionTopology, lookahead: u32) -> Result<()> {
        if self.num_msbs != topo.num_msbs() || self.num_types != topo.num_types() || self.lookahead != lookahead {
            return Err(Error::Config(format!(
                "checkpoint was trained for {} MSBs, {} types, look-ahead {}; the config has {}, {}, {}",
                self.num_msbs,
                self.num_types,
                self.lookahead,
                topo.num_msbs(),
                topo.num_types(),
                lookahead
            )));
        }
        Ok(())
    }

    pub fn to_json(&self, topo: &RegionTopology) -> String {
        let ck = Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            state_dim: self.state_dim(),
            action_dim: self.num_msbs + 1,
            demand_scale: (0..topo.num_types()).map(|e| demand_scale(topo, e)).collect(),
            policy: self.clone(),
        };
        serde_json::to_string(&ck).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str, topo: &RegionTopology) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("unreadable checkpoint: {e}")))?;
        if ck.format != FORMAT || ck.version != VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{} (expected {FORMAT} v{VERSION})",
                ck.format, ck.version
            )));
        }
        let p = ck.policy;
        let expected_agents = match p.mode {
            TrainMode::Single => 1,
            TrainMode::Parallel => p.num_types,
        };
        if p.agents.len() != expected_agents
            || p.agents.iter().any(|a| a.state_dim() != ck.state_dim || a.action_dim() != ck.action_dim)
            || ck.state_dim != p.state_dim()
        {
            return Err(Error::Config("checkpoint layer shapes are inconsistent".into()));
        }
        if ck.demand_scale.len() != topo.num_types() {
            return Err(Error::Config("checkpoint type count does not match this region".into()));
        }
        for (e, &s) in ck.demand_scale.iter().enumerate() {
            let here = demand_scale(topo, e);
            if (here - s).abs() > 1e-9 * s.abs().max(1.0) {
                return Err(Error::Config(format!(
                    "checkpoint normalization for type {e} does not match this region"
                )));
            }
        }
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>, topo: &RegionTopology) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json(topo)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, topo: &RegionTopology) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, topo)
    }
}

impl Policy for AgentPolicy {
    fn name(&self) -> &str {
        "agent"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<PolicyOutput> {
        let state = build_state(ctx, self.one_hot());
        Ok(PolicyOutput::Raw(self.agent(ctx.type_id).mean(&state)))
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}
