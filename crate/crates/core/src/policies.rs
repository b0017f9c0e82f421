//! The policy abstraction and the heuristic baselines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::objective::ReservationId;
use crate::topology::{RegionTopology, TypeId};
use crate::workload::DemandIndex;

/// What a policy hands the converter.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyOutput {
    /// F MSB logits plus the over-provision logit, for the softmax path.
    Raw(Vec<f64>),
    /// Fractions and over-provision factor used as given.
    Direct { fractions: Vec<f64>, z: f64 },
}

/// Type-e servers per MSB that a reservation could take right now.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsbAvailability(pub Vec<u32>);

impl MsbAvailability {
    pub fn total(&self) -> u64 {
        self.0.iter().map(|&a| a as u64).sum()
    }
}

/// Everything a policy may look at when deciding for one reservation.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub topo: &'a RegionTopology,
    pub type_id: TypeId,
    pub reservation: ReservationId,
    pub t: u32,
    pub lookahead: u32,
    pub index: &'a DemandIndex,
    /// Type-e servers each reservation held per MSB at the previous slot, `[l * F + f]`.
    pub prev_msb: &'a [u32],
    /// Type-e servers per MSB claimed by reservations already decided this
    /// slot plus those still held by reservations not yet decided.
    pub usage: &'a [u32],
}

impl DecisionContext<'_> {
    pub fn demand(&self) -> u64 {
        self.index.demand(self.reservation, self.type_id, self.t)
    }

    pub fn own_prev(&self) -> &[u32] {
        let f = self.topo.num_msbs();
        &self.prev_msb[self.reservation * f..(self.reservation + 1) * f]
    }

    /// Servers not used by any other reservation, per MSB.
    pub fn availability(&self) -> MsbAvailability {
        let own = self.own_prev();
        MsbAvailability(
            (0..self.topo.num_msbs())
                .map(|f| {
                    let others = self.usage[f].saturating_sub(own[f]);
                    self.topo.msb_type_capacity(self.type_id, f).saturating_sub(others)
                })
                .collect(),
        )
    }
}

pub trait Policy: Send + Sync {
    fn name(&self) -> &str;

    /// Called before a type's pipeline runs in an episode.
    fn begin_type(&mut self, _seed: u64, _type_id: TypeId) {}

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<PolicyOutput>;

    fn boxed_clone(&self) -> Box<dyn Policy>;
}

/// F+1 values uniform on [-1, 1].
pub fn random_policy(rng: &mut impl Rng, num_msbs: usize) -> PolicyOutput {
    PolicyOutput::Raw((0..=num_msbs).map(|_| rng.gen_range(-1.0..=1.0)).collect())
}

/// `1/(F-1)` from every MSB.
pub fn uniform_policy(num_msbs: usize) -> Result<PolicyOutput> {
    if num_msbs < 2 {
        return Err(Error::Config(format!(
            "the uniform baseline needs at least 2 MSBs, got {num_msbs}"
        )));
    }
    Ok(PolicyOutput::Direct {
        fractions: vec![1.0 / (num_msbs - 1) as f64; num_msbs],
        z: 0.0,
    })
}

/// Fractions proportional to availability, scaled by `1/(1-δ_max)`.
pub fn proportional_policy(avail: &MsbAvailability) -> Result<PolicyOutput> {
    let total = avail.total();
    if total == 0 {
        return Err(Error::Argument("no MSB has available servers".into()));
    }
    let delta: Vec<f64> = avail.0.iter().map(|&a| a as f64 / total as f64).collect();
    let top = delta.iter().copied().fold(0.0, f64::max);
    if top >= 1.0 {
        return Err(Error::Argument(
            "all availability sits in one MSB; no fraction survives its failure".into(),
        ));
    }
    let scale = 1.0 / (1.0 - top);
    Ok(PolicyOutput::Direct {
        fractions: delta.into_iter().map(|d| d * scale).collect(),
        z: 0.0,
    })
}

#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn begin_type(&mut self, seed: u64, type_id: TypeId) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.rng.set_stream(type_id as u64 + 1);
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<PolicyOutput> {
        Ok(random_policy(&mut self.rng, ctx.topo.num_msbs()))
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

#[derive(Debug, Clone, Default)]
pub struct UniformPolicy;

impl Policy for UniformPolicy {
    fn name(&self) -> &str {
        "uniform"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<PolicyOutput> {
        uniform_policy(ctx.topo.num_msbs())
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

/// Falls back to the uniform split when nothing is available.
#[derive(Debug, Clone, Default)]
pub struct ProportionalPolicy;

impl Policy for ProportionalPolicy {
    fn name(&self) -> &str {
        "proportional"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<PolicyOutput> {
        match proportional_policy(&ctx.availability()) {
            Ok(out) => Ok(out),
            Err(Error::Argument(_)) => uniform_policy(ctx.topo.num_msbs()),
            Err(e) => Err(e),
        }
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}
