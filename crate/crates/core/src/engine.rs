//! The episode driver: per type and slot, every reservation is decided in
//! ascending index, converted, spread over racks, and the slot's mapping is
//! resolved and scored against the previous one.

use num_traits::Zero;
use rayon::prelude::*;

use crate::allocator::{held_counts, materialize, resolve_overflow, spread_with_history, RackRequestMatrix};
use crate::config::ExperimentConfig;
use crate::converter::{convert, convert_direct, ConverterParams, MsbRequestVector};
use crate::error::Result;
use crate::exact::{exact_to_f64, Exact};
use crate::objective::{
    g1_violations, moved_servers, movement_cost, type_metrics, Assignment, CostWeights,
    ReservationId, ReservationTerms, StepMetrics, SupplyProfile,
};
use crate::policies::{DecisionContext, Policy, PolicyOutput};
use crate::topology::{build_region, RegionTopology, ServerTypeSpec, TypeId};
use crate::workload::{sample_trace, ComboSpec, DemandIndex, EpisodeTrace};

/// Everything fixed across episodes of one experiment.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub topo: RegionTopology,
    pub weights: CostWeights,
    pub converter: ConverterParams,
    pub server_types: Vec<ServerTypeSpec>,
    pub combos: Vec<ComboSpec>,
    pub horizon: u32,
    pub lookahead: u32,
}

impl Scenario {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Scenario {
            topo: build_region(&cfg.region_config())?,
            weights: cfg.cost_weights(),
            converter: cfg.converter.clone(),
            server_types: cfg.server_types.clone(),
            combos: cfg.combos.clone(),
            horizon: cfg.region.horizon,
            lookahead: cfg.workload.lookahead,
        })
    }

    pub fn trace(&self, seed: u64) -> EpisodeTrace {
        sample_trace(
            &self.server_types,
            &self.combos,
            self.topo.num_reservations(),
            self.horizon,
            seed,
        )
    }

    pub fn index(&self, trace: &EpisodeTrace) -> DemandIndex {
        DemandIndex::new(trace, self.lookahead)
    }
}

/// Result of one type's slot.
#[derive(Debug, Clone)]
pub struct SlotOutcome {
    pub t: u32,
    pub type_id: TypeId,
    pub assignment: Assignment,
    pub metrics: StepMetrics,
    /// Per-reservation cost terms and slacks.
    pub terms: Vec<ReservationTerms>,
    /// Movement cost over B_e.
    pub o1: u64,
    pub moved: u64,
    pub shortfall: u64,
    /// Reservations whose converter output already fails capacity redundancy.
    pub pretrim_g2_violations: u32,
}

/// The single-type environment stepped by the engine and the trainer.
pub struct TypeEnv<'a> {
    topo: &'a RegionTopology,
    weights: &'a CostWeights,
    converter: &'a ConverterParams,
    index: &'a DemandIndex,
    type_id: TypeId,
    lookahead: u32,
    prev: Assignment,
    prev_msb: Vec<u32>,
    held: Vec<u32>,
    usage: Vec<u32>,
    t: u32,
    rows: RackRequestMatrix,
    pretrim: u32,
}

impl<'a> TypeEnv<'a> {
    pub fn new(scenario: &'a Scenario, index: &'a DemandIndex, type_id: TypeId) -> Self {
        let topo = &scenario.topo;
        let (l_n, f_n) = (topo.num_reservations(), topo.num_msbs());
        TypeEnv {
            topo,
            weights: &scenario.weights,
            converter: &scenario.converter,
            index,
            type_id,
            lookahead: scenario.lookahead,
            prev: Assignment::empty(topo.num_servers()),
            prev_msb: vec![0; l_n * f_n],
            held: vec![0; l_n * topo.num_racks()],
            usage: vec![0; f_n],
            t: 0,
            rows: RackRequestMatrix::zeros(l_n, topo.num_racks()),
            pretrim: 0,
        }
    }

    pub fn type_id(&self) -> TypeId {
        self.type_id
    }

    pub fn topology(&self) -> &RegionTopology {
        self.topo
    }

    pub fn index(&self) -> &DemandIndex {
        self.index
    }

    pub fn prev(&self) -> &Assignment {
        &self.prev
    }

    pub fn begin_slot(&mut self, t: u32) {
        self.t = t;
        let f_n = self.topo.num_msbs();
        self.usage.iter_mut().for_each(|u| *u = 0);
        for l in 0..self.topo.num_reservations() {
            for f in 0..f_n {
                self.usage[f] += self.prev_msb[l * f_n + f];
            }
        }
        self.rows = RackRequestMatrix::zeros(self.topo.num_reservations(), self.topo.num_racks());
        self.pretrim = 0;
    }

    pub fn context(&self, l: ReservationId) -> DecisionContext<'_> {
        DecisionContext {
            topo: self.topo,
            type_id: self.type_id,
            reservation: l,
            t: self.t,
            lookahead: self.lookahead,
            index: self.index,
            prev_msb: &self.prev_msb,
            usage: &self.usage,
        }
    }

    pub fn demand(&self, l: ReservationId) -> u64 {
        self.index.demand(l, self.type_id, self.t)
    }

    /// Converts and rack-spreads one reservation's decision.
    pub fn apply(&mut self, l: ReservationId, output: &PolicyOutput) -> Result<MsbRequestVector> {
        let demand = self.demand(l);
        let n = match output {
            PolicyOutput::Raw(a) => convert(a, demand, self.type_id, self.topo, self.converter)?,
            PolicyOutput::Direct { fractions, z } => {
                convert_direct(fractions, *z, demand, self.type_id, self.topo)?
            }
        };
        if demand > 0 && pretrim_redundancy_slack(&n, self.topo.type_mean_rru(self.type_id), demand) < -1e-9 {
            self.pretrim += 1;
        }
        let (f_n, k_n) = (self.topo.num_msbs(), self.topo.num_racks());
        let row = spread_with_history(&n, &self.held[l * k_n..(l + 1) * k_n], self.topo);
        self.rows.set_row(l, &row);
        for f in 0..f_n {
            self.usage[f] = self.usage[f] - self.prev_msb[l * f_n + f] + n.n[f];
        }
        Ok(n)
    }

    /// Resolves the slot's requests into a mapping and scores it.
    pub fn finish_slot(&mut self) -> Result<SlotOutcome> {
        let (topo, e) = (self.topo, self.type_id);
        let rows = std::mem::replace(&mut self.rows, RackRequestMatrix::zeros(0, topo.num_racks()));
        let m = resolve_overflow(rows, topo, e);
        let cur = materialize(&m, &self.prev, e, topo)?;
        let c = self.index.demand_state(self.t);
        let metrics = type_metrics(topo, &self.prev, &cur, &c, self.weights, e);
        let profile = SupplyProfile::new(topo, &cur, e);
        let terms = (0..topo.num_reservations())
            .map(|l| profile.terms(l, c.get(l, e), self.weights))
            .collect();
        let outcome = SlotOutcome {
            t: self.t,
            type_id: e,
            o1: movement_cost(topo, &self.prev, &cur, Some(e)),
            moved: moved_servers(topo, &self.prev, &cur, e),
            shortfall: m.total_shortfall(),
            pretrim_g2_violations: self.pretrim,
            metrics,
            terms,
            assignment: cur.clone(),
        };
        let (f_n, k_n) = (topo.num_msbs(), topo.num_racks());
        self.held = held_counts(&cur, e, topo);
        self.prev_msb.iter_mut().for_each(|v| *v = 0);
        for l in 0..topo.num_reservations() {
            for k in 0..k_n {
                self.prev_msb[l * f_n + topo.rack_msb(k)] += self.held[l * k_n + k];
            }
        }
        self.prev = cur;
        Ok(outcome)
    }
}

/// `(Σ n − max n)·meanRRU − C` for a converter output.
pub fn pretrim_redundancy_slack(n: &MsbRequestVector, mean_rru: f64, demand: u64) -> f64 {
    let total: u64 = n.total();
    let top = n.n.iter().copied().max().unwrap_or(0) as u64;
    (total - top) as f64 * mean_rru - demand as f64
}

/// One row of the per-step output: a type at a slot.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: u32,
    pub type_id: TypeId,
    pub metrics: StepMetrics,
    pub moved: u64,
    pub shortfall: u64,
    pub pretrim_g2_violations: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTotals {
    pub utility: Exact,
    pub o1: Exact,
    pub o2: Exact,
    pub o3: Exact,
    pub o4: Exact,
    pub g2_violations: u64,
    pub g3_violations: u64,
    pub double_assignments: u64,
    pub moved: u64,
    pub shortfall: u64,
    pub pretrim_g2_violations: u64,
}

impl EpisodeTotals {
    fn zero() -> Self {
        EpisodeTotals {
            utility: Exact::zero(),
            o1: Exact::zero(),
            o2: Exact::zero(),
            o3: Exact::zero(),
            o4: Exact::zero(),
            g2_violations: 0,
            g3_violations: 0,
            double_assignments: 0,
            moved: 0,
            shortfall: 0,
            pretrim_g2_violations: 0,
        }
    }

    pub fn violations(&self) -> u64 {
        self.g2_violations + self.g3_violations
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeReport {
    pub policy: String,
    pub seed: u64,
    /// Ordered by slot, then type.
    pub steps: Vec<StepRecord>,
    /// Whole-region metrics per slot.
    pub slots: Vec<StepMetrics>,
    pub totals: EpisodeTotals,
}

impl EpisodeReport {
    pub fn total_utility(&self) -> f64 {
        exact_to_f64(&self.totals.utility)
    }
}

/// Runs one episode with types processed in ascending order.
pub fn run_episode(scenario: &Scenario, policy: &mut dyn Policy, seed: u64) -> Result<EpisodeReport> {
    let order: Vec<TypeId> = (0..scenario.topo.num_types()).collect();
    run_episode_ordered(scenario, policy, seed, &order)
}

/// Runs one episode, processing types in the given order.
pub fn run_episode_ordered(
    scenario: &Scenario,
    policy: &mut dyn Policy,
    seed: u64,
    order: &[TypeId],
) -> Result<EpisodeReport> {
    let topo = &scenario.topo;
    let trace = scenario.trace(seed);
    let index = scenario.index(&trace);
    let horizon = scenario.horizon as usize;
    let mut per_type: Vec<Vec<SlotOutcome>> = vec![Vec::new(); topo.num_types()];
    for &e in order {
        policy.begin_type(seed, e);
        let mut env = TypeEnv::new(scenario, &index, e);
        for t in 1..=scenario.horizon {
            env.begin_slot(t);
            for l in 0..topo.num_reservations() {
                let out = policy.decide(&env.context(l))?;
                env.apply(l, &out)?;
            }
            per_type[e].push(env.finish_slot()?);
        }
    }

    let mut steps = Vec::with_capacity(horizon * topo.num_types());
    let mut slots = Vec::with_capacity(horizon);
    let mut totals = EpisodeTotals::zero();
    for i in 0..horizon {
        let mut slot = StepMetrics::zero();
        let mut combined = Assignment::empty(topo.num_servers());
        for (e, outcomes) in per_type.iter().enumerate() {
            let o = &outcomes[i];
            combined.overlay(&o.assignment, topo.type_servers(e));
            slot.accumulate(&o.metrics);
            totals.moved += o.moved;
            totals.shortfall += o.shortfall;
            totals.pretrim_g2_violations += o.pretrim_g2_violations as u64;
            steps.push(StepRecord {
                t: o.t,
                type_id: e,
                metrics: o.metrics.clone(),
                moved: o.moved,
                shortfall: o.shortfall,
                pretrim_g2_violations: o.pretrim_g2_violations,
            });
        }
        totals.double_assignments +=
            g1_violations(&combined.to_binary(topo.num_reservations())) as u64;
        totals.utility += slot.utility;
        totals.o1 += slot.o1;
        totals.o2 += slot.o2;
        totals.o3 += slot.o3;
        totals.o4 += slot.o4;
        totals.g2_violations += slot.g2_violations as u64;
        totals.g3_violations += slot.g3_violations as u64;
        slots.push(slot);
    }
    Ok(EpisodeReport {
        policy: policy.name().to_string(),
        seed,
        steps,
        slots,
        totals,
    })
}

#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub policy: String,
    pub episodes: Vec<EpisodeReport>,
    /// Sorted episode totals with their percentile rank.
    pub cdf: Vec<(f64, f64)>,
}

impl EvaluationReport {
    pub fn median_utility(&self) -> f64 {
        median(self.episodes.iter().map(|r| r.total_utility()).collect())
    }
}

/// Sorted values paired with `i / n`.
pub fn empirical_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter()
        .enumerate()
        .map(|(i, x)| (x, (i + 1) as f64 / n))
        .collect()
}

pub fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Runs episodes with seeds `base_seed + i` in parallel.
pub fn evaluate(
    scenario: &Scenario,
    policy: &dyn Policy,
    episodes: u32,
    base_seed: u64,
) -> Result<EvaluationReport> {
    let seeds: Vec<u64> = (0..episodes as u64).map(|i| base_seed + i).collect();
    evaluate_seeds(scenario, policy, &seeds)
}

pub fn evaluate_seeds(scenario: &Scenario, policy: &dyn Policy, seeds: &[u64]) -> Result<EvaluationReport> {
    let episodes = seeds
        .par_iter()
        .map(|&seed| {
            let mut p = policy.boxed_clone();
            run_episode(scenario, p.as_mut(), seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let totals: Vec<f64> = episodes.iter().map(|r| r.total_utility()).collect();
    Ok(EvaluationReport {
        policy: policy.name().to_string(),
        cdf: empirical_cdf(&totals),
        episodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::utility;
    use crate::policies::{ProportionalPolicy, RandomPolicy, UniformPolicy};

    fn scenario() -> Scenario {
        Scenario::from_config(&ExperimentConfig::reference()).unwrap()
    }

    #[test]
    fn zero_horizon_gives_empty_report() {
        let mut s = scenario();
        s.horizon = 0;
        let r = run_episode(&s, &mut UniformPolicy, 1).unwrap();
        assert!(r.steps.is_empty());
        assert_eq!(r.totals.utility, Exact::zero());
    }

    #[test]
    fn no_arrivals_means_zero_metrics() {
        let mut s = scenario();
        s.server_types.iter_mut().for_each(|t| t.arrival_rate = 0.0);
        let r = run_episode(&s, &mut RandomPolicy::new(0), 1).unwrap();
        assert_eq!(r.steps.len(), 30 * 10);
        assert!(r.steps.iter().all(|st| st.metrics.utility.is_zero()
            && st.metrics.g2_violations == 0
            && st.metrics.g3_violations == 0));
    }

    #[test]
    fn slot_metrics_match_recomputation() {
        let s = scenario();
        let trace = s.trace(4);
        let index = s.index(&trace);
        let report = run_episode(&s, &mut UniformPolicy, 4).unwrap();
        // rebuild the whole-region assignment slot by slot and rescore it
        let mut envs: Vec<TypeEnv> = (0..s.topo.num_types()).map(|e| TypeEnv::new(&s, &index, e)).collect();
        let mut prev = Assignment::empty(s.topo.num_servers());
        let mut uniform = UniformPolicy;
        let mut total = Exact::zero();
        for t in 1..=s.horizon {
            let mut cur = Assignment::empty(s.topo.num_servers());
            for env in envs.iter_mut() {
                env.begin_slot(t);
                for l in 0..s.topo.num_reservations() {
                    let out = uniform.decide(&env.context(l)).unwrap();
                    env.apply(l, &out).unwrap();
                }
                let o = env.finish_slot().unwrap();
                cur.overlay(&o.assignment, s.topo.type_servers(o.type_id));
            }
            let m = utility(&s.topo, &prev, &cur, &index.demand_state(t), &s.weights);
            assert_eq!(m.utility, report.slots[t as usize - 1].utility);
            total += m.utility;
            prev = cur;
        }
        assert_eq!(total, report.totals.utility);
    }

    #[test]
    fn type_order_does_not_matter() {
        let s = scenario();
        let forward = run_episode(&s, &mut RandomPolicy::new(0), 9).unwrap();
        let order: Vec<usize> = (0..10).rev().collect();
        let reverse = run_episode_ordered(&s, &mut RandomPolicy::new(0), 9, &order).unwrap();
        assert_eq!(forward.totals, reverse.totals);
        for (a, b) in forward.steps.iter().zip(&reverse.steps) {
            assert_eq!(a.metrics, b.metrics);
        }
    }

    #[test]
    fn single_assignment_for_baselines() {
        let s = scenario();
        for policy in [
            Box::new(UniformPolicy) as Box<dyn Policy>,
            Box::new(ProportionalPolicy),
            Box::new(RandomPolicy::new(0)),
        ] {
            let r = evaluate(&s, policy.as_ref(), 3, 100).unwrap();
            for ep in &r.episodes {
                assert_eq!(ep.totals.double_assignments, 0);
            }
        }
    }

    #[test]
    fn cdf_and_determinism() {
        assert_eq!(empirical_cdf(&[4.0]), vec![(4.0, 1.0)]);
        assert_eq!(empirical_cdf(&[3.0, 1.0]), vec![(1.0, 0.5), (3.0, 1.0)]);
        let s = scenario();
        let a = evaluate(&s, &UniformPolicy, 2, 7).unwrap();
        let b = evaluate(&s, &UniformPolicy, 2, 7).unwrap();
        assert_eq!(a.cdf, b.cdf);
    }
}
