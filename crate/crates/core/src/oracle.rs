//! Exhaustive minimizers for tiny instances.
//!
//! Assignments are encoded as base-(L+1) numbers with server 0 as the most
//! significant digit (digit 0 = unassigned, digit l+1 = reservation l), so
//! numeric order is lexicographic order and ties go to the smaller code.

use num_traits::{One, Zero};
use rayon::prelude::*;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::converter::ConverterParams;
use crate::engine::{Scenario, TypeEnv};
use crate::exact::{exact_int, Exact, Frac};
use crate::objective::{is_feasible, movement_cost, utility, Assignment, CostWeights, StepMetrics};
use crate::policies::Policy;
use crate::topology::{build_region, RegionConfig, RegionTopology, ServerTypeSpec};
use crate::workload::{demand_at, CapacityRequest, DemandIndex, DemandState, EpisodeTrace};
use crate::{Error, Result};

pub const MAX_SERVERS: usize = 12;
pub const MAX_RESERVATIONS: usize = 3;
pub const MAX_HORIZON: u32 = 3;
/// Upper bound on state pairs visited by the horizon search.
pub const MAX_HORIZON_WORK: u64 = 1 << 24;

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub assignment: Assignment,
    pub metrics: StepMetrics,
    /// False when no assignment satisfies g2 and g3; the solution is then the
    /// unconstrained minimum.
    pub feasible: bool,
    /// Minimum over every assignment, ignoring g2 and g3.
    pub relaxed_utility: Exact,
}

impl OracleSolution {
    pub fn utility(&self) -> Exact {
        self.metrics.utility
    }
}

#[derive(Debug, Clone)]
pub struct HorizonSolution {
    pub assignments: Vec<Assignment>,
    /// Undiscounted utility per slot.
    pub utilities: Vec<Exact>,
    /// `Σ_t γ^(t−1) U(t)`.
    pub total: Exact,
    pub feasible: bool,
}

fn check_size(topo: &RegionTopology) -> Result<u64> {
    let (b, l) = (topo.num_servers(), topo.num_reservations());
    if b > MAX_SERVERS || l > MAX_RESERVATIONS {
        return Err(Error::TooLarge(format!(
            "{b} servers and {l} reservations; the bound is {MAX_SERVERS} servers and {MAX_RESERVATIONS} reservations"
        )));
    }
    Ok((l as u64 + 1).pow(b as u32))
}

/// Decodes an enumeration index into an assignment.
pub fn decode(code: u64, num_servers: usize, num_reservations: usize) -> Assignment {
    let base = num_reservations as u64 + 1;
    let mut slots = vec![None; num_servers];
    let mut rest = code;
    for slot in slots.iter_mut().rev() {
        let digit = rest % base;
        rest /= base;
        *slot = (digit > 0).then(|| (digit - 1) as usize);
    }
    Assignment::from_vec(slots)
}

pub fn encode(x: &Assignment, num_reservations: usize) -> u64 {
    let base = num_reservations as u64 + 1;
    x.iter().fold(0, |acc, (_, l)| acc * base + l.map_or(0, |l| l as u64 + 1))
}

type Best = Option<(Exact, u64)>;

fn better(a: Best, b: Best) -> Best {
    match (a, b) {
        (None, y) => y,
        (x, None) => x,
        (Some(x), Some(y)) => Some(if (y.0, y.1) < (x.0, x.1) { y } else { x }),
    }
}

/// The one-slot minimizer over every g1-feasible assignment.
pub fn exact_single_step(
    topo: &RegionTopology,
    c: &DemandState,
    prev: &Assignment,
    w: &CostWeights,
) -> Result<OracleSolution> {
    let space = check_size(topo)?;
    let (n, l_n) = (topo.num_servers(), topo.num_reservations());
    let (feasible, any) = (0..space)
        .into_par_iter()
        .fold(
            || (None, None),
            |(f, a): (Best, Best), code| {
                let m = utility(topo, prev, &decode(code, n, l_n), c, w);
                let cand = Some((m.utility, code));
                (if is_feasible(&m) { better(f, cand) } else { f }, better(a, cand))
            },
        )
        .reduce(|| (None, None), |x, y| (better(x.0, y.0), better(x.1, y.1)));
    let (code, ok) = match (feasible, any.clone()) {
        (Some((_, code)), _) => (code, true),
        (None, Some((_, code))) => (code, false),
        (None, None) => unreachable!("the search space always holds the empty assignment"),
    };
    let assignment = decode(code, n, l_n);
    let metrics = utility(topo, prev, &assignment, c, w);
    Ok(OracleSolution {
        assignment,
        metrics,
        feasible: ok,
        relaxed_utility: any.map(|b| b.0).unwrap_or_else(Exact::zero),
    })
}

/// Minimizes `Σ_t γ^(t−1) U(t)` over assignment sequences for slots `1..=horizon`,
/// starting from `prev`.
pub fn exact_horizon(
    topo: &RegionTopology,
    trace: &EpisodeTrace,
    horizon: u32,
    prev: &Assignment,
    w: &CostWeights,
    gamma: Frac,
) -> Result<HorizonSolution> {
    let demands: Vec<DemandState> = (1..=horizon).map(|t| demand_at(trace, t)).collect();
    exact_horizon_demands(topo, &demands, prev, w, gamma)
}

/// As [`exact_horizon`] with the per-slot demand given directly.
pub fn exact_horizon_demands(
    topo: &RegionTopology,
    demands: &[DemandState],
    prev: &Assignment,
    w: &CostWeights,
    gamma: Frac,
) -> Result<HorizonSolution> {
    let space = check_size(topo)?;
    let horizon = demands.len();
    if horizon as u32 > MAX_HORIZON {
        return Err(Error::TooLarge(format!("horizon {horizon} exceeds {MAX_HORIZON}")));
    }
    if gamma.numer() < 0 || gamma.numer() > gamma.denom() {
        return Err(Error::Argument(format!("discount {gamma:?} outside [0, 1]")));
    }
    let work = space.saturating_mul(space).saturating_mul(horizon.saturating_sub(1) as u64) + space;
    if work > MAX_HORIZON_WORK {
        return Err(Error::TooLarge(format!(
            "{space} states over {horizon} slots needs {work} evaluations; the bound is {MAX_HORIZON_WORK}"
        )));
    }
    if horizon == 0 {
        return Ok(HorizonSolution {
            assignments: Vec::new(),
            utilities: Vec::new(),
            total: Exact::zero(),
            feasible: true,
        });
    }
    let (n, l_n) = (topo.num_servers(), topo.num_reservations());
    let states: Vec<Assignment> = (0..space).map(|code| decode(code, n, l_n)).collect();
    // U(t) splits into the movement cost and a part that depends on the new state alone
    let statics: Vec<Vec<(Exact, bool)>> = demands
        .iter()
        .map(|c| {
            states
                .par_iter()
                .map(|x| {
                    let m = utility(topo, x, x, c, w);
                    (m.utility, is_feasible(&m))
                })
                .collect()
        })
        .collect();
    let mut weights = vec![Exact::one(); horizon];
    for t in 1..horizon {
        weights[t] = weights[t - 1] * gamma.exact();
    }

    let solve = |constrained: bool| -> Option<Vec<u64>> {
        let allowed = |t: usize, code: usize| !constrained || statics[t][code].1;
        // cost_to_go[t][code]: best discounted cost of slots t+1.. after holding `code` at slot t
        let mut to_go: Vec<Vec<Option<Exact>>> = vec![vec![Some(Exact::zero()); space as usize]; horizon];
        for t in (0..horizon - 1).rev() {
            let next = &to_go[t + 1];
            let row: Vec<Option<Exact>> = states
                .par_iter()
                .map(|from| best_step(topo, from, &states, &statics[t + 1], next, weights[t + 1], |c| allowed(t + 1, c)).map(|b| b.0))
                .collect();
            to_go[t] = row;
        }
        let mut from = prev.clone();
        let mut codes = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let (_, code) = best_step(topo, &from, &states, &statics[t], &to_go[t], weights[t], |c| allowed(t, c))?;
            codes.push(code as u64);
            from = states[code].clone();
        }
        Some(codes)
    };

    let (codes, feasible) = match solve(true) {
        Some(codes) => (codes, true),
        None => (solve(false).expect("unconstrained search always succeeds"), false),
    };
    let assignments: Vec<Assignment> = codes.iter().map(|&c| states[c as usize].clone()).collect();
    let mut utilities = Vec::with_capacity(horizon);
    let mut total = Exact::zero();
    let mut from = prev;
    for (t, x) in assignments.iter().enumerate() {
        let u = utility(topo, from, x, &demands[t], w).utility;
        total += weights[t] * u;
        utilities.push(u);
        from = x;
    }
    Ok(HorizonSolution {
        assignments,
        utilities,
        total,
        feasible,
    })
}

/// Cheapest successor of `from`, returned as (cost, code) with the smallest code on ties.
fn best_step(
    topo: &RegionTopology,
    from: &Assignment,
    states: &[Assignment],
    statics: &[(Exact, bool)],
    to_go: &[Option<Exact>],
    weight: Exact,
    allowed: impl Fn(usize) -> bool,
) -> Option<(Exact, usize)> {
    let mut best: Option<(Exact, usize)> = None;
    for (code, x) in states.iter().enumerate() {
        if !allowed(code) {
            continue;
        }
        let Some(rest) = to_go[code] else { continue };
        let step = statics[code].0 + exact_int(movement_cost(topo, from, x, None) as i128);
        let cost = weight * step + rest;
        if best.map_or(true, |(b, _)| cost < b) {
            best = Some((cost, code));
        }
    }
    best
}

/// A one-slot scenario small enough for [`exact_single_step`].
#[derive(Debug, Clone)]
pub struct TinyInstance {
    pub scenario: Scenario,
    pub trace: EpisodeTrace,
}

impl TinyInstance {
    pub fn demand(&self) -> DemandState {
        demand_at(&self.trace, 1)
    }
}

/// Draws a random single-datacenter instance with at most 8 servers (12 with one reservation).
pub fn random_tiny_instance(seed: u64) -> Result<TinyInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let msbs = rng.gen_range(2..=3u32);
    let racks = msbs * rng.gen_range(1..=2u32);
    let reservations = rng.gen_range(1..=2u32);
    let types = rng.gen_range(1..=2usize);
    let budget = if reservations == 1 { 12 } else { 8 };
    let mut counts = vec![0u32; types];
    for c in counts.iter_mut() {
        *c = rng.gen_range(2..=budget as u32 / types as u32);
    }
    let server_types: Vec<ServerTypeSpec> = counts
        .iter()
        .enumerate()
        .map(|(id, &count)| ServerTypeSpec { id, count, arrival_rate: 0.0, combo: 0 })
        .collect();
    let topo = build_region(&RegionConfig {
        datacenters: 1,
        msbs,
        racks,
        reservations,
        server_rru: 150,
        movement_cost: 5,
        server_types: server_types.clone(),
    })?;
    let mut requests = Vec::new();
    for l in 0..reservations as usize {
        for e in 0..types {
            let units = rng.gen_range(0..=3u64);
            if units > 0 {
                requests.push(CapacityRequest { reservation: l, type_id: e, demand: 150 * units, arrival: 1, expiry: 2 });
            }
        }
    }
    let weights = CostWeights::uniform_affinity(
        Frac::integer(1),
        Frac::integer(1),
        Frac::integer(2),
        Frac::new(1, 75),
        Frac::new(1, 15),
        Frac::integer(1),
        1,
        reservations as usize,
        types,
    );
    let trace = EpisodeTrace { requests, seed, horizon: 1, num_reservations: reservations as usize, num_types: types };
    let scenario = Scenario {
        topo,
        weights,
        converter: ConverterParams::default(),
        server_types,
        combos: Vec::new(),
        horizon: 1,
        lookahead: 1,
    };
    Ok(TinyInstance { scenario, trace })
}

/// Runs the converter and allocator for slot 1 from an empty mapping.
pub fn pipeline_assignment(inst: &TinyInstance, policy: &mut dyn Policy) -> Result<(Assignment, Exact)> {
    let scenario = &inst.scenario;
    let topo = &scenario.topo;
    let index = DemandIndex::new(&inst.trace, scenario.lookahead);
    let mut combined = Assignment::empty(topo.num_servers());
    let mut total = Exact::zero();
    for e in 0..topo.num_types() {
        policy.begin_type(inst.trace.seed, e);
        let mut env = TypeEnv::new(scenario, &index, e);
        env.begin_slot(1);
        for l in 0..topo.num_reservations() {
            let out = policy.decide(&env.context(l))?;
            env.apply(l, &out)?;
        }
        let outcome = env.finish_slot()?;
        combined.overlay(&outcome.assignment, topo.type_servers(e));
        total += outcome.metrics.utility;
    }
    Ok((combined, total))
}

#[derive(Debug, Clone)]
pub struct OracleComparison {
    pub seed: u64,
    pub oracle: OracleSolution,
    pub pipeline: Assignment,
    /// Utility reported by the engine.
    pub pipeline_utility: Exact,
    /// The same assignment scored by the shared evaluator.
    pub recomputed_utility: Exact,
    pub pipeline_feasible: bool,
}

impl OracleComparison {
    /// The oracle bound that applies: the constrained optimum when the pipeline
    /// output is feasible, the relaxed one otherwise.
    pub fn dominates(&self) -> bool {
        let bound = if self.pipeline_feasible && self.oracle.feasible {
            self.oracle.utility()
        } else {
            self.oracle.relaxed_utility
        };
        self.oracle.relaxed_utility <= self.oracle.utility() && bound <= self.pipeline_utility
    }

    pub fn consistent(&self) -> bool {
        self.recomputed_utility == self.pipeline_utility
    }
}

pub fn compare_with_pipeline(seed: u64, policy: &mut dyn Policy) -> Result<OracleComparison> {
    let inst = random_tiny_instance(seed)?;
    let topo = &inst.scenario.topo;
    let c = inst.demand();
    let empty = Assignment::empty(topo.num_servers());
    let oracle = exact_single_step(topo, &c, &empty, &inst.scenario.weights)?;
    let (pipeline, pipeline_utility) = pipeline_assignment(&inst, policy)?;
    let m = utility(topo, &empty, &pipeline, &c, &inst.scenario.weights);
    Ok(OracleComparison {
        seed,
        oracle,
        pipeline_feasible: is_feasible(&m),
        recomputed_utility: m.utility,
        pipeline,
        pipeline_utility,
    })
}
