//! Cost terms and constraints of the assignment problem.
//!
//! All terms are evaluated exactly: supplies and demands are integral RRU and
//! the spread fractions are rationals, so `o2`, `o3` and the affinity slack are
//! held as [`Exact`] values and compare bit-for-bit.

use num_traits::{Signed, Zero};

use crate::exact::{exact_int, Exact, Frac};
use crate::topology::{RegionTopology, ServerId, TypeId};
use crate::workload::DemandState;

pub type ReservationId = usize;

/// Server-to-reservation mapping at one slot; `None` means unassigned.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    slots: Vec<Option<u16>>,
}

impl Assignment {
    pub fn empty(num_servers: usize) -> Self {
        Assignment {
            slots: vec![None; num_servers],
        }
    }

    pub fn from_vec(slots: Vec<Option<ReservationId>>) -> Self {
        Assignment {
            slots: slots.into_iter().map(|s| s.map(|l| l as u16)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn get(&self, b: ServerId) -> Option<ReservationId> {
        self.slots[b as usize].map(usize::from)
    }

    pub fn set(&mut self, b: ServerId, l: Option<ReservationId>) {
        self.slots[b as usize] = l.map(|l| l as u16);
    }

    pub fn assigned_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ServerId, Option<ReservationId>)> + '_ {
        self.slots
            .iter()
            .enumerate()
            .map(|(b, s)| (b as ServerId, s.map(usize::from)))
    }

    /// Copies the entries of `servers` from `other`.
    pub fn overlay(&mut self, other: &Assignment, servers: &[ServerId]) {
        for &b in servers {
            self.slots[b as usize] = other.slots[b as usize];
        }
    }

    /// The binary view `x_{b,l}`, one row per server.
    pub fn to_binary(&self, num_reservations: usize) -> Vec<Vec<u8>> {
        self.slots
            .iter()
            .map(|s| {
                let mut row = vec![0u8; num_reservations];
                if let Some(l) = s {
                    row[*l as usize] = 1;
                }
                row
            })
            .collect()
    }
}

/// Number of servers whose binary row has `1 - Σ_l x_{b,l} < 0`.
pub fn g1_violations(binary: &[Vec<u8>]) -> usize {
    binary
        .iter()
        .filter(|row| row.iter().map(|&x| x as i64).sum::<i64>() > 1)
        .count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    /// Cost per RRU outside the spread goals.
    pub beta: Frac,
    /// Cost per RRU of the largest-MSB buffer.
    pub kappa: Frac,
    /// Affinity slack.
    pub theta: Frac,
    pub alpha_rack: Frac,
    pub alpha_msb: Frac,
    /// `A_{d,l,e}` laid out `[(d * L + l) * E + e]`.
    pub affinity: Vec<Frac>,
    pub num_reservations: usize,
    pub num_types: usize,
}

impl CostWeights {
    #[allow(clippy::too_many_arguments)]
    pub fn uniform_affinity(
        beta: Frac,
        kappa: Frac,
        theta: Frac,
        alpha_rack: Frac,
        alpha_msb: Frac,
        affinity: Frac,
        num_dcs: usize,
        num_reservations: usize,
        num_types: usize,
    ) -> Self {
        CostWeights {
            beta,
            kappa,
            theta,
            alpha_rack,
            alpha_msb,
            affinity: vec![affinity; num_dcs * num_reservations * num_types],
            num_reservations,
            num_types,
        }
    }

    pub fn affinity(&self, d: usize, l: ReservationId, e: TypeId) -> Frac {
        self.affinity[(d * self.num_reservations + l) * self.num_types + e]
    }
}

/// Type-e RRU supplied to every reservation per rack, MSB and datacenter.
#[derive(Debug, Clone)]
pub struct SupplyProfile {
    pub type_id: TypeId,
    num_racks: usize,
    num_msbs: usize,
    num_dcs: usize,
    rack: Vec<u64>,
    msb: Vec<u64>,
    dc: Vec<u64>,
    total: Vec<u64>,
}

impl SupplyProfile {
    pub fn new(topo: &RegionTopology, x: &Assignment, e: TypeId) -> Self {
        let l_n = topo.num_reservations();
        let (k_n, f_n, d_n) = (topo.num_racks(), topo.num_msbs(), topo.num_dcs());
        let mut p = SupplyProfile {
            type_id: e,
            num_racks: k_n,
            num_msbs: f_n,
            num_dcs: d_n,
            rack: vec![0; l_n * k_n],
            msb: vec![0; l_n * f_n],
            dc: vec![0; l_n * d_n],
            total: vec![0; l_n],
        };
        for &b in topo.type_servers(e) {
            if let Some(l) = x.get(b) {
                let s = topo.server(b);
                let u = s.rru as u64;
                p.rack[l * k_n + s.rack] += u;
                p.msb[l * f_n + s.msb] += u;
                p.dc[l * d_n + s.dc] += u;
                p.total[l] += u;
            }
        }
        p
    }

    pub fn rack(&self, l: ReservationId) -> &[u64] {
        &self.rack[l * self.num_racks..(l + 1) * self.num_racks]
    }

    pub fn msb(&self, l: ReservationId) -> &[u64] {
        &self.msb[l * self.num_msbs..(l + 1) * self.num_msbs]
    }

    pub fn dc(&self, l: ReservationId) -> &[u64] {
        &self.dc[l * self.num_dcs..(l + 1) * self.num_dcs]
    }

    pub fn total(&self, l: ReservationId) -> u64 {
        self.total[l]
    }

    pub fn largest_msb(&self, l: ReservationId) -> u64 {
        self.msb(l).iter().copied().max().unwrap_or(0)
    }

    pub fn terms(&self, l: ReservationId, demand: u64, w: &CostWeights) -> ReservationTerms {
        let o4 = self.largest_msb(l);
        let g3 = (0..self.num_dcs)
            .map(|d| affinity_slack(self.dc(l)[d], demand, w.theta, w.affinity(d, l, self.type_id)))
            .collect();
        ReservationTerms {
            o2: spread_excess(self.rack(l), demand, w.alpha_rack),
            o3: spread_excess(self.msb(l), demand, w.alpha_msb),
            o4,
            g2: self.total(l) as i64 - o4 as i64 - demand as i64,
            g3,
        }
    }
}

/// Per-(l, e) objective terms and constraint slacks.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservationTerms {
    pub o2: Exact,
    pub o3: Exact,
    pub o4: u64,
    /// Capacity-redundancy slack; violated when negative.
    pub g2: i64,
    /// Affinity slack per datacenter; violated when negative.
    pub g3: Vec<Exact>,
}

impl ReservationTerms {
    pub fn g3_violations(&self) -> u32 {
        self.g3.iter().filter(|s| s.is_negative()).count() as u32
    }
}

/// `Σ_G max(0, supply_G − α·C)`.
fn spread_excess(cells: &[u64], demand: u64, alpha: Frac) -> Exact {
    let (n, d) = (alpha.numer() as i128, alpha.denom() as i128);
    let threshold = n * demand as i128;
    let sum: i128 = cells
        .iter()
        .map(|&s| (d * s as i128 - threshold).max(0))
        .sum();
    Exact::new(sum, d)
}

fn affinity_slack(dc_supply: u64, demand: u64, theta: Frac, affinity: Frac) -> Exact {
    if demand == 0 {
        return theta.exact();
    }
    let ratio = Exact::new(dc_supply as i128, demand as i128);
    theta.exact() - (ratio - affinity.exact()).abs()
}

/// `Σ_b M_b · Σ_l max(0, x_{b,l}(t−1) − x_{b,l}(t))`, optionally over `B_e` only.
pub fn movement_cost(
    topo: &RegionTopology,
    prev: &Assignment,
    cur: &Assignment,
    type_id: Option<TypeId>,
) -> u64 {
    let moved = |b: ServerId| -> u64 {
        match prev.get(b) {
            Some(l) if cur.get(b) != Some(l) => topo.server(b).movement_cost as u64,
            _ => 0,
        }
    };
    match type_id {
        Some(e) => topo.type_servers(e).iter().map(|&b| moved(b)).sum(),
        None => (0..topo.num_servers() as ServerId).map(moved).sum(),
    }
}

/// Servers that left their previous reservation.
pub fn moved_servers(topo: &RegionTopology, prev: &Assignment, cur: &Assignment, type_id: TypeId) -> u64 {
    topo.type_servers(type_id)
        .iter()
        .filter(|&&b| matches!(prev.get(b), Some(l) if cur.get(b) != Some(l)))
        .count() as u64
}

pub fn rack_spread_cost(
    topo: &RegionTopology,
    x: &Assignment,
    c: &DemandState,
    l: ReservationId,
    e: TypeId,
    w: &CostWeights,
) -> Exact {
    let p = SupplyProfile::new(topo, x, e);
    spread_excess(p.rack(l), c.get(l, e), w.alpha_rack)
}

pub fn msb_spread_cost(
    topo: &RegionTopology,
    x: &Assignment,
    c: &DemandState,
    l: ReservationId,
    e: TypeId,
    w: &CostWeights,
) -> Exact {
    let p = SupplyProfile::new(topo, x, e);
    spread_excess(p.msb(l), c.get(l, e), w.alpha_msb)
}

pub fn largest_msb(topo: &RegionTopology, x: &Assignment, l: ReservationId, e: TypeId) -> u64 {
    SupplyProfile::new(topo, x, e).largest_msb(l)
}

pub fn capacity_redundancy(
    topo: &RegionTopology,
    x: &Assignment,
    c: &DemandState,
    l: ReservationId,
    e: TypeId,
) -> i64 {
    let p = SupplyProfile::new(topo, x, e);
    p.total(l) as i64 - p.largest_msb(l) as i64 - c.get(l, e) as i64
}

pub fn network_affinity(
    topo: &RegionTopology,
    x: &Assignment,
    c: &DemandState,
    d: usize,
    l: ReservationId,
    e: TypeId,
    w: &CostWeights,
) -> Exact {
    let p = SupplyProfile::new(topo, x, e);
    affinity_slack(p.dc(l)[d], c.get(l, e), w.theta, w.affinity(d, l, e))
}

/// Objective totals and constraint counts for one slot (or one type at a slot).
#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub o1: Exact,
    pub o2: Exact,
    pub o3: Exact,
    pub o4: Exact,
    pub g2_violations: u32,
    pub g3_violations: u32,
    /// g2 slack per covered (l, e), reservation-major.
    pub redundancy_slack: Vec<i64>,
    pub utility: Exact,
}

impl StepMetrics {
    pub fn zero() -> Self {
        StepMetrics {
            o1: Exact::zero(),
            o2: Exact::zero(),
            o3: Exact::zero(),
            o4: Exact::zero(),
            g2_violations: 0,
            g3_violations: 0,
            redundancy_slack: Vec::new(),
            utility: Exact::zero(),
        }
    }

    pub fn redundancy_slack_total(&self) -> i64 {
        self.redundancy_slack.iter().sum()
    }

    /// Adds another type's metrics into this one.
    pub fn accumulate(&mut self, other: &StepMetrics) {
        self.o1 += other.o1;
        self.o2 += other.o2;
        self.o3 += other.o3;
        self.o4 += other.o4;
        self.g2_violations += other.g2_violations;
        self.g3_violations += other.g3_violations;
        self.redundancy_slack.extend_from_slice(&other.redundancy_slack);
        self.utility += other.utility;
    }
}

fn weighted(o1: Exact, o2: Exact, o3: Exact, o4: Exact, w: &CostWeights) -> Exact {
    o1 + w.beta.exact() * (o2 + o3) + w.kappa.exact() * o4
}

/// Metrics restricted to server type `e` (its utility is the per-type objective).
pub fn type_metrics(
    topo: &RegionTopology,
    prev: &Assignment,
    cur: &Assignment,
    c: &DemandState,
    w: &CostWeights,
    e: TypeId,
) -> StepMetrics {
    let o1 = exact_int(movement_cost(topo, prev, cur, Some(e)) as i128);
    let profile = SupplyProfile::new(topo, cur, e);
    let mut m = StepMetrics::zero();
    m.o1 = o1;
    for l in 0..topo.num_reservations() {
        let t = profile.terms(l, c.get(l, e), w);
        m.o2 += t.o2;
        m.o3 += t.o3;
        m.o4 += exact_int(t.o4 as i128);
        m.g2_violations += (t.g2 < 0) as u32;
        m.g3_violations += t.g3_violations();
        m.redundancy_slack.push(t.g2);
    }
    m.utility = weighted(m.o1, m.o2, m.o3, m.o4, w);
    m
}

pub fn utility_per_type(
    topo: &RegionTopology,
    prev: &Assignment,
    cur: &Assignment,
    c: &DemandState,
    w: &CostWeights,
    e: TypeId,
) -> Exact {
    type_metrics(topo, prev, cur, c, w, e).utility
}

/// Whole-region metrics, with `o1` summed over every server.
pub fn utility(
    topo: &RegionTopology,
    prev: &Assignment,
    cur: &Assignment,
    c: &DemandState,
    w: &CostWeights,
) -> StepMetrics {
    let mut m = StepMetrics::zero();
    m.o1 = exact_int(movement_cost(topo, prev, cur, None) as i128);
    for e in 0..topo.num_types() {
        let profile = SupplyProfile::new(topo, cur, e);
        for l in 0..topo.num_reservations() {
            let t = profile.terms(l, c.get(l, e), w);
            m.o2 += t.o2;
            m.o3 += t.o3;
            m.o4 += exact_int(t.o4 as i128);
            m.g2_violations += (t.g2 < 0) as u32;
            m.g3_violations += t.g3_violations();
            m.redundancy_slack.push(t.g2);
        }
    }
    m.utility = weighted(m.o1, m.o2, m.o3, m.o4, w);
    m
}

/// True when every g2 and g3 slack is non-negative.
pub fn is_feasible(m: &StepMetrics) -> bool {
    m.g2_violations == 0 && m.g3_violations == 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::topology::build_region;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference() -> (RegionTopology, CostWeights) {
        let cfg = ExperimentConfig::reference();
        (build_region(&cfg.region_config()).unwrap(), cfg.cost_weights())
    }

    fn demand(topo: &RegionTopology, l: usize, e: usize, v: u64) -> DemandState {
        let mut c = DemandState::zeros(topo.num_reservations(), topo.num_types());
        c.set(l, e, v);
        c
    }

    /// Type-0 servers of `topo`, one per distinct rack, taken in order.
    fn one_per_rack(topo: &RegionTopology, e: usize, n: usize) -> Vec<ServerId> {
        let mut seen = std::collections::HashSet::new();
        topo.type_servers(e)
            .iter()
            .copied()
            .filter(|&b| seen.insert(topo.server(b).rack))
            .take(n)
            .collect()
    }

    fn one_per_msb(topo: &RegionTopology, e: usize, n: usize) -> Vec<ServerId> {
        let mut seen = std::collections::HashSet::new();
        topo.type_servers(e)
            .iter()
            .copied()
            .filter(|&b| seen.insert(topo.server(b).msb))
            .take(n)
            .collect()
    }

    #[test]
    fn movement_cost_cases() {
        let (topo, _) = reference();
        let n = topo.num_servers();
        let mut prev = Assignment::empty(n);
        prev.set(0, Some(1));
        assert_eq!(movement_cost(&topo, &prev, &prev, None), 0);
        let mut moved = prev.clone();
        moved.set(0, Some(2));
        assert_eq!(movement_cost(&topo, &prev, &moved, None), 5);
        let released = Assignment::empty(n);
        assert_eq!(movement_cost(&topo, &prev, &released, None), 5);
        // newly assigning a free server is not a movement
        assert_eq!(movement_cost(&topo, &released, &prev, None), 0);
        assert_eq!(movement_cost(&topo, &prev, &moved, Some(1)), 0);
    }

    #[test]
    fn rack_spread_cases() {
        let (topo, w) = reference();
        let n = topo.num_servers();
        let c = demand(&topo, 0, 0, 1500);
        assert_eq!(rack_spread_cost(&topo, &Assignment::empty(n), &c, 0, 0, &w), exact_int(0));
        let mut x = Assignment::empty(n);
        let servers = one_per_rack(&topo, 0, 10);
        x.set(servers[0], Some(0));
        assert_eq!(rack_spread_cost(&topo, &x, &c, 0, 0, &w), exact_int(130));
        for &b in &servers {
            x.set(b, Some(0));
        }
        assert_eq!(rack_spread_cost(&topo, &x, &c, 0, 0, &w), exact_int(1300));
    }

    #[test]
    fn msb_spread_cases() {
        let (topo, w) = reference();
        let n = topo.num_servers();
        let c = demand(&topo, 0, 0, 1500);
        assert_eq!(msb_spread_cost(&topo, &Assignment::empty(n), &c, 0, 0, &w), exact_int(0));
        let mut x = Assignment::empty(n);
        x.set(one_per_msb(&topo, 0, 1)[0], Some(0));
        assert_eq!(msb_spread_cost(&topo, &x, &c, 0, 0, &w), exact_int(50));
        // exactly α^F·C = 150 in every MSB is on the threshold
        let c = demand(&topo, 0, 0, 2250);
        let mut x = Assignment::empty(n);
        for b in one_per_msb(&topo, 0, 15) {
            x.set(b, Some(0));
        }
        assert_eq!(msb_spread_cost(&topo, &x, &c, 0, 0, &w), exact_int(0));
    }

    #[test]
    fn largest_msb_cases() {
        let (topo, _) = reference();
        let n = topo.num_servers();
        assert_eq!(largest_msb(&topo, &Assignment::empty(n), 0, 0), 0);
        let mut x = Assignment::empty(n);
        let msb0: Vec<_> = topo.type_servers(0).iter().copied().filter(|&b| topo.server(b).msb == 0).take(2).collect();
        let msb1 = topo.type_servers(0).iter().copied().find(|&b| topo.server(b).msb == 1).unwrap();
        for &b in &msb0 {
            x.set(b, Some(0));
        }
        x.set(msb1, Some(0));
        assert_eq!(largest_msb(&topo, &x, 0, 0), 300);
        let mut x = Assignment::empty(n);
        for b in one_per_msb(&topo, 0, 15) {
            x.set(b, Some(0));
        }
        assert_eq!(largest_msb(&topo, &x, 0, 0), 150);
    }

    #[test]
    fn capacity_redundancy_cases() {
        let (topo, _) = reference();
        let n = topo.num_servers();
        let mut x = Assignment::empty(n);
        for b in one_per_msb(&topo, 0, 10) {
            x.set(b, Some(0));
        }
        assert_eq!(capacity_redundancy(&topo, &x, &demand(&topo, 0, 0, 1200), 0, 0), 150);
        let mut x = Assignment::empty(n);
        let same: Vec<_> = topo.type_servers(0).iter().copied().filter(|&b| topo.server(b).msb == 3).take(4).collect();
        for &b in &same {
            x.set(b, Some(0));
        }
        assert_eq!(capacity_redundancy(&topo, &x, &demand(&topo, 0, 0, 450), 0, 0), -450);
        let empty = Assignment::empty(n);
        assert_eq!(capacity_redundancy(&topo, &empty, &demand(&topo, 0, 0, 0), 0, 0), 0);
    }

    #[test]
    fn network_affinity_cases() {
        let (topo, w) = reference();
        let n = topo.num_servers();
        let mut x = Assignment::empty(n);
        // 4 servers in DC 0, 3 in DC 1, 3 in DC 2
        for (d, k) in [(0usize, 4usize), (1, 3), (2, 3)] {
            let ids: Vec<_> = topo.type_servers(0).iter().copied().filter(|&b| topo.server(b).dc == d).take(k).collect();
            for b in ids {
                x.set(b, Some(0));
            }
        }
        let c = demand(&topo, 0, 0, 1500);
        assert_eq!(network_affinity(&topo, &x, &c, 0, 0, 0, &w), Exact::new(7, 5));
        // supply/C exactly A = 1 gives θ
        let c = demand(&topo, 0, 0, 600);
        assert_eq!(network_affinity(&topo, &x, &c, 0, 0, 0, &w), exact_int(2));
        let c = demand(&topo, 0, 0, 0);
        assert_eq!(network_affinity(&topo, &x, &c, 0, 0, 0, &w), exact_int(2));
    }

    #[test]
    fn utility_small_cases() {
        let (topo, w) = reference();
        let n = topo.num_servers();
        let c = DemandState::zeros(topo.num_reservations(), topo.num_types());
        let empty = Assignment::empty(n);
        assert_eq!(utility(&topo, &empty, &empty, &c, &w).utility, exact_int(0));
        // a single server moved away, nothing else assigned: only o1 is active
        let mut prev = Assignment::empty(n);
        prev.set(0, Some(1));
        assert_eq!(utility(&topo, &prev, &empty, &c, &w).utility, exact_int(5));
    }

    pub(crate) fn random_instance(seed: u64, topo: &RegionTopology) -> (Assignment, Assignment, DemandState) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = topo.num_servers();
        let l_n = topo.num_reservations();
        let draw = |rng: &mut ChaCha8Rng| {
            let p_assigned: f64 = rng.gen();
            Assignment::from_vec(
                (0..n)
                    .map(|_| (rng.gen::<f64>() < p_assigned).then(|| rng.gen_range(0..l_n)))
                    .collect(),
            )
        };
        let prev = draw(&mut rng);
        let cur = draw(&mut rng);
        let mut c = DemandState::zeros(l_n, topo.num_types());
        for l in 0..l_n {
            for e in 0..topo.num_types() {
                c.set(l, e, 150 * rng.gen_range(0..12u64));
            }
        }
        (prev, cur, c)
    }

    #[test]
    fn decomposes_over_types_exactly() {
        let (topo, w) = reference();
        for seed in 0..100 {
            let (prev, cur, c) = random_instance(seed, &topo);
            let total = utility(&topo, &prev, &cur, &c, &w).utility;
            let sum: Exact = (0..topo.num_types())
                .map(|e| utility_per_type(&topo, &prev, &cur, &c, &w, e))
                .sum();
            assert_eq!(total, sum, "seed {seed}");
        }
    }

    #[test]
    fn binary_view_has_no_double_assignment() {
        let (topo, _) = reference();
        let (_, cur, _) = random_instance(3, &topo);
        assert_eq!(g1_violations(&cur.to_binary(topo.num_reservations())), 0);
        assert_eq!(g1_violations(&[vec![1, 1, 0]]), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn cost_terms_non_negative(seed in 0u64..1_000_000) {
            let (topo, w) = reference();
            let (prev, cur, c) = random_instance(seed, &topo);
            let m = utility(&topo, &prev, &cur, &c, &w);
            prop_assert!(m.o1 >= exact_int(0) && m.o2 >= exact_int(0));
            prop_assert!(m.o3 >= exact_int(0) && m.o4 >= exact_int(0));
        }

        // doubling every server's RRU and every demand doubles o2, o3, o4 and g2
        #[test]
        fn positive_homogeneity(seed in 0u64..1_000_000) {
            let cfg = ExperimentConfig::reference();
            let topo = build_region(&cfg.region_config()).unwrap();
            let mut doubled_cfg = cfg.region_config();
            doubled_cfg.server_rru *= 2;
            let topo2 = build_region(&doubled_cfg).unwrap();
            let w = cfg.cost_weights();
            let (prev, cur, c) = random_instance(seed, &topo);
            let mut c2 = c.clone();
            for l in 0..c.num_reservations() {
                for e in 0..c.num_types() {
                    c2.set(l, e, 2 * c.get(l, e));
                }
            }
            let m = utility(&topo, &prev, &cur, &c, &w);
            let m2 = utility(&topo2, &prev, &cur, &c2, &w);
            let two = exact_int(2);
            prop_assert_eq!(m2.o2, m.o2 * two);
            prop_assert_eq!(m2.o3, m.o3 * two);
            prop_assert_eq!(m2.o4, m.o4 * two);
            let doubled: Vec<i64> = m.redundancy_slack.iter().map(|s| 2 * s).collect();
            prop_assert_eq!(m2.redundancy_slack, doubled);
        }

        #[test]
        fn adding_a_server_never_shrinks_largest_msb(seed in 0u64..1_000_000, pick in 0usize..1000) {
            let (topo, _) = reference();
            let (_, mut cur, _) = random_instance(seed, &topo);
            let b = pick as ServerId;
            let e = topo.server(b).type_id;
            let l = 0;
            let before = largest_msb(&topo, &cur, l, e);
            cur.set(b, Some(l));
            prop_assert!(largest_msb(&topo, &cur, l, e) >= before);
        }
    }
}
