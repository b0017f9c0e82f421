//! Capacity-request generation and aggregation.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{ServerTypeSpec, TypeId};

/// A demand mix: parallel lists of sizes, probabilities and lifetimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComboSpec {
    /// Demand sizes in RRU.
    pub demands: Vec<u64>,
    pub probabilities: Vec<f64>,
    /// Lifetimes in slots.
    pub durations: Vec<u32>,
}

impl ComboSpec {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.demands.len();
        if n == 0 {
            return Err("a combo needs at least one entry".into());
        }
        if self.probabilities.len() != n || self.durations.len() != n {
            return Err(format!(
                "demands/probabilities/durations lengths differ ({}, {}, {})",
                n,
                self.probabilities.len(),
                self.durations.len()
            ));
        }
        if self.demands.iter().any(|&d| d == 0) {
            return Err("demand sizes must be > 0".into());
        }
        if self.durations.iter().any(|&d| d == 0) {
            return Err("durations must be >= 1".into());
        }
        if self.probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err("probabilities must lie in [0, 1]".into());
        }
        let sum: f64 = self.probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(format!("probabilities sum to {sum}, not 1"));
        }
        Ok(())
    }

    /// Draws an entry index by inverse CDF on one uniform draw.
    fn draw(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in self.probabilities.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probabilities.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapacityRequest {
    pub reservation: usize,
    pub type_id: TypeId,
    /// RRU units.
    pub demand: u64,
    pub arrival: u32,
    pub expiry: u32,
}

impl CapacityRequest {
    pub fn active_at(&self, t: u32) -> bool {
        self.arrival <= t && t < self.expiry
    }
}

/// Every request of one episode, pre-sampled at reset and sorted by arrival.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub requests: Vec<CapacityRequest>,
    pub seed: u64,
    pub horizon: u32,
    pub num_reservations: usize,
    pub num_types: usize,
}

/// `C_{l,e}(t)`, laid out row-major `[l * E + e]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemandState {
    values: Vec<u64>,
    num_types: usize,
}

impl DemandState {
    pub fn zeros(num_reservations: usize, num_types: usize) -> Self {
        DemandState {
            values: vec![0; num_reservations * num_types],
            num_types,
        }
    }

    pub fn from_rows(rows: Vec<Vec<u64>>) -> Self {
        let num_types = rows.first().map_or(0, Vec::len);
        DemandState {
            values: rows.into_iter().flatten().collect(),
            num_types,
        }
    }

    pub fn get(&self, l: usize, e: TypeId) -> u64 {
        self.values[l * self.num_types + e]
    }

    pub fn set(&mut self, l: usize, e: TypeId, v: u64) {
        self.values[l * self.num_types + e] = v;
    }

    pub fn num_reservations(&self) -> usize {
        if self.num_types == 0 {
            0
        } else {
            self.values.len() / self.num_types
        }
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }
}

pub fn sample_trace(
    specs: &[ServerTypeSpec],
    combos: &[ComboSpec],
    num_reservations: usize,
    horizon: u32,
    seed: u64,
) -> EpisodeTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poissons: Vec<Option<Poisson<f64>>> = specs
        .iter()
        .map(|s| (s.arrival_rate > 0.0).then(|| Poisson::new(s.arrival_rate).expect("rate > 0")))
        .collect();
    let mut requests = Vec::new();
    for t in 1..=horizon {
        for (spec, poisson) in specs.iter().zip(&poissons) {
            let Some(poisson) = poisson else { continue };
            let count = poisson.sample(&mut rng) as u64;
            let combo = &combos[spec.combo];
            for _ in 0..count {
                let i = combo.draw(&mut rng);
                let reservation = rng.gen_range(0..num_reservations);
                requests.push(CapacityRequest {
                    reservation,
                    type_id: spec.id,
                    demand: combo.demands[i],
                    arrival: t,
                    expiry: t + combo.durations[i],
                });
            }
        }
    }
    EpisodeTrace {
        requests,
        seed,
        horizon,
        num_reservations,
        num_types: specs.len(),
    }
}

/// Aggregated demand at slot `t`: requests with `arrival <= t < expiry`.
pub fn demand_at(trace: &EpisodeTrace, t: u32) -> DemandState {
    let mut c = DemandState::zeros(trace.num_reservations, trace.num_types);
    for r in trace.requests.iter().filter(|r| r.active_at(t)) {
        let v = c.get(r.reservation, r.type_id) + r.demand;
        c.set(r.reservation, r.type_id, v);
    }
    c
}

/// Demand expiring / arriving at slots `t+1 ..= t+h` for one (l, e).
pub fn lookahead(trace: &EpisodeTrace, l: usize, e: TypeId, t: u32, h: u32) -> (Vec<u64>, Vec<u64>) {
    let mut expiring = vec![0; h as usize];
    let mut arriving = vec![0; h as usize];
    for r in trace
        .requests
        .iter()
        .filter(|r| r.reservation == l && r.type_id == e)
    {
        if r.expiry > t && r.expiry <= t + h {
            expiring[(r.expiry - t - 1) as usize] += r.demand;
        }
        if r.arrival > t && r.arrival <= t + h && r.arrival <= trace.horizon {
            arriving[(r.arrival - t - 1) as usize] += r.demand;
        }
    }
    (expiring, arriving)
}

/// Per-slot demand, arrival and expiry tables for fast repeated lookups.
#[derive(Debug, Clone)]
pub struct DemandIndex {
    num_reservations: usize,
    num_types: usize,
    horizon: u32,
    /// Number of slots covered (0 ..= max expiry + lookahead).
    span: usize,
    arrivals: Vec<u64>,
    expiries: Vec<u64>,
    demand: Vec<u64>,
}

impl DemandIndex {
    pub fn new(trace: &EpisodeTrace, lookahead: u32) -> Self {
        let (l_n, e_n) = (trace.num_reservations, trace.num_types);
        let max_t = trace
            .requests
            .iter()
            .map(|r| r.expiry)
            .max()
            .unwrap_or(0)
            .max(trace.horizon);
        let span = (max_t + lookahead + 2) as usize;
        let cell = |l: usize, e: usize, t: usize| (l * e_n + e) * span + t;
        let mut arrivals = vec![0u64; l_n * e_n * span];
        let mut expiries = vec![0u64; l_n * e_n * span];
        for r in &trace.requests {
            arrivals[cell(r.reservation, r.type_id, r.arrival as usize)] += r.demand;
            expiries[cell(r.reservation, r.type_id, r.expiry as usize)] += r.demand;
        }
        let mut demand = vec![0u64; l_n * e_n * span];
        for l in 0..l_n {
            for e in 0..e_n {
                let mut level: u64 = 0;
                for t in 0..span {
                    level = level + arrivals[cell(l, e, t)] - expiries[cell(l, e, t)];
                    demand[cell(l, e, t)] = level;
                }
            }
        }
        DemandIndex {
            num_reservations: l_n,
            num_types: e_n,
            horizon: trace.horizon,
            span,
            arrivals,
            expiries,
            demand,
        }
    }

    fn cell(&self, l: usize, e: TypeId, t: u32) -> Option<usize> {
        let t = t as usize;
        (t < self.span).then(|| (l * self.num_types + e) * self.span + t)
    }

    pub fn demand(&self, l: usize, e: TypeId, t: u32) -> u64 {
        self.cell(l, e, t).map_or(0, |i| self.demand[i])
    }

    pub fn demand_state(&self, t: u32) -> DemandState {
        let mut c = DemandState::zeros(self.num_reservations, self.num_types);
        for l in 0..self.num_reservations {
            for e in 0..self.num_types {
                c.set(l, e, self.demand(l, e, t));
            }
        }
        c
    }

    /// Arrivals at slot `t`; zero beyond the horizon.
    pub fn arriving(&self, l: usize, e: TypeId, t: u32) -> u64 {
        if t > self.horizon {
            return 0;
        }
        self.cell(l, e, t).map_or(0, |i| self.arrivals[i])
    }

    pub fn expiring(&self, l: usize, e: TypeId, t: u32) -> u64 {
        self.cell(l, e, t).map_or(0, |i| self.expiries[i])
    }

    pub fn num_reservations(&self) -> usize {
        self.num_reservations
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }
}

const TRACE_HEADER: &str = "# rasim-trace v1";

impl EpisodeTrace {
    /// Line-oriented export: a header, then `l,e,demand,arrival,expiry` per request.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{TRACE_HEADER} seed={} horizon={} reservations={} types={}",
            self.seed, self.horizon, self.num_reservations, self.num_types
        );
        for r in &self.requests {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.reservation, r.type_id, r.demand, r.arrival, r.expiry
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty trace".into(),
        })?;
        let rest = header.strip_prefix(TRACE_HEADER).ok_or(Error::Parse {
            line: 1,
            message: format!("expected header `{TRACE_HEADER} ...`"),
        })?;
        let mut seed = 0;
        let mut horizon = None;
        let mut reservations = None;
        let mut types = None;
        for kv in rest.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or(Error::Parse {
                line: 1,
                message: format!("malformed header field `{kv}`"),
            })?;
            let v: u64 = v.parse().map_err(|_| Error::Parse {
                line: 1,
                message: format!("header field `{k}` is not an integer"),
            })?;
            match k {
                "seed" => seed = v,
                "horizon" => horizon = Some(v as u32),
                "reservations" => reservations = Some(v as usize),
                "types" => types = Some(v as usize),
                _ => {
                    return Err(Error::Parse {
                        line: 1,
                        message: format!("unknown header field `{k}`"),
                    })
                }
            }
        }
        let missing = |name: &str| Error::Parse {
            line: 1,
            message: format!("header lacks `{name}`"),
        };
        let horizon = horizon.ok_or_else(|| missing("horizon"))?;
        let num_reservations = reservations.ok_or_else(|| missing("reservations"))?;
        let num_types = types.ok_or_else(|| missing("types"))?;

        let mut requests = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<u64> = line
                .split(',')
                .map(|f| f.trim().parse::<u64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("expected five integers, got `{line}`"),
                })?;
            let [l, e, demand, arrival, expiry] = fields[..] else {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected five fields, got {}", fields.len()),
                });
            };
            if l as usize >= num_reservations || e as usize >= num_types || expiry <= arrival {
                return Err(Error::Parse {
                    line: line_no,
                    message: "request out of range or with expiry <= arrival".into(),
                });
            }
            requests.push(CapacityRequest {
                reservation: l as usize,
                type_id: e as usize,
                demand,
                arrival: arrival as u32,
                expiry: expiry as u32,
            });
        }
        if requests.windows(2).any(|w| w[0].arrival > w[1].arrival) {
            return Err(Error::Parse {
                line: 0,
                message: "requests must be sorted by arrival".into(),
            });
        }
        Ok(EpisodeTrace {
            requests,
            seed,
            horizon,
            num_reservations,
            num_types,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use proptest::prelude::*;

    fn empty_trace(horizon: u32) -> EpisodeTrace {
        EpisodeTrace {
            requests: vec![],
            seed: 0,
            horizon,
            num_reservations: 4,
            num_types: 2,
        }
    }

    fn reference_trace(seed: u64) -> EpisodeTrace {
        let cfg = ExperimentConfig::reference();
        sample_trace(&cfg.server_types, &cfg.combos, 20, 30, seed)
    }

    #[test]
    fn combo_zero_type_has_fixed_shape() {
        let trace = reference_trace(7);
        let type3: Vec<_> = trace.requests.iter().filter(|r| r.type_id == 3).collect();
        assert!(!type3.is_empty());
        for r in type3 {
            assert_eq!(r.demand, 150);
            assert_eq!(r.expiry - r.arrival, 15);
        }
    }

    #[test]
    fn combo_entries_pair_elementwise() {
        let cfg = ExperimentConfig::reference();
        let trace = reference_trace(3);
        for r in &trace.requests {
            let combo = &cfg.combos[cfg.server_types[r.type_id].combo];
            let i = combo.demands.iter().position(|&d| d == r.demand).unwrap();
            assert_eq!(combo.durations[i], r.expiry - r.arrival);
        }
    }

    #[test]
    fn zero_rates_give_empty_trace() {
        let mut cfg = ExperimentConfig::reference();
        for s in &mut cfg.server_types {
            s.arrival_rate = 0.0;
        }
        let trace = sample_trace(&cfg.server_types, &cfg.combos, 20, 30, 1);
        assert!(trace.requests.is_empty());
    }

    #[test]
    fn type0_request_count_matches_poisson_mean() {
        // 200 seeds of 30 slots at rate 2: mean 60, per-episode variance 60.
        let n = 200;
        let counts: Vec<f64> = (0..n)
            .map(|s| {
                reference_trace(1000 + s)
                    .requests
                    .iter()
                    .filter(|r| r.type_id == 0)
                    .count() as f64
            })
            .collect();
        let mean = counts.iter().sum::<f64>() / n as f64;
        let se = (60.0f64 / n as f64).sqrt();
        assert!((mean - 60.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn same_seed_same_trace() {
        assert_eq!(reference_trace(11), reference_trace(11));
        assert_ne!(reference_trace(11), reference_trace(12));
        assert!(reference_trace(5)
            .requests
            .windows(2)
            .all(|w| w[0].arrival <= w[1].arrival));
    }

    #[test]
    fn demand_of_single_request() {
        let mut trace = empty_trace(30);
        trace.requests.push(CapacityRequest {
            reservation: 2,
            type_id: 1,
            demand: 300,
            arrival: 3,
            expiry: 13,
        });
        for t in 1..=15 {
            let c = demand_at(&trace, t).get(2, 1);
            assert_eq!(c, if (3..=12).contains(&t) { 300 } else { 0 }, "t={t}");
        }
        assert_eq!(demand_at(&empty_trace(5), 3), DemandState::zeros(4, 2));
    }

    #[test]
    fn lookahead_scans() {
        let (exp, arr) = lookahead(&empty_trace(30), 0, 0, 4, 5);
        assert_eq!((exp, arr), (vec![0; 5], vec![0; 5]));

        let mut trace = empty_trace(30);
        trace.requests.push(CapacityRequest {
            reservation: 1,
            type_id: 0,
            demand: 450,
            arrival: 6,
            expiry: 16,
        });
        let (_, arr) = lookahead(&trace, 1, 0, 4, 5);
        assert_eq!(arr, vec![0, 450, 0, 0, 0]);
        let (exp, _) = lookahead(&trace, 1, 0, 12, 5);
        assert_eq!(exp, vec![0, 0, 0, 450, 0]);
        // arrivals past the horizon are not observable
        trace.horizon = 5;
        let (_, arr) = lookahead(&trace, 1, 0, 4, 5);
        assert_eq!(arr, vec![0; 5]);
    }

    #[test]
    fn lookahead_consistent_with_demand_deltas() {
        let trace = reference_trace(21);
        let h = 5;
        for e in 0..trace.num_types {
            for t in 1..trace.horizon {
                for j in 1..=h {
                    let s = t + j;
                    if s > trace.horizon {
                        continue;
                    }
                    let mut via_lookahead = 0i64;
                    for l in 0..trace.num_reservations {
                        let (exp, arr) = lookahead(&trace, l, e, t, h);
                        via_lookahead += arr[(j - 1) as usize] as i64 - exp[(j - 1) as usize] as i64;
                    }
                    let total = |s: u32| -> i64 {
                        let c = demand_at(&trace, s);
                        (0..trace.num_reservations).map(|l| c.get(l, e) as i64).sum()
                    };
                    assert_eq!(via_lookahead, total(s) - total(s - 1));
                }
            }
        }
    }

    #[test]
    fn index_matches_direct_scan() {
        let trace = reference_trace(9);
        let idx = DemandIndex::new(&trace, 5);
        for t in 1..=trace.horizon {
            assert_eq!(idx.demand_state(t), demand_at(&trace, t));
            for l in 0..trace.num_reservations {
                for e in 0..trace.num_types {
                    let (exp, arr) = lookahead(&trace, l, e, t, 5);
                    for j in 0..5u32 {
                        assert_eq!(idx.expiring(l, e, t + j + 1), exp[j as usize]);
                        assert_eq!(idx.arriving(l, e, t + j + 1), arr[j as usize]);
                    }
                }
            }
        }
    }

    #[test]
    fn text_round_trip_and_errors() {
        let trace = reference_trace(4);
        let back = EpisodeTrace::from_text(&trace.to_text()).unwrap();
        assert_eq!(back, trace);
        assert!(EpisodeTrace::from_text("").is_err());
        let bad = format!("{TRACE_HEADER} horizon=3 reservations=2 types=1\n0,0,150,2\n");
        assert!(matches!(
            EpisodeTrace::from_text(&bad),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        // demand_at agrees with an independent re-sum over the active set
        #[test]
        fn demand_matches_oracle_resum(seed in 0u64..10_000, t in 1u32..=30) {
            let trace = reference_trace(seed);
            let c = demand_at(&trace, t);
            let mut oracle = vec![vec![0u64; trace.num_types]; trace.num_reservations];
            for r in &trace.requests {
                if r.arrival <= t && r.expiry > t {
                    oracle[r.reservation][r.type_id] += r.demand;
                }
            }
            prop_assert_eq!(c, DemandState::from_rows(oracle));
        }
    }
}
