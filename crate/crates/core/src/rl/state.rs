//! Observation vector for one (reservation, type) decision.

use crate::policies::DecisionContext;
use crate::topology::{RegionTopology, TypeId};

/// `1 + 3F + 4h + 3`, plus `E` when a type one-hot is appended.
pub fn state_dim(num_msbs: usize, lookahead: usize, one_hot_types: Option<usize>) -> usize {
    1 + 3 * num_msbs + 4 * lookahead + 3 + one_hot_types.unwrap_or(0)
}

/// Redundancy slack, relative to demand, of an even split rounded up to
/// whole servers with no over-provisioning: `((F-1) n U - C) / C` with
/// `n = ceil(C / (F U))`. Negative when rounding alone cannot absorb the
/// loss of one MSB.
pub fn even_split_slack(demand: u64, num_msbs: usize, mean_rru: f64) -> f64 {
    if demand == 0 || num_msbs == 0 || mean_rru <= 0.0 {
        return f64::INFINITY;
    }
    let c = demand as f64;
    let f = num_msbs as f64;
    let n = (c / (f * mean_rru) - 1e-9).ceil();
    ((f - 1.0) * n * mean_rru - c) / c
}

/// Demand normalizer for a type: its mean per-MSB supply in RRU.
pub fn demand_scale(topo: &RegionTopology, type_id: TypeId) -> f64 {
    let s = topo.type_rru_total(type_id) as f64 / topo.num_msbs() as f64;
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Entries lie in [0, 1]: index, per-MSB usage, own demand, own previous
/// per-MSB counts, own expiring and arriving demand over the look-ahead,
/// the same four summaries averaged over the other reservations, the
/// even-split redundancy slack mapped from [-1, 1] and an optional type
/// one-hot.
pub fn build_state(ctx: &DecisionContext<'_>, one_hot_types: Option<usize>) -> Vec<f64> {
    let topo = ctx.topo;
    let (l_n, f_n, h) = (topo.num_reservations(), topo.num_msbs(), ctx.lookahead as usize);
    let (e, l, t) = (ctx.type_id, ctx.reservation, ctx.t);
    let scale = demand_scale(topo, e);
    let norm = |v: u64| (v as f64 / scale).min(1.0);
    let cap = |f: usize| topo.msb_type_capacity(e, f).max(1) as f64;
    let mut s = Vec::with_capacity(state_dim(f_n, h, one_hot_types));

    s.push(l as f64 / l_n as f64);
    s.extend((0..f_n).map(|f| (ctx.usage[f] as f64 / cap(f)).min(1.0)));
    s.push(norm(ctx.index.demand(l, e, t)));
    s.extend((0..f_n).map(|f| (ctx.prev_msb[l * f_n + f] as f64 / cap(f)).min(1.0)));
    s.extend((1..=h as u32).map(|j| norm(ctx.index.expiring(l, e, t + j))));
    s.extend((1..=h as u32).map(|j| norm(ctx.index.arriving(l, e, t + j))));

    let others = l_n.saturating_sub(1).max(1) as f64;
    let mean_over = |g: &dyn Fn(usize) -> f64| -> f64 {
        (0..l_n).filter(|&o| o != l).map(g).sum::<f64>() / others
    };
    s.push(mean_over(&|o| norm(ctx.index.demand(o, e, t))));
    for f in 0..f_n {
        s.push(mean_over(&|o| (ctx.prev_msb[o * f_n + f] as f64 / cap(f)).min(1.0)));
    }
    for j in 1..=h as u32 {
        s.push(mean_over(&|o| norm(ctx.index.expiring(o, e, t + j))));
    }
    for j in 1..=h as u32 {
        s.push(mean_over(&|o| norm(ctx.index.arriving(o, e, t + j))));
    }
    let slack = even_split_slack(ctx.index.demand(l, e, t), f_n, topo.type_mean_rru(e));
    s.push((0.5 + 0.5 * slack).clamp(0.0, 1.0));
    if let Some(types) = one_hot_types {
        s.extend((0..types).map(|i| if i == e { 1.0 } else { 0.0 }));
    }
    s
}
