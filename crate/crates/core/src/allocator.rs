//! The deterministic low-level tier: per-MSB counts are spread evenly over
//! racks, rack over-subscription is resolved, and the per-rack quotas are
//! turned into a sticky server mapping.

use crate::converter::MsbRequestVector;
use crate::error::{Error, Result};
use crate::objective::{Assignment, ReservationId};
use crate::topology::{RegionTopology, ServerId, TypeId};

/// Per-(reservation, rack) server counts for one type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RackRequestMatrix {
    num_racks: usize,
    m: Vec<u32>,
    /// Servers that could not be placed anywhere, per reservation.
    pub shortfall: Vec<u32>,
}

impl RackRequestMatrix {
    pub fn zeros(num_reservations: usize, num_racks: usize) -> Self {
        RackRequestMatrix {
            num_racks,
            m: vec![0; num_reservations * num_racks],
            shortfall: vec![0; num_reservations],
        }
    }

    pub fn num_reservations(&self) -> usize {
        self.shortfall.len()
    }

    pub fn num_racks(&self) -> usize {
        self.num_racks
    }

    pub fn get(&self, l: ReservationId, k: usize) -> u32 {
        self.m[l * self.num_racks + k]
    }

    pub fn set(&mut self, l: ReservationId, k: usize, v: u32) {
        self.m[l * self.num_racks + k] = v;
    }

    pub fn row(&self, l: ReservationId) -> &[u32] {
        &self.m[l * self.num_racks..(l + 1) * self.num_racks]
    }

    pub fn set_row(&mut self, l: ReservationId, row: &[u32]) {
        self.m[l * self.num_racks..(l + 1) * self.num_racks].copy_from_slice(row);
    }

    pub fn rack_total(&self, k: usize) -> u32 {
        (0..self.num_reservations()).map(|l| self.get(l, k)).sum()
    }

    /// `Σ_l m_{l,k} − capacity_k`; positive means over-subscribed.
    pub fn overflow(&self, k: usize, topo: &RegionTopology, e: TypeId) -> i64 {
        self.rack_total(k) as i64 - topo.rack_type_capacity(e, k) as i64
    }

    pub fn total_shortfall(&self) -> u64 {
        self.shortfall.iter().map(|&s| s as u64).sum()
    }
}

/// Per-rack counts of type-e servers held by each reservation, `[l * K + k]`.
pub fn held_counts(prev: &Assignment, e: TypeId, topo: &RegionTopology) -> Vec<u32> {
    let k_n = topo.num_racks();
    let mut held = vec![0u32; topo.num_reservations() * k_n];
    for &b in topo.type_servers(e) {
        if let Some(l) = prev.get(b) {
            held[l * k_n + topo.server(b).rack] += 1;
        }
    }
    held
}

/// Splits each MSB's count evenly over its racks, favouring racks where `l`
/// already holds type-e servers.
pub fn spread_across_racks(
    n: &MsbRequestVector,
    prev: &Assignment,
    l: ReservationId,
    e: TypeId,
    topo: &RegionTopology,
) -> Vec<u32> {
    let held = held_counts(prev, e, topo);
    let k_n = topo.num_racks();
    spread_with_history(n, &held[l * k_n..(l + 1) * k_n], topo)
}

pub(crate) fn spread_with_history(n: &MsbRequestVector, history: &[u32], topo: &RegionTopology) -> Vec<u32> {
    let mut row = vec![0u32; topo.num_racks()];
    for (f, &count) in n.n.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let mut racks = topo.msb_racks(f).to_vec();
        racks.sort_by(|&a, &b| history[b].cmp(&history[a]).then(a.cmp(&b)));
        let len = racks.len() as u32;
        let (p, q) = (count / len, count % len);
        for (i, &k) in racks.iter().enumerate() {
            row[k] = p + u32::from((i as u32) < q);
        }
    }
    row
}

/// Trims over-subscribed racks, highest reservation index first, and
/// re-places trimmed servers into racks with vacancy: same MSB first, then
/// anywhere, largest vacancy first. Unplaceable servers become shortfall.
pub fn resolve_overflow(mut m: RackRequestMatrix, topo: &RegionTopology, e: TypeId) -> RackRequestMatrix {
    let k_n = topo.num_racks();
    let mut vacancy: Vec<i64> = (0..k_n).map(|k| -m.overflow(k, topo, e)).collect();
    let pick = |vacancy: &[i64], racks: &mut dyn Iterator<Item = usize>| -> Option<usize> {
        let mut best: Option<usize> = None;
        for k in racks {
            if vacancy[k] > 0 && best.map_or(true, |b| vacancy[k] > vacancy[b]) {
                best = Some(k);
            }
        }
        best
    };
    for k in 0..k_n {
        let msb = topo.rack_msb(k);
        let mut l = m.num_reservations();
        while vacancy[k] < 0 && l > 0 {
            l -= 1;
            while vacancy[k] < 0 && m.get(l, k) > 0 {
                m.set(l, k, m.get(l, k) - 1);
                vacancy[k] += 1;
                let target = pick(&vacancy, &mut topo.msb_racks(msb).iter().copied())
                    .or_else(|| pick(&vacancy, &mut (0..k_n)));
                match target {
                    Some(t) => {
                        m.set(l, t, m.get(l, t) + 1);
                        vacancy[t] -= 1;
                    }
                    None => m.shortfall[l] += 1,
                }
            }
        }
    }
    m
}

/// Maps exactly `m_{l,k}` type-e servers of rack `k` to `l`. Servers that
/// held `l` before keep it while the quota allows (the highest ids are kept,
/// so excess holdings are released lowest id first); the remaining quota is
/// filled from free servers in ascending id, reservations in ascending
/// index. Only type-e entries of the result are set.
pub fn materialize(
    m: &RackRequestMatrix,
    prev: &Assignment,
    e: TypeId,
    topo: &RegionTopology,
) -> Result<Assignment> {
    let mut out = Assignment::empty(topo.num_servers());
    materialize_into(m, prev, e, topo, &mut out)?;
    Ok(out)
}

pub(crate) fn materialize_into(
    m: &RackRequestMatrix,
    prev: &Assignment,
    e: TypeId,
    topo: &RegionTopology,
    out: &mut Assignment,
) -> Result<()> {
    let l_n = m.num_reservations();
    let mut quota = vec![0u32; l_n];
    for k in 0..topo.num_racks() {
        let servers: Vec<ServerId> = topo
            .rack_servers(k)
            .iter()
            .copied()
            .filter(|&b| topo.server(b).type_id == e)
            .collect();
        let requested = m.rack_total(k);
        if requested as usize > servers.len() {
            return Err(Error::Contract(format!(
                "rack {k} asked for {requested} type-{e} servers but holds {}",
                servers.len()
            )));
        }
        for (l, q) in quota.iter_mut().enumerate() {
            *q = m.get(l, k);
        }
        let mut slot: Vec<Option<ReservationId>> = vec![None; servers.len()];
        for i in (0..servers.len()).rev() {
            if let Some(l) = prev.get(servers[i]) {
                if l < l_n && quota[l] > 0 {
                    quota[l] -= 1;
                    slot[i] = Some(l);
                }
            }
        }
        let mut free = (0..servers.len()).filter(|&i| slot[i].is_none()).collect::<Vec<_>>().into_iter();
        for (l, q) in quota.iter_mut().enumerate() {
            while *q > 0 {
                let i = free.next().ok_or_else(|| {
                    Error::Contract(format!("rack {k} ran out of type-{e} servers"))
                })?;
                if slot[i].is_some() {
                    return Err(Error::Contract(format!("server {} assigned twice", servers[i])));
                }
                slot[i] = Some(l);
                *q -= 1;
            }
        }
        for (i, &b) in servers.iter().enumerate() {
            out.set(b, slot[i]);
        }
    }
    Ok(())
}

/// Runs the whole low-level tier for one type: rack spread for every
/// reservation, overflow resolution and materialization.
pub fn allocate_type(
    requests: &[MsbRequestVector],
    prev: &Assignment,
    e: TypeId,
    topo: &RegionTopology,
) -> Result<(Assignment, RackRequestMatrix)> {
    let k_n = topo.num_racks();
    let held = held_counts(prev, e, topo);
    let mut m = RackRequestMatrix::zeros(requests.len(), k_n);
    for (l, n) in requests.iter().enumerate() {
        let row = spread_with_history(n, &held[l * k_n..(l + 1) * k_n], topo);
        m.set_row(l, &row);
    }
    let m = resolve_overflow(m, topo, e);
    let x = materialize(&m, prev, e, topo)?;
    Ok((x, m))
}

/// Per-(l, rack) counts of type-e servers in `x`, as a matrix.
pub fn counts_of(x: &Assignment, e: TypeId, topo: &RegionTopology) -> RackRequestMatrix {
    let mut m = RackRequestMatrix::zeros(topo.num_reservations(), topo.num_racks());
    let held = held_counts(x, e, topo);
    m.m = held;
    m
}
