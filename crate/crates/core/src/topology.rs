//! The static region hierarchy: datacenters, MSBs, racks and servers.
//!
//! Racks are numbered so that rack `k` sits in MSB `k % F` and MSB `f` in
//! datacenter `f % D`. Servers are dealt round-robin over racks in ascending
//! rack id, in ascending type order, which keeps every server type evenly
//! spread over racks, MSBs and datacenters.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ServerId = u32;
pub type TypeId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerTypeSpec {
    pub id: usize,
    pub count: u32,
    /// Mean capacity requests per slot.
    pub arrival_rate: f64,
    /// Index into the combo table.
    pub combo: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Server {
    pub id: ServerId,
    pub type_id: TypeId,
    pub rru: u32,
    pub rack: usize,
    pub msb: usize,
    pub dc: usize,
    pub movement_cost: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionConfig {
    pub datacenters: u32,
    pub msbs: u32,
    pub racks: u32,
    pub reservations: u32,
    pub server_rru: u32,
    pub movement_cost: u32,
    pub server_types: Vec<ServerTypeSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Rack,
    Msb,
    Dc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionTopology {
    num_dcs: usize,
    num_msbs: usize,
    num_racks: usize,
    num_reservations: usize,
    num_types: usize,
    servers: Vec<Server>,
    rack_servers: Vec<Vec<ServerId>>,
    msb_servers: Vec<Vec<ServerId>>,
    dc_servers: Vec<Vec<ServerId>>,
    msb_racks: Vec<Vec<usize>>,
    type_servers: Vec<Vec<ServerId>>,
    /// Type-e server count per rack, laid out `[e * K + k]`.
    rack_type_capacity: Vec<u32>,
    /// Type-e server count per MSB, laid out `[e * F + f]`.
    msb_type_capacity: Vec<u32>,
    type_rru_total: Vec<u64>,
}

pub(crate) fn check_hierarchy(cfg: &RegionConfig) -> Result<()> {
    let (d, f, k) = (cfg.datacenters, cfg.msbs, cfg.racks);
    if d == 0 || f == 0 || k == 0 {
        return Err(Error::Config(format!(
            "hierarchy sizes must be positive (datacenters={d}, msbs={f}, racks={k})"
        )));
    }
    if f % d != 0 {
        return Err(Error::Config(format!(
            "msbs ({f}) not divisible by datacenters ({d})"
        )));
    }
    if k % f != 0 {
        return Err(Error::Config(format!(
            "racks ({k}) not divisible by msbs ({f})"
        )));
    }
    if cfg.server_rru == 0 {
        return Err(Error::Config("server_rru must be > 0".into()));
    }
    Ok(())
}

/// Builds the region deterministically from its configuration.
pub fn build_region(cfg: &RegionConfig) -> Result<RegionTopology> {
    check_hierarchy(cfg)?;
    for (i, spec) in cfg.server_types.iter().enumerate() {
        if spec.id != i {
            return Err(Error::Config(format!(
                "server type at position {i} has id {}",
                spec.id
            )));
        }
    }
    let num_dcs = cfg.datacenters as usize;
    let num_msbs = cfg.msbs as usize;
    let num_racks = cfg.racks as usize;
    let num_types = cfg.server_types.len();

    let rack_msb = |k: usize| k % num_msbs;
    let msb_dc = |f: usize| f % num_dcs;

    let total: usize = cfg.server_types.iter().map(|s| s.count as usize).sum();
    let mut servers = Vec::with_capacity(total);
    for spec in &cfg.server_types {
        for _ in 0..spec.count {
            let id = servers.len();
            let rack = id % num_racks;
            let msb = rack_msb(rack);
            servers.push(Server {
                id: id as ServerId,
                type_id: spec.id,
                rru: cfg.server_rru,
                rack,
                msb,
                dc: msb_dc(msb),
                movement_cost: cfg.movement_cost,
            });
        }
    }

    let mut rack_servers = vec![Vec::new(); num_racks];
    let mut msb_servers = vec![Vec::new(); num_msbs];
    let mut dc_servers = vec![Vec::new(); num_dcs];
    let mut type_servers = vec![Vec::new(); num_types];
    let mut rack_type_capacity = vec![0u32; num_types * num_racks];
    let mut msb_type_capacity = vec![0u32; num_types * num_msbs];
    let mut type_rru_total = vec![0u64; num_types];
    for s in &servers {
        rack_servers[s.rack].push(s.id);
        msb_servers[s.msb].push(s.id);
        dc_servers[s.dc].push(s.id);
        type_servers[s.type_id].push(s.id);
        rack_type_capacity[s.type_id * num_racks + s.rack] += 1;
        msb_type_capacity[s.type_id * num_msbs + s.msb] += 1;
        type_rru_total[s.type_id] += s.rru as u64;
    }
    let mut msb_racks = vec![Vec::new(); num_msbs];
    for k in 0..num_racks {
        msb_racks[rack_msb(k)].push(k);
    }

    Ok(RegionTopology {
        num_dcs,
        num_msbs,
        num_racks,
        num_reservations: cfg.reservations as usize,
        num_types,
        servers,
        rack_servers,
        msb_servers,
        dc_servers,
        msb_racks,
        type_servers,
        rack_type_capacity,
        msb_type_capacity,
        type_rru_total,
    })
}

impl RegionTopology {
    pub fn num_dcs(&self) -> usize {
        self.num_dcs
    }

    pub fn num_msbs(&self) -> usize {
        self.num_msbs
    }

    pub fn num_racks(&self) -> usize {
        self.num_racks
    }

    pub fn num_servers(&self) -> usize {
        self.servers.len()
    }

    pub fn num_reservations(&self) -> usize {
        self.num_reservations
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn servers(&self) -> &[Server] {
        &self.servers
    }

    pub fn server(&self, id: ServerId) -> &Server {
        &self.servers[id as usize]
    }

    /// Servers of one partition cell, optionally filtered by type, ascending by id.
    pub fn servers_in(&self, scope: Scope, id: usize, type_id: Option<TypeId>) -> Result<Vec<ServerId>> {
        let (cells, name) = match scope {
            Scope::Rack => (&self.rack_servers, "rack"),
            Scope::Msb => (&self.msb_servers, "msb"),
            Scope::Dc => (&self.dc_servers, "dc"),
        };
        let cell = cells.get(id).ok_or_else(|| {
            Error::Argument(format!("{name} id {id} out of range 0..{}", cells.len()))
        })?;
        if let Some(e) = type_id {
            if e >= self.num_types {
                return Err(Error::Argument(format!(
                    "type id {e} out of range 0..{}",
                    self.num_types
                )));
            }
        }
        Ok(cell
            .iter()
            .copied()
            .filter(|&b| type_id.map_or(true, |e| self.servers[b as usize].type_id == e))
            .collect())
    }

    pub fn rack_servers(&self, rack: usize) -> &[ServerId] {
        &self.rack_servers[rack]
    }

    /// Racks of an MSB (Φ^F_f), ascending.
    pub fn msb_racks(&self, msb: usize) -> &[usize] {
        &self.msb_racks[msb]
    }

    pub fn rack_msb(&self, rack: usize) -> usize {
        rack % self.num_msbs
    }

    pub fn msb_dc(&self, msb: usize) -> usize {
        msb % self.num_dcs
    }

    /// All servers of one type (B_e), ascending.
    pub fn type_servers(&self, type_id: TypeId) -> &[ServerId] {
        &self.type_servers[type_id]
    }

    pub fn rack_type_capacity(&self, type_id: TypeId, rack: usize) -> u32 {
        self.rack_type_capacity[type_id * self.num_racks + rack]
    }

    pub fn msb_type_capacity(&self, type_id: TypeId, msb: usize) -> u32 {
        self.msb_type_capacity[type_id * self.num_msbs + msb]
    }

    pub fn type_rru_total(&self, type_id: TypeId) -> u64 {
        self.type_rru_total[type_id]
    }

    /// Mean RRU of a type-e server, `Σ_{b∈B_e} U_b / |B_e|`; 0 for an empty type.
    pub fn type_mean_rru(&self, type_id: TypeId) -> f64 {
        let n = self.type_servers[type_id].len();
        if n == 0 {
            0.0
        } else {
            self.type_rru_total[type_id] as f64 / n as f64
        }
    }

    /// Deterministic text dump, one line per server after a header.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "region dcs={} msbs={} racks={} servers={} reservations={} types={}",
            self.num_dcs,
            self.num_msbs,
            self.num_racks,
            self.servers.len(),
            self.num_reservations,
            self.num_types
        );
        for s in &self.servers {
            let _ = writeln!(
                out,
                "server {} type={} rru={} rack={} msb={} dc={} move={}",
                s.id, s.type_id, s.rru, s.rack, s.msb, s.dc, s.movement_cost
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(counts: &[u32]) -> Vec<ServerTypeSpec> {
        counts
            .iter()
            .enumerate()
            .map(|(id, &count)| ServerTypeSpec {
                id,
                count,
                arrival_rate: 0.0,
                combo: 0,
            })
            .collect()
    }

    fn table1() -> RegionConfig {
        RegionConfig {
            datacenters: 3,
            msbs: 15,
            racks: 75,
            reservations: 20,
            server_rru: 150,
            movement_cost: 5,
            server_types: spec(&[405, 45, 30, 15, 300, 15, 30, 15, 45, 100]),
        }
    }

    #[test]
    fn table1_layout() {
        let topo = build_region(&table1()).unwrap();
        assert_eq!(topo.num_servers(), 1000);
        for f in 0..15 {
            assert_eq!(topo.msb_racks(f).len(), 5);
        }
        let per_dc: Vec<usize> = (0..3)
            .map(|d| (0..15).filter(|&f| topo.msb_dc(f) == d).count())
            .collect();
        assert_eq!(per_dc, [5, 5, 5]);
        for k in 0..75 {
            let n = topo.rack_servers(k).len();
            assert!(n == 13 || n == 14, "rack {k} holds {n}");
            // extras land on the lowest-numbered racks
            assert_eq!(n == 14, k < 25);
        }
    }

    #[test]
    fn per_type_rack_counts_differ_by_at_most_one() {
        let topo = build_region(&table1()).unwrap();
        for e in 0..topo.num_types() {
            // independent recount over the server list
            let mut counts = vec![0u32; topo.num_racks()];
            for s in topo.servers().iter().filter(|s| s.type_id == e) {
                counts[s.rack] += 1;
            }
            let min = *counts.iter().min().unwrap();
            let max = *counts.iter().max().unwrap();
            assert!(max - min <= 1, "type {e}: {min}..{max}");
            for k in 0..topo.num_racks() {
                assert_eq!(topo.rack_type_capacity(e, k), counts[k]);
            }
        }
    }

    #[test]
    fn degenerate_hierarchy() {
        let cfg = RegionConfig {
            datacenters: 1,
            msbs: 1,
            racks: 1,
            reservations: 1,
            server_rru: 150,
            movement_cost: 5,
            server_types: spec(&[4]),
        };
        let topo = build_region(&cfg).unwrap();
        assert_eq!(topo.servers_in(Scope::Rack, 0, None).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn indivisible_hierarchy_names_pair() {
        let mut cfg = table1();
        cfg.racks = 74;
        let err = build_region(&cfg).unwrap_err().to_string();
        assert!(err.contains("racks (74)") && err.contains("msbs (15)"), "{err}");
        let mut cfg = table1();
        cfg.msbs = 16;
        cfg.racks = 80;
        let err = build_region(&cfg).unwrap_err().to_string();
        assert!(err.contains("msbs (16)") && err.contains("datacenters (3)"), "{err}");
    }

    #[test]
    fn partitions_cover_servers_once() {
        let topo = build_region(&table1()).unwrap();
        for scope in [Scope::Rack, Scope::Msb, Scope::Dc] {
            let cells = match scope {
                Scope::Rack => topo.num_racks(),
                Scope::Msb => topo.num_msbs(),
                Scope::Dc => topo.num_dcs(),
            };
            let mut seen = vec![0u32; topo.num_servers()];
            for c in 0..cells {
                let ids = topo.servers_in(scope, c, None).unwrap();
                assert!(ids.windows(2).all(|w| w[0] < w[1]));
                for b in ids {
                    seen[b as usize] += 1;
                }
            }
            assert!(seen.iter().all(|&n| n == 1), "{scope:?}");
        }
        // racks of each MSB partition the rack set and agree with server membership
        let mut rack_seen = vec![0; topo.num_racks()];
        for f in 0..topo.num_msbs() {
            for &k in topo.msb_racks(f) {
                rack_seen[k] += 1;
                for &b in topo.rack_servers(k) {
                    assert_eq!(topo.server(b).msb, f);
                    assert_eq!(topo.server(b).dc, topo.msb_dc(f));
                }
            }
        }
        assert!(rack_seen.iter().all(|&n| n == 1));
    }

    #[test]
    fn servers_in_filters_and_checks_range() {
        let topo = build_region(&table1()).unwrap();
        let n = topo.servers_in(Scope::Rack, 0, None).unwrap().len();
        assert!(n == 13 || n == 14);
        let dc_type4 = topo.servers_in(Scope::Dc, 0, Some(4)).unwrap();
        assert!((99..=101).contains(&dc_type4.len()), "{}", dc_type4.len());
        assert!(dc_type4.iter().all(|&b| topo.server(b).type_id == 4));
        assert!(matches!(
            topo.servers_in(Scope::Msb, 15, None),
            Err(Error::Argument(_))
        ));
        assert!(topo.servers_in(Scope::Rack, 0, Some(10)).is_err());
    }

    #[test]
    fn every_type_reaches_every_msb_when_large_enough() {
        let topo = build_region(&table1()).unwrap();
        for e in 0..topo.num_types() {
            let present = (0..15).filter(|&f| topo.msb_type_capacity(e, f) > 0).count();
            assert_eq!(present, 15, "type {e}");
        }
    }

    #[test]
    fn build_is_deterministic() {
        let a = build_region(&table1()).unwrap().dump();
        let b = build_region(&table1()).unwrap().dump();
        assert_eq!(a, b);
        assert!(a.starts_with("region dcs=3 msbs=15 racks=75 servers=1000"));
    }
}
