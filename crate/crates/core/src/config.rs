//! Experiment configuration: a sectioned TOML file carrying every region,
//! objective, workload, converter and learner parameter.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::converter::ConverterParams;
use crate::error::{Error, Result};
use crate::exact::Frac;
use crate::objective::CostWeights;
use crate::rl::RlConfig;
use crate::topology::{RegionConfig, ServerTypeSpec};
use crate::workload::ComboSpec;

/// The bundled reference configuration (the 1000-server, 10-type region).
pub const REFERENCE_CONFIG: &str = include_str!("../configs/reference.toml");

/// A 200-server, 2-type region used for quick training runs.
pub const REDUCED_CONFIG: &str = include_str!("../configs/reduced.toml");

const REQUIRED: &[(&str, &[&str])] = &[
    (
        "region",
        &[
            "datacenters",
            "msbs",
            "racks",
            "reservations",
            "servers",
            "types",
            "server_rru",
            "horizon",
            "movement_cost",
        ],
    ),
    (
        "objective",
        &["alpha_msb", "alpha_rack", "kappa", "beta", "theta", "affinity"],
    ),
    ("server_types", &[]),
    ("combos", &[]),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    pub datacenters: u32,
    pub msbs: u32,
    pub racks: u32,
    pub reservations: u32,
    pub servers: u32,
    pub types: u32,
    /// RRU of every server (U_b).
    pub server_rru: u32,
    /// Slots per episode (T).
    pub horizon: u32,
    /// Movement cost of every server (M_b).
    pub movement_cost: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    pub alpha_msb: Frac,
    pub alpha_rack: Frac,
    pub kappa: Frac,
    pub beta: Frac,
    pub theta: Frac,
    /// Uniform datacenter preference A_{d,l,e}.
    pub affinity: Frac,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadSection {
    /// Look-ahead window h for the arriving/expiring demand summaries.
    pub lookahead: u32,
}

impl Default for WorkloadSection {
    fn default() -> Self {
        WorkloadSection { lookahead: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub episodes: u32,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            episodes: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub region: RegionSection,
    pub objective: ObjectiveSection,
    #[serde(default)]
    pub workload: WorkloadSection,
    #[serde(default)]
    pub converter: ConverterParams,
    #[serde(default)]
    pub rl: RlConfig,
    #[serde(default)]
    pub run: RunSection,
    pub server_types: Vec<ServerTypeSpec>,
    pub combos: Vec<ComboSpec>,
}

impl ExperimentConfig {
    pub fn reference() -> Self {
        Self::from_toml_str(REFERENCE_CONFIG).expect("bundled reference config is valid")
    }

    pub fn reduced() -> Self {
        Self::from_toml_str(REDUCED_CONFIG).expect("bundled reduced config is valid")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        check_required(&value)?;
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            Error::Config(match e.span() {
                Some(span) => {
                    let line = text[..span.start].matches('\n').count() + 1;
                    format!("line {line}: {message}")
                }
                None => message,
            })
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn region_config(&self) -> RegionConfig {
        RegionConfig {
            datacenters: self.region.datacenters,
            msbs: self.region.msbs,
            racks: self.region.racks,
            reservations: self.region.reservations,
            server_rru: self.region.server_rru,
            movement_cost: self.region.movement_cost,
            server_types: self.server_types.clone(),
        }
    }

    pub fn cost_weights(&self) -> CostWeights {
        let o = &self.objective;
        CostWeights::uniform_affinity(
            o.beta,
            o.kappa,
            o.theta,
            o.alpha_rack,
            o.alpha_msb,
            o.affinity,
            self.region.datacenters as usize,
            self.region.reservations as usize,
            self.region.types as usize,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.region;
        if r.types as usize != self.server_types.len() {
            return Err(Error::Config(format!(
                "region.types = {} but {} [[server_types]] rows are given",
                r.types,
                self.server_types.len()
            )));
        }
        let total: u64 = self.server_types.iter().map(|s| s.count as u64).sum();
        if total != r.servers as u64 {
            return Err(Error::Config(format!(
                "server_types counts sum to {total} but region.servers = {}",
                r.servers
            )));
        }
        for (i, spec) in self.server_types.iter().enumerate() {
            if spec.id as usize != i {
                return Err(Error::Config(format!(
                    "server_types[{i}].id = {} (ids must be 0..{} in order)",
                    spec.id, r.types
                )));
            }
            if spec.combo >= self.combos.len() {
                return Err(Error::Config(format!(
                    "server_types[{i}].combo = {} but only {} combos exist",
                    spec.combo,
                    self.combos.len()
                )));
            }
            if !(spec.arrival_rate >= 0.0 && spec.arrival_rate.is_finite()) {
                return Err(Error::Config(format!(
                    "server_types[{i}].arrival_rate must be a finite non-negative number"
                )));
            }
        }
        for (i, combo) in self.combos.iter().enumerate() {
            combo
                .validate()
                .map_err(|m| Error::Config(format!("combos[{i}]: {m}")))?;
        }
        if r.reservations == 0 {
            return Err(Error::Config("region.reservations must be >= 1".into()));
        }
        if r.server_rru == 0 {
            return Err(Error::Config("region.server_rru must be > 0".into()));
        }
        let o = &self.objective;
        for (name, a) in [("alpha_rack", o.alpha_rack), ("alpha_msb", o.alpha_msb)] {
            if a.numer() <= 0 || a.numer() > a.denom() {
                return Err(Error::Config(format!(
                    "objective.{name} = {a} must lie in (0, 1]"
                )));
            }
        }
        if o.theta.numer() < 0 {
            return Err(Error::Config("objective.theta must be >= 0".into()));
        }
        self.converter.validate()?;
        self.rl.validate()?;
        // Hierarchy divisibility is checked by topology construction.
        crate::topology::check_hierarchy(&self.region_config())?;
        Ok(())
    }
}

fn check_required(table: &toml::Table) -> Result<()> {
    let mut missing = Vec::new();
    for (section, keys) in REQUIRED {
        match table.get(*section) {
            None => {
                missing.push(section.to_string());
                missing.extend(keys.iter().map(|k| format!("{section}.{k}")));
            }
            Some(toml::Value::Table(t)) => {
                missing.extend(
                    keys.iter()
                        .filter(|k| !t.contains_key(**k))
                        .map(|k| format!("{section}.{k}")),
                );
            }
            Some(_) => {}
        }
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "missing required keys: {}",
            missing.join(", ")
        )))
    }
}
