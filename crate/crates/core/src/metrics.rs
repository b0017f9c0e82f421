//! CSV output for episode reports and the movement-cost sweep.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::engine::{evaluate, median, EpisodeReport, EvaluationReport, Scenario};
use crate::exact::{exact_to_f64, Exact};
use crate::policies::Policy;
use crate::{Error, Result};

pub const STEP_COLUMNS: [&str; 11] = [
    "episode",
    "step",
    "server_type",
    "o1",
    "o2",
    "o3",
    "o4",
    "utility",
    "g2_violations",
    "g3_violations",
    "redundancy_slack_total",
];

pub const EPISODE_COLUMNS: [&str; 14] = [
    "episode",
    "seed",
    "policy",
    "total_utility",
    "o1",
    "o2",
    "o3",
    "o4",
    "g2_violations",
    "g3_violations",
    "double_assignments",
    "moved",
    "shortfall",
    "pretrim_g2_violations",
];

pub const CDF_COLUMNS: [&str; 2] = ["total_utility", "percentile"];

/// Paths written by [`emit_metrics`].
#[derive(Debug, Clone)]
pub struct MetricsFiles {
    pub steps: PathBuf,
    pub episodes: PathBuf,
    pub cdf: PathBuf,
}

// Shortest representation that parses back to the same f64.
fn num(x: &Exact) -> String {
    format!("{}", exact_to_f64(x))
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn write_steps_csv(path: &Path, reports: &[EpisodeReport]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(STEP_COLUMNS).map_err(|e| csv_err(path, e))?;
    for (ep, r) in reports.iter().enumerate() {
        for s in &r.steps {
            let m = &s.metrics;
            w.write_record([
                ep.to_string(),
                s.t.to_string(),
                s.type_id.to_string(),
                num(&m.o1),
                num(&m.o2),
                num(&m.o3),
                num(&m.o4),
                num(&m.utility),
                m.g2_violations.to_string(),
                m.g3_violations.to_string(),
                m.redundancy_slack_total().to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_episodes_csv(path: &Path, reports: &[EpisodeReport]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(EPISODE_COLUMNS).map_err(|e| csv_err(path, e))?;
    for (ep, r) in reports.iter().enumerate() {
        let t = &r.totals;
        w.write_record([
            ep.to_string(),
            r.seed.to_string(),
            r.policy.clone(),
            num(&t.utility),
            num(&t.o1),
            num(&t.o2),
            num(&t.o3),
            num(&t.o4),
            t.g2_violations.to_string(),
            t.g3_violations.to_string(),
            t.double_assignments.to_string(),
            t.moved.to_string(),
            t.shortfall.to_string(),
            t.pretrim_g2_violations.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_cdf_csv(path: &Path, cdf: &[(f64, f64)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(CDF_COLUMNS).map_err(|e| csv_err(path, e))?;
    for (v, p) in cdf {
        w.write_record([v.to_string(), p.to_string()]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `<prefix>_steps.csv`, `<prefix>_episodes.csv` and `<prefix>_cdf.csv` into `dir`.
pub fn emit_metrics(dir: &Path, prefix: &str, report: &EvaluationReport) -> Result<MetricsFiles> {
    if report.episodes.is_empty() {
        return Err(Error::Argument("cannot emit metrics for an empty report".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = MetricsFiles {
        steps: dir.join(format!("{prefix}_steps.csv")),
        episodes: dir.join(format!("{prefix}_episodes.csv")),
        cdf: dir.join(format!("{prefix}_cdf.csv")),
    };
    write_steps_csv(&files.steps, &report.episodes)?;
    write_episodes_csv(&files.episodes, &report.episodes)?;
    write_cdf_csv(&files.cdf, &report.cdf)?;
    Ok(files)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub movement_cost: u32,
    pub median_utility: f64,
    pub median_moves: f64,
    /// Rack plus MSB spread cost.
    pub median_spread: f64,
    /// Largest-MSB buffer cost.
    pub median_redundancy: f64,
    pub violations: u64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub policy: String,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// Whether median moves never increase along the grid. Reported, not enforced.
    pub fn moves_non_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].median_moves <= w[0].median_moves)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = String::from("movement_cost,median_utility,median_moves,median_spread,median_redundancy,violations\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.movement_cost, r.median_utility, r.median_moves, r.median_spread, r.median_redundancy, r.violations
            ));
        }
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

pub const SWEEP_EPISODES: u32 = 5;
pub const SWEEP_GRID: [u32; 4] = [5, 10, 25, 50];

/// Evaluates `policy` at each movement cost with `episodes` seeded episodes.
pub fn sweep_movement_cost(
    cfg: &ExperimentConfig,
    values: &[u32],
    policy: &dyn Policy,
    episodes: u32,
    base_seed: u64,
) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(Error::Argument("sweep needs at least one movement cost".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &m in values {
        let mut c = cfg.clone();
        c.region.movement_cost = m;
        let scenario = Scenario::from_config(&c)?;
        let report = evaluate(&scenario, policy, episodes, base_seed)?;
        let pick = |f: &dyn Fn(&EpisodeReport) -> f64| median(report.episodes.iter().map(f).collect());
        rows.push(SweepRow {
            movement_cost: m,
            median_utility: report.median_utility(),
            median_moves: pick(&|r| r.totals.moved as f64),
            median_spread: pick(&|r| exact_to_f64(&(r.totals.o2 + r.totals.o3))),
            median_redundancy: pick(&|r| exact_to_f64(&r.totals.o4)),
            violations: report.episodes.iter().map(|r| r.totals.violations()).sum(),
        });
    }
    Ok(SweepReport {
        policy: policy.name().to_string(),
        rows,
    })
}
