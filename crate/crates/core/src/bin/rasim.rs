use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rasim::engine::{evaluate, run_episode, EvaluationReport, Scenario, empirical_cdf};
use rasim::metrics::{emit_metrics, sweep_movement_cost, SWEEP_EPISODES, SWEEP_GRID};
use rasim::oracle::compare_with_pipeline;
use rasim::policies::{Policy, ProportionalPolicy, RandomPolicy, UniformPolicy};
use rasim::rl::{self, AgentPolicy, TrainMode};
use rasim::{Error, ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "rasim", version, about = "Region-scale server-to-reservation allocation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its metrics.
    Simulate(Common),
    /// Train the agent and write a checkpoint plus learning curves.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Run several episodes and write per-step, per-episode and CDF files.
    Evaluate(Common),
    /// Compare the pipeline with the exhaustive oracle on random tiny instances.
    OracleCheck(Common),
    /// Evaluate the policy over a grid of movement costs.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated movement costs.
        #[arg(long, value_delimiter = ',', default_values_t = SWEEP_GRID.to_vec())]
        values: Vec<u32>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML); the bundled reference config when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PolicyArg::Uniform)]
    policy: PolicyArg,
    /// Agent checkpoint, required by `--policy agent` and written by `train`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<u32>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Random,
    Uniform,
    Proportional,
    Agent,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Single,
    Parallel,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        match &self.config {
            Some(p) => ExperimentConfig::from_path(p),
            None => Ok(ExperimentConfig::reference()),
        }
    }

    fn policy(&self, scenario: &Scenario, seed: u64) -> Result<Box<dyn Policy>> {
        Ok(match self.policy {
            PolicyArg::Random => Box::new(RandomPolicy::new(seed)),
            PolicyArg::Uniform => Box::new(UniformPolicy),
            PolicyArg::Proportional => Box::new(ProportionalPolicy),
            PolicyArg::Agent => {
                let path = self
                    .checkpoint
                    .as_ref()
                    .ok_or_else(|| Error::Argument("--policy agent needs --checkpoint".into()))?;
                let agent = AgentPolicy::load(path, &scenario.topo)?;
                agent.check_compatible(&scenario.topo, scenario.lookahead)?;
                Box::new(agent)
            }
        })
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out_dir).map_err(|e| Error::Io { path: self.out_dir.clone(), source: e })?;
        Ok(&self.out_dir)
    }
}

fn simulate(c: &Common) -> Result<()> {
    let cfg = c.config()?;
    let seed = c.seed.unwrap_or(cfg.run.seed);
    let scenario = Scenario::from_config(&cfg)?;
    let mut policy = c.policy(&scenario, seed)?;
    let report = run_episode(&scenario, policy.as_mut(), seed)?;
    let total = report.total_utility();
    let eval = EvaluationReport {
        policy: report.policy.clone(),
        cdf: empirical_cdf(&[total]),
        episodes: vec![report],
    };
    let files = emit_metrics(c.out_dir()?, &eval.policy, &eval)?;
    let t = &eval.episodes[0].totals;
    println!(
        "policy={} seed={} utility={} g2_violations={} g3_violations={} double_assignments={} steps_csv={}",
        eval.policy,
        seed,
        total,
        t.g2_violations,
        t.g3_violations,
        t.double_assignments,
        files.steps.display()
    );
    Ok(())
}

fn train(c: &Common, mode: Option<ModeArg>) -> Result<()> {
    let mut cfg = c.config()?;
    if let Some(m) = mode {
        cfg.rl.mode = match m {
            ModeArg::Single => TrainMode::Single,
            ModeArg::Parallel => TrainMode::Parallel,
        };
    }
    if let Some(n) = c.episodes {
        cfg.rl.episodes = n;
    }
    let seed = c.seed.unwrap_or(cfg.run.seed);
    let scenario = Scenario::from_config(&cfg)?;
    let out = rl::train(&scenario, &cfg.rl, seed)?;
    let dir = c.out_dir()?;
    let checkpoint = c.checkpoint.clone().unwrap_or_else(|| dir.join("agent.json"));
    out.policy.save(&checkpoint, &scenario.topo)?;
    let curves = dir.join("curves.csv");
    rl::train::write_curves_csv(&curves, &out.curves)?;
    println!(
        "episodes={} checkpoint={} curves={}",
        cfg.rl.episodes,
        checkpoint.display(),
        curves.display()
    );
    Ok(())
}

fn run_evaluate(c: &Common) -> Result<()> {
    let cfg = c.config()?;
    let seed = c.seed.unwrap_or(cfg.run.seed);
    let episodes = c.episodes.unwrap_or(cfg.run.episodes);
    let scenario = Scenario::from_config(&cfg)?;
    let policy = c.policy(&scenario, seed)?;
    let report = evaluate(&scenario, policy.as_ref(), episodes, seed)?;
    let files = emit_metrics(c.out_dir()?, &report.policy, &report)?;
    let violations: u64 = report.episodes.iter().map(|r| r.totals.violations()).sum();
    println!(
        "policy={} episodes={} median_utility={} violations={} cdf_csv={}",
        report.policy,
        episodes,
        report.median_utility(),
        violations,
        files.cdf.display()
    );
    Ok(())
}

fn oracle_check(c: &Common) -> Result<()> {
    let seed = c.seed.unwrap_or(0);
    let n = c.episodes.unwrap_or(50);
    let mut rows = String::from("seed,oracle_utility,oracle_feasible,relaxed_utility,pipeline_utility,pipeline_feasible,dominates,consistent\n");
    let mut failures = 0;
    for s in seed..seed + n as u64 {
        let mut policy: Box<dyn Policy> = match c.policy {
            PolicyArg::Random => Box::new(RandomPolicy::new(s)),
            PolicyArg::Uniform => Box::new(UniformPolicy),
            PolicyArg::Proportional => Box::new(ProportionalPolicy),
            PolicyArg::Agent => {
                return Err(Error::Argument("oracle-check instances are too small for a trained agent".into()))
            }
        };
        let cmp = compare_with_pipeline(s, policy.as_mut())?;
        let ok = cmp.dominates() && cmp.consistent();
        failures += !ok as u32;
        rows.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s,
            cmp.oracle.utility(),
            cmp.oracle.feasible,
            cmp.oracle.relaxed_utility,
            cmp.pipeline_utility,
            cmp.pipeline_feasible,
            cmp.dominates(),
            cmp.consistent()
        ));
    }
    let path = c.out_dir()?.join("oracle_check.csv");
    fs::write(&path, rows).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    println!("instances={n} failures={failures} csv={}", path.display());
    if failures > 0 {
        return Err(Error::Contract(format!("{failures} instance(s) beat the oracle or disagreed with the evaluator")));
    }
    Ok(())
}

fn sweep(c: &Common, values: &[u32]) -> Result<()> {
    let cfg = c.config()?;
    let seed = c.seed.unwrap_or(cfg.run.seed);
    let scenario = Scenario::from_config(&cfg)?;
    let policy = c.policy(&scenario, seed)?;
    let episodes = c.episodes.unwrap_or(SWEEP_EPISODES);
    let report = sweep_movement_cost(&cfg, values, policy.as_ref(), episodes, seed)?;
    let path = c.out_dir()?.join(format!("{}_sweep.csv", report.policy));
    report.write_csv(&path)?;
    for r in &report.rows {
        println!(
            "movement_cost={} median_utility={} median_moves={} median_spread={} median_redundancy={}",
            r.movement_cost, r.median_utility, r.median_moves, r.median_spread, r.median_redundancy
        );
    }
    println!("moves_non_increasing={} csv={}", report.moves_non_increasing(), path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Train { common, mode } => train(common, *mode),
        Command::Evaluate(c) => run_evaluate(c),
        Command::OracleCheck(c) => oracle_check(c),
        Command::Sweep { common, values } => sweep(common, values),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error kind={} message={:?}", e.kind(), msg);
            ExitCode::from(1)
        }
    }
}
