//! Training loop: per type, per slot, per reservation the agent acts, the
//! slot is allocated and scored, and per-reservation rewards are stored.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::agent::AgentPolicy;
use super::config::{CurriculumParams, RlConfig, TrainMode};
use super::ppo::{Agent, PpoParams, Transition};
use super::reward::{reward, STAGES};
use super::state::{build_state, state_dim};
use crate::engine::{Scenario, TypeEnv};
use crate::error::{Error, Result};
use crate::exact::exact_to_f64;
use crate::policies::PolicyOutput;
use crate::topology::TypeId;

/// Trace seeds used in training start here, away from evaluation seeds.
const TRAIN_SEED_OFFSET: u64 = 1 << 32;
/// Held-out seeds for snapshot selection.
const VALIDATION_SEED_OFFSET: u64 = 1 << 33;

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub type_id: TypeId,
    pub episode: u32,
    pub stage: usize,
    /// Sum of the episode's rewards under the active terms.
    pub reward: f64,
    /// Sum over slots of the type's utility.
    pub objective: f64,
    pub violations: u32,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub policy: AgentPolicy,
    pub curves: Vec<CurvePoint>,
}

/// Tracks the active stage; advances when the moving average stops moving.
#[derive(Debug, Clone)]
pub struct Curriculum {
    params: CurriculumParams,
    stage: usize,
    rewards: Vec<f64>,
}

impl Curriculum {
    pub fn new(params: &CurriculumParams) -> Self {
        Curriculum {
            params: params.clone(),
            stage: if params.enabled { 1 } else { STAGES },
            rewards: Vec::new(),
        }
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    /// Records an episode reward; returns true when the stage advanced.
    pub fn observe(&mut self, episode_reward: f64) -> bool {
        if self.stage >= STAGES {
            return false;
        }
        self.rewards.push(episode_reward);
        let p = &self.params;
        let n = self.rewards.len();
        let timed_out = p.max_stage_episodes > 0 && n >= p.max_stage_episodes;
        let plateau = n >= p.window + p.lag && {
            let ma = |end: usize| self.rewards[end - p.window..end].iter().sum::<f64>() / p.window as f64;
            let (now, before) = (ma(n), ma(n - p.lag));
            (now - before).abs() < p.threshold * before.abs()
        };
        if timed_out || plateau {
            self.stage += 1;
            self.rewards.clear();
            true
        } else {
            false
        }
    }
}

fn ppo_params(rl: &RlConfig) -> PpoParams {
    PpoParams {
        clip: rl.clip,
        gamma: rl.reward.gamma,
        lambda: rl.gae_lambda,
        epochs: rl.epochs,
        minibatch: rl.minibatch,
        max_grad_norm: rl.max_grad_norm,
        entropy_coef: rl.entropy_coef,
    }
}

fn new_agent(scenario: &Scenario, rl: &RlConfig, one_hot: Option<usize>, seed: u64, stream: u64) -> Agent {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let f = scenario.topo.num_msbs();
    Agent::new(
        state_dim(f, scenario.lookahead as usize, one_hot),
        f + 1,
        rl.hidden,
        rl.log_std_init,
        rl.learning_rate,
        &mut rng,
    )
}

/// Trains `agent` on type `e` for `rl.episodes` episodes.
pub fn train_type(
    agent: &mut Agent,
    scenario: &Scenario,
    e: TypeId,
    rl: &RlConfig,
    seed: u64,
    one_hot: Option<usize>,
) -> Result<Vec<CurvePoint>> {
    let topo = &scenario.topo;
    let l_n = topo.num_reservations();
    let idle = PolicyOutput::Raw(vec![0.0; topo.num_msbs() + 1]);
    let params = ppo_params(rl);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(e as u64 + 1);
    let mut curriculum = Curriculum::new(&rl.curriculum);
    let mut buffer: Vec<Transition> = Vec::new();
    let mut curves = Vec::with_capacity(rl.episodes as usize);
    let mut best: Option<((u64, f64), Agent)> = None;

    for ep in 0..rl.episodes {
        let trace = scenario.trace(seed.wrapping_add(TRAIN_SEED_OFFSET).wrapping_add(ep as u64));
        let index = scenario.index(&trace);
        let mut env = TypeEnv::new(scenario, &index, e);
        let stage = curriculum.stage();
        let start = buffer.len();
        let (mut ep_reward, mut objective, mut violations) = (0.0, 0.0, 0u32);
        for t in 1..=scenario.horizon {
            env.begin_slot(t);
            let mut pending = Vec::new();
            for l in 0..l_n {
                if rl.skip_idle && env.demand(l) == 0 {
                    env.apply(l, &idle)?;
                    continue;
                }
                let state = build_state(&env.context(l), one_hot);
                let act = agent.act(&state, false, &mut rng);
                env.apply(l, &PolicyOutput::Raw(act.action.clone()))?;
                pending.push((l, state, act));
            }
            let outcome = env.finish_slot()?;
            objective += exact_to_f64(&outcome.metrics.utility);
            violations += outcome.metrics.g2_violations + outcome.metrics.g3_violations;
            for (l, state, act) in pending {
                let r = reward(outcome.o1 as f64, &outcome.terms[l], &rl.reward, stage);
                ep_reward += r;
                buffer.push(Transition {
                    state,
                    action: act.action,
                    log_prob: act.log_prob,
                    value: act.value,
                    reward: r / rl.reward_scale,
                    done: false,
                });
            }
        }
        if buffer.len() > start {
            buffer.last_mut().unwrap().done = true;
        }
        curves.push(CurvePoint {
            type_id: e,
            episode: ep,
            stage,
            reward: ep_reward,
            objective,
            violations,
        });
        curriculum.observe(ep_reward);
        if (ep + 1) % rl.update_every == 0 || ep + 1 == rl.episodes {
            agent.update(&buffer, &params, &mut rng)?;
            buffer.clear();
        }
        let last = ep + 1 == rl.episodes;
        if rl.validation_every > 0
            && curriculum.stage() == STAGES
            && ((ep + 1) % rl.validation_every == 0 || last)
        {
            let score = validate(agent, scenario, e, rl, seed, one_hot)?;
            if best.as_ref().map_or(true, |(b, _)| score < *b) {
                best = Some((score, agent.clone()));
            }
        }
    }
    if let Some((_, snapshot)) = best {
        *agent = snapshot;
    }
    Ok(curves)
}

/// (violations, objective) of the deterministic policy over the held-out episodes.
fn validate(
    agent: &Agent,
    scenario: &Scenario,
    e: TypeId,
    rl: &RlConfig,
    seed: u64,
    one_hot: Option<usize>,
) -> Result<(u64, f64)> {
    let (mut violations, mut objective) = (0u64, 0.0);
    for i in 0..rl.validation_episodes as u64 {
        let trace = scenario.trace(seed.wrapping_add(VALIDATION_SEED_OFFSET).wrapping_add(i));
        let index = scenario.index(&trace);
        let mut env = TypeEnv::new(scenario, &index, e);
        for t in 1..=scenario.horizon {
            env.begin_slot(t);
            for l in 0..scenario.topo.num_reservations() {
                let state = build_state(&env.context(l), one_hot);
                env.apply(l, &PolicyOutput::Raw(agent.mean(&state)))?;
            }
            let m = env.finish_slot()?.metrics;
            violations += (m.g2_violations + m.g3_violations) as u64;
            objective += exact_to_f64(&m.utility);
        }
    }
    Ok((violations, objective))
}

/// Trains in the configured mode.
pub fn train(scenario: &Scenario, rl: &RlConfig, seed: u64) -> Result<TrainOutput> {
    match rl.mode {
        TrainMode::Single => train_single(scenario, rl, seed),
        TrainMode::Parallel => train_parallel(scenario, rl, seed, true),
    }
}

/// One shared agent, trained on each type in turn.
pub fn train_single(scenario: &Scenario, rl: &RlConfig, seed: u64) -> Result<TrainOutput> {
    let types = scenario.topo.num_types();
    let mut agent = new_agent(scenario, rl, Some(types), seed, 0);
    let mut curves = Vec::new();
    for e in 0..types {
        curves.extend(train_type(&mut agent, scenario, e, rl, seed, Some(types))?);
    }
    Ok(TrainOutput {
        policy: policy_from(scenario, TrainMode::Single, vec![agent]),
        curves,
    })
}

/// One independent agent per type; `concurrent` runs the trainers on the
/// thread pool, otherwise one after another. Both give identical agents.
pub fn train_parallel(scenario: &Scenario, rl: &RlConfig, seed: u64, concurrent: bool) -> Result<TrainOutput> {
    let run = |e: TypeId| -> Result<(Agent, Vec<CurvePoint>)> {
        let mut agent = new_agent(scenario, rl, None, seed, e as u64 + 1);
        let curves = train_type(&mut agent, scenario, e, rl, seed, None)?;
        Ok((agent, curves))
    };
    let types: Vec<TypeId> = (0..scenario.topo.num_types()).collect();
    let results: Vec<(Agent, Vec<CurvePoint>)> = if concurrent {
        types.par_iter().map(|&e| run(e)).collect::<Result<_>>()?
    } else {
        types.iter().map(|&e| run(e)).collect::<Result<_>>()?
    };
    let (agents, curves): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(TrainOutput {
        policy: policy_from(scenario, TrainMode::Parallel, agents),
        curves: curves.into_iter().flatten().collect(),
    })
}

fn policy_from(scenario: &Scenario, mode: TrainMode, agents: Vec<Agent>) -> AgentPolicy {
    AgentPolicy {
        mode,
        num_msbs: scenario.topo.num_msbs(),
        num_types: scenario.topo.num_types(),
        lookahead: scenario.lookahead,
        agents,
    }
}

/// An untrained policy, as produced by zero training episodes.
pub fn untrained(scenario: &Scenario, rl: &RlConfig, seed: u64) -> AgentPolicy {
    let types = scenario.topo.num_types();
    match rl.mode {
        TrainMode::Single => policy_from(scenario, TrainMode::Single, vec![new_agent(scenario, rl, Some(types), seed, 0)]),
        TrainMode::Parallel => policy_from(
            scenario,
            TrainMode::Parallel,
            (0..types).map(|e| new_agent(scenario, rl, None, seed, e as u64 + 1)).collect(),
        ),
    }
}

/// Moving average over `window` trailing points, one value per full window.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || values.len() < window {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(values.len() - window + 1);
    let mut sum: f64 = values[..window].iter().sum();
    out.push(sum / window as f64);
    for i in window..values.len() {
        sum += values[i] - values[i - window];
        out.push(sum / window as f64);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stabilization {
    pub mean: f64,
    pub std: f64,
    pub stable: bool,
}

/// Whether the last `tail` points of the `window`-episode moving average
/// have a standard deviation under `tolerance` times their absolute mean.
pub fn stabilization(rewards: &[f64], window: usize, tail: usize, tolerance: f64) -> Option<Stabilization> {
    let ma = moving_average(rewards, window);
    if ma.len() < tail || tail == 0 {
        return None;
    }
    let last = &ma[ma.len() - tail..];
    let mean = last.iter().sum::<f64>() / tail as f64;
    let std = (last.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / tail as f64).sqrt();
    Some(Stabilization {
        mean,
        std,
        stable: std < tolerance * mean.abs(),
    })
}

pub fn write_curves_csv(path: impl AsRef<Path>, curves: &[CurvePoint]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| Error::Config(format!("{}: {e}", path.display()));
    w.write_record(["server_type", "episode", "stage", "reward", "objective", "violations"])
        .map_err(io)?;
    for c in curves {
        w.write_record([
            c.type_id.to_string(),
            c.episode.to_string(),
            c.stage.to_string(),
            c.reward.to_string(),
            c.objective.to_string(),
            c.violations.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let _ = std::io::sink().flush();
    Ok(())
}
