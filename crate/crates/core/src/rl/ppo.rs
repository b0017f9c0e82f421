//! Gaussian actor-critic and the clipped-surrogate update.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::net::{clip_grad_norm, Adam, Mlp};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Policy and value networks with their optimizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub actor: Mlp,
    /// State-independent log standard deviation per action dimension.
    pub log_std: Vec<f64>,
    pub critic: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActOutput {
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
}

/// One policy-gradient sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub old_log_prob: f64,
    pub advantage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoParams {
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub max_grad_norm: f64,
    pub entropy_coef: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub surrogate: f64,
    pub kl: f64,
    pub value_loss: f64,
}

pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, s), a)| {
            let z = (a - m) / s.exp();
            -0.5 * z * z - s - 0.5 * LN_2PI
        })
        .sum()
}

impl Agent {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        hidden: usize,
        log_std_init: f64,
        lr: f64,
        rng: &mut impl Rng,
    ) -> Self {
        Self::with_sizes(
            &[state_dim, hidden, hidden, action_dim],
            &[state_dim, hidden, hidden, 1],
            log_std_init,
            lr,
            rng,
        )
    }

    /// Arbitrary layer widths; the actor's last width is the action dimension.
    pub fn with_sizes(
        actor_sizes: &[usize],
        critic_sizes: &[usize],
        log_std_init: f64,
        lr: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let action_dim = *actor_sizes.last().expect("at least one layer");
        let actor = Mlp::new(actor_sizes, 0.01, rng);
        let critic = Mlp::new(critic_sizes, 1.0, rng);
        let actor_opt = Adam::new(actor.params.len() + action_dim, lr);
        let critic_opt = Adam::new(critic.params.len(), lr);
        Agent {
            actor,
            log_std: vec![log_std_init; action_dim],
            critic,
            actor_opt,
            critic_opt,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn mean(&self, state: &[f64]) -> Vec<f64> {
        self.actor.forward(state)
    }

    pub fn value(&self, state: &[f64]) -> f64 {
        self.critic.forward(state)[0]
    }

    pub fn log_prob(&self, state: &[f64], action: &[f64]) -> f64 {
        gaussian_log_prob(&self.mean(state), &self.log_std, action)
    }

    /// Samples from the policy, or returns its mean when `deterministic`.
    pub fn act(&self, state: &[f64], deterministic: bool, rng: &mut impl Rng) -> ActOutput {
        let mean = self.mean(state);
        let action: Vec<f64> = if deterministic {
            mean.clone()
        } else {
            mean.iter()
                .zip(&self.log_std)
                .map(|(m, s)| m + s.exp() * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        ActOutput {
            log_prob: gaussian_log_prob(&mean, &self.log_std, &action),
            value: self.value(state),
            action,
        }
    }

    /// The clipped surrogate (to be maximized) and its gradient with respect
    /// to the actor parameters followed by the log-std entries.
    pub fn surrogate_grad(&self, samples: &[Sample], clip: f64) -> (f64, Vec<f64>) {
        let n_actor = self.actor.params.len();
        let mut grad = vec![0.0; n_actor + self.log_std.len()];
        let inv_n = 1.0 / samples.len() as f64;
        let mut total = 0.0;
        let mut dmean = vec![0.0; self.log_std.len()];
        for s in samples {
            let (mean, cache) = self.actor.forward_cached(&s.state);
            let logp = gaussian_log_prob(&mean, &self.log_std, &s.action);
            let ratio = (logp - s.old_log_prob).exp();
            let unclipped = ratio * s.advantage;
            let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * s.advantage;
            total += unclipped.min(clipped) * inv_n;
            // the min picks the unclipped branch unless the ratio left the
            // trust region in the direction the advantage favours
            let active = if s.advantage >= 0.0 { ratio < 1.0 + clip } else { ratio > 1.0 - clip };
            if !active || s.advantage == 0.0 {
                continue;
            }
            let dlogp = s.advantage * ratio * inv_n;
            for j in 0..dmean.len() {
                let var = (2.0 * self.log_std[j]).exp();
                let diff = s.action[j] - mean[j];
                dmean[j] = dlogp * diff / var;
                grad[n_actor + j] += dlogp * (diff * diff / var - 1.0);
            }
            self.actor.backward(&cache, &dmean, &mut grad[..n_actor]);
        }
        (total, grad)
    }

    pub fn surrogate(&self, samples: &[Sample], clip: f64) -> f64 {
        let inv_n = 1.0 / samples.len() as f64;
        samples
            .iter()
            .map(|s| {
                let ratio = (self.log_prob(&s.state, &s.action) - s.old_log_prob).exp();
                (ratio * s.advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * s.advantage) * inv_n
            })
            .sum()
    }

    /// Runs the configured epochs of minibatch updates over `transitions`.
    pub fn update(
        &mut self,
        transitions: &[Transition],
        params: &PpoParams,
        rng: &mut impl Rng,
    ) -> Result<UpdateStats> {
        if transitions.is_empty() {
            return Ok(UpdateStats::default());
        }
        let rewards: Vec<f64> = transitions.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = transitions.iter().map(|t| t.value).collect();
        let dones: Vec<bool> = transitions.iter().map(|t| t.done).collect();
        let (adv, returns) = gae(&rewards, &values, &dones, params.gamma, params.lambda);
        let adv = normalize(&adv);
        let samples: Vec<Sample> = transitions
            .iter()
            .zip(&adv)
            .map(|(t, &a)| Sample {
                state: t.state.clone(),
                action: t.action.clone(),
                old_log_prob: t.log_prob,
                advantage: a,
            })
            .collect();

        let n_actor = self.actor.params.len();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut stats = UpdateStats::default();
        let mut batches = 0usize;
        for _ in 0..params.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(params.minibatch) {
                let batch: Vec<Sample> = chunk.iter().map(|&i| samples[i].clone()).collect();
                let (surr, mut grad) = self.surrogate_grad(&batch, params.clip);
                let inv_n = 1.0 / batch.len() as f64;
                let kl: f64 = batch
                    .iter()
                    .map(|s| (s.old_log_prob - self.log_prob(&s.state, &s.action)) * inv_n)
                    .sum();

                let mut vgrad = vec![0.0; self.critic.params.len()];
                let mut vloss = 0.0;
                for &i in chunk {
                    let (v, cache) = self.critic.forward_cached(&samples[i].state);
                    let err = v[0] - returns[i];
                    vloss += 0.5 * err * err * inv_n;
                    self.critic.backward(&cache, &[err * inv_n], &mut vgrad);
                }
                if !(surr.is_finite() && vloss.is_finite() && grad.iter().chain(&vgrad).all(|g| g.is_finite())) {
                    return Err(Error::Diverged(format!(
                        "non-finite loss (surrogate {surr}, value {vloss})"
                    )));
                }
                // ascent on the surrogate and the entropy bonus
                for g in grad.iter_mut() {
                    *g = -*g;
                }
                for g in grad[n_actor..].iter_mut() {
                    *g -= params.entropy_coef;
                }
                clip_grad_norm(&mut grad, params.max_grad_norm);
                clip_grad_norm(&mut vgrad, params.max_grad_norm);
                let mut flat = self.actor.params.clone();
                flat.extend_from_slice(&self.log_std);
                self.actor_opt.step(&mut flat, &grad);
                self.log_std.copy_from_slice(&flat[n_actor..]);
                flat.truncate(n_actor);
                self.actor.params = flat;
                self.critic_opt.step(&mut self.critic.params, &vgrad);

                stats.surrogate += surr;
                stats.kl += kl;
                stats.value_loss += vloss;
                batches += 1;
            }
        }
        let b = batches.max(1) as f64;
        Ok(UpdateStats {
            surrogate: stats.surrogate / b,
            kl: stats.kl / b,
            value_loss: stats.value_loss / b,
        })
    }
}

/// Generalized advantage estimates and the matching value targets. A
/// `done` transition bootstraps from zero.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for i in (0..n).rev() {
        let (next_value, carry) = if dones[i] || i + 1 == n {
            (0.0, 0.0)
        } else {
            (values[i + 1], running)
        };
        let delta = rewards[i] + gamma * next_value - values[i];
        running = delta + gamma * lambda * carry;
        adv[i] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

fn normalize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let std = (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    x.iter().map(|v| (v - mean) / (std + 1e-8)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::converter::softmax_fractions;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> PpoParams {
        PpoParams {
            clip: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            epochs: 10,
            minibatch: 64,
            max_grad_norm: 0.5,
            entropy_coef: 0.0,
        }
    }

    #[test]
    fn deterministic_act_is_repeatable() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let agent = Agent::new(6, 4, 16, -0.5, 3e-4, &mut rng);
        let s = [0.1, 0.2, -0.3, 0.0, 1.0, 0.5];
        let a = agent.act(&s, true, &mut rng);
        let b = agent.act(&s, true, &mut rng);
        assert_eq!(a, b);
        assert_eq!(a.action.len(), 4);
    }

    #[test]
    fn sampled_std_matches_log_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let agent = Agent::new(3, 3, 8, -0.5, 3e-4, &mut rng);
        let s = [0.4, -0.2, 0.9];
        let mean = agent.mean(&s);
        let n = 10_000;
        let mut sq = vec![0.0; 3];
        for _ in 0..n {
            let a = agent.act(&s, false, &mut rng);
            for j in 0..3 {
                sq[j] += (a.action[j] - mean[j]).powi(2);
            }
            let density = (-0.5 * a.action.iter().zip(&mean).map(|(x, m)| ((x - m) / (-0.5f64).exp()).powi(2)).sum::<f64>()).exp()
                / ((2.0 * std::f64::consts::PI).sqrt() * (-0.5f64).exp()).powi(3);
            assert!((a.log_prob.exp() - density).abs() <= 1e-9 * density.max(1.0));
        }
        for v in sq {
            let std = (v / n as f64).sqrt();
            assert!((std / (-0.5f64).exp() - 1.0).abs() < 0.1, "{std}");
        }
    }

    fn random_samples(agent: &Agent, rng: &mut ChaCha8Rng, n: usize) -> Vec<Sample> {
        (0..n)
            .map(|_| {
                let state: Vec<f64> = (0..agent.state_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let act = agent.act(&state, false, rng);
                Sample {
                    old_log_prob: act.log_prob + rng.gen_range(-0.3..0.3),
                    advantage: rng.gen_range(-2.0..2.0),
                    state,
                    action: act.action,
                }
            })
            .collect()
    }

    #[test]
    fn zero_advantage_gives_zero_policy_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let agent = Agent::new(4, 3, 8, -0.5, 3e-4, &mut rng);
        let mut samples = random_samples(&agent, &mut rng, 20);
        samples.iter_mut().for_each(|s| s.advantage = 0.0);
        let (_, grad) = agent.surrogate_grad(&samples, 0.2);
        assert!(grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn clipped_surrogate_never_exceeds_unclipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let agent = Agent::new(4, 3, 8, -0.5, 3e-4, &mut rng);
        for s in random_samples(&agent, &mut rng, 200) {
            let ratio = (agent.log_prob(&s.state, &s.action) - s.old_log_prob).exp();
            let clipped = agent.surrogate(std::slice::from_ref(&s), 0.2);
            assert!(clipped <= ratio * s.advantage + 1e-12);
        }
    }

    /// Max-norm relative error between the analytic surrogate gradient and
    /// central differences.
    pub(crate) fn gradient_relative_error(agent: &Agent, samples: &[Sample], clip: f64) -> f64 {
        let (_, grad) = agent.surrogate_grad(samples, clip);
        let n_actor = agent.actor.params.len();
        let h = 1e-6;
        let mut fd = vec![0.0; grad.len()];
        for i in 0..grad.len() {
            let shifted = |delta: f64| {
                let mut a = agent.clone();
                if i < n_actor {
                    a.actor.params[i] += delta;
                } else {
                    a.log_std[i - n_actor] += delta;
                }
                a.surrogate(samples, clip)
            };
            fd[i] = (shifted(h) - shifted(-h)) / (2.0 * h);
        }
        let diff = grad.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = grad.iter().chain(&fd).map(|v| v.abs()).fold(1e-12, f64::max);
        diff / scale
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let mut agent = Agent::with_sizes(&[1, 1, 1], &[1, 1], -0.5, 3e-4, &mut rng);
            agent.actor.params.iter_mut().for_each(|p| *p = rng.gen_range(-1.5..1.5));
            agent.log_std[0] = rng.gen_range(-1.0..0.5);
            let samples = random_samples(&agent, &mut rng, 16);
            let err = gradient_relative_error(&agent, &samples, 0.2);
            assert!(err <= 1e-4, "{err}");
        }
    }

    #[test]
    fn gae_hand_computed() {
        let (adv, ret) = gae(&[1.0, 1.0], &[0.5, 0.5], &[false, true], 0.9, 0.8);
        let d1 = 1.0 - 0.5;
        let d0 = 1.0 + 0.9 * 0.5 - 0.5;
        assert!((adv[1] - d1).abs() < 1e-12);
        assert!((adv[0] - (d0 + 0.9 * 0.8 * d1)).abs() < 1e-12);
        assert!((ret[0] - (adv[0] + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn one_step_bandit_learns_to_favour_msb_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut agent = Agent::new(2, 4, 16, -0.5, 1e-3, &mut rng);
        let state = [1.0, 0.5];
        let p = PpoParams { epochs: 4, ..params() };
        for _ in 0..200 {
            let batch: Vec<Transition> = (0..64)
                .map(|_| {
                    let a = agent.act(&state, false, &mut rng);
                    let reward = softmax_fractions(&a.action[..3], 1.0)[0];
                    Transition {
                        state: state.to_vec(),
                        action: a.action,
                        log_prob: a.log_prob,
                        value: a.value,
                        reward,
                        done: true,
                    }
                })
                .collect();
            agent.update(&batch, &p, &mut rng).unwrap();
        }
        let mean = agent.mean(&state);
        let f0 = softmax_fractions(&mean[..3], 1.0)[0];
        assert!(f0 > 0.9, "{f0}");
    }
}
