//! Ground-truth environment simulator.
//!
//! The hidden chain and the reward coin flips live on separate RNG substreams
//! (see [`crate::rng`]): replaying the same seed under two different policies
//! produces the same hidden state path, so policy comparisons are paired.
//!
//! ```
//! use regime_bandits::model::example_2x2;
//! use regime_bandits::rng::RunRng;
//! use regime_bandits::sim::{sample_trajectory, ArmSource};
//!
//! let model = example_2x2();
//! let rng = RunRng::new(9);
//! let a = sample_trajectory(&model, &ArmSource::Fixed(0), 2000, None, &rng).unwrap();
//! let b = sample_trajectory(&model, &ArmSource::Fixed(1), 2000, None, &rng).unwrap();
//! assert_eq!(a.states, b.states);   // same regime path
//! assert_ne!(a.rewards, b.rewards); // different payoffs
//! ```

use crate::error::ModelError;
use crate::model::{Belief, HmmBanditModel, Trajectory};
use crate::rng::{stream, RunRng};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// A live environment an agent interacts with step by step.
pub struct Environment {
    model: HmmBanditModel,
    state: usize,
    chain_rng: ChaCha12Rng,
    reward_rng: ChaCha12Rng,
    steps: usize,
}

impl Environment {
    /// Start an environment with the initial state drawn from `initial`.
    pub fn new(model: &HmmBanditModel, initial: &Belief, rng: &RunRng) -> Self {
        let mut chain_rng = rng.stream(stream::CHAIN);
        let state = sample_categorical(initial.components(), &mut chain_rng);
        Self {
            model: model.clone(),
            state,
            chain_rng,
            reward_rng: rng.stream(stream::REWARD),
            steps: 0,
        }
    }

    /// Start from the stationary distribution of the chain.
    pub fn from_stationary(model: &HmmBanditModel, rng: &RunRng) -> Result<Self, ModelError> {
        let omega = model.stationary_distribution()?;
        Ok(Self::new(model, &omega, rng))
    }

    /// Pull `arm`: returns the Bernoulli reward for the current hidden state,
    /// then advances the chain.
    pub fn step(&mut self, arm: usize) -> u8 {
        debug_assert!(arm < self.model.num_arms());
        let p1 = self.model.mean_rewards()[(self.state, arm)];
        let reward = u8::from(self.reward_rng.random::<f64>() < p1);
        let row = self.model.transition().row(self.state);
        self.state = sample_categorical_iter(row.iter().cloned(), &mut self.chain_rng);
        self.steps += 1;
        reward
    }

    /// Current hidden state. Diagnostics and the full-information reference
    /// policy only; learning agents must not call this.
    pub fn hidden_state(&self) -> usize {
        self.state
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn model(&self) -> &HmmBanditModel {
        &self.model
    }
}

/// How arms are chosen when sampling a trajectory offline.
#[derive(Debug, Clone)]
pub enum ArmSource {
    /// Pull the same arm every period.
    Fixed(usize),
    /// Pull uniformly at random (draws from the agent substream).
    Uniform,
    /// Follow a prescribed sequence; it must cover the horizon.
    Sequence(Vec<usize>),
}

/// Sample a trajectory of length `horizon` under the given arm source.
///
/// The initial hidden state comes from `initial` when given, otherwise from
/// the stationary distribution. Identical seeds give identical trajectories.
pub fn sample_trajectory(
    model: &HmmBanditModel,
    arm_source: &ArmSource,
    horizon: usize,
    initial: Option<&Belief>,
    rng: &RunRng,
) -> Result<Trajectory, ModelError> {
    if horizon == 0 {
        return Err(ModelError::EmptyHorizon);
    }
    if let ArmSource::Fixed(arm) = arm_source {
        if *arm >= model.num_arms() {
            return Err(ModelError::ArmOutOfRange {
                arm: *arm,
                num_arms: model.num_arms(),
            });
        }
    }
    if let ArmSource::Sequence(seq) = arm_source {
        if seq.len() < horizon {
            return Err(ModelError::EmptyHorizon);
        }
        if let Some(bad) = seq.iter().find(|a| **a >= model.num_arms()) {
            return Err(ModelError::ArmOutOfRange {
                arm: *bad,
                num_arms: model.num_arms(),
            });
        }
    }

    let stationary;
    let init = match initial {
        Some(b) => b,
        None => {
            stationary = model.stationary_distribution()?;
            &stationary
        }
    };

    let mut env = Environment::new(model, init, rng);
    let mut agent_rng = rng.stream(stream::AGENT);
    let mut traj = Trajectory {
        states: Vec::with_capacity(horizon),
        arms: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
    };
    for t in 0..horizon {
        let arm = match arm_source {
            ArmSource::Fixed(a) => *a,
            ArmSource::Uniform => agent_rng.random_range(0..model.num_arms()),
            ArmSource::Sequence(seq) => seq[t],
        };
        traj.states.push(env.hidden_state());
        let r = env.step(arm);
        traj.arms.push(arm);
        traj.rewards.push(r);
    }
    Ok(traj)
}

#[inline]
fn sample_categorical(probs: &[f64], rng: &mut ChaCha12Rng) -> usize {
    sample_categorical_iter(probs.iter().cloned(), rng)
}

#[inline]
fn sample_categorical_iter(probs: impl Iterator<Item = f64>, rng: &mut ChaCha12Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}
