//! Comparison policies: epsilon-greedy, sliding-window UCB, Exp3.S, and two
//! reference policies used for bounds (the best fixed arm and the
//! full-information oracle).
//!
//! The learning baselines implement [`BanditPolicy`], whose interface only
//! ever shows a policy its own arms and rewards; hidden states are
//! structurally out of reach. The two reference policies need the true model
//! (and, for the oracle, the hidden state) and exist only as benchmarks.
//!
//! ```
//! use regime_bandits::baselines::{run_baseline, BaselineConfig, BaselineKind};
//! use regime_bandits::model::example_2x2;
//!
//! let model = example_2x2();
//! let log = run_baseline(
//!     &model,
//!     &BaselineConfig { kind: BaselineKind::EpsilonGreedy { epsilon: 0.1 } },
//!     10_000,
//!     7,
//! ).unwrap();
//! assert_eq!(log.steps.len(), 10_000);
//! ```

use crate::error::HarnessError;
use crate::model::HmmBanditModel;
use crate::rng::{stream, RunRng};
use crate::seeu::{Phase, RunLog, StepRecord};
use crate::sim::Environment;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// A state-blind bandit policy: it observes nothing but its own history.
pub trait BanditPolicy {
    fn select(&mut self, t: usize, rng: &mut ChaCha12Rng) -> usize;
    fn observe(&mut self, arm: usize, reward: u8);
}

/// Which baseline to run, with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum BaselineKind {
    /// Explore with probability `epsilon`, otherwise play the best empirical
    /// mean (each arm is pulled once up front).
    EpsilonGreedy { epsilon: f64 },
    /// UCB restricted to the last `window` observations, exploration scale
    /// `xi` (`window >= horizon` recovers standard UCB1).
    SlidingWindowUcb { window: usize, xi: f64 },
    /// Exponential weights with uniform mixing `gamma` and additive drift
    /// `alpha`. `None` derives them from the change budget `l` (defaulting
    /// to the horizon, which drives `gamma` to 1).
    Exp3S {
        gamma: Option<f64>,
        alpha: Option<f64>,
        l: Option<usize>,
    },
    /// Constant arm maximizing the stationary mean reward (true model).
    BestFixedArm,
    /// Plays the best arm for the realized hidden state (true model + state).
    FullInformationOracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
}

impl BaselineConfig {
    pub fn validate(&self, horizon: usize) -> Result<(), HarnessError> {
        match &self.kind {
            BaselineKind::EpsilonGreedy { epsilon } => {
                if !(0.0..=1.0).contains(epsilon) {
                    return Err(HarnessError::InvalidBaseline(format!(
                        "epsilon {epsilon} outside [0, 1]"
                    )));
                }
            }
            BaselineKind::SlidingWindowUcb { window, xi } => {
                if *window < 1 {
                    return Err(HarnessError::InvalidBaseline("window must be >= 1".into()));
                }
                if *xi <= 0.0 {
                    return Err(HarnessError::InvalidBaseline(format!(
                        "xi {xi} must be positive"
                    )));
                }
            }
            BaselineKind::Exp3S { gamma, alpha, .. } => {
                if let Some(g) = gamma {
                    if !(*g > 0.0 && *g <= 1.0) {
                        return Err(HarnessError::InvalidBaseline(format!(
                            "gamma {g} outside (0, 1]"
                        )));
                    }
                }
                if let Some(a) = alpha {
                    if *a < 0.0 {
                        return Err(HarnessError::InvalidBaseline(format!(
                            "alpha {a} must be nonnegative"
                        )));
                    }
                }
            }
            BaselineKind::BestFixedArm | BaselineKind::FullInformationOracle => {}
        }
        let _ = horizon;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

struct EpsilonGreedy {
    epsilon: f64,
    counts: Vec<u64>,
    sums: Vec<f64>,
}

impl EpsilonGreedy {
    fn new(num_arms: usize, epsilon: f64) -> Self {
        Self {
            epsilon,
            counts: vec![0; num_arms],
            sums: vec![0.0; num_arms],
        }
    }
}

impl BanditPolicy for EpsilonGreedy {
    fn select(&mut self, _t: usize, rng: &mut ChaCha12Rng) -> usize {
        // forced initial pull of each arm, in index order
        if let Some(arm) = self.counts.iter().position(|c| *c == 0) {
            return arm;
        }
        if self.epsilon > 0.0 && rng.random::<f64>() < self.epsilon {
            return rng.random_range(0..self.counts.len());
        }
        let mut best = 0usize;
        let mut best_mean = f64::NEG_INFINITY;
        for (arm, (c, s)) in self.counts.iter().zip(&self.sums).enumerate() {
            let mean = s / *c as f64;
            if mean > best_mean {
                best_mean = mean;
                best = arm;
            }
        }
        best
    }

    fn observe(&mut self, arm: usize, reward: u8) {
        self.counts[arm] += 1;
        self.sums[arm] += reward as f64;
    }
}

struct SlidingWindowUcb {
    window: usize,
    xi: f64,
    // circular buffer of the last `window` (arm, reward) pairs
    buffer: Vec<(usize, u8)>,
    head: usize,
    filled: bool,
    counts: Vec<u64>,
    sums: Vec<f64>,
    t: usize,
}

impl SlidingWindowUcb {
    fn new(num_arms: usize, window: usize, xi: f64) -> Self {
        Self {
            window,
            xi,
            buffer: Vec::with_capacity(window),
            head: 0,
            filled: false,
            counts: vec![0; num_arms],
            sums: vec![0.0; num_arms],
            t: 0,
        }
    }
}

impl BanditPolicy for SlidingWindowUcb {
    fn select(&mut self, _t: usize, _rng: &mut ChaCha12Rng) -> usize {
        // any arm unseen inside the window is pulled first (lowest index)
        if let Some(arm) = self.counts.iter().position(|c| *c == 0) {
            return arm;
        }
        let horizon_term = (self.t.min(self.window) as f64).ln().max(0.0);
        let mut best = 0usize;
        let mut best_index = f64::NEG_INFINITY;
        for (arm, (c, s)) in self.counts.iter().zip(&self.sums).enumerate() {
            let n = *c as f64;
            let index = s / n + (self.xi * horizon_term / n).sqrt();
            if index > best_index {
                best_index = index;
                best = arm;
            }
        }
        best
    }

    fn observe(&mut self, arm: usize, reward: u8) {
        self.t += 1;
        if self.buffer.len() < self.window {
            self.buffer.push((arm, reward));
        } else {
            self.filled = true;
            let (old_arm, old_reward) = self.buffer[self.head];
            self.counts[old_arm] -= 1;
            self.sums[old_arm] -= old_reward as f64;
            self.buffer[self.head] = (arm, reward);
            self.head = (self.head + 1) % self.window;
        }
        self.counts[arm] += 1;
        self.sums[arm] += reward as f64;
    }
}

/// Exponential weights kept in log space: weights stay finite and normalized
/// at any horizon.
struct Exp3S {
    gamma: f64,
    alpha: f64,
    log_weights: Vec<f64>,
    probs: Vec<f64>,
}

impl Exp3S {
    fn new(num_arms: usize, gamma: f64, alpha: f64) -> Self {
        Self {
            gamma,
            alpha,
            log_weights: vec![0.0; num_arms],
            probs: vec![1.0 / num_arms as f64; num_arms],
        }
    }

    /// Tuning for a change budget of `l` over the horizon: the classical
    /// choice `gamma = min(1, sqrt(I (l ln(I T) + e) / ((e - 1) T)))` and
    /// drift `alpha = 1 / T`. With `l = T` the mixing saturates at 1.
    fn derive_parameters(num_arms: usize, l: usize, horizon: usize) -> (f64, f64) {
        let i = num_arms as f64;
        let t = horizon as f64;
        let e = std::f64::consts::E;
        let gamma =
            (i * ((l as f64) * (i * t).ln() + e) / ((e - 1.0) * t)).sqrt().min(1.0);
        (gamma, 1.0 / t)
    }

    fn refresh_probs(&mut self) {
        let max = self
            .log_weights
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (p, lw) in self.probs.iter_mut().zip(&self.log_weights) {
            *p = (lw - max).exp();
            total += *p;
        }
        let k = self.probs.len() as f64;
        for p in self.probs.iter_mut() {
            *p = (1.0 - self.gamma) * (*p / total) + self.gamma / k;
        }
    }
}

impl BanditPolicy for Exp3S {
    fn select(&mut self, _t: usize, rng: &mut ChaCha12Rng) -> usize {
        self.refresh_probs();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (arm, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return arm;
            }
        }
        self.probs.len() - 1
    }

    fn observe(&mut self, arm: usize, reward: u8) {
        let k = self.probs.len() as f64;
        let estimated = reward as f64 / self.probs[arm];
        self.log_weights[arm] += self.gamma * estimated / k;

        // additive drift in log space: w_i += (e alpha / K) sum_j w_j
        if self.alpha > 0.0 {
            let max = self
                .log_weights
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            let log_sum = max
                + self
                    .log_weights
                    .iter()
                    .map(|lw| (lw - max).exp())
                    .sum::<f64>()
                    .ln();
            let drift = (std::f64::consts::E * self.alpha / k).ln() + log_sum;
            for lw in self.log_weights.iter_mut() {
                let hi = lw.max(drift);
                *lw = hi + ((*lw - hi).exp() + (drift - hi).exp()).ln();
            }
        }
        // renormalize so the weights never run away
        let max = self
            .log_weights
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        for lw in self.log_weights.iter_mut() {
            *lw -= max;
        }
    }
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

/// Run a baseline for `horizon` periods. Uses the same RNG substream layout
/// as the learning agent, so all policies see the same hidden state path for
/// a given seed.
pub fn run_baseline(
    model: &HmmBanditModel,
    config: &BaselineConfig,
    horizon: usize,
    seed: u64,
) -> Result<RunLog, HarnessError> {
    if horizon == 0 {
        return Err(HarnessError::Model(crate::error::ModelError::EmptyHorizon));
    }
    config.validate(horizon)?;
    let rng = RunRng::new(seed);
    let mut env = Environment::from_stationary(model, &rng)?;
    let mut agent_rng = rng.stream(stream::AGENT);
    let num_arms = model.num_arms();

    let mut policy: Option<Box<dyn BanditPolicy>> = match &config.kind {
        BaselineKind::EpsilonGreedy { epsilon } => {
            Some(Box::new(EpsilonGreedy::new(num_arms, *epsilon)))
        }
        BaselineKind::SlidingWindowUcb { window, xi } => {
            Some(Box::new(SlidingWindowUcb::new(num_arms, *window, *xi)))
        }
        BaselineKind::Exp3S { gamma, alpha, l } => {
            let (dg, da) = Exp3S::derive_parameters(num_arms, l.unwrap_or(horizon), horizon);
            Some(Box::new(Exp3S::new(
                num_arms,
                gamma.unwrap_or(dg),
                alpha.unwrap_or(da),
            )))
        }
        BaselineKind::BestFixedArm | BaselineKind::FullInformationOracle => None,
    };

    // reference policies need the true model
    let best_fixed = match &config.kind {
        BaselineKind::BestFixedArm => {
            let omega = model.stationary_distribution()?;
            let mu = model.mean_rewards();
            let arm = (0..num_arms)
                .max_by(|a, b| {
                    let va: f64 = (0..model.num_states()).map(|m| omega[m] * mu[(m, *a)]).sum();
                    let vb: f64 = (0..model.num_states()).map(|m| omega[m] * mu[(m, *b)]).sum();
                    va.partial_cmp(&vb).unwrap().then(b.cmp(a))
                })
                .unwrap_or(0);
            Some(arm)
        }
        _ => None,
    };

    let mut steps = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let arm = match &config.kind {
            BaselineKind::BestFixedArm => best_fixed.unwrap(),
            BaselineKind::FullInformationOracle => {
                let state = env.hidden_state();
                let mu = model.mean_rewards();
                (0..num_arms)
                    .max_by(|a, b| {
                        mu[(state, *a)]
                            .partial_cmp(&mu[(state, *b)])
                            .unwrap()
                            .then(b.cmp(a))
                    })
                    .unwrap_or(0)
            }
            _ => policy.as_mut().unwrap().select(t, &mut agent_rng),
        };
        let reward = env.step(arm);
        if let Some(p) = policy.as_mut() {
            p.observe(arm, reward);
        }
        steps.push(StepRecord {
            t: t + 1,
            episode: 0,
            phase: Phase::Baseline,
            arm,
            reward,
            belief: Vec::new(),
        });
    }

    Ok(RunLog {
        steps,
        episodes: Vec::new(),
    })
}
