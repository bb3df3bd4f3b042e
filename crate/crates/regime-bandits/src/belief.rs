//! Bayesian belief filtering over the hidden regime.
//!
//! One step of the forward kernel `H(b, i, r)` conditions the belief on the
//! observed reward (the filter) and pushes it through the chain (the
//! prediction):
//!
//! ```text
//! b'(m) = sum_m' P(m', m) * lik(m') * b(m') / sum_m'' lik(m'') * b(m'')
//! lik(m) = mu[m][i]^r * (1 - mu[m][i])^(1 - r)
//! ```
//!
//! Because every column of `P` has entries at least `epsilon`, the output
//! belief has every component at least `epsilon`: the filter forgets its
//! initialization geometrically and plain double precision suffices (no
//! log-space bookkeeping is needed for the state counts considered here).
//!
//! ```
//! use regime_bandits::model::{example_2x2, Belief};
//! use regime_bandits::belief::{belief_update, replay_beliefs, forgetting_constants};
//!
//! let model = example_2x2();
//! // One update from a 50/50 belief after arm 0 paid out:
//! // filter to (9/14, 5/14), predict to (27/56, 29/56).
//! let next = belief_update(&model, &Belief::uniform(2), 0, 1).unwrap();
//! assert!((next.components()[0] - 27.0 / 56.0).abs() < 1e-12);
//!
//! // Two different priors forget each other geometrically under a shared
//! // observation sequence: rate 2/3 with prefactor 6 for this model.
//! let (c4, alpha) = forgetting_constants(&model);
//! assert_eq!((c4, alpha), (6.0, 2.0 / 3.0));
//! let history = vec![(0, 1), (1, 0), (0, 0), (0, 1), (1, 1)];
//! let a = replay_beliefs(&model, &Belief::new(vec![0.9, 0.1]).unwrap(), &history).unwrap();
//! let b = replay_beliefs(&model, &Belief::new(vec![0.2, 0.8]).unwrap(), &history).unwrap();
//! let d0 = a.beliefs[0].l1_distance(&b.beliefs[0]);
//! for (t, (x, y)) in a.beliefs.iter().zip(&b.beliefs).enumerate() {
//!     assert!(x.l1_distance(y) <= c4 * alpha.powi(t as i32 - 1) * d0 + 1e-12);
//! }
//! ```

use crate::error::{BeliefError, ModelError};
use crate::model::{Belief, HmmBanditModel};

/// One application of the forward kernel: filter on `(arm, reward)`, then
/// predict through the transition matrix.
pub fn belief_update(
    model: &HmmBanditModel,
    b: &Belief,
    arm: usize,
    reward: u8,
) -> Result<Belief, BeliefError> {
    let m = model.num_states();
    if arm >= model.num_arms() {
        return Err(ModelError::ArmOutOfRange {
            arm,
            num_arms: model.num_arms(),
        }
        .into());
    }
    if reward > 1 {
        return Err(ModelError::RewardNotBinary(reward).into());
    }
    debug_assert_eq!(b.dim(), m);

    let mu = model.mean_rewards();
    let mut filtered = vec![0.0; m];
    let mut norm = 0.0;
    for s in 0..m {
        let p1 = mu[(s, arm)];
        let lik = if reward == 1 { p1 } else { 1.0 - p1 };
        let w = lik * b[s];
        filtered[s] = w;
        norm += w;
    }
    if norm < 1e-300 {
        return Err(BeliefError::DegenerateLikelihood(norm));
    }

    let p = model.transition();
    let mut next = vec![0.0; m];
    for s in 0..m {
        let phi = filtered[s] / norm;
        for t in 0..m {
            next[t] += phi * p[(s, t)];
        }
    }
    Ok(Belief::from_normalized(next))
}

/// Expected one-period reward of `arm` under belief `b`: the dot product of
/// `b` with column `arm` of the mean reward matrix. Also the probability that
/// the next reward is 1.
pub fn expected_reward(model: &HmmBanditModel, b: &Belief, arm: usize) -> f64 {
    let mu = model.mean_rewards();
    (0..model.num_states()).map(|m| b[m] * mu[(m, arm)]).sum()
}

/// A replayed belief path: `beliefs[t]` is the belief before observing
/// `steps[t]`, so the vector is one longer than the history.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefHistory {
    pub initial: Belief,
    pub steps: Vec<(usize, u8)>,
    pub beliefs: Vec<Belief>,
}

impl BeliefHistory {
    pub fn last(&self) -> &Belief {
        self.beliefs.last().expect("never empty")
    }
}

/// Recompute the whole belief path for a recorded history under `model`.
pub fn replay_beliefs(
    model: &HmmBanditModel,
    b1: &Belief,
    history: &[(usize, u8)],
) -> Result<BeliefHistory, BeliefError> {
    let mut beliefs = Vec::with_capacity(history.len() + 1);
    beliefs.push(b1.clone());
    let mut current = b1.clone();
    for (arm, reward) in history {
        current = belief_update(model, &current, *arm, *reward)?;
        beliefs.push(current.clone());
    }
    Ok(BeliefHistory {
        initial: b1.clone(),
        steps: history.to_vec(),
        beliefs,
    })
}

/// Robustness constants `(L1, L2)` for the belief path under a perturbed
/// model:
///
/// ```text
/// L1 = 4 M ((1 - eps) / eps)^2 / min(mu_min, 1 - mu_max)
/// L2 = 4 M (1 - eps)^2 / eps^3 + sqrt(M)
/// ```
///
/// For any shared action-reward sequence, the beliefs replayed under an
/// estimate `(mu_hat, P_hat)` stay within
/// `L1 * ||mu_hat - mu||_1 + L2 * ||P_hat - P||_F` of the true beliefs in l1,
/// where the mu norm is the max column l1 distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeliefErrorConstants {
    pub l1: f64,
    pub l2: f64,
}

pub fn belief_error_constants(
    model: &HmmBanditModel,
) -> Result<BeliefErrorConstants, ModelError> {
    let eps = model.epsilon();
    if eps <= 0.0 {
        return Err(ModelError::ZeroTransitionEntry);
    }
    let m = model.num_states() as f64;
    let (mu_min, mu_max) = model.mu_range();
    let margin = mu_min.min(1.0 - mu_max);
    let ratio = (1.0 - eps) / eps;
    Ok(BeliefErrorConstants {
        l1: 4.0 * m * ratio * ratio / margin,
        l2: 4.0 * m * (1.0 - eps).powi(2) / eps.powi(3) + m.sqrt(),
    })
}

/// Forgetting constants `(C4, alpha)` of the filter: two replays of the same
/// observation sequence started from beliefs `b` and `b'` satisfy
/// `||b_t - b'_t||_1 <= C4 * alpha^(t-1) * ||b_1 - b'_1||_1` with
/// `C4 = 2 (1 - eps) / eps` and `alpha = (1 - 2 eps) / (1 - eps)`.
pub fn forgetting_constants(model: &HmmBanditModel) -> (f64, f64) {
    let eps = model.epsilon();
    (2.0 * (1.0 - eps) / eps, (1.0 - 2.0 * eps) / (1.0 - eps))
}
