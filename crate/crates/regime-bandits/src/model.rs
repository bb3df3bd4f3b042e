//! Domain types for the regime-switching bandit: the hidden-Markov model over
//! regimes, beliefs on the state simplex, and the observation alphabet.
//!
//! A model couples an `M x M` row-stochastic transition matrix `P` with an
//! `M x I` matrix `mu` of Bernoulli means: in hidden state `m`, arm `i` pays 1
//! with probability `mu[m][i]`. Three structural requirements are enforced at
//! construction because every estimator and planner downstream relies on them:
//! `P` invertible, `mu` with distinct state profiles (full rank), and
//! `epsilon = min P[i][j] > 0` so that beliefs mix geometrically.
//!
//! ```
//! use nalgebra::DMatrix;
//! use regime_bandits::model::HmmBanditModel;
//!
//! let p = DMatrix::from_row_slice(2, 2, &[1.0 / 3.0, 2.0 / 3.0, 0.75, 0.25]);
//! let mu = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.5, 0.6]);
//! let model = HmmBanditModel::validate(p, mu).unwrap();
//!
//! let d = model.diagnostics();
//! assert_eq!(d.epsilon, 0.25);
//! assert!(d.det_p_abs > 1e-10 && d.sigma_min_mu > 1e-10);
//!
//! // omega P = omega solves to (9/17, 8/17) for this chain
//! let omega = model.stationary_distribution().unwrap();
//! assert!((omega.components()[0] - 9.0 / 17.0).abs() < 1e-12);
//! ```

use crate::error::ModelError;
use crate::linalg::sigma_min;
use nalgebra::{DMatrix, DVector};

/// Row-sum tolerance for stochastic matrices. Rows within this distance are
/// re-normalized; anything further off is rejected rather than silently fixed.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Tolerance under which a belief vector must sum to one.
pub const BELIEF_SUM_TOL: f64 = 1e-10;

/// A validated regime-switching bandit model.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmBanditModel {
    p: DMatrix<f64>,
    mu: DMatrix<f64>,
}

/// Validation diagnostics reported alongside a model.
#[derive(Debug, Clone, Copy)]
pub struct ModelDiagnostics {
    /// Smallest transition entry `epsilon`.
    pub epsilon: f64,
    /// Absolute determinant of the transition matrix.
    pub det_p_abs: f64,
    /// Smallest singular value of the mean reward matrix.
    pub sigma_min_mu: f64,
}

impl HmmBanditModel {
    /// Validate `(P, mu)` and build a model.
    ///
    /// Checks, in order: shapes, row stochasticity of `P` (within
    /// [`ROW_SUM_TOL`], then re-normalized exactly), `mu` entries strictly
    /// inside `(0, 1)`, `epsilon > 0`, `P` invertible, and `mu` full rank.
    pub fn validate(p: DMatrix<f64>, mu: DMatrix<f64>) -> Result<Self, ModelError> {
        if p.nrows() != p.ncols() {
            return Err(ModelError::NotSquare {
                rows: p.nrows(),
                cols: p.ncols(),
            });
        }
        if mu.nrows() != p.nrows() {
            return Err(ModelError::DimensionMismatch {
                p_rows: p.nrows(),
                mu_rows: mu.nrows(),
            });
        }
        if p.nrows() == 0 || mu.ncols() == 0 {
            return Err(ModelError::NotSquare { rows: 0, cols: 0 });
        }

        let mut p = p;
        for r in 0..p.nrows() {
            let sum: f64 = p.row(r).iter().sum();
            let neg = p.row(r).iter().any(|x| *x < 0.0 || !x.is_finite());
            if neg || (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(ModelError::RowsNotStochastic { row: r, sum });
            }
            for c in 0..p.ncols() {
                p[(r, c)] /= sum;
            }
        }

        for m in 0..mu.nrows() {
            for i in 0..mu.ncols() {
                let v = mu[(m, i)];
                if !(v > 0.0 && v < 1.0) {
                    return Err(ModelError::MeanOutOfRange {
                        state: m,
                        arm: i,
                        value: v,
                    });
                }
            }
        }

        let epsilon = p.iter().cloned().fold(f64::INFINITY, f64::min);
        if epsilon <= 0.0 {
            return Err(ModelError::ZeroTransitionEntry);
        }

        let det = p.clone().lu().determinant();
        if det.abs() < 1e-10 {
            return Err(ModelError::SingularTransition { det: det.abs() });
        }

        let s_min = sigma_min(&mu);
        if s_min < 1e-10 {
            return Err(ModelError::RankDeficientRewards { sigma_min: s_min });
        }

        Ok(Self { p, mu })
    }

    /// Number of hidden states `M`.
    pub fn num_states(&self) -> usize {
        self.p.nrows()
    }

    /// Number of arms `I`.
    pub fn num_arms(&self) -> usize {
        self.mu.ncols()
    }

    /// Observation alphabet size `S = 2 I` (arm, binary reward pairs).
    pub fn alphabet_size(&self) -> usize {
        2 * self.num_arms()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn mean_rewards(&self) -> &DMatrix<f64> {
        &self.mu
    }

    /// Smallest transition entry `epsilon`; controls filter mixing.
    pub fn epsilon(&self) -> f64 {
        self.p.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Smallest and largest entries of `mu`.
    pub fn mu_range(&self) -> (f64, f64) {
        let lo = self.mu.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    pub fn diagnostics(&self) -> ModelDiagnostics {
        ModelDiagnostics {
            epsilon: self.epsilon(),
            det_p_abs: self.p.clone().lu().determinant().abs(),
            sigma_min_mu: sigma_min(&self.mu),
        }
    }

    /// Stationary distribution `omega` with `omega P = omega`.
    ///
    /// Solves `(P^T - I)` with the normalization row `sum omega = 1` and
    /// verifies the residual `||omega P - omega||_1 <= 1e-10`.
    pub fn stationary_distribution(&self) -> Result<Belief, ModelError> {
        let m = self.num_states();
        let mut a = self.p.transpose() - DMatrix::identity(m, m);
        for c in 0..m {
            a[(m - 1, c)] = 1.0;
        }
        let mut rhs = DVector::zeros(m);
        rhs[m - 1] = 1.0;
        let omega = a
            .lu()
            .solve(&rhs)
            .ok_or(ModelError::NoUniqueStationary)?;
        let residual: f64 = (omega.transpose() * &self.p - omega.transpose())
            .iter()
            .map(|x| x.abs())
            .sum();
        if residual > 1e-10 || omega.iter().any(|x| *x < -1e-12) {
            return Err(ModelError::NoUniqueStationary);
        }
        Belief::new(omega.iter().cloned().collect())
    }
}

// ---------------------------------------------------------------------------
// Beliefs
// ---------------------------------------------------------------------------

/// A probability vector over hidden states: the planner's continuous state.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief(Vec<f64>);

impl Belief {
    /// Build a belief, checking nonnegativity and that the components sum to
    /// one within [`BELIEF_SUM_TOL`]; the vector is then normalized exactly.
    pub fn new(components: Vec<f64>) -> Result<Self, ModelError> {
        let sum: f64 = components.iter().sum();
        if components.is_empty()
            || components.iter().any(|x| *x < 0.0 || !x.is_finite())
            || (sum - 1.0).abs() > BELIEF_SUM_TOL
        {
            return Err(ModelError::InvalidBelief { sum });
        }
        Ok(Self(components.iter().map(|x| x / sum).collect()))
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    /// Point mass on state `m`.
    pub fn point(m: usize, dim: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[m] = 1.0;
        Self(v)
    }

    /// Construct without validation. Callers must guarantee the invariant.
    pub(crate) fn from_normalized(components: Vec<f64>) -> Self {
        Self(components)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn l1_distance(&self, other: &Belief) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

impl std::ops::Index<usize> for Belief {
    type Output = f64;
    fn index(&self, idx: usize) -> &f64 {
        &self.0[idx]
    }
}

// ---------------------------------------------------------------------------
// Observation alphabet
// ---------------------------------------------------------------------------

/// Index of an (arm, reward) pair in the flattened observation alphabet.
///
/// Zero-based: pair `(arm, r)` maps to `2 * arm + r`, so arm 0 occupies
/// symbols 0 and 1, arm 1 symbols 2 and 3, and so on. In one-based notation
/// this is the mapping `(i, r) -> 2 (i - 1) + r + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ObservationIndex(pub usize);

impl ObservationIndex {
    pub fn one_based(&self) -> usize {
        self.0 + 1
    }
}

/// Encode an (arm, reward) pair into its observation symbol.
pub fn encode_observation(
    arm: usize,
    reward: u8,
    num_arms: usize,
) -> Result<ObservationIndex, ModelError> {
    if arm >= num_arms {
        return Err(ModelError::ArmOutOfRange { arm, num_arms });
    }
    if reward > 1 {
        return Err(ModelError::RewardNotBinary(reward));
    }
    Ok(ObservationIndex(2 * arm + reward as usize))
}

/// Decode an observation symbol back into its (arm, reward) pair.
pub fn decode_observation(
    s: ObservationIndex,
    num_arms: usize,
) -> Result<(usize, u8), ModelError> {
    if s.0 >= 2 * num_arms {
        return Err(ModelError::ObservationOutOfRange {
            index: s.0,
            size: 2 * num_arms,
        });
    }
    Ok((s.0 / 2, (s.0 % 2) as u8))
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

/// A sampled path: hidden states are recorded for diagnostics only and are
/// never exposed to learning agents.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub arms: Vec<usize>,
    pub rewards: Vec<u8>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn mean_reward(&self) -> f64 {
        if self.rewards.is_empty() {
            return 0.0;
        }
        self.rewards.iter().map(|r| *r as f64).sum::<f64>() / self.rewards.len() as f64
    }
}

/// The two-state, two-arm instance used as the running example throughout the
/// tests and the guide.
pub fn example_2x2() -> HmmBanditModel {
    HmmBanditModel::validate(
        DMatrix::from_row_slice(2, 2, &[1.0 / 3.0, 2.0 / 3.0, 3.0 / 4.0, 1.0 / 4.0]),
        DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.5, 0.6]),
    )
    .expect("reference instance is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_model_validates_with_expected_diagnostics() {
        let model = example_2x2();
        let d = model.diagnostics();
        assert!((d.epsilon - 0.25).abs() < 1e-15);
        // det P = 1/3 * 1/4 - 2/3 * 3/4 = -5/12
        assert!((d.det_p_abs - 5.0 / 12.0).abs() < 1e-12);
        assert!(d.sigma_min_mu > 1e-3);
    }

    #[test]
    fn equal_transition_rows_are_singular() {
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let mu = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.5, 0.6]);
        assert!(matches!(
            HmmBanditModel::validate(p, mu),
            Err(ModelError::SingularTransition { .. })
        ));
    }

    #[test]
    fn equal_reward_rows_are_rank_deficient() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0 / 3.0, 2.0 / 3.0, 3.0 / 4.0, 1.0 / 4.0]);
        let mu = DMatrix::from_row_slice(2, 2, &[0.4, 0.6, 0.4, 0.6]);
        assert!(matches!(
            HmmBanditModel::validate(p, mu),
            Err(ModelError::RankDeficientRewards { .. })
        ));
    }

    #[test]
    fn non_stochastic_rows_and_bad_means_are_rejected() {
        let p = DMatrix::from_row_slice(2, 2, &[0.6, 0.5, 0.5, 0.5]);
        let mu = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.5, 0.6]);
        assert!(matches!(
            HmmBanditModel::validate(p, mu.clone()),
            Err(ModelError::RowsNotStochastic { row: 0, .. })
        ));

        let p = DMatrix::from_row_slice(2, 2, &[1.0 / 3.0, 2.0 / 3.0, 3.0 / 4.0, 1.0 / 4.0]);
        let mu_bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.5, 0.6]);
        assert!(matches!(
            HmmBanditModel::validate(p, mu_bad),
            Err(ModelError::MeanOutOfRange { state: 0, arm: 0, .. })
        ));
    }

    #[test]
    fn zero_entry_is_rejected_before_determinant() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.25, 0.75]);
        let mu = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.5, 0.6]);
        assert!(matches!(
            HmmBanditModel::validate(p, mu),
            Err(ModelError::ZeroTransitionEntry)
        ));
    }

    #[test]
    fn stationary_distribution_of_reference_model() {
        // Hand solve of omega P = omega: omega = (9/17, 8/17).
        let model = example_2x2();
        let omega = model.stationary_distribution().unwrap();
        assert!((omega[0] - 9.0 / 17.0).abs() < 1e-12);
        assert!((omega[1] - 8.0 / 17.0).abs() < 1e-12);
        // cross-check one balance equation: 9/17 * 1/3 + 8/17 * 3/4 = 9/17
        assert!((9.0_f64 / 17.0 * (1.0 / 3.0) + 8.0 / 17.0 * 0.75 - 9.0 / 17.0).abs() < 1e-12);
    }

    #[test]
    fn stationary_distribution_symmetric_and_single_state() {
        let p = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.1, 0.9]);
        let mu = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.5, 0.6]);
        let model = HmmBanditModel::validate(p, mu).unwrap();
        let omega = model.stationary_distribution().unwrap();
        assert!((omega[0] - 0.5).abs() < 1e-12 && (omega[1] - 0.5).abs() < 1e-12);

        let single = HmmBanditModel::validate(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 2, &[0.3, 0.7]),
        )
        .unwrap();
        let omega = single.stationary_distribution().unwrap();
        assert_eq!(omega.components(), &[1.0]);
    }

    #[test]
    fn observation_encoding_matches_documented_mapping() {
        // one-based: (1,0) -> 1, (1,1) -> 2, and with I=2, (2,1) -> 4
        assert_eq!(encode_observation(0, 0, 2).unwrap().one_based(), 1);
        assert_eq!(encode_observation(0, 1, 2).unwrap().one_based(), 2);
        assert_eq!(encode_observation(1, 1, 2).unwrap().one_based(), 4);
        assert!(encode_observation(2, 0, 2).is_err());
        assert!(encode_observation(0, 2, 2).is_err());
    }

    #[test]
    fn belief_validation() {
        assert!(Belief::new(vec![0.5, 0.5]).is_ok());
        assert!(Belief::new(vec![0.5, 0.6]).is_err());
        assert!(Belief::new(vec![-0.1, 1.1]).is_err());
        let u = Belief::uniform(4);
        assert!((u.components().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}

#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn encode_decode_roundtrip(num_arms in 1usize..9, arm_seed in 0usize..100, r in 0u8..2) {
            let arm = arm_seed % num_arms;
            let s = encode_observation(arm, r, num_arms).unwrap();
            prop_assert!(s.0 < 2 * num_arms);
            let (a2, r2) = decode_observation(s, num_arms).unwrap();
            prop_assert_eq!((a2, r2), (arm, r));
        }
    }
}
