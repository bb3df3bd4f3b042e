//! Method-of-moments estimation of the hidden-Markov parameters from
//! uniform-exploration data.
//!
//! Under uniform arm choice the action-reward pair `s_t = (i_t, r_t)` is a
//! memoryless observation of the hidden state, with per-state distribution
//! `A(s, m) = P(S_t = s | M_t = m) = mu[m][i]^r (1 - mu[m][i])^(1-r) / I`.
//! Consecutive triples `(s_{t-1}, s_t, s_{t+1})` then carry three conditionally
//! independent views of `M_t`. The pipeline:
//!
//! 1. accumulate the cross-moment matrices `W_{i,j} = E[y_{t+i} (x) y_{t+j}]`
//!    over all triples (`y` is the indicator basis vector of `s`);
//! 2. symmetrize the outer views onto the third one,
//!    `y~_{t-1} = W_{1,0} W_{-1,0}^+ y_{t-1}` and
//!    `y~_t = W_{1,-1} W_{0,-1}^+ y_t`, and form the second and third moments
//!    `M2 = E[y~_{t-1} (x) y~_t]`, `M3 = E[y~_{t-1} (x) y~_t (x) y_{t+1}]`;
//! 3. decompose `(M2, M3)` ([`crate::tensor`]) into the columns of the
//!    one-step-ahead view `B(s, m) = P(S_{t+1} = s | M_t = m)`;
//! 4. map each column back to the current view through
//!    `A_m = W_{0,-1} W_{1,-1}^+ B_m`, read the mean rewards off `A` by
//!    per-arm normalization, and recover the transition matrix as
//!    `P_hat = (A^+ B)^T`.
//!
//! Estimates are identifiable up to a common permutation of the hidden
//! states; [`align_permutation`] resolves it against a reference for
//! evaluation, and nothing in the learning loop ever depends on the labels.
//!
//! On exact population moments the pipeline recovers the parameters to
//! machine precision:
//!
//! ```
//! use rand_chacha::{ChaCha12Rng, rand_core::SeedableRng};
//! use regime_bandits::linalg::max_abs;
//! use regime_bandits::model::example_2x2;
//! use regime_bandits::spectral::*;
//! use regime_bandits::tensor::{tensor_decompose, PowerMethodParams};
//!
//! let model = example_2x2();
//! let moments = population_moments(&model).unwrap();
//! let mut rng = ChaCha12Rng::seed_from_u64(0);
//! let dec = tensor_decompose(&moments.m2, &moments.m3, 2,
//!                            &PowerMethodParams::default(), &mut rng).unwrap();
//! let est = recover_parameters(&dec, &moments, 2, 2, &RecoveryFloors::default()).unwrap();
//! let perm = align_permutation(&est.mu_hat, model.mean_rewards());
//! let (mu, p) = apply_permutation(&est.mu_hat, &est.p_hat, &perm);
//! assert!(max_abs(&(mu - model.mean_rewards())) < 1e-6);
//! assert!(max_abs(&(p - model.transition())) < 1e-6);
//! ```

use crate::error::SpectralError;
use crate::linalg::{pinv_truncated, project_floor_simplex, Tensor3};
use crate::model::{encode_observation, HmmBanditModel};
use crate::tensor::{tensor_decompose, PowerMethodParams, TensorDecomposition};
use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha12Rng;

/// Exploration data: one contiguous (arm, reward) segment per exploration
/// phase. Segment boundaries matter because the chain keeps evolving between
/// phases, so triples never straddle two segments.
#[derive(Debug, Clone, Default)]
pub struct ExplorationSegments {
    segments: Vec<Vec<(usize, u8)>>,
}

impl ExplorationSegments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_segment(&mut self, steps: Vec<(usize, u8)>) {
        self.segments.push(steps);
    }

    pub fn segments(&self) -> &[Vec<(usize, u8)>] {
        &self.segments
    }

    pub fn total_steps(&self) -> usize {
        self.segments.iter().map(Vec::len).sum()
    }
}

/// Encoded observation triples `(s_{t-1}, s_t, s_{t+1})`, all inside one
/// segment; a segment of length `n >= 3` contributes `n - 2` of them.
pub fn collect_triples(
    segments: &ExplorationSegments,
    num_arms: usize,
) -> Result<Vec<[usize; 3]>, SpectralError> {
    let mut triples = Vec::new();
    for segment in segments.segments() {
        if segment.len() < 3 {
            continue;
        }
        let encoded: Result<Vec<usize>, _> = segment
            .iter()
            .map(|(arm, r)| encode_observation(*arm, *r, num_arms).map(|s| s.0))
            .collect();
        let encoded = encoded?;
        for w in encoded.windows(3) {
            triples.push([w[0], w[1], w[2]]);
        }
    }
    if triples.is_empty() {
        return Err(SpectralError::InsufficientData);
    }
    Ok(triples)
}

/// Empirical cross moments over the observation alphabet.
#[derive(Debug, Clone)]
pub struct MomentStats {
    /// `W_{-1,0} = E[y_{t-1} (x) y_t]`.
    pub w_prev_cur: DMatrix<f64>,
    /// `W_{1,0} = E[y_{t+1} (x) y_t]`.
    pub w_next_cur: DMatrix<f64>,
    /// `W_{0,-1} = E[y_t (x) y_{t-1}]`.
    pub w_cur_prev: DMatrix<f64>,
    /// `W_{1,-1} = E[y_{t+1} (x) y_{t-1}]`.
    pub w_next_prev: DMatrix<f64>,
    /// Symmetrized second moment.
    pub m2: DMatrix<f64>,
    /// Symmetrized third moment.
    pub m3: Tensor3,
    /// Number of consecutive triples averaged; 0 marks exact population
    /// moments.
    pub n_triples: usize,
}

/// Estimate the moments from observation triples at the given state count.
///
/// Fails with `IllConditionedMoments` when any cross-moment matrix has
/// truncated rank below `num_states`: the data cannot distinguish that many
/// states.
pub fn estimate_moments(
    triples: &[[usize; 3]],
    alphabet_size: usize,
    num_states: usize,
) -> Result<MomentStats, SpectralError> {
    if triples.is_empty() {
        return Err(SpectralError::InsufficientData);
    }
    let counts = joint_frequencies(triples, alphabet_size);
    build_moments_from_joint(&counts, alphabet_size, num_states, triples.len())
}

/// Empirical joint triple frequencies: `J(a, b, c)` is the fraction of
/// triples equal to `(a, b, c)`. All cross moments are marginals of it.
pub fn joint_frequencies(triples: &[[usize; 3]], alphabet_size: usize) -> Tensor3 {
    let mut counts = Tensor3::zeros(alphabet_size);
    let weight = 1.0 / triples.len() as f64;
    for [a, b, c] in triples {
        counts.add(*a, *b, *c, weight);
    }
    counts
}

/// The four cross-moment matrices `(W_{-1,0}, W_{1,0}, W_{0,-1}, W_{1,-1})`
/// assembled from joint triple frequencies.
pub fn cross_moments(joint: &Tensor3) -> [DMatrix<f64>; 4] {
    let s = joint.dim();
    let mut w_prev_cur = DMatrix::zeros(s, s);
    let mut w_next_cur = DMatrix::zeros(s, s);
    let mut w_next_prev = DMatrix::zeros(s, s);
    for a in 0..s {
        for b in 0..s {
            for c in 0..s {
                let v = joint.get(a, b, c);
                if v == 0.0 {
                    continue;
                }
                w_prev_cur[(a, b)] += v;
                w_next_cur[(c, b)] += v;
                w_next_prev[(c, a)] += v;
            }
        }
    }
    let w_cur_prev = w_prev_cur.transpose();
    [w_prev_cur, w_next_cur, w_cur_prev, w_next_prev]
}

fn build_moments_from_joint(
    joint: &Tensor3,
    s: usize,
    num_states: usize,
    n_triples: usize,
) -> Result<MomentStats, SpectralError> {
    let [w_prev_cur, w_next_cur, w_cur_prev, w_next_prev] = cross_moments(joint);

    let (pinv_prev_cur, rank_pc) = pinv_truncated(&w_prev_cur, num_states);
    let (pinv_cur_prev, rank_cp) = pinv_truncated(&w_cur_prev, num_states);
    for (name, rank) in [("W_{-1,0}", rank_pc), ("W_{0,-1}", rank_cp)] {
        if rank < num_states {
            return Err(SpectralError::IllConditionedMoments {
                name,
                rank,
                required: num_states,
            });
        }
    }

    // Symmetrizing maps: Q1 y_{t-1} and Q2 y_t both have conditional mean
    // equal to the third view's column of M_t.
    let q1 = &w_next_cur * &pinv_prev_cur;
    let q2 = &w_next_prev * &pinv_cur_prev;

    let m2 = &q1 * &w_prev_cur * q2.transpose();
    let mut m3 = Tensor3::zeros(s);
    // M3[., ., c] = Q1 C_c Q2^T where C_c(a, b) = joint(a, b, c)
    for c in 0..s {
        let slab = DMatrix::from_fn(s, s, |a, b| joint.get(a, b, c));
        let transformed = &q1 * slab * q2.transpose();
        for x in 0..s {
            for y in 0..s {
                m3.set(x, y, c, transformed[(x, y)]);
            }
        }
    }

    Ok(MomentStats {
        w_prev_cur,
        w_next_cur,
        w_cur_prev,
        w_next_prev,
        m2,
        m3,
        n_triples,
    })
}

// ---------------------------------------------------------------------------
// Population oracle
// ---------------------------------------------------------------------------

/// The three conditional observation views of a model under uniform arms,
/// used to assemble exact population moments.
#[derive(Debug, Clone)]
pub struct PopulationViews {
    /// `A1(s, m) = P(S_{t-1} = s | M_t = m)` (backward view).
    pub backward: DMatrix<f64>,
    /// `A2(s, m) = P(S_t = s | M_t = m)` (current view).
    pub current: DMatrix<f64>,
    /// `A3(s, m) = P(S_{t+1} = s | M_t = m)` (forward view).
    pub forward: DMatrix<f64>,
    /// Stationary distribution of the chain.
    pub omega: DVector<f64>,
}

/// Conditional observation distributions under the uniform exploration policy.
pub fn population_views(model: &HmmBanditModel) -> Result<PopulationViews, SpectralError> {
    let m = model.num_states();
    let i = model.num_arms();
    let s = model.alphabet_size();
    let mu = model.mean_rewards();
    let p = model.transition();
    let omega_belief = model.stationary_distribution()?;
    let omega = DVector::from_iterator(m, omega_belief.components().iter().cloned());

    let mut current = DMatrix::zeros(s, m);
    for state in 0..m {
        for arm in 0..i {
            current[(2 * arm, state)] = (1.0 - mu[(state, arm)]) / i as f64;
            current[(2 * arm + 1, state)] = mu[(state, arm)] / i as f64;
        }
    }
    // backward: columns mixed by the time-reversed chain
    let mut reversed = DMatrix::zeros(m, m);
    for from in 0..m {
        for to in 0..m {
            reversed[(from, to)] = omega[from] * p[(from, to)] / omega[to];
        }
    }
    let backward = &current * reversed;
    let forward = &current * p.transpose();
    Ok(PopulationViews {
        backward,
        current,
        forward,
        omega,
    })
}

/// Exact population moments of a model under uniform arms: the estimator's
/// ground-truth fixture. `n_triples` is set to 0 to mark exactness.
pub fn population_moments(model: &HmmBanditModel) -> Result<MomentStats, SpectralError> {
    let views = population_views(model)?;
    let s = model.alphabet_size();
    let m = model.num_states();
    // joint(a, b, c) = sum_m omega(m) A1(a,m) A2(b,m) A3(c,m)
    let mut joint = Tensor3::zeros(s);
    for state in 0..m {
        let a1: Vec<f64> = (0..s).map(|r| views.backward[(r, state)]).collect();
        let a2: Vec<f64> = (0..s).map(|r| views.current[(r, state)]).collect();
        let a3: Vec<f64> = (0..s).map(|r| views.forward[(r, state)]).collect();
        joint.add_outer(views.omega[state], &a1, &a2, &a3);
    }
    build_moments_from_joint(&joint, s, m, 0)
}

// ---------------------------------------------------------------------------
// Parameter recovery
// ---------------------------------------------------------------------------

/// Floors applied to recovered parameters so every downstream consumer sees a
/// valid model with positive mixing.
#[derive(Debug, Clone, Copy)]
pub struct RecoveryFloors {
    /// Mean rewards are clipped into `[mu_floor, 1 - mu_floor]`.
    pub mu_floor: f64,
    /// Transition rows are projected onto the simplex with this entry floor.
    pub p_floor: f64,
}

impl Default for RecoveryFloors {
    fn default() -> Self {
        Self {
            mu_floor: 0.01,
            p_floor: 1e-3,
        }
    }
}

/// Numerical diagnostics carried alongside an estimate.
#[derive(Debug, Clone, Copy)]
pub struct SpectralDiagnostics {
    pub reconstruction_residual: f64,
    pub whitening_condition: f64,
}

/// Recovered parameters, plus the raw observation views they came from.
#[derive(Debug, Clone)]
pub struct SpectralEstimate {
    pub mu_hat: DMatrix<f64>,
    pub p_hat: DMatrix<f64>,
    /// Current-view observation matrix estimate (columns on the simplex).
    pub a_hat: DMatrix<f64>,
    /// Forward-view observation matrix estimate.
    pub b_hat: DMatrix<f64>,
    pub diagnostics: SpectralDiagnostics,
}

/// Recover `(mu_hat, P_hat)` from the decomposition columns and the moments.
pub fn recover_parameters(
    decomposition: &TensorDecomposition,
    moments: &MomentStats,
    num_states: usize,
    num_arms: usize,
    floors: &RecoveryFloors,
) -> Result<SpectralEstimate, SpectralError> {
    let s = 2 * num_arms;
    let b_raw = &decomposition.columns;
    debug_assert_eq!(b_raw.nrows(), s);

    // Map the forward-view columns onto the current view. The population
    // identity is W_{0,-1} W_{1,-1}^+ B_m = A_m (both products collapse the
    // shared backward view), and it sends each column through the same linear
    // map, so the state ordering of A matches B.
    let (pinv_next_prev, rank) = pinv_truncated(&moments.w_next_prev, num_states);
    if rank < num_states {
        return Err(SpectralError::IllConditionedMoments {
            name: "W_{1,-1}",
            rank,
            required: num_states,
        });
    }
    let a_raw = &moments.w_cur_prev * pinv_next_prev * b_raw;

    // Columns of both views estimate probability distributions over the
    // alphabet; project them back onto the simplex before reading anything
    // off them.
    let mut a_hat = DMatrix::zeros(s, num_states);
    let mut b_hat = DMatrix::zeros(s, num_states);
    for m in 0..num_states {
        let a_col: Vec<f64> = (0..s).map(|r| a_raw[(r, m)]).collect();
        let b_col: Vec<f64> = (0..s).map(|r| b_raw[(r, m)]).collect();
        for (r, v) in project_floor_simplex(&a_col, 0.0).into_iter().enumerate() {
            a_hat[(r, m)] = v;
        }
        for (r, v) in project_floor_simplex(&b_col, 0.0).into_iter().enumerate() {
            b_hat[(r, m)] = v;
        }
    }

    // Mean rewards by per-arm normalization within each state column. The
    // degeneracy check runs on the raw (unprojected) column masses.
    let mut mu_hat = DMatrix::zeros(num_states, num_arms);
    for m in 0..num_states {
        for arm in 0..num_arms {
            let raw_mass = a_raw[(2 * arm, m)] + a_raw[(2 * arm + 1, m)];
            if raw_mass.abs() < 1e-8 {
                return Err(SpectralError::DegenerateColumn {
                    column: m,
                    arm,
                    mass: raw_mass,
                });
            }
            let mass = a_hat[(2 * arm, m)] + a_hat[(2 * arm + 1, m)];
            let value = if mass > 1e-12 {
                a_hat[(2 * arm + 1, m)] / mass
            } else {
                0.5
            };
            mu_hat[(m, arm)] = value.clamp(floors.mu_floor, 1.0 - floors.mu_floor);
        }
    }

    // P^T = A^+ B on the population, then rows onto the floored simplex.
    let (a_pinv, _) = pinv_truncated(&a_hat, num_states);
    let p_raw = (a_pinv * &b_hat).transpose();
    let mut p_hat = DMatrix::zeros(num_states, num_states);
    for m in 0..num_states {
        let row: Vec<f64> = (0..num_states).map(|c| p_raw[(m, c)]).collect();
        for (c, v) in project_floor_simplex(&row, floors.p_floor)
            .into_iter()
            .enumerate()
        {
            p_hat[(m, c)] = v;
        }
    }

    Ok(SpectralEstimate {
        mu_hat,
        p_hat,
        a_hat,
        b_hat,
        diagnostics: SpectralDiagnostics {
            reconstruction_residual: decomposition.residual,
            whitening_condition: decomposition.whitening_condition,
        },
    })
}

/// Full pipeline: segments -> triples -> moments -> decomposition -> recovery.
pub fn estimate_from_segments(
    segments: &ExplorationSegments,
    num_states: usize,
    num_arms: usize,
    floors: &RecoveryFloors,
    params: &PowerMethodParams,
    rng: &mut ChaCha12Rng,
) -> Result<(SpectralEstimate, usize), SpectralError> {
    let triples = collect_triples(segments, num_arms)?;
    let moments = estimate_moments(&triples, 2 * num_arms, num_states)?;
    let decomposition = tensor_decompose(&moments.m2, &moments.m3, num_states, params, rng)?;
    let estimate = recover_parameters(&decomposition, &moments, num_states, num_arms, floors)?;
    Ok((estimate, triples.len()))
}

// ---------------------------------------------------------------------------
// Confidence regions
// ---------------------------------------------------------------------------

/// A confidence region around an estimate: one l2 radius shared by the rows
/// of `mu_hat` and one spectral-norm radius for `P_hat`, both of the form
/// `C * sqrt(log(6 (S^2 + S) / delta) / n)`.
#[derive(Debug, Clone)]
pub struct ConfidenceRegion {
    pub mu_center: DMatrix<f64>,
    pub p_center: DMatrix<f64>,
    pub radius_mu_row: f64,
    pub radius_p: f64,
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
}

impl ConfidenceRegion {
    pub fn num_states(&self) -> usize {
        self.mu_center.nrows()
    }

    pub fn num_arms(&self) -> usize {
        self.mu_center.ncols()
    }

    /// Membership check with additive slack per radius.
    pub fn contains(&self, mu: &DMatrix<f64>, p: &DMatrix<f64>, slack: f64) -> bool {
        for m in 0..self.mu_center.nrows() {
            let d: f64 = (0..self.mu_center.ncols())
                .map(|i| (mu[(m, i)] - self.mu_center[(m, i)]).powi(2))
                .sum::<f64>()
                .sqrt();
            if d > self.radius_mu_row + slack {
                return false;
            }
        }
        let diff = p - &self.p_center;
        let spectral = diff.svd(false, false).singular_values[0];
        spectral <= self.radius_p + slack
    }
}

/// Confidence radii at level `1 - delta` from `n` triples.
pub fn confidence_region(
    mu_center: DMatrix<f64>,
    p_center: DMatrix<f64>,
    num_arms: usize,
    n: usize,
    delta: f64,
    c1: f64,
    c2: f64,
) -> ConfidenceRegion {
    assert!(n >= 1 && delta > 0.0 && delta < 1.0);
    let s = (2 * num_arms) as f64;
    let factor = ((6.0 * (s * s + s) / delta).ln() / n as f64).sqrt();
    ConfidenceRegion {
        mu_center,
        p_center,
        radius_mu_row: c1 * factor,
        radius_p: c2 * factor,
        delta,
        c1,
        c2,
    }
}

// ---------------------------------------------------------------------------
// Permutation alignment (evaluation only)
// ---------------------------------------------------------------------------

/// The row permutation of `mu_hat` minimizing the total l2 distance to
/// `mu_ref`: `perm[m]` is the estimated state matched to reference state `m`.
/// Brute force over all `M!` permutations; evaluation only, never used inside
/// the learner.
pub fn align_permutation(mu_hat: &DMatrix<f64>, mu_ref: &DMatrix<f64>) -> Vec<usize> {
    assert_eq!(mu_hat.shape(), mu_ref.shape());
    let m = mu_ref.nrows();
    assert!(m <= 8, "factorial search is limited to 8 states");
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut perm: Vec<usize> = (0..m).collect();
    permute(&mut perm, 0, &mut |p| {
        let cost: f64 = (0..m)
            .map(|target| {
                (0..mu_ref.ncols())
                    .map(|i| (mu_hat[(p[target], i)] - mu_ref[(target, i)]).powi(2))
                    .sum::<f64>()
            })
            .sum();
        if best.as_ref().map(|(c, _)| cost < *c).unwrap_or(true) {
            best = Some((cost, p.to_vec()));
        }
    });
    best.expect("at least one permutation").1
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Apply a state permutation to an estimate: rows of `mu`, rows and columns
/// of `P`.
pub fn apply_permutation(
    mu: &DMatrix<f64>,
    p: &DMatrix<f64>,
    perm: &[usize],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = mu.nrows();
    let mu_out = DMatrix::from_fn(m, mu.ncols(), |r, c| mu[(perm[r], c)]);
    let p_out = DMatrix::from_fn(m, m, |r, c| p[(perm[r], perm[c])]);
    (mu_out, p_out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::model::example_2x2;
    use rand_chacha::rand_core::SeedableRng;

    fn seg(steps: Vec<(usize, u8)>) -> ExplorationSegments {
        let mut s = ExplorationSegments::new();
        s.push_segment(steps);
        s
    }

    #[test]
    fn triple_counts_respect_segment_boundaries() {
        // one segment of length n gives n - 2 triples
        let t = collect_triples(&seg(vec![(0, 1), (1, 0), (0, 0), (1, 1)]), 2).unwrap();
        assert_eq!(t.len(), 2);

        // two segments of length 3 give 2 triples, none across the boundary
        let mut s = ExplorationSegments::new();
        s.push_segment(vec![(0, 1), (1, 0), (0, 0)]);
        s.push_segment(vec![(1, 1), (0, 1), (1, 0)]);
        let t = collect_triples(&s, 2).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0], [1, 2, 0]);
        assert_eq!(t[1], [3, 1, 2]);

        // length-2 segments contribute nothing
        let mut s = ExplorationSegments::new();
        s.push_segment(vec![(0, 1), (1, 0)]);
        assert!(matches!(
            collect_triples(&s, 2),
            Err(SpectralError::InsufficientData)
        ));
    }

    #[test]
    fn single_triple_moment_is_one_term_average() {
        let t = collect_triples(&seg(vec![(0, 1), (1, 0), (0, 0)]), 2).unwrap();
        assert_eq!(t, vec![[1, 2, 0]]);
        // W_{1,0} from the single triple (1, 2, 0) is y_3 (x) y_2 = e_0 e_2^T
        let joint = joint_frequencies(&t, 4);
        let [w_prev_cur, w_next_cur, _, _] = cross_moments(&joint);
        let mut want = DMatrix::zeros(4, 4);
        want[(0, 2)] = 1.0;
        assert_eq!(w_next_cur, want);
        let mut want_pc = DMatrix::zeros(4, 4);
        want_pc[(1, 2)] = 1.0;
        assert_eq!(w_prev_cur, want_pc);
        // a single observation cannot identify two states
        assert!(matches!(
            estimate_moments(&t, 4, 2),
            Err(SpectralError::IllConditionedMoments { .. })
        ));
    }

    #[test]
    fn constant_sequences_are_rank_one() {
        let steps: Vec<(usize, u8)> = (0..50).map(|_| (0usize, 1u8)).collect();
        let t = collect_triples(&seg(steps), 2).unwrap();
        assert!(matches!(
            estimate_moments(&t, 4, 2),
            Err(SpectralError::IllConditionedMoments { rank: 1, .. })
        ));
    }

    #[test]
    fn population_views_reference_values() {
        let model = example_2x2();
        let views = population_views(&model).unwrap();
        // A2(encode(arm 0, reward 1), state 0) = mu[0][0] / I = 0.45
        assert!((views.current[(1, 0)] - 0.45).abs() < 1e-14);
        // every view column is a distribution
        for view in [&views.backward, &views.current, &views.forward] {
            for m in 0..2 {
                let sum: f64 = view.column(m).iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                assert!(view.column(m).iter().all(|x| *x >= 0.0));
            }
        }
    }

    #[test]
    fn population_m2_is_rank_one_for_single_state() {
        let model = HmmBanditModel::validate(
            nalgebra::DMatrix::from_row_slice(1, 1, &[1.0]),
            nalgebra::DMatrix::from_row_slice(1, 2, &[0.3, 0.7]),
        )
        .unwrap();
        let moments = population_moments(&model).unwrap();
        let views = population_views(&model).unwrap();
        // M2 = v v^T with v the single observation distribution
        for a in 0..4 {
            for b in 0..4 {
                let want = views.forward[(a, 0)] * views.forward[(b, 0)];
                assert!((moments.m2[(a, b)] - want).abs() < 1e-12);
            }
        }
        assert_eq!(crate::linalg::effective_rank(&moments.m2), 1);
    }

    #[test]
    fn sampled_cross_moments_match_population_values() {
        // 10^6 uniform-arm steps: every W matrix lands within 0.005 of its
        // analytic population value entrywise
        use crate::rng::RunRng;
        use crate::sim::{sample_trajectory, ArmSource};
        let model = example_2x2();
        let traj =
            sample_trajectory(&model, &ArmSource::Uniform, 1_000_000, None, &RunRng::new(40))
                .unwrap();
        let mut segments = ExplorationSegments::new();
        segments.push_segment(
            traj.arms
                .iter()
                .cloned()
                .zip(traj.rewards.iter().cloned())
                .collect(),
        );
        let triples = collect_triples(&segments, 2).unwrap();
        let empirical = estimate_moments(&triples, 4, 2).unwrap();
        let population = population_moments(&model).unwrap();
        for (name, emp, pop) in [
            ("W_{-1,0}", &empirical.w_prev_cur, &population.w_prev_cur),
            ("W_{1,0}", &empirical.w_next_cur, &population.w_next_cur),
            ("W_{0,-1}", &empirical.w_cur_prev, &population.w_cur_prev),
            ("W_{1,-1}", &empirical.w_next_prev, &population.w_next_prev),
        ] {
            let err = max_abs(&(emp - pop));
            assert!(err <= 0.005, "{name} off by {err}");
            // averages of basis outer products: entries in [0,1], mass 1
            assert!(emp.iter().all(|x| (0.0..=1.0).contains(x)));
            assert!((emp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn pipeline_is_exact_on_population_moments() {
        let model = example_2x2();
        let moments = population_moments(&model).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let dec = tensor_decompose(
            &moments.m2,
            &moments.m3,
            2,
            &PowerMethodParams::default(),
            &mut rng,
        )
        .unwrap();
        // decomposition columns match the forward view up to permutation
        let views = population_views(&model).unwrap();
        let est = recover_parameters(&dec, &moments, 2, 2, &RecoveryFloors::default()).unwrap();
        let perm = align_permutation(&est.mu_hat, model.mean_rewards());
        let (mu_aligned, p_aligned) = apply_permutation(&est.mu_hat, &est.p_hat, &perm);
        assert!(max_abs(&(mu_aligned - model.mean_rewards())) < 1e-6);
        assert!(max_abs(&(p_aligned - model.transition())) < 1e-6);
        // b_hat columns are the forward view columns under the same labels
        for m in 0..2 {
            let col: Vec<f64> = (0..4).map(|r| est.b_hat[(r, perm[m])]).collect();
            for (got, want) in col.iter().zip(views.forward.column(m).iter()) {
                assert!((got - want).abs() < 1e-6);
            }
        }
        assert!(est.diagnostics.reconstruction_residual < 1e-8);
    }

    #[test]
    fn recovered_transition_rows_are_floored_distributions() {
        let model = example_2x2();
        let moments = population_moments(&model).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let dec = tensor_decompose(
            &moments.m2,
            &moments.m3,
            2,
            &PowerMethodParams::default(),
            &mut rng,
        )
        .unwrap();
        let floors = RecoveryFloors::default();
        let est = recover_parameters(&dec, &moments, 2, 2, &floors).unwrap();
        for m in 0..2 {
            let sum: f64 = est.p_hat.row(m).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(est.p_hat.row(m).iter().all(|x| *x >= floors.p_floor - 1e-15));
        }
    }

    #[test]
    fn zero_mass_columns_are_reported_as_degenerate() {
        use crate::tensor::TensorDecomposition;
        let model = example_2x2();
        let moments = population_moments(&model).unwrap();
        // doctored decomposition whose columns map to zero mass
        let dec = TensorDecomposition {
            columns: DMatrix::zeros(4, 2),
            weights: nalgebra::DVector::from_element(2, 0.5),
            residual: 0.0,
            whitening_condition: 1.0,
        };
        assert!(matches!(
            recover_parameters(&dec, &moments, 2, 2, &RecoveryFloors::default()),
            Err(SpectralError::DegenerateColumn { .. })
        ));
    }

    #[test]
    fn confidence_radius_formula() {
        // C = 1, S = 4, delta = 0.05, n = 7783:
        // radius = sqrt(ln(6 * 20 / 0.05) / 7783) = sqrt(ln 2400 / 7783)
        let model = example_2x2();
        let region = confidence_region(
            model.mean_rewards().clone(),
            model.transition().clone(),
            2,
            7783,
            0.05,
            1.0,
            1.0,
        );
        assert!((region.radius_mu_row - 0.0316232).abs() < 1e-5);
        assert!((region.radius_p - region.radius_mu_row).abs() < 1e-15);

        // quadrupling n halves the radius
        let region4 = confidence_region(
            model.mean_rewards().clone(),
            model.transition().clone(),
            2,
            4 * 7783,
            0.05,
            1.0,
            1.0,
        );
        assert!((region4.radius_mu_row - region.radius_mu_row / 2.0).abs() < 1e-12);
    }

    #[test]
    fn shrinking_schedule_grows_like_sqrt_log_k() {
        // delta_k = delta / k^3 at fixed n: radius grows like sqrt(log k)
        let model = example_2x2();
        let radius = |k: f64| {
            confidence_region(
                model.mean_rewards().clone(),
                model.transition().clone(),
                2,
                1000,
                0.05 / k.powi(3),
                1.0,
                1.0,
            )
            .radius_mu_row
        };
        let r1 = radius(1.0);
        let r8 = radius(8.0);
        let expected =
            ((6.0_f64 * 20.0 / 0.05).ln() + 3.0 * 8.0_f64.ln()).sqrt() / (6.0_f64 * 20.0 / 0.05).ln().sqrt();
        assert!((r8 / r1 - expected).abs() < 1e-12);
        assert!(r8 > r1);
    }

    #[test]
    fn alignment_finds_the_permutation() {
        let model = example_2x2();
        let mu = model.mean_rewards();
        assert_eq!(align_permutation(mu, mu), vec![0, 1]);

        let swapped = DMatrix::from_row_slice(2, 2, &[0.5, 0.6, 0.9, 0.1]);
        assert_eq!(align_permutation(&swapped, mu), vec![1, 0]);
    }

    #[test]
    fn alignment_matches_exhaustive_assignment_under_noise() {
        use rand::Rng;
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        for _ in 0..50 {
            let m = 3;
            let mu_ref = DMatrix::from_fn(m, 2, |_, _| rng.random::<f64>());
            let perm = [2usize, 0, 1];
            let mut mu_hat = DMatrix::zeros(m, 2);
            for r in 0..m {
                for c in 0..2 {
                    mu_hat[(perm[r], c)] = mu_ref[(r, c)] + 0.02 * (rng.random::<f64>() - 0.5);
                }
            }
            let found = align_permutation(&mu_hat, &mu_ref);
            assert_eq!(found, vec![2, 0, 1]);
        }
    }
}
