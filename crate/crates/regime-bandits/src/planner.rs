//! Average-reward planning on a discretized belief simplex.
//!
//! The optimal long-run average reward `rho` and bias `h` solve
//!
//! ```text
//! rho + h(b) = max_i [ cbar(b, i) + sum_{r in {0,1}} P(r | b, i) h(H(b, i, r)) ]
//! ```
//!
//! with `P(1 | b, i) = cbar(b, i)`. Relative value iteration subtracts the
//! value at a reference point each sweep; the one-step increments bracket
//! `rho` from both sides and their span is the stopping criterion. Successor
//! beliefs are evaluated by linear interpolation along the one-dimensional
//! simplex for two states, and by the nearest grid point in l1 otherwise.
//!
//! ```
//! use std::sync::Arc;
//! use regime_bandits::model::example_2x2;
//! use regime_bandits::planner::*;
//!
//! let model = example_2x2();
//! let grid = Arc::new(SimplexGrid::build(2, 100, DEFAULT_GRID_BUDGET).unwrap());
//! let sol = solve_average_reward(&model, &grid, 1e-6, 100_000).unwrap();
//! // rho is pinned between the best fixed arm under the stationary
//! // distribution and the full-information oracle: [12.1/17, 12.9/17].
//! assert!(sol.rho >= 12.1 / 17.0 - 1e-4 && sol.rho <= 12.9 / 17.0 + 1e-4);
//! // the bias span respects the closed-form mixing bound D(1/4) ~ 745.5
//! assert!(bias_span(&sol) <= bias_span_bound(0.25).unwrap());
//! ```

use crate::belief::{belief_update, expected_reward};
use crate::error::PlannerError;
use crate::linalg::project_floor_simplex;
use crate::model::{Belief, HmmBanditModel};
use crate::spectral::ConfidenceRegion;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Hard cap on grid sizes unless overridden: planning is quadratic in points.
pub const DEFAULT_GRID_BUDGET: usize = 200_000;

/// All beliefs whose components are multiples of `1 / resolution`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexGrid {
    dim: usize,
    resolution: usize,
    points: Vec<Vec<f64>>,
}

impl SimplexGrid {
    /// Enumerate the grid in lexicographic order of compositions. The point
    /// count is `C(resolution + dim - 1, dim - 1)`.
    pub fn build(dim: usize, resolution: usize, budget: usize) -> Result<Self, PlannerError> {
        if dim == 0 || resolution == 0 {
            return Err(PlannerError::InvalidGrid);
        }
        let count = compositions(resolution, dim);
        if count > budget {
            return Err(PlannerError::GridTooLarge {
                points: count,
                budget,
            });
        }
        let mut points = Vec::with_capacity(count);
        let mut current = vec![0usize; dim];
        enumerate_compositions(resolution, dim, 0, &mut current, &mut points);
        let scale = 1.0 / resolution as f64;
        let points = points
            .into_iter()
            .map(|c| c.into_iter().map(|k| k as f64 * scale).collect())
            .collect();
        Ok(Self {
            dim,
            resolution,
            points,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, idx: usize) -> &[f64] {
        &self.points[idx]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Index of the grid point nearest `b` in l1, ties to the lexicographically
    /// smallest composition. Exact for on-grid points.
    pub fn nearest(&self, b: &[f64]) -> usize {
        let d = self.resolution;
        // deterministic apportionment: floor everything, then hand out the
        // remaining units by descending fractional part (index ascending on ties)
        let scaled: Vec<f64> = b.iter().map(|x| x * d as f64).collect();
        let mut units: Vec<usize> = scaled.iter().map(|x| x.floor() as usize).collect();
        let assigned: usize = units.iter().sum();
        let mut remaining = d.saturating_sub(assigned);
        let mut order: Vec<usize> = (0..self.dim).collect();
        order.sort_by(|a, b| {
            let fa = scaled[*a] - scaled[*a].floor();
            let fb = scaled[*b] - scaled[*b].floor();
            fb.partial_cmp(&fa).unwrap().then(a.cmp(b))
        });
        for idx in order {
            if remaining == 0 {
                break;
            }
            units[idx] += 1;
            remaining -= 1;
        }
        self.index_of_units(&units)
    }

    /// For two states: the pair of neighboring grid indices bracketing `b`
    /// along the first coordinate plus the interpolation weight on the upper
    /// one. For more states: the nearest point twice with weight zero.
    fn locate(&self, b: &[f64]) -> (usize, usize, f64) {
        if self.dim == 2 {
            let x = (b[0] * self.resolution as f64).clamp(0.0, self.resolution as f64);
            let lo = x.floor() as usize;
            let hi = lo.min(self.resolution - 1) + 1;
            let lo = lo.min(self.resolution);
            let w = x - lo as f64;
            // grid order for dim 2 is (0, d), (1, d-1), ..., (d, 0) along the
            // first coordinate: index = units of the first coordinate
            (lo, hi.min(self.resolution), w.clamp(0.0, 1.0))
        } else {
            let idx = self.nearest(b);
            (idx, idx, 0.0)
        }
    }

    fn index_of_units(&self, units: &[usize]) -> usize {
        // For dim 2 the index is direct; otherwise binary search the
        // lexicographic enumeration.
        if self.dim == 2 {
            return units[0];
        }
        let target: Vec<f64> = units
            .iter()
            .map(|k| *k as f64 / self.resolution as f64)
            .collect();
        self.points
            .binary_search_by(|p| p.partial_cmp(&target).unwrap())
            .unwrap_or_else(|i| i.min(self.points.len() - 1))
    }

    /// Index of the grid point nearest the uniform belief.
    pub fn reference_index(&self) -> usize {
        let uniform = vec![1.0 / self.dim as f64; self.dim];
        self.nearest(&uniform)
    }
}

fn compositions(total: usize, parts: usize) -> usize {
    // C(total + parts - 1, parts - 1) with overflow care for sane inputs
    let n = total + parts - 1;
    let k = parts - 1;
    let k = k.min(n - k);
    let mut num: u128 = 1;
    let mut den: u128 = 1;
    for j in 0..k {
        num *= (n - j) as u128;
        den *= (j + 1) as u128;
        let g = gcd(num, den);
        num /= g;
        den /= g;
    }
    (num / den) as usize
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn enumerate_compositions(
    total: usize,
    parts: usize,
    _depth: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    fn rec(total: usize, pos: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos == current.len() - 1 {
            current[pos] = total;
            out.push(current.clone());
            return;
        }
        for k in 0..=total {
            current[pos] = k;
            rec(total - k, pos + 1, current, out);
        }
    }
    debug_assert_eq!(current.len(), parts);
    rec(total, 0, current, out);
}

// ---------------------------------------------------------------------------
// Relative value iteration
// ---------------------------------------------------------------------------

/// A solved planning problem on a grid.
#[derive(Debug, Clone)]
pub struct PlannerSolution {
    pub grid: Arc<SimplexGrid>,
    /// Optimal average reward per period.
    pub rho: f64,
    /// Bias value at each grid point (zero at the reference point).
    pub h: Vec<f64>,
    /// Greedy arm at each grid point.
    pub policy: Vec<usize>,
    /// Span of the final one-step increment; at most `tol` when converged.
    pub residual_span: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `(min increment, max increment)` for the last sweeps, oldest first.
    pub bracket_trace: Vec<(f64, f64)>,
}

impl PlannerSolution {
    /// Arm prescribed for an arbitrary belief (nearest grid point).
    pub fn action_for(&self, b: &Belief) -> usize {
        self.policy[self.grid.nearest(b.components())]
    }
}

/// Max minus min of the bias values.
pub fn bias_span(solution: &PlannerSolution) -> f64 {
    let max = solution.h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = solution.h.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

// Per (point, arm): the expected reward and, per outcome, the successor's
// interpolation stencil. The sweep itself is then pure arithmetic.
struct Stencil {
    reward: f64,
    /// Probability the next reward is 1; equals the expected reward for the
    /// binary model but stays fixed under test-only reward shifts.
    pr1: f64,
    lo: [usize; 2],
    hi: [usize; 2],
    w: [f64; 2],
}

fn build_stencils(
    model: &HmmBanditModel,
    grid: &SimplexGrid,
) -> Result<Vec<Stencil>, PlannerError> {
    let n = grid.len();
    let arms = model.num_arms();
    let mut stencils = Vec::with_capacity(n * arms);
    for g in 0..n {
        let b = Belief::from_normalized(grid.point(g).to_vec());
        for arm in 0..arms {
            let reward = expected_reward(model, &b, arm);
            let mut lo = [0usize; 2];
            let mut hi = [0usize; 2];
            let mut w = [0f64; 2];
            for r in 0..2u8 {
                let next = belief_update(model, &b, arm, r)?;
                let (l, h_, ww) = grid.locate(next.components());
                lo[r as usize] = l;
                hi[r as usize] = h_;
                w[r as usize] = ww;
            }
            stencils.push(Stencil {
                reward,
                pr1: reward,
                lo,
                hi,
                w,
            });
        }
    }
    Ok(stencils)
}

/// Solve the average-reward problem by relative value iteration.
pub fn solve_average_reward(
    model: &HmmBanditModel,
    grid: &Arc<SimplexGrid>,
    tol: f64,
    max_iter: usize,
) -> Result<PlannerSolution, PlannerError> {
    if model.epsilon() <= 0.0 {
        return Err(crate::error::ModelError::ZeroTransitionEntry.into());
    }
    let stencils = build_stencils(model, grid)?;
    Ok(iterate_stencils(&stencils, grid, model.num_arms(), tol, max_iter))
}

fn iterate_stencils(
    stencils: &[Stencil],
    grid: &Arc<SimplexGrid>,
    arms: usize,
    tol: f64,
    max_iter: usize,
) -> PlannerSolution {
    let n = grid.len();
    let reference = grid.reference_index();
    let mut h = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut policy = vec![0usize; n];
    let mut rho = 0.0;
    let mut residual_span = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut bracket_trace: Vec<(f64, f64)> = Vec::new();

    for it in 0..max_iter {
        iterations = it + 1;
        let mut min_inc = f64::INFINITY;
        let mut max_inc = f64::NEG_INFINITY;
        for g in 0..n {
            let mut best = f64::NEG_INFINITY;
            let mut best_arm = 0;
            for arm in 0..arms {
                let st = &stencils[g * arms + arm];
                let h0 = (1.0 - st.w[0]) * h[st.lo[0]] + st.w[0] * h[st.hi[0]];
                let h1 = (1.0 - st.w[1]) * h[st.lo[1]] + st.w[1] * h[st.hi[1]];
                let value = st.reward + (1.0 - st.pr1) * h0 + st.pr1 * h1;
                if value > best + 1e-300 && value > best {
                    best = value;
                    best_arm = arm;
                }
            }
            g_new[g] = best;
            policy[g] = best_arm;
            let inc = best - h[g];
            min_inc = min_inc.min(inc);
            max_inc = max_inc.max(inc);
        }
        rho = 0.5 * (min_inc + max_inc);
        residual_span = max_inc - min_inc;
        if bracket_trace.len() >= 16 {
            bracket_trace.remove(0);
        }
        bracket_trace.push((min_inc, max_inc));
        let offset = g_new[reference];
        for g in 0..n {
            h[g] = g_new[g] - offset;
        }
        if residual_span <= tol {
            converged = true;
            break;
        }
    }

    PlannerSolution {
        grid: Arc::clone(grid),
        rho,
        h,
        policy,
        residual_span,
        iterations,
        converged,
        bracket_trace,
    }
}

/// Solve with a constant added to every reward term (the belief dynamics are
/// untouched). The optimal average reward shifts by exactly that constant and
/// the greedy policy is unchanged; exposed for the tests that pin this.
#[cfg(test)]
pub(crate) fn solve_with_reward_shift(
    model: &HmmBanditModel,
    grid: &Arc<SimplexGrid>,
    shift: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PlannerSolution, PlannerError> {
    let mut stencils = build_stencils(model, grid)?;
    for st in stencils.iter_mut() {
        st.reward += shift;
    }
    Ok(iterate_stencils(&stencils, grid, model.num_arms(), tol, max_iter))
}

// ---------------------------------------------------------------------------
// Bias span bound
// ---------------------------------------------------------------------------

/// Closed-form bound on the bias span as a function of the smallest
/// transition entry:
///
/// ```text
/// D(eps) = 8 (2 / (1 - a)^2 + (1 + a) log_a ((1 - a) / 8)) / (1 - a),
/// a = (1 - 2 eps) / (1 - eps)
/// ```
///
/// Defined for `eps` in `(0, 1/2)`; as `eps -> 1/2` the log term vanishes and
/// the bound tends to 16.
pub fn bias_span_bound(epsilon: f64) -> Result<f64, PlannerError> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(PlannerError::EpsilonOutOfRange(epsilon));
    }
    let a = (1.0 - 2.0 * epsilon) / (1.0 - epsilon);
    let one_minus = 1.0 - a;
    // log_a((1 - a) / 8): ln a diverges as a -> 0, so the whole term goes to 0
    let log_term = if a < 1e-15 {
        0.0
    } else {
        (one_minus / 8.0).ln() / a.ln()
    };
    Ok(8.0 * (2.0 / (one_minus * one_minus) + (1.0 + a) * log_term) / one_minus)
}

// ---------------------------------------------------------------------------
// Optimistic model search
// ---------------------------------------------------------------------------

/// The model chosen by the optimistic search and its planning solution.
#[derive(Debug, Clone)]
pub struct OptimisticChoice {
    pub mu: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub rho: f64,
    pub solution: Arc<PlannerSolution>,
    pub candidates_evaluated: usize,
    pub candidates_failed: usize,
}

/// Cache of planning solutions keyed by quantized parameters, reused across
/// episodes when the optimistic search revisits a model.
pub type PlannerMemo = BTreeMap<Vec<i64>, Arc<PlannerSolution>>;

fn memo_key(mu: &DMatrix<f64>, p: &DMatrix<f64>) -> Vec<i64> {
    // 1e-9 quantization: models closer than that share a solve
    mu.iter()
        .chain(p.iter())
        .map(|x| (x * 1e9).round() as i64)
        .collect()
}

/// Search the confidence region for the plausible model with the largest
/// optimal average reward.
///
/// The candidate set is deterministic plus seeded: the projected center, each
/// row of `mu` pushed by the full row radius along each coordinate direction
/// (both signs), each row of `P` pushed toward each simplex corner by the `P`
/// radius, and `n_random` uniform samples from the region. Every candidate is
/// projected into the feasible set (means clipped, rows onto the floored
/// simplex) before planning; candidates that fail to plan are skipped and
/// counted.
#[allow(clippy::too_many_arguments)]
pub fn optimistic_model_search(
    region: &ConfidenceRegion,
    grid: &Arc<SimplexGrid>,
    tol: f64,
    max_iter: usize,
    n_random: usize,
    floors: &crate::spectral::RecoveryFloors,
    rng: &mut ChaCha12Rng,
    memo: &mut PlannerMemo,
) -> Result<OptimisticChoice, PlannerError> {
    let m = region.num_states();
    let arms = region.num_arms();

    let mut candidates: Vec<(DMatrix<f64>, DMatrix<f64>)> = Vec::new();
    candidates.push((region.mu_center.clone(), region.p_center.clone()));

    // per-row coordinate extremes of mu at the row radius
    if region.radius_mu_row > 0.0 {
        for row in 0..m {
            for arm in 0..arms {
                for sign in [1.0, -1.0] {
                    let mut mu = region.mu_center.clone();
                    mu[(row, arm)] += sign * region.radius_mu_row;
                    candidates.push((mu, region.p_center.clone()));
                }
            }
        }
    }

    // each row of P pushed toward each simplex corner
    if region.radius_p > 0.0 {
        for row in 0..m {
            for corner in 0..m {
                let mut p = region.p_center.clone();
                let mut dir: Vec<f64> = (0..m)
                    .map(|c| f64::from(c == corner) - p[(row, c)])
                    .collect();
                let norm: f64 = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm < 1e-12 {
                    continue;
                }
                let step = region.radius_p.min(norm);
                for (c, d) in dir.iter_mut().enumerate() {
                    p[(row, c)] += step * *d / norm;
                }
                candidates.push((region.mu_center.clone(), p));
            }
        }
    }

    // seeded uniform samples inside the region
    for _ in 0..n_random {
        let mut mu = region.mu_center.clone();
        if region.radius_mu_row > 0.0 {
            for row in 0..m {
                // uniform in the l2 ball of the row radius
                let dir: Vec<f64> = (0..arms).map(|_| StandardNormal.sample(rng)).collect();
                let norm: f64 = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                let radius = region.radius_mu_row * rng.random::<f64>().powf(1.0 / arms as f64);
                for (arm, d) in dir.iter().enumerate() {
                    mu[(row, arm)] += radius * d / norm;
                }
            }
        }
        let mut p = region.p_center.clone();
        if region.radius_p > 0.0 {
            // uniform direction in Frobenius ball of the P radius
            let dir: Vec<f64> = (0..m * m).map(|_| StandardNormal.sample(rng)).collect();
            let norm: f64 = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            let radius = region.radius_p * rng.random::<f64>().powf(1.0 / (m * m) as f64);
            for row in 0..m {
                for c in 0..m {
                    p[(row, c)] += radius * dir[row * m + c] / norm;
                }
            }
        }
        candidates.push((mu, p));
    }

    let mut best: Option<OptimisticChoice> = None;
    let mut failed = 0usize;
    let total = candidates.len();
    for (mut mu, mut p) in candidates {
        // project into the feasible set
        for v in mu.iter_mut() {
            *v = v.clamp(floors.mu_floor, 1.0 - floors.mu_floor);
        }
        for row in 0..m {
            let r: Vec<f64> = (0..m).map(|c| p[(row, c)]).collect();
            for (c, v) in project_floor_simplex(&r, floors.p_floor)
                .into_iter()
                .enumerate()
            {
                p[(row, c)] = v;
            }
        }
        let key = memo_key(&mu, &p);
        let solution = if let Some(hit) = memo.get(&key) {
            Arc::clone(hit)
        } else {
            let model = match HmmBanditModel::validate(p.clone(), mu.clone()) {
                Ok(model) => model,
                Err(_) => {
                    failed += 1;
                    continue;
                }
            };
            match solve_average_reward(&model, grid, tol, max_iter) {
                Ok(sol) => {
                    let sol = Arc::new(sol);
                    memo.insert(key, Arc::clone(&sol));
                    sol
                }
                Err(_) => {
                    failed += 1;
                    continue;
                }
            }
        };
        let better = match &best {
            None => true,
            Some(b) => solution.rho > b.rho,
        };
        if better {
            best = Some(OptimisticChoice {
                mu,
                p,
                rho: solution.rho,
                solution,
                candidates_evaluated: total,
                candidates_failed: 0,
            });
        }
    }

    match best {
        Some(mut choice) => {
            choice.candidates_failed = failed;
            Ok(choice)
        }
        None => Err(PlannerError::NoPlannableCandidate { failures: failed }),
    }
}
