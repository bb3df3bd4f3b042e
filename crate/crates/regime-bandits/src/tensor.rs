//! Whitened third-order tensor decomposition by the robust power method.
//!
//! Input: a symmetric second moment `M2 = sum_m w_m b_m b_m^T` and a third
//! moment `M3 = sum_m w_m b_m (x) b_m (x) b_m` with positive weights and
//! linearly independent components. The second moment whitens the tensor into
//! an orthogonally decomposable one; power iterations with random restarts
//! extract its eigenpairs one at a time, deflating after each; un-whitening
//! maps the eigenvectors back to the components `b_m` and the eigenvalues to
//! the weights `w_m = 1 / lambda_m^2`.

use crate::error::SpectralError;
use crate::linalg::Tensor3;
use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

/// Hyperparameters of the power method.
#[derive(Debug, Clone, Copy)]
pub struct PowerMethodParams {
    /// Random restarts per component.
    pub restarts: usize,
    /// Power iterations per restart.
    pub iterations: usize,
    /// Convergence tolerance on the iterate displacement.
    pub tolerance: f64,
}

impl Default for PowerMethodParams {
    fn default() -> Self {
        Self {
            restarts: 30,
            iterations: 100,
            tolerance: 1e-10,
        }
    }
}

/// Result of the decomposition: `columns` holds the recovered components
/// (side by side, one per hidden state) and `weights` their mixture masses.
#[derive(Debug, Clone)]
pub struct TensorDecomposition {
    pub columns: DMatrix<f64>,
    pub weights: DVector<f64>,
    /// Frobenius residual of the rank-`M` reconstruction of `M3`.
    pub residual: f64,
    /// Ratio of the largest to the smallest retained eigenvalue of `M2`.
    pub whitening_condition: f64,
}

/// Decompose `(M2, M3)` at the given rank.
pub fn tensor_decompose(
    m2: &DMatrix<f64>,
    m3: &Tensor3,
    rank: usize,
    params: &PowerMethodParams,
    rng: &mut ChaCha12Rng,
) -> Result<TensorDecomposition, SpectralError> {
    let s = m2.nrows();
    assert_eq!(m2.ncols(), s);
    assert_eq!(m3.dim(), s);

    // Whitening from the top-`rank` eigenpairs of the symmetrized M2.
    let sym = (m2 + m2.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|a, b| {
        eig.eigenvalues[*b]
            .partial_cmp(&eig.eigenvalues[*a])
            .unwrap()
            .then(a.cmp(b))
    });
    let positive = order
        .iter()
        .take(rank)
        .filter(|i| eig.eigenvalues[**i] > 1e-10)
        .count();
    if positive < rank {
        return Err(SpectralError::WhiteningFailure {
            found: positive,
            required: rank,
        });
    }
    let mut whiten = DMatrix::zeros(s, rank);
    let mut unwhiten = DMatrix::zeros(s, rank); // (W^T)^+ columns
    for (c, &i) in order.iter().take(rank).enumerate() {
        let lam = eig.eigenvalues[i];
        let scale = lam.sqrt();
        for r in 0..s {
            let v = eig.eigenvectors[(r, i)];
            whiten[(r, c)] = v / scale;
            unwhiten[(r, c)] = v * scale;
        }
    }
    let whitening_condition =
        eig.eigenvalues[order[0]] / eig.eigenvalues[order[rank - 1]];

    // Whitened tensor is rank x rank x rank and orthogonally decomposable.
    let mut work = m3.contract_all(&whiten);

    let mut eigvecs: Vec<Vec<f64>> = Vec::with_capacity(rank);
    let mut eigvals: Vec<f64> = Vec::with_capacity(rank);
    for _ in 0..rank {
        let (theta, lambda, moved) = extract_component(&work, rank, params, rng);
        if moved > params.tolerance.sqrt() {
            return Err(SpectralError::NonConvergence {
                residual: moved,
                restarts: params.restarts,
            });
        }
        // deflate
        let mut neg = Tensor3::zeros(rank);
        neg.add_outer(-lambda, &theta, &theta, &theta);
        let mut deflated = Tensor3::zeros(rank);
        for a in 0..rank {
            for b in 0..rank {
                for c in 0..rank {
                    deflated.set(a, b, c, work.get(a, b, c) + neg.get(a, b, c));
                }
            }
        }
        work = deflated;
        eigvecs.push(theta);
        eigvals.push(lambda);
    }

    // Un-whiten: component m is lambda_m * (W^T)^+ theta_m, weight 1/lambda^2.
    let mut columns = DMatrix::zeros(s, rank);
    let mut weights = DVector::zeros(rank);
    for m in 0..rank {
        let lam = eigvals[m];
        weights[m] = if lam.abs() > 1e-300 {
            1.0 / (lam * lam)
        } else {
            0.0
        };
        for r in 0..s {
            let mut acc = 0.0;
            for c in 0..rank {
                acc += unwhiten[(r, c)] * eigvecs[m][c];
            }
            columns[(r, m)] = lam * acc;
        }
    }

    // Deterministic output order: descending weight, ties by first coordinate.
    let mut perm: Vec<usize> = (0..rank).collect();
    perm.sort_by(|a, b| {
        weights[*b]
            .partial_cmp(&weights[*a])
            .unwrap()
            .then(columns[(0, *b)].partial_cmp(&columns[(0, *a)]).unwrap())
            .then(a.cmp(b))
    });
    let columns = DMatrix::from_fn(s, rank, |r, c| columns[(r, perm[c])]);
    let weights = DVector::from_fn(rank, |c, _| weights[perm[c]]);

    // Residual of the rank-`rank` reconstruction against the original M3.
    let mut recon = Tensor3::zeros(s);
    for m in 0..rank {
        let col: Vec<f64> = (0..s).map(|r| columns[(r, m)]).collect();
        recon.add_outer(weights[m], &col, &col, &col);
    }
    let mut diff2 = 0.0;
    for (a, b) in recon.data().iter().zip(m3.data()) {
        diff2 += (a - b) * (a - b);
    }

    Ok(TensorDecomposition {
        columns,
        weights,
        residual: diff2.sqrt(),
        whitening_condition,
    })
}

/// Best eigenpair of `t` by restarted power iteration. Returns the vector,
/// its eigenvalue, and the displacement of the final polishing iteration.
fn extract_component(
    t: &Tensor3,
    dim: usize,
    params: &PowerMethodParams,
    rng: &mut ChaCha12Rng,
) -> (Vec<f64>, f64, f64) {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..params.restarts {
        let mut theta = random_unit(dim, rng);
        for _ in 0..params.iterations {
            let next = t.contract_23(&theta);
            let norm = l2(&next);
            if norm < 1e-300 {
                break;
            }
            let next: Vec<f64> = next.iter().map(|x| x / norm).collect();
            let moved = l2_diff(&next, &theta);
            theta = next;
            if moved < params.tolerance {
                break;
            }
        }
        let lambda = t.contract_full(&theta);
        if best.as_ref().map(|(l, _)| lambda > *l).unwrap_or(true) {
            best = Some((lambda, theta));
        }
    }
    let (_, mut theta) = best.expect("at least one restart");
    // polish and measure stability
    let mut moved = 0.0;
    for _ in 0..params.iterations {
        let next = t.contract_23(&theta);
        let norm = l2(&next);
        if norm < 1e-300 {
            break;
        }
        let next: Vec<f64> = next.iter().map(|x| x / norm).collect();
        moved = l2_diff(&next, &theta);
        theta = next;
        if moved < params.tolerance {
            break;
        }
    }
    let lambda = t.contract_full(&theta);
    (theta, lambda, moved)
}

fn random_unit(dim: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = l2(&v);
        if n > 1e-12 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
