//! Small dense linear-algebra helpers: truncated pseudo-inverses, simplex
//! projection, norms, and a minimal third-order tensor.
//!
//! Everything here operates on matrices of side at most a few dozen, so
//! clarity wins over blocking or allocation tricks.

use nalgebra::{DMatrix, DVector};

/// Relative cutoff for singular values, scaled by `max_dim * sigma_max`.
pub const PINV_RCOND: f64 = 1e-10;

/// Moore-Penrose pseudo-inverse via SVD.
///
/// Singular values below `max(nrows, ncols) * sigma_max * 1e-10` are dropped,
/// and at most `max_rank` values are kept. Returns the pseudo-inverse together
/// with the retained rank.
pub fn pinv_truncated(a: &DMatrix<f64>, max_rank: usize) -> (DMatrix<f64>, usize) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd with u requested");
    let vt = svd.v_t.as_ref().expect("svd with v_t requested");
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().cloned().fold(0.0, f64::max);
    let cutoff = a.nrows().max(a.ncols()) as f64 * sigma_max * PINV_RCOND;

    let mut rank = 0;
    let k = sigma.len();
    let mut inv = DVector::zeros(k);
    for j in 0..k.min(max_rank) {
        if sigma[j] > cutoff && sigma[j] > 0.0 {
            inv[j] = 1.0 / sigma[j];
            rank += 1;
        }
    }
    // A = U S V^T  =>  A^+ = V S^+ U^T
    let pinv = vt.transpose() * DMatrix::from_diagonal(&inv) * u.transpose();
    (pinv, rank)
}

/// Effective rank of a matrix under the same cutoff rule as [`pinv_truncated`].
pub fn effective_rank(a: &DMatrix<f64>) -> usize {
    let svd = a.clone().svd(false, false);
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().cloned().fold(0.0, f64::max);
    let cutoff = a.nrows().max(a.ncols()) as f64 * sigma_max * PINV_RCOND;
    sigma.iter().filter(|s| **s > cutoff && **s > 0.0).count()
}

/// Smallest singular value.
pub fn sigma_min(a: &DMatrix<f64>) -> f64 {
    let svd = a.clone().svd(false, false);
    svd.singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Euclidean projection onto `{x : x_i >= floor, sum x = 1}`.
///
/// Water-filling on the shifted simplex; requires `floor * len < 1`.
pub fn project_floor_simplex(v: &[f64], floor: f64) -> Vec<f64> {
    let n = v.len();
    assert!(n > 0 && floor >= 0.0 && floor * n as f64 <= 1.0 + 1e-12);
    let budget = 1.0 - floor * n as f64;
    // Project v - floor onto the simplex of total mass `budget`.
    let shifted: Vec<f64> = v.iter().map(|x| x - floor).collect();
    let mut sorted = shifted.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - budget) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    shifted
        .iter()
        .map(|x| (x - theta).max(0.0) + floor)
        .collect()
}

/// Max-column-sum norm `max_j sum_i |a_ij|` (the induced l1 norm).
pub fn max_column_l1(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Entrywise Frobenius norm.
pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Entrywise max-abs norm.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Third-order tensors
// ---------------------------------------------------------------------------

/// Dense cubic third-order tensor with side `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dim: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.dim + j) * self.dim + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.dim + j) * self.dim + k] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.dim + j) * self.dim + k] += v;
    }

    /// Rank-one update `self += w * x (x) y (x) z`.
    pub fn add_outer(&mut self, w: f64, x: &[f64], y: &[f64], z: &[f64]) {
        let d = self.dim;
        for i in 0..d {
            let wi = w * x[i];
            for j in 0..d {
                let wij = wi * y[j];
                for k in 0..d {
                    self.data[(i * d + j) * d + k] += wij * z[k];
                }
            }
        }
    }

    /// Multilinear contraction `T(W, W, W)` producing a tensor of side
    /// `w.ncols()`, where each mode is hit with `W^T`.
    pub fn contract_all(&self, w: &DMatrix<f64>) -> Tensor3 {
        let d = self.dim;
        let r = w.ncols();
        assert_eq!(w.nrows(), d);
        // mode-3 first: tmp[i][j][c] = sum_k T[i][j][k] W[k][c]
        let mut tmp = vec![0.0; d * d * r];
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let t = self.get(i, j, k);
                    if t == 0.0 {
                        continue;
                    }
                    for c in 0..r {
                        tmp[(i * d + j) * r + c] += t * w[(k, c)];
                    }
                }
            }
        }
        // mode-2: tmp2[i][b][c] = sum_j tmp[i][j][c] W[j][b]
        let mut tmp2 = vec![0.0; d * r * r];
        for i in 0..d {
            for j in 0..d {
                for c in 0..r {
                    let t = tmp[(i * d + j) * r + c];
                    if t == 0.0 {
                        continue;
                    }
                    for b in 0..r {
                        tmp2[(i * r + b) * r + c] += t * w[(j, b)];
                    }
                }
            }
        }
        // mode-1: out[a][b][c] = sum_i tmp2[i][b][c] W[i][a]
        let mut out = Tensor3::zeros(r);
        for i in 0..d {
            for b in 0..r {
                for c in 0..r {
                    let t = tmp2[(i * r + b) * r + c];
                    if t == 0.0 {
                        continue;
                    }
                    for a in 0..r {
                        out.data[(a * r + b) * r + c] += t * w[(i, a)];
                    }
                }
            }
        }
        out
    }

    /// Vector contraction on modes 2 and 3: `v_a = sum_{b,c} T[a][b][c] x_b x_c`.
    pub fn contract_23(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for a in 0..d {
            let mut acc = 0.0;
            for b in 0..d {
                let xb = x[b];
                if xb == 0.0 {
                    continue;
                }
                let base = (a * d + b) * d;
                let mut inner = 0.0;
                for c in 0..d {
                    inner += self.data[base + c] * x[c];
                }
                acc += xb * inner;
            }
            out[a] = acc;
        }
        out
    }

    /// Full contraction `sum T[a][b][c] x_a x_b x_c`.
    pub fn contract_full(&self, x: &[f64]) -> f64 {
        self.contract_23(x)
            .iter()
            .zip(x)
            .map(|(v, xi)| v * xi)
            .sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}
