//! Gram matrices over prior embeddings and the centroid-weight solve.
//!
//! Given prior vectors `z_1..z_n` (one per anchor) and a kernel `K`, this
//! module builds the Gram matrix `K_n`, solves the ridge system
//!
//! ```text
//! A = (K_n + n*lambda*I)^-1 K_n
//! ```
//!
//! whose rows mix view-average embeddings into kernel centroid estimates,
//! and computes the conditioning number
//!
//! ```text
//! beta_n = ( lambda_min(K_n)/sqrt(n) + sqrt(n)*lambda )^-1
//! ```
//!
//! which scales how strongly kernel mis-specification can loosen the
//! supervised-loss bounds. `beta_n` has an equivalent spectral form
//! `sqrt(n) * ||(K_n + n*lambda*I)^-1||_2`; both are implemented
//! ([`beta_n`], [`beta_n_spectral`]) so each can check the other.
//!
//! All matrices are dense `f64`; sizes are capped at `n = 2048`.

use std::sync::OnceLock;

use ndarray::Array2;
use thiserror::Error;

use crate::linalg;

/// Largest Gram matrix this module will factor.
pub const MAX_KERNEL_SIZE: usize = 2048;

/// Residual bound `max_ij |(K + n*lambda*I) A - K|` a centroid solve must meet.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("kernel matrix must be square, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },
    #[error("kernel matrix is empty")]
    Empty,
    #[error("kernel matrix exceeds size limit: n = {n}, limit = {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("kernel matrix has a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("kernel matrix is not symmetric: |K[{row},{col}] - K[{col},{row}]| = {deviation:e}")]
    Asymmetric { row: usize, col: usize, deviation: f64 },
    #[error("rbf bandwidth sigma must be positive and finite, got {sigma}")]
    BadSigma { sigma: f64 },
    #[error("cosine kernel requires nonzero vectors; row {row} has norm {norm:e}")]
    ZeroNormRow { row: usize, norm: f64 },
    #[error("prior table has a non-finite entry at row {row}")]
    NonFinitePrior { row: usize },
    #[error("prior table is empty")]
    EmptyPrior,
    #[error("ridge parameter lambda must be finite and >= 0, got {lambda}")]
    BadLambda { lambda: f64 },
    #[error(
        "system K + n*lambda*I is numerically singular at lambda = 0 \
         (min eigenvalue {min_eigenvalue:e}); use a positive lambda"
    )]
    SingularSystem { min_eigenvalue: f64 },
    #[error("centroid-weight solve produced a non-finite entry")]
    NonFiniteSolve,
    #[error("beta_n undefined: lambda_min(K)/sqrt(n) + sqrt(n)*lambda = {denominator:e} <= 0")]
    BetaUndefined { denominator: f64 },
    #[error("index {index} out of bounds for kernel of size {n}")]
    IndexOutOfBounds { index: usize, n: usize },
    #[error("right-hand side has {got} rows, kernel has {expected}")]
    RhsShape { got: usize, expected: usize },
}

pub type Result<T> = std::result::Result<T, KernelError>;

/// Kernel function applied to prior embedding vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// `exp(-||z - z'||^2 / (2 sigma^2))`.
    Rbf { sigma: f64 },
    /// `z . z' / (||z|| ||z'||)`; rejects zero-norm vectors.
    Cosine,
    /// `z . z'`.
    Linear,
}

impl KernelSpec {
    fn validate(&self) -> Result<()> {
        if let KernelSpec::Rbf { sigma } = self {
            if !(sigma.is_finite() && *sigma > 0.0) {
                return Err(KernelError::BadSigma { sigma: *sigma });
            }
        }
        Ok(())
    }
}

/// A validated symmetric Gram matrix with a lazily cached minimum eigenvalue.
#[derive(Debug)]
pub struct KernelMatrix {
    entries: Array2<f64>,
    min_eigenvalue: OnceLock<f64>,
}

impl KernelMatrix {
    /// Wraps an explicit symmetric matrix.
    ///
    /// Symmetry is enforced to `1e-12` absolute deviation and sizes beyond
    /// [`MAX_KERNEL_SIZE`] are rejected; positive semidefiniteness is the
    /// caller's claim and is only probed by operations that need it.
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (rows, cols) = entries.dim();
        if rows != cols {
            return Err(KernelError::NonSquare { rows, cols });
        }
        if rows == 0 {
            return Err(KernelError::Empty);
        }
        if rows > MAX_KERNEL_SIZE {
            return Err(KernelError::TooLarge { n: rows, limit: MAX_KERNEL_SIZE });
        }
        for i in 0..rows {
            for j in 0..cols {
                let v = entries[[i, j]];
                if !v.is_finite() {
                    return Err(KernelError::NonFinite { row: i, col: j });
                }
                if j > i {
                    let dev = (v - entries[[j, i]]).abs();
                    if dev > 1e-12 {
                        return Err(KernelError::Asymmetric { row: i, col: j, deviation: dev });
                    }
                }
            }
        }
        Ok(KernelMatrix { entries, min_eigenvalue: OnceLock::new() })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    /// Minimum eigenvalue, computed once on first use and cached.
    pub fn min_eigenvalue(&self) -> f64 {
        *self
            .min_eigenvalue
            .get_or_init(|| linalg::symmetric_eigenvalues(&self.entries)[0])
    }

    /// True when the matrix is positive semidefinite up to roundoff
    /// (`lambda_min >= -1e-8 * max|K_ij|`).
    pub fn is_psd(&self) -> bool {
        let scale = self.entries.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        self.min_eigenvalue() >= -1e-8 * scale.max(1.0)
    }
}

/// The solved mixing matrix `A = (K_n + n*lambda*I)^-1 K_n`.
#[derive(Debug, Clone)]
pub struct CentroidWeights {
    weights: Array2<f64>,
    lambda: f64,
    max_residual: f64,
}

impl CentroidWeights {
    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    /// `max_ij |(K + n*lambda*I) A - K|` from the solve that produced this.
    pub fn max_residual(&self) -> f64 {
        self.max_residual
    }

    /// Applies the mixing weights to per-anchor rows: returns `A * rows`.
    pub fn apply(&self, rows: &Array2<f64>) -> Array2<f64> {
        self.weights.dot(rows)
    }
}

/// Builds the Gram matrix of `vectors` (one prior embedding per row).
///
/// ```
/// use decoupled_uniformity::kernels::{build_kernel_matrix, KernelSpec};
/// use ndarray::array;
///
/// let z = array![[0.0], [2.0]];
/// let k = build_kernel_matrix(&z, &KernelSpec::Rbf { sigma: 1.0 }).unwrap();
/// // exp(-(2-0)^2 / 2) = exp(-2)
/// assert!((k.entries()[[0, 1]] - 0.1353352832366127).abs() < 1e-15);
/// assert_eq!(k.entries()[[0, 0]], 1.0);
/// ```
pub fn build_kernel_matrix(vectors: &Array2<f64>, spec: &KernelSpec) -> Result<KernelMatrix> {
    spec.validate()?;
    let n = vectors.nrows();
    if n == 0 {
        return Err(KernelError::EmptyPrior);
    }
    if n > MAX_KERNEL_SIZE {
        return Err(KernelError::TooLarge { n, limit: MAX_KERNEL_SIZE });
    }
    for (i, row) in vectors.rows().into_iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::NonFinitePrior { row: i });
        }
    }

    let norms: Vec<f64> = vectors
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if matches!(spec, KernelSpec::Cosine) {
        for (i, &norm) in norms.iter().enumerate() {
            if norm < 1e-12 {
                return Err(KernelError::ZeroNormRow { row: i, norm });
            }
        }
    }

    // Fill the upper triangle and mirror so symmetry is exact by construction.
    let mut entries = Array2::zeros((n, n));
    for i in 0..n {
        let zi = vectors.row(i);
        for j in i..n {
            let zj = vectors.row(j);
            let value = match spec {
                KernelSpec::Rbf { sigma } => {
                    let d2: f64 = zi.iter().zip(zj.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                    (-d2 / (2.0 * sigma * sigma)).exp()
                }
                KernelSpec::Cosine => {
                    if i == j {
                        1.0
                    } else {
                        zi.dot(&zj) / (norms[i] * norms[j])
                    }
                }
                KernelSpec::Linear => zi.dot(&zj),
            };
            entries[[i, j]] = value;
            entries[[j, i]] = value;
        }
    }
    KernelMatrix::new(entries)
}

/// Rectangular kernel block `K[i, j] = k(a_i, b_j)` between two prior tables.
pub fn cross_kernel(a: &Array2<f64>, b: &Array2<f64>, spec: &KernelSpec) -> Result<Array2<f64>> {
    spec.validate()?;
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(KernelError::EmptyPrior);
    }
    for (i, row) in a.rows().into_iter().chain(b.rows()).enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::NonFinitePrior { row: i });
        }
    }
    let norm = |r: ndarray::ArrayView1<f64>| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if matches!(spec, KernelSpec::Cosine) {
        for (i, row) in a.rows().into_iter().chain(b.rows()).enumerate() {
            let nr = norm(row);
            if nr < 1e-12 {
                return Err(KernelError::ZeroNormRow { row: i, norm: nr });
            }
        }
    }
    let mut out = Array2::zeros((a.nrows(), b.nrows()));
    for i in 0..a.nrows() {
        for j in 0..b.nrows() {
            let zi = a.row(i);
            let zj = b.row(j);
            out[[i, j]] = match spec {
                KernelSpec::Rbf { sigma } => {
                    let d2: f64 = zi.iter().zip(zj.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
                    (-d2 / (2.0 * sigma * sigma)).exp()
                }
                KernelSpec::Cosine => zi.dot(&zj) / (norm(zi) * norm(zj)),
                KernelSpec::Linear => zi.dot(&zj),
            };
        }
    }
    Ok(out)
}

/// Solves `(K + n*lambda*I) X = rhs`.
///
/// Cholesky first; if the shifted matrix is not positive definite the solve
/// falls back to a symmetric eigendecomposition with eigenvalues clipped to
/// `1e-12`. At `lambda = 0` the kernel itself must be safely positive
/// definite (`lambda_min > 1e-10`) or the system is reported singular.
pub fn solve_regularized(k: &KernelMatrix, lambda: f64, rhs: &Array2<f64>) -> Result<Array2<f64>> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(KernelError::BadLambda { lambda });
    }
    let n = k.n();
    if rhs.nrows() != n {
        return Err(KernelError::RhsShape { got: rhs.nrows(), expected: n });
    }
    if lambda == 0.0 {
        let min_eig = k.min_eigenvalue();
        if min_eig <= 1e-10 {
            return Err(KernelError::SingularSystem { min_eigenvalue: min_eig });
        }
    }
    let shifted = regularized(k, lambda);
    let solution = match linalg::cholesky_solve(&shifted, rhs) {
        Some(x) => x,
        None => {
            // Clipped-eigenvalue pseudo-solve for shifted matrices that lost
            // positive definiteness to roundoff.
            let (vals, vecs) = linalg::symmetric_eigen(&shifted);
            let projected = vecs.t().dot(rhs);
            let mut scaled = projected;
            for (r, &v) in vals.iter().enumerate() {
                let inv = 1.0 / v.max(1e-12);
                scaled.row_mut(r).mapv_inplace(|x| x * inv);
            }
            vecs.dot(&scaled)
        }
    };
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(KernelError::NonFiniteSolve);
    }
    Ok(solution)
}

/// Centroid mixing weights `A = (K + n*lambda*I)^-1 K`.
///
/// As `lambda -> 0` (for nonsingular `K`) the weights approach the identity
/// and kernel centroids reduce to plain view averages.
pub fn centroid_weights(k: &KernelMatrix, lambda: f64) -> Result<CentroidWeights> {
    let weights = solve_regularized(k, lambda, k.entries())?;
    let shifted = regularized(k, lambda);
    let residual = &shifted.dot(&weights) - k.entries();
    let max_residual = residual.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(CentroidWeights { weights, lambda, max_residual })
}

/// Squared distance between anchors `i` and `j` in the kernel feature space:
/// `K_ii + K_jj - 2 K_ij`.
pub fn kernel_distance(k: &KernelMatrix, i: usize, j: usize) -> Result<f64> {
    let n = k.n();
    for index in [i, j] {
        if index >= n {
            return Err(KernelError::IndexOutOfBounds { index, n });
        }
    }
    let e = k.entries();
    Ok(e[[i, i]] + e[[j, j]] - 2.0 * e[[i, j]])
}

/// Conditioning number `beta_n = (lambda_min(K)/sqrt(n) + sqrt(n)*lambda)^-1`.
///
/// ```
/// use decoupled_uniformity::kernels::{beta_n, KernelMatrix};
/// use ndarray::Array2;
///
/// let k = KernelMatrix::new(Array2::eye(256)).unwrap();
/// let b = beta_n(&k, 0.01 / 16.0).unwrap();
/// // (1/16 + 16 * 0.01/16)^-1 = 1/0.0725
/// assert!((b - 13.793103448275863).abs() < 1e-12);
/// ```
pub fn beta_n(k: &KernelMatrix, lambda: f64) -> Result<f64> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(KernelError::BadLambda { lambda });
    }
    let n = k.n() as f64;
    let denominator = k.min_eigenvalue() / n.sqrt() + n.sqrt() * lambda;
    if denominator <= 0.0 {
        return Err(KernelError::BetaUndefined { denominator });
    }
    Ok(1.0 / denominator)
}

/// `beta_n` through its spectral identity `sqrt(n) / lambda_min(K + n*lambda*I)`.
///
/// The smallest eigenvalue of the regularized matrix is isolated by bisection
/// on Cholesky success: `M - sigma*I` factorizes exactly when
/// `sigma < lambda_min(M)`. This route shares nothing with the eigensolver
/// behind [`beta_n`] and, unlike iterative methods, is unaffected by the
/// eigenvalue clustering typical of smooth kernels; the two paths must agree
/// tightly on any PSD input.
pub fn beta_n_spectral(k: &KernelMatrix, lambda: f64) -> Result<f64> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(KernelError::BadLambda { lambda });
    }
    let n = k.n();
    let shifted = regularized(k, lambda);

    // For a symmetric matrix, lambda_min never exceeds the smallest diagonal
    // entry, so [0, min_ii] brackets it.
    let mut hi = (0..n).map(|i| shifted[[i, i]]).fold(f64::INFINITY, f64::min);
    if hi <= 0.0 || !linalg::is_positive_definite(&shifted) {
        return Err(KernelError::SingularSystem { min_eigenvalue: k.min_eigenvalue() });
    }
    let mut lo = 0.0_f64;
    // Invariant: lo < lambda_min(shifted) <= hi. Bisection halves the
    // bracket until the f64 midpoint collapses onto an endpoint.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let mut probe = shifted.clone();
        for i in 0..n {
            probe[[i, i]] -= mid;
        }
        if linalg::is_positive_definite(&probe) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda_min = 0.5 * (lo + hi);
    Ok((n as f64).sqrt() / lambda_min)
}

fn regularized(k: &KernelMatrix, lambda: f64) -> Array2<f64> {
    let n = k.n();
    let mut shifted = k.entries().clone();
    let shift = n as f64 * lambda;
    for i in 0..n {
        shifted[[i, i]] += shift;
    }
    shifted
}
