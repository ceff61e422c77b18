//! The decoupled uniformity loss, its gradients, and alignment diagnostics.
//!
//! For per-anchor centroids `mu_1..mu_n` the empirical loss is
//!
//! ```text
//! L = log( 1/(n(n-1)) * sum_{i != j} exp(-t * ||mu_i - mu_j||^2) )
//! ```
//!
//! a log-sum of pairwise Gaussian repulsions (diagonal excluded). Its
//! gradient concentrates on the currently-closest pairs through softmax
//! weights over ordered pairs:
//!
//! ```text
//! w_kj    = exp(-t d_kj^2) / sum_{p != q} exp(-t d_pq^2)
//! dL/dmu_k = -4t * sum_{j != k} w_kj (mu_k - mu_j)
//! ```
//!
//! Centroids are either plain view averages (`mu_i = 1/V sum_v f(x_i^v)`) or
//! kernel estimates `mu = A F` with mixing weights `A` from
//! [`crate::kernels::centroid_weights`]; `A` is treated as a constant, so
//! gradients reach views through `A^T` and the `1/V` averaging factor only.
//!
//! Alongside the loss live its diagnostics: the supervised variant on class
//! centroids, view-alignment metrics, and the worst-class variance terms used
//! by the bound checks in [`crate::eval`].

use ndarray::{Array1, Array2, Array3, ArrayView1};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::kernels::CentroidWeights;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("embedding batch needs at least 2 anchors, got {n}")]
    TooFewAnchors { n: usize },
    #[error("embedding batch needs at least 1 view per anchor")]
    NoViews,
    #[error("embedding batch needs at least 1 dimension")]
    NoDimensions,
    #[error("non-finite embedding for anchor {anchor}, view {view}")]
    NonFiniteView { anchor: usize, view: usize },
    #[error("embedding for anchor {anchor}, view {view} is not unit norm: ||v|| = {norm}")]
    NotUnitNorm { anchor: usize, view: usize, norm: f64 },
    #[error("centroid matrix has a non-finite entry in row {anchor}")]
    NonFiniteCentroid { anchor: usize },
    #[error("centroid matrix needs at least 1 row")]
    EmptyCentroids,
    #[error("temperature t must be finite and > 0, got {t}")]
    BadTemperature { t: f64 },
    #[error("centroid weights are {weights_n}x{weights_n} but batch has {batch_n} anchors")]
    WeightShapeMismatch { weights_n: usize, batch_n: usize },
    #[error("labels length {got} != number of anchors {expected}")]
    LabelsLength { got: usize, expected: usize },
    #[error("alignment metrics need at least 2 views per anchor, got {views}")]
    TooFewViews { views: usize },
}

pub type Result<T> = std::result::Result<T, LossError>;

/// Unit-norm view embeddings, shape `n x V x d` (anchor, view, coordinate).
#[derive(Debug, Clone)]
pub struct EmbeddingBatch {
    views: Array3<f64>,
}

impl EmbeddingBatch {
    /// Validates shape, finiteness, and unit norms (`| ||v|| - 1 | <= 1e-6`).
    pub fn new(views: Array3<f64>) -> Result<Self> {
        let batch = Self::new_unchecked(views)?;
        let (n, v, _) = batch.views.dim();
        for i in 0..n {
            for w in 0..v {
                let view = batch.views.slice(ndarray::s![i, w, ..]);
                let norm = view.dot(&view).sqrt();
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(LossError::NotUnitNorm { anchor: i, view: w, norm });
                }
            }
        }
        Ok(batch)
    }

    /// Like [`EmbeddingBatch::new`] but skips the unit-norm check.
    ///
    /// Finite-difference harnesses perturb views slightly off the sphere;
    /// everything else should construct batches through [`EmbeddingBatch::new`].
    pub fn new_unchecked(views: Array3<f64>) -> Result<Self> {
        let (n, v, d) = views.dim();
        if n < 2 {
            return Err(LossError::TooFewAnchors { n });
        }
        if v == 0 {
            return Err(LossError::NoViews);
        }
        if d == 0 {
            return Err(LossError::NoDimensions);
        }
        for i in 0..n {
            for w in 0..v {
                if views.slice(ndarray::s![i, w, ..]).iter().any(|x| !x.is_finite()) {
                    return Err(LossError::NonFiniteView { anchor: i, view: w });
                }
            }
        }
        Ok(EmbeddingBatch { views })
    }

    pub fn n(&self) -> usize {
        self.views.dim().0
    }

    pub fn views_per_anchor(&self) -> usize {
        self.views.dim().1
    }

    pub fn dim(&self) -> usize {
        self.views.dim().2
    }

    /// Anchor that owns the view at a flattened `(anchor * V + view)` index.
    pub fn anchor_of(&self, flat_view_index: usize) -> usize {
        flat_view_index / self.views_per_anchor()
    }

    pub fn views(&self) -> &Array3<f64> {
        &self.views
    }

    pub fn view(&self, anchor: usize, view: usize) -> ArrayView1<'_, f64> {
        self.views.slice(ndarray::s![anchor, view, ..])
    }
}

/// How a set of centroids was produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CentroidSource {
    ViewAverage,
    KernelEstimate { lambda: f64 },
}

/// Per-anchor centroids plus what is needed to push gradients back to views.
#[derive(Debug, Clone)]
pub struct Centroids {
    mu: Array2<f64>,
    views_per_anchor: usize,
    source: CentroidSource,
    /// Mixing weights `A` when the centroids are kernel estimates.
    kernel_weights: Option<Array2<f64>>,
}

impl Centroids {
    /// Wraps an explicit centroid matrix (one row per anchor, `V = 1`).
    pub fn from_matrix(mu: Array2<f64>) -> Result<Self> {
        if mu.nrows() == 0 {
            return Err(LossError::EmptyCentroids);
        }
        if mu.ncols() == 0 {
            return Err(LossError::NoDimensions);
        }
        for (i, row) in mu.rows().into_iter().enumerate() {
            if row.iter().any(|x| !x.is_finite()) {
                return Err(LossError::NonFiniteCentroid { anchor: i });
            }
        }
        Ok(Centroids {
            mu,
            views_per_anchor: 1,
            source: CentroidSource::ViewAverage,
            kernel_weights: None,
        })
    }

    pub fn n(&self) -> usize {
        self.mu.nrows()
    }

    pub fn dim(&self) -> usize {
        self.mu.ncols()
    }

    pub fn mu(&self) -> &Array2<f64> {
        &self.mu
    }

    pub fn source(&self) -> CentroidSource {
        self.source
    }

    pub fn views_per_anchor(&self) -> usize {
        self.views_per_anchor
    }
}

/// Plain centroids `mu_i = 1/V sum_v f(x_i^v)`.
///
/// Averages of unit vectors stay inside the closed unit ball.
pub fn view_average_centroids(batch: &EmbeddingBatch) -> Centroids {
    let (n, v, d) = batch.views().dim();
    let mut mu = Array2::zeros((n, d));
    for i in 0..n {
        for w in 0..v {
            let view = batch.views().slice(ndarray::s![i, w, ..]);
            let mut row = mu.row_mut(i);
            row += &view;
        }
        mu.row_mut(i).mapv_inplace(|x| x / v as f64);
    }
    Centroids {
        mu,
        views_per_anchor: v,
        source: CentroidSource::ViewAverage,
        kernel_weights: None,
    }
}

/// Kernel centroid estimates `mu = A F` with `F` the view averages.
///
/// `A` is detached: it carries no gradient of its own, but view gradients are
/// chained through `A^T`.
pub fn kernel_centroids(batch: &EmbeddingBatch, weights: &CentroidWeights) -> Result<Centroids> {
    if weights.n() != batch.n() {
        return Err(LossError::WeightShapeMismatch {
            weights_n: weights.n(),
            batch_n: batch.n(),
        });
    }
    let averages = view_average_centroids(batch);
    let mu = weights.apply(averages.mu());
    Ok(Centroids {
        mu,
        views_per_anchor: batch.views_per_anchor(),
        source: CentroidSource::KernelEstimate { lambda: weights.lambda() },
        kernel_weights: Some(weights.weights().clone()),
    })
}

/// Loss value, gradients, and the softmax pair weights behind them.
#[derive(Debug, Clone)]
pub struct LossReport {
    pub value: f64,
    /// `dL/dmu_k`, shape `n x d`.
    pub grad_mu: Array2<f64>,
    /// Gradient w.r.t. each view embedding, shape `n x V x d`; includes the
    /// `1/V` averaging factor and, for kernel centroids, the `A^T` chain.
    pub grad_views: Array3<f64>,
    /// Ordered-pair softmax weights `w_kj` (zero diagonal, symmetric).
    pub pair_weights: Array2<f64>,
    /// Per-anchor totals `w_k = sum_{j != k} w_kj`; these sum to 1.
    pub anchor_weights: Array1<f64>,
}

/// Evaluates the decoupled uniformity loss and its gradients.
///
/// The log-sum-exp is shifted by the largest pair term, so the value is
/// stable for any centroid spread.
///
/// ```
/// use decoupled_uniformity::loss::{decoupled_uniformity_loss, Centroids};
/// use ndarray::array;
///
/// // Two antipodal unit centroids: d^2 = 4, so L = log(exp(-4)) = -4.
/// let c = Centroids::from_matrix(array![[1.0, 0.0], [-1.0, 0.0]]).unwrap();
/// let report = decoupled_uniformity_loss(&c, 1.0).unwrap();
/// assert!((report.value + 4.0).abs() < 1e-12);
/// ```
pub fn decoupled_uniformity_loss(c: &Centroids, t: f64) -> Result<LossReport> {
    if !(t.is_finite() && t > 0.0) {
        return Err(LossError::BadTemperature { t });
    }
    let n = c.n();
    if n < 2 {
        return Err(LossError::TooFewAnchors { n });
    }
    let d2 = pairwise_squared_distances(c.mu());

    // Shifted log-sum-exp over ordered pairs (i != j).
    let mut shift = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                shift = shift.max(-t * d2[[i, j]]);
            }
        }
    }
    let mut total = 0.0;
    let mut pair_weights = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let e = (-t * d2[[i, j]] - shift).exp();
                pair_weights[[i, j]] = e;
                total += e;
            }
        }
    }
    let value = shift + total.ln() - (n as f64 * (n as f64 - 1.0)).ln();
    pair_weights.mapv_inplace(|w| w / total);

    let anchor_weights = Array1::from_iter(pair_weights.rows().into_iter().map(|r| r.sum()));

    // dL/dmu_k = -4t * (w_k mu_k - sum_j w_kj mu_j)
    let weighted_sum = pair_weights.dot(c.mu());
    let mut grad_mu = Array2::zeros((n, c.dim()));
    for k in 0..n {
        let mu_k = c.mu().row(k);
        let mut g = grad_mu.row_mut(k);
        for col in 0..c.dim() {
            g[col] = -4.0 * t * (anchor_weights[k] * mu_k[col] - weighted_sum[[k, col]]);
        }
    }

    // Chain back to views: through A^T for kernel centroids, then the 1/V
    // averaging factor.
    let grad_f = match &c.kernel_weights {
        Some(a) => a.t().dot(&grad_mu),
        None => grad_mu.clone(),
    };
    let v = c.views_per_anchor();
    let mut grad_views = Array3::zeros((n, v, c.dim()));
    for i in 0..n {
        for w in 0..v {
            for col in 0..c.dim() {
                grad_views[[i, w, col]] = grad_f[[i, col]] / v as f64;
            }
        }
    }

    Ok(LossReport { value, grad_mu, grad_views, pair_weights, anchor_weights })
}

/// Supervised analogue on class centroids, diagonal included:
/// `log( 1/C^2 * sum_{y,y'} exp(-t ||mu_y - mu_y'||^2) )` with classes
/// weighted uniformly.
pub fn supervised_decoupled_loss(c: &Centroids, labels: &[usize], t: f64) -> Result<f64> {
    if !(t.is_finite() && t > 0.0) {
        return Err(LossError::BadTemperature { t });
    }
    if labels.len() != c.n() {
        return Err(LossError::LabelsLength { got: labels.len(), expected: c.n() });
    }
    let class_mu = class_centroids(c.mu(), labels);
    let count = class_mu.nrows() as f64;
    let d2 = pairwise_squared_distances(&class_mu);
    // Largest term is the diagonal exp(0) = 1, so no shift is needed.
    let total: f64 = d2.iter().map(|&v| (-t * v).exp()).sum();
    Ok((total / (count * count)).ln())
}

/// Mean squared distance between views of the same anchor:
/// `mean_i mean_{v < v'} ||f(x_i^v) - f(x_i^v')||^2`.
pub fn alignment_metric(batch: &EmbeddingBatch) -> Result<f64> {
    per_anchor_view_spread(batch, |acc, d| acc + d, |total, pairs| total / pairs, true)
}

/// Worst-case view spread `max_{i, v < v'} ||f(x_i^v) - f(x_i^v')||`
/// (not squared): the empirical weak-alignment epsilon.
pub fn weak_alignment_epsilon(batch: &EmbeddingBatch) -> Result<f64> {
    per_anchor_view_spread(batch, |acc, d| acc.max(d.sqrt()), |total, _| total, false)
}

fn per_anchor_view_spread(
    batch: &EmbeddingBatch,
    fold: impl Fn(f64, f64) -> f64,
    finish: impl Fn(f64, f64) -> f64,
    mean_over_anchors: bool,
) -> Result<f64> {
    let (n, v, _) = batch.views().dim();
    if v < 2 {
        return Err(LossError::TooFewViews { views: v });
    }
    let pairs_per_anchor = (v * (v - 1) / 2) as f64;
    let mut result = 0.0;
    for i in 0..n {
        let mut acc = 0.0;
        for a in 0..v {
            for b in (a + 1)..v {
                let d2: f64 = batch
                    .view(i, a)
                    .iter()
                    .zip(batch.view(i, b).iter())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                acc = fold(acc, d2);
            }
        }
        let anchor_value = finish(acc, pairs_per_anchor);
        if mean_over_anchors {
            result += anchor_value / n as f64;
        } else {
            result = result.max(anchor_value);
        }
    }
    Ok(result)
}

/// Worst-class variance terms for the assumption-free bound chain.
///
/// The worst class `y*` maximizes the summed per-coordinate centroid variance
/// (population convention). Returns
///
/// ```text
/// ( 2 * sum_j Var(mu^j | y*),  4 * E ||mu - mu'|| )
/// ```
///
/// where the expectation runs over ordered pairs of anchors in `y*`. The
/// first term never exceeds the second.
pub fn variance_bound_terms(c: &Centroids, labels: &[usize]) -> Result<(f64, f64)> {
    if labels.len() != c.n() {
        return Err(LossError::LabelsLength { got: labels.len(), expected: c.n() });
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        members.entry(y).or_default().push(i);
    }

    let d = c.dim();
    let mut worst: Option<(usize, f64)> = None;
    for (&y, idx) in &members {
        let m = idx.len() as f64;
        let mut var_sum = 0.0;
        for col in 0..d {
            let mean: f64 = idx.iter().map(|&i| c.mu()[[i, col]]).sum::<f64>() / m;
            let var: f64 =
                idx.iter().map(|&i| (c.mu()[[i, col]] - mean).powi(2)).sum::<f64>() / m;
            var_sum += var;
        }
        // Ties resolve to the smallest class id (BTreeMap iteration order).
        if worst.map(|(_, best)| var_sum > best).unwrap_or(true) {
            worst = Some((y, var_sum));
        }
    }
    let (y_star, var_sum) = worst.expect("labels nonempty");

    let idx = &members[&y_star];
    let m = idx.len() as f64;
    let mut dist_sum = 0.0;
    for &i in idx {
        for &j in idx {
            let d2: f64 = (0..d).map(|col| (c.mu()[[i, col]] - c.mu()[[j, col]]).powi(2)).sum();
            dist_sum += d2.sqrt();
        }
    }
    Ok((2.0 * var_sum, 4.0 * dist_sum / (m * m)))
}

/// Mean centroid of each class, rows ordered by ascending class id.
pub(crate) fn class_centroids(mu: &Array2<f64>, labels: &[usize]) -> Array2<f64> {
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        members.entry(y).or_default().push(i);
    }
    let mut out = Array2::zeros((members.len(), mu.ncols()));
    for (row, idx) in members.values().enumerate() {
        for &i in idx {
            let mut r = out.row_mut(row);
            r += &mu.row(i);
        }
        out.row_mut(row).mapv_inplace(|x| x / idx.len() as f64);
    }
    out
}

/// All pairwise squared distances between rows.
///
/// Small problems subtract rows directly; larger ones use the dot-product
/// expansion `||a||^2 + ||b||^2 - 2 a.b` (clamped at zero), which turns the
/// n^2 loop into matrix products.
pub(crate) fn pairwise_squared_distances(mu: &Array2<f64>) -> Array2<f64> {
    if mu.nrows() <= 64 {
        pairwise_squared_direct(mu)
    } else {
        pairwise_squared_expanded(mu)
    }
}

pub(crate) fn pairwise_squared_direct(mu: &Array2<f64>) -> Array2<f64> {
    let n = mu.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = mu
                .row(i)
                .iter()
                .zip(mu.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            out[[i, j]] = d2;
            out[[j, i]] = d2;
        }
    }
    out
}

pub(crate) fn pairwise_squared_expanded(mu: &Array2<f64>) -> Array2<f64> {
    let n = mu.nrows();
    let sq: Vec<f64> = mu.rows().into_iter().map(|r| r.dot(&r)).collect();
    let gram = mu.dot(&mu.t());
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out[[i, j]] = (sq[i] + sq[j] - 2.0 * gram[[i, j]]).max(0.0);
            }
        }
    }
    out
}
