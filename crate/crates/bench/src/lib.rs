//! Deterministic fixtures shared by the benchmarks: random inputs shaped
//! like the heaviest call sites in the core crate.

use decoupled_uniformity::kernels::{build_kernel_matrix, KernelMatrix, KernelSpec};
use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// `n x d` matrix of standard normal entries.
pub fn gaussian_rows(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, d), |_| -> f64 { StandardNormal.sample(&mut rng) })
}

/// `n x d` matrix of rows drawn uniformly on the unit sphere.
pub fn unit_rows(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut m = gaussian_rows(n, d, seed);
    for mut row in m.rows_mut() {
        let norm = row.dot(&row).sqrt().max(1e-12);
        row.mapv_inplace(|v| v / norm);
    }
    m
}

/// `n x v x d` stack of unit-norm view embeddings.
pub fn unit_views(n: usize, v: usize, d: usize, seed: u64) -> Array3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut views = Array3::from_shape_fn((n, v, d), |_| -> f64 { StandardNormal.sample(&mut rng) });
    for i in 0..n {
        for w in 0..v {
            let mut row = views.slice_mut(ndarray::s![i, w, ..]);
            let norm = row.dot(&row).sqrt().max(1e-12);
            row.mapv_inplace(|x| x / norm);
        }
    }
    views
}

/// RBF kernel matrix over random Gaussian vectors.
pub fn rbf_kernel(n: usize, d: usize, sigma: f64, seed: u64) -> KernelMatrix {
    let vectors = gaussian_rows(n, d, seed);
    build_kernel_matrix(&vectors, &KernelSpec::Rbf { sigma }).expect("kernel fixture")
}

/// Balanced two-class labels `0,1,0,1,...`.
pub fn alternating_labels(n: usize) -> Vec<usize> {
    (0..n).map(|i| i % 2).collect()
}
