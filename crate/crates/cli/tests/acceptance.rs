//! Acceptance suite: one test per release criterion, each printing a single
//! PASS/FAIL line with the measured numbers behind the verdict.
//!
//! Run with `cargo test -p decoupled-uniformity-cli --test acceptance --
//! --nocapture` to see every line; a failed criterion also carries the same
//! details in its panic message.
//!
//! Criteria 1-6 exercise the library in-process; criteria 7-12 drive the
//! compiled binary end to end on pinned experiment configs.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use decoupled_uniformity::data::{
    clean_prior, make_gaussian_mixture, AugmentationKind, AugmentationSpec,
};
use decoupled_uniformity::encoder::{
    finite_difference_check, Activation, CentroidMode, EncoderInit, TrainConfig,
};
use decoupled_uniformity::eval::{
    estimator_convergence, least_squares_slope, optimize_free_centroids, pearson_r, simplex_check,
    spearman_rho, verify_bounds, BoundInputs, ConvergenceConfig,
};
use decoupled_uniformity::graphs::Graph;
use decoupled_uniformity::kernels::{
    beta_n, beta_n_spectral, build_kernel_matrix, centroid_weights, KernelMatrix, KernelSpec,
};
use decoupled_uniformity::loss::{
    decoupled_uniformity_loss, kernel_centroids, view_average_centroids, Centroids,
    EmbeddingBatch,
};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn verdict(number: u32, name: &str, pass: bool, details: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("criterion {number:02} {name}: {status} — {details}");
    assert!(pass, "criterion {number:02} {name}: FAIL — {details}");
}

fn scratch(test: &str) -> PathBuf {
    let dir = std::env::temp_dir()
        .join(format!("decunif-acceptance-{}", std::process::id()))
        .join(test);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).expect("clear scratch dir");
    }
    std::fs::create_dir_all(&dir).expect("create scratch dir");
    dir
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    std::fs::create_dir_all(dir).expect("create config dir");
    let path = dir.join("config.toml");
    std::fs::write(&path, body).expect("write config");
    path
}

fn run_bin(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_decunif"))
        .args(args)
        .output()
        .expect("spawn experiment binary");
    assert!(
        out.status.success(),
        "binary {:?} exited with {:?}: {}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json_report(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path).expect("read report");
    serde_json::from_str(&text).expect("parse report")
}

fn probe_accuracy(run_dir: &Path) -> f64 {
    json_report(&run_dir.join("probe.json"))["report"]["accuracy"]
        .as_f64()
        .expect("probe accuracy")
}

fn metric_series(run_dir: &Path, metric: &str) -> Vec<f64> {
    let mut reader = csv::Reader::from_path(run_dir.join("metrics.csv")).expect("open metrics");
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.expect("metrics row");
        if &record[2] == metric {
            values.push(record[3].parse::<f64>().expect("metric value"));
        }
    }
    values
}

fn random_unit_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    let mut m = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
    for mut row in m.rows_mut() {
        let norm = row.dot(&row).sqrt().max(1e-12);
        row.mapv_inplace(|v| v / norm);
    }
    m
}

const REL_TOL: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0_f64.max(a.abs()).max(b.abs())
}

// ---------------------------------------------------------------------------
// Criterion 1: analytic gradients match central finite differences
// ---------------------------------------------------------------------------

/// Central difference of the loss under a single-entry perturbation of `mu`.
fn fd_centroid_entry(mu: &Array2<f64>, t: f64, row: usize, col: usize, h: f64) -> f64 {
    let mut plus = mu.clone();
    plus[[row, col]] += h;
    let mut minus = mu.clone();
    minus[[row, col]] -= h;
    let lp = decoupled_uniformity_loss(&Centroids::from_matrix(plus).unwrap(), t).unwrap().value;
    let lm = decoupled_uniformity_loss(&Centroids::from_matrix(minus).unwrap(), t).unwrap().value;
    (lp - lm) / (2.0 * h)
}

/// Loss as a function of raw views, for either centroid source.
fn loss_of_views(views: &Array3<f64>, weights: Option<&decoupled_uniformity::kernels::CentroidWeights>, t: f64) -> f64 {
    let batch = EmbeddingBatch::new_unchecked(views.clone()).unwrap();
    let c = match weights {
        Some(w) => kernel_centroids(&batch, w).unwrap(),
        None => view_average_centroids(&batch),
    };
    decoupled_uniformity_loss(&c, t).unwrap().value
}

#[test]
fn criterion_01_gradient_suite() {
    let started = Instant::now();
    let temps = [1.0, 2.0, 5.0];
    let h = 1e-6;
    let mut instances = 0usize;
    let mut worst: f64 = 0.0;

    // Centroid-level gradients on random free centroids.
    for seed in 0..15u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=16);
        let d = rng.random_range(1..=8);
        let t = temps[seed as usize % temps.len()];
        let mu = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
        let report = decoupled_uniformity_loss(&Centroids::from_matrix(mu.clone()).unwrap(), t).unwrap();
        for row in 0..n {
            for col in 0..d {
                let fd = fd_centroid_entry(&mu, t, row, col, h);
                worst = worst.max(rel_err(report.grad_mu[[row, col]], fd));
            }
        }
        instances += 1;
    }

    // View-level gradients through both centroid sources: perturbing raw view
    // entries exercises the 1/V averaging chain and, in kernel mode, the
    // transposed-weights chain.
    for seed in 100..120u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=16);
        let v = rng.random_range(1..=3);
        let d = rng.random_range(1..=8);
        let t = temps[seed as usize % temps.len()];
        let views = Array3::from_shape_fn((n, v, d), |_| rng.sample::<f64, _>(StandardNormal));
        let kernel_mode = seed % 2 == 0;
        let weights = if kernel_mode {
            let priors = Array2::from_shape_fn((n, 3), |_| rng.sample::<f64, _>(StandardNormal));
            let k = build_kernel_matrix(&priors, &KernelSpec::Rbf { sigma: 1.0 }).unwrap();
            Some(centroid_weights(&k, 0.01 / (n as f64).sqrt()).unwrap())
        } else {
            None
        };
        let batch = EmbeddingBatch::new_unchecked(views.clone()).unwrap();
        let c = match &weights {
            Some(w) => kernel_centroids(&batch, w).unwrap(),
            None => view_average_centroids(&batch),
        };
        let report = decoupled_uniformity_loss(&c, t).unwrap();
        for i in 0..n {
            for w in 0..v {
                for col in 0..d {
                    let mut plus = views.clone();
                    plus[[i, w, col]] += h;
                    let mut minus = views.clone();
                    minus[[i, w, col]] -= h;
                    let fd = (loss_of_views(&plus, weights.as_ref(), t)
                        - loss_of_views(&minus, weights.as_ref(), t))
                        / (2.0 * h);
                    worst = worst.max(rel_err(report.grad_views[[i, w, col]], fd));
                }
            }
        }
        instances += 1;
    }

    // Full pipeline (inputs -> encoder -> normalized embeddings -> centroids
    // -> loss) over every encoder parameter, in both centroid modes.
    for seed in 200..220u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = 2;
        let per_class = rng.random_range(2..=8);
        let dim = rng.random_range(2..=6);
        let t = temps[seed as usize % temps.len()];
        let ds = make_gaussian_mixture(classes, per_class, dim, 2.5, seed).unwrap();
        let encoder = EncoderInit::new(vec![dim, 6, 4], Activation::Tanh, seed).build().unwrap();
        let kernel_mode = seed % 2 == 0;
        let (centroids, prior) = if kernel_mode {
            (
                CentroidMode::Kernel {
                    spec: KernelSpec::Rbf { sigma: 1.0 },
                    lambda_scale: 0.01,
                },
                Some(clean_prior(&ds).unwrap()),
            )
        } else {
            (CentroidMode::ViewAverage, None)
        };
        let config = TrainConfig {
            views: 2,
            temperature: t,
            centroids,
            seed,
            ..TrainConfig::default()
        };
        let aug = AugmentationSpec::new(AugmentationKind::UniformBall { radius: 0.7 });
        let report =
            finite_difference_check(&encoder, &ds, &aug, prior.as_ref(), &config, REL_TOL)
                .unwrap();
        worst = worst.max(report.max_rel_error);
        assert!(report.pass, "pipeline check failed at seed {seed}: {report:?}");
        instances += 1;
    }

    let elapsed = started.elapsed();
    let pass = worst <= REL_TOL && instances >= 50 && elapsed < Duration::from_secs(60);
    verdict(
        1,
        "gradient suite",
        pass,
        &format!(
            "{instances} instances, max relative error {worst:.3e} (tolerance {REL_TOL:.0e}), {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: free-centroid optimization reaches the regular simplex
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_simplex_geometry() {
    let started = Instant::now();
    let c = optimize_free_centroids(4, 8, 1.0, 10_000, 0.3, 7).unwrap();
    let report = simplex_check(&c, 1e-3).unwrap();
    let loss = decoupled_uniformity_loss(&c, 1.0).unwrap().value;
    let target = -8.0 / 3.0;
    let loss_dev = (loss - target).abs();
    let pass = report.pass && loss_dev <= 1e-3 && started.elapsed() < Duration::from_secs(60);
    verdict(
        2,
        "simplex geometry",
        pass,
        &format!(
            "centroid-sum norm {:.2e}, max norm dev {:.2e}, max dist2 dev {:.2e}, loss {:.6} (target {:.6})",
            report.centroid_sum_norm,
            report.max_norm_deviation,
            report.max_distance_deviation,
            loss,
            target
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: finite-batch bias of the loss shrinks at a root-n-like rate
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_estimator_bias_rate() {
    let started = Instant::now();
    let d = 8;
    let t = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    // Asymmetric population on the sphere: a Gaussian bumped toward e1.
    let draw = |rng: &mut ChaCha8Rng| {
        let mut v = vec![0.0f64; d];
        for (i, value) in v.iter_mut().enumerate() {
            *value = 0.8 * rng.sample::<f64, _>(StandardNormal) + if i == 0 { 1.0 } else { 0.0 };
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.iter_mut().for_each(|x| *x /= norm);
        v
    };

    // Monte Carlo reference for the population value over independent pairs.
    let pairs = 1_000_000usize;
    let mut acc = 0.0f64;
    for _ in 0..pairs {
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let d2: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        acc += (-t * d2).exp();
    }
    let reference = (acc / pairs as f64).ln();

    let grid = [8usize, 16, 32, 64, 128, 256, 512];
    let repeats = 100;
    let mut mean_errors = Vec::with_capacity(grid.len());
    for &n in &grid {
        let mut total = 0.0;
        for _ in 0..repeats {
            let mut mu = Array2::zeros((n, d));
            for mut row in mu.rows_mut() {
                let v = draw(&mut rng);
                for (slot, value) in row.iter_mut().zip(&v) {
                    *slot = *value;
                }
            }
            let value = decoupled_uniformity_loss(&Centroids::from_matrix(mu).unwrap(), t)
                .unwrap()
                .value;
            total += (value - reference).abs();
        }
        mean_errors.push(total / repeats as f64);
    }

    let xs: Vec<f64> = grid.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = mean_errors.iter().map(|e| e.ln()).collect();
    let slope = least_squares_slope(&xs, &ys);
    let elapsed = started.elapsed();
    let pass = (-0.75..=-0.25).contains(&slope) && elapsed < Duration::from_secs(120);
    verdict(
        3,
        "estimator bias rate",
        pass,
        &format!(
            "log-log slope {slope:.3} over n in {grid:?} (want [-0.75, -0.25]), reference {reference:.6}, errors {:.2e} -> {:.2e}, {:.1}s",
            mean_errors[0],
            mean_errors[mean_errors.len() - 1],
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: kernel centroid estimator converges on the enumerable instance
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_centroid_estimator_convergence() {
    let started = Instant::now();
    let ds = make_gaussian_mixture(4, 1, 6, 3.0, 31).unwrap();
    let aug = AugmentationSpec::new(AugmentationKind::MaskOneCoordinate);
    let encoder = EncoderInit::new(vec![6, 16, 8], Activation::Tanh, 77).build().unwrap();
    let config = ConvergenceConfig {
        n_grid: vec![16, 64, 256],
        repeats: 100,
        kernel: KernelSpec::Rbf { sigma: 1.0 },
        lambda_scale: 0.01,
        seed: 5,
    };
    let report = estimator_convergence(&ds, &aug, &encoder, &config).unwrap();
    let errors: Vec<f64> = report.rows.iter().map(|r| r.mean_error).collect();
    let strictly_decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let halved = errors[errors.len() - 1] <= errors[0] / 2.0;
    let slope_ok = (-0.6..=-0.1).contains(&report.slope);
    let elapsed = started.elapsed();
    let pass = strictly_decreasing && halved && slope_ok && elapsed < Duration::from_secs(120);
    verdict(
        4,
        "centroid estimator convergence",
        pass,
        &format!(
            "errors {:.4e} / {:.4e} / {:.4e} over n = 16/64/256, slope {:.3} (want [-0.6, -0.1]), {:.1}s",
            errors[0],
            errors[1],
            errors[2],
            report.slope,
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: inequality chain on random instances; exact sandwich at
// zero view spread
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_bound_chain() {
    // Random labeled centroid sets: every reported inequality must hold.
    let mut failures = 0usize;
    let mut min_slack = f64::INFINITY;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let classes = rng.random_range(2..=4);
        let per_class = rng.random_range(2..=6);
        let n = classes * per_class;
        let d = rng.random_range(2..=8);
        let mu = random_unit_rows(&mut rng, n, d);
        let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        // Shuffle label order; class sizes stay balanced.
        for i in (1..n).rev() {
            labels.swap(i, rng.random_range(0..=i));
        }
        let c = Centroids::from_matrix(mu).unwrap();
        let report = verify_bounds(&BoundInputs {
            centroids: &c,
            labels: &labels,
            batch: None,
            augmentation_graph: None,
            kernel: None,
        })
        .unwrap();
        for row in &report.rows {
            min_slack = min_slack.min(row.slack);
            if !row.pass {
                failures += 1;
            }
        }
    }

    // Per-class-constant embeddings with identical views: the chain collapses
    // to an equality on both sides.
    let mut max_sandwich_dev: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let classes = rng.random_range(2..=4);
        let per_class = rng.random_range(2..=3);
        let n = classes * per_class;
        let d = rng.random_range(2..=8);
        let class_vectors = random_unit_rows(&mut rng, classes, d);
        let views = Array3::from_shape_fn((n, 2, d), |(i, _, j)| class_vectors[[i / per_class, j]]);
        let batch = EmbeddingBatch::new(views).unwrap();
        let c = view_average_centroids(&batch);
        let labels: Vec<usize> = (0..n).map(|i| i / per_class).collect();
        let mut graph = Graph::new(n);
        for class in 0..classes {
            let base = class * per_class;
            for offset in 1..per_class {
                graph.add_edge(base + offset - 1, base + offset).unwrap();
            }
        }
        let report = verify_bounds(&BoundInputs {
            centroids: &c,
            labels: &labels,
            batch: Some(&batch),
            augmentation_graph: Some(&graph),
            kernel: None,
        })
        .unwrap();
        assert_eq!(report.epsilon_prime, Some(0.0), "views are identical by construction");
        let lower = report.row("uniformity_below_supervised").unwrap();
        let upper = report.row("alignment_diameter_upper").unwrap();
        max_sandwich_dev = max_sandwich_dev.max(lower.slack.abs()).max(upper.slack.abs());
    }

    let pass = failures == 0 && min_slack >= -1e-9 && max_sandwich_dev <= 1e-9;
    verdict(
        5,
        "bound chain",
        pass,
        &format!(
            "100 random instances, {failures} failed rows, min slack {min_slack:.2e}; zero-spread sandwich deviation {max_sandwich_dev:.2e} (cap 1e-9)"
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: the two routes to the stability constant agree
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_beta_cross_check() {
    let sizes = [8usize, 16, 24, 32, 48, 64, 96, 128, 192, 256];
    let mut worst: f64 = 0.0;
    for (index, seed) in (0..20u64).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        let n = sizes[index % sizes.len()];
        let k = if seed % 2 == 0 {
            // Gram matrix of random features, shifted to be comfortably PSD.
            let rank = n / 2 + 1;
            let x = Array2::from_shape_fn((n, rank), |_| rng.sample::<f64, _>(StandardNormal));
            let mut g = x.dot(&x.t()) / rank as f64;
            for i in 0..n {
                g[[i, i]] += 0.1;
            }
            KernelMatrix::new(g).unwrap()
        } else {
            let vectors = Array2::from_shape_fn((n, 4), |_| rng.sample::<f64, _>(StandardNormal));
            build_kernel_matrix(&vectors, &KernelSpec::Rbf { sigma: 1.5 }).unwrap()
        };
        let lambda = if seed % 3 == 0 { 0.5 } else { 0.01 } / (n as f64).sqrt();
        let direct = beta_n(&k, lambda).unwrap();
        let spectral = beta_n_spectral(&k, lambda).unwrap();
        worst = worst.max((direct - spectral).abs());
    }
    let pass = worst <= 1e-8;
    verdict(
        6,
        "stability constant cross-check",
        pass,
        &format!("20 PSD matrices up to n = 256, max |direct - spectral| = {worst:.3e} (cap 1e-8)"),
    );
}

// ---------------------------------------------------------------------------
// Criteria 7-12: end-to-end runs of the experiment binary
// ---------------------------------------------------------------------------

/// Contaminated two-class mixture: 16 random bit channels at scale 1.0 ride
/// along every sample and pass through augmentation untouched.
fn randbits_config(k_bits: usize, prior_source: &str, centroids: &str) -> String {
    format!(
        r#"
[dataset]
classes = 2
per_class = 32
dim = 4
separation = 3.0
seed = 11
k_bits = {k_bits}
bit_scale = 1.0
test_per_class = 100

[augmentation]
radius = 4.0

[prior]
source = "{prior_source}"

[kernel]
sigma = 2.0
lambda_scale = 5.0

[encoder]
hidden = [64, 32]
output_dim = 4
seed = 1

[train]
epochs = 600
views = 2
temperature = 5.0
centroids = "{centroids}"
seed = 3

[eval]
probe = true
"#
    )
}

#[test]
fn criterion_07_randbits_rescue() {
    let started = Instant::now();
    let dir = scratch("criterion-07");

    let baseline_cfg = write_config(&dir.join("baseline"), &randbits_config(0, "none", "view_average"));
    let baseline_dir = dir.join("run-baseline");
    run_bin(&["train", "--config", baseline_cfg.to_str().unwrap(), "--out", baseline_dir.to_str().unwrap()]);
    let baseline = probe_accuracy(&baseline_dir);

    let plain_cfg = write_config(&dir.join("plain"), &randbits_config(16, "none", "view_average"));
    let plain_dir = dir.join("run-plain");
    run_bin(&["train", "--config", plain_cfg.to_str().unwrap(), "--out", plain_dir.to_str().unwrap()]);
    let plain = probe_accuracy(&plain_dir);

    let kernel_cfg = write_config(&dir.join("kernel"), &randbits_config(16, "clean", "kernel"));
    let kernel_dir = dir.join("run-kernel");
    run_bin(&["train", "--config", kernel_cfg.to_str().unwrap(), "--out", kernel_dir.to_str().unwrap()]);
    let kernel = probe_accuracy(&kernel_dir);

    let chance = 0.5;
    let plain_cap = chance + 0.10;
    let kernel_floor = 0.9 * baseline;
    let elapsed = started.elapsed();
    let pass = plain <= plain_cap && kernel >= kernel_floor && elapsed < Duration::from_secs(600);
    verdict(
        7,
        "random-bits rescue",
        pass,
        &format!(
            "clean baseline {baseline:.3}; with 16 bit channels: plain probe {plain:.3} (cap {plain_cap:.3}), kernel probe {kernel:.3} (floor {kernel_floor:.3}), {:.0}s",
            elapsed.as_secs_f64()
        ),
    );
}

/// Four-class mixture under a near-pointlike augmentation: the augmentation
/// graph has no edges at all, so only the prior can tie a class together.
fn weak_augmentation_config(prior_source: &str, centroids: &str) -> String {
    format!(
        r#"
[dataset]
classes = 4
per_class = 32
dim = 8
separation = 2.0
seed = 21
test_per_class = 50

[augmentation]
radius = 0.05

[prior]
source = "{prior_source}"
sigma_z = 0.0

[kernel]
sigma = 1.0
lambda_scale = 0.01

[encoder]
hidden = [64, 32]
output_dim = 4
seed = 1

[train]
epochs = 1000
views = 2
temperature = 5.0
centroids = "{centroids}"
seed = 3

[eval]
probe = true
"#
    )
}

#[test]
fn criterion_08_weak_augmentation_rescue() {
    let started = Instant::now();
    let dir = scratch("criterion-08");

    // Precondition: every class disconnected in the augmentation graph,
    // verified through the graph-analysis command itself.
    let kernel_cfg = write_config(&dir.join("kernel"), &weak_augmentation_config("oracle", "kernel"));
    let graph_dir = dir.join("graph");
    run_bin(&["graph-analyze", "--config", kernel_cfg.to_str().unwrap(), "--out", graph_dir.to_str().unwrap()]);
    let graph = json_report(&graph_dir.join("graph_report.json"));
    let aug = &graph["report"]["augmentation"];
    let edge_count = aug["edge_count"].as_u64().expect("edge count");
    let any_class_connected = aug["per_class_connected"]
        .as_object()
        .expect("per-class map")
        .values()
        .any(|v| v.as_bool().expect("connected flag"));

    let plain_cfg = write_config(&dir.join("plain"), &weak_augmentation_config("none", "view_average"));
    let plain_dir = dir.join("run-plain");
    run_bin(&["train", "--config", plain_cfg.to_str().unwrap(), "--out", plain_dir.to_str().unwrap()]);
    let plain = probe_accuracy(&plain_dir);

    let kernel_dir = dir.join("run-kernel");
    run_bin(&["train", "--config", kernel_cfg.to_str().unwrap(), "--out", kernel_dir.to_str().unwrap()]);
    let kernel = probe_accuracy(&kernel_dir);

    let gap = kernel - plain;
    let elapsed = started.elapsed();
    let pass =
        !any_class_connected && gap >= 0.10 && elapsed < Duration::from_secs(600);
    verdict(
        8,
        "weak-augmentation rescue",
        pass,
        &format!(
            "augmentation graph: {edge_count} edges, every class disconnected: {}; plain probe {plain:.3}, kernel probe {kernel:.3}, gap {gap:.3} (need >= 0.10), {:.0}s",
            !any_class_connected,
            elapsed.as_secs_f64()
        ),
    );
}

/// Prior-noise sweep on the contaminated mixture; shared by the two
/// correlation criteria below.
struct SweepOutcome {
    rows: Vec<(f64, f64, f64, f64)>, // (sigma_z, quality, eps_star, accuracy)
    pearson: f64,
    spearman: f64,
    elapsed: Duration,
}

fn sweep_outcome() -> &'static SweepOutcome {
    static OUTCOME: OnceLock<SweepOutcome> = OnceLock::new();
    OUTCOME.get_or_init(|| {
        let started = Instant::now();
        let dir = scratch("criterion-09-10");
        let config = r#"
[dataset]
classes = 2
per_class = 32
dim = 4
separation = 3.0
seed = 11
k_bits = 16
bit_scale = 1.0
test_per_class = 100

[augmentation]
radius = 4.0

[prior]
source = "oracle"
sigma_z = 0.0

[kernel]
sigma = 1.0
lambda_scale = 5.0

[encoder]
hidden = [64, 32]
output_dim = 4
seed = 1

[train]
epochs = 600
views = 2
temperature = 5.0
centroids = "kernel"
seed = 3

[eval]
probe = true
sweep_sigma_grid = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0]
sweep_m = 100
sweep_knn = 10
sweep_prior_seed = 7
"#;
        let cfg = write_config(&dir, config);
        let out_dir = dir.join("sweep");
        run_bin(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
        let report = json_report(&out_dir.join("sweep.json"));
        let rows = report["report"]["rows"]
            .as_array()
            .expect("sweep rows")
            .iter()
            .map(|r| {
                (
                    r["sigma_z"].as_f64().unwrap(),
                    r["kernel_quality"].as_f64().unwrap(),
                    r["eps_star"].as_f64().unwrap(),
                    r["accuracy"].as_f64().unwrap(),
                )
            })
            .collect::<Vec<_>>();
        let pearson = report["report"]["pearson_quality_accuracy"].as_f64().expect("pearson");
        let spearman = report["report"]["spearman_eps_accuracy"].as_f64().expect("spearman");
        SweepOutcome { rows, pearson, spearman, elapsed: started.elapsed() }
    })
}

#[test]
fn criterion_09_quality_accuracy_correlation() {
    let outcome = sweep_outcome();
    // Cross-check the reported coefficient against an in-process computation.
    let quality: Vec<f64> = outcome.rows.iter().map(|r| r.1).collect();
    let accuracy: Vec<f64> = outcome.rows.iter().map(|r| r.3).collect();
    let recomputed = pearson_r(&quality, &accuracy).expect("pearson defined");
    let pass = outcome.rows.len() >= 5
        && outcome.pearson >= 0.8
        && (recomputed - outcome.pearson).abs() <= 1e-12
        && outcome.elapsed < Duration::from_secs(900);
    verdict(
        9,
        "prior quality vs accuracy",
        pass,
        &format!(
            "{} noise levels, Pearson r = {:.3} (need >= 0.8), sweep took {:.0}s",
            outcome.rows.len(),
            outcome.pearson,
            outcome.elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_10_eps_star_accuracy_trend() {
    let outcome = sweep_outcome();
    let eps: Vec<f64> = outcome.rows.iter().map(|r| r.2).collect();
    let accuracy: Vec<f64> = outcome.rows.iter().map(|r| r.3).collect();
    let recomputed = spearman_rho(&eps, &accuracy).expect("spearman defined");
    let pass = outcome.rows.len() >= 5
        && outcome.spearman <= -0.6
        && (recomputed - outcome.spearman).abs() <= 1e-12;
    verdict(
        10,
        "connectivity threshold vs accuracy",
        pass,
        &format!(
            "{} noise levels, Spearman rho = {:.3} (need <= -0.6)",
            outcome.rows.len(),
            outcome.spearman
        ),
    );
}

/// The flagship demonstration run: contaminated mixture rescued by a
/// clean-feature prior at moderate augmentation strength.
const STANDARD_RUN_CONFIG: &str = r#"
[dataset]
classes = 2
per_class = 32
dim = 4
separation = 3.0
seed = 11
k_bits = 16
bit_scale = 1.0
test_per_class = 100

[augmentation]
radius = 3.0

[prior]
source = "clean"

[kernel]
sigma = 2.0
lambda_scale = 0.01

[encoder]
hidden = [64, 32]
output_dim = 4
seed = 1

[train]
epochs = 300
views = 2
temperature = 5.0
centroids = "kernel"
seed = 3

[eval]
probe = true
"#;

#[test]
fn criterion_11_alignment_decrease() {
    let dir = scratch("criterion-11");
    let cfg = write_config(&dir, STANDARD_RUN_CONFIG);
    let run_dir = dir.join("run");
    run_bin(&["train", "--config", cfg.to_str().unwrap(), "--out", run_dir.to_str().unwrap()]);
    let alignment = metric_series(&run_dir, "alignment");
    let loss = metric_series(&run_dir, "loss");
    let (first, last) = (alignment[0], alignment[alignment.len() - 1]);
    let ratio = last / first;
    let loss_decreased = loss[loss.len() - 1] < loss[0];
    let pass = ratio <= 0.5 && loss_decreased;
    verdict(
        11,
        "alignment decrease",
        pass,
        &format!(
            "alignment {first:.4} -> {last:.4} (ratio {ratio:.3}, need <= 0.5); loss {:.4} -> {:.4}",
            loss[0],
            loss[loss.len() - 1]
        ),
    );
}

#[test]
fn criterion_12_deterministic_metrics() {
    let dir = scratch("criterion-12");
    let cfg = write_config(&dir, STANDARD_RUN_CONFIG);
    let first_dir = dir.join("first");
    let second_dir = dir.join("second");
    run_bin(&["train", "--config", cfg.to_str().unwrap(), "--out", first_dir.to_str().unwrap()]);
    run_bin(&["train", "--config", cfg.to_str().unwrap(), "--out", second_dir.to_str().unwrap()]);
    let first = std::fs::read(first_dir.join("metrics.csv")).expect("first metrics");
    let second = std::fs::read(second_dir.join("metrics.csv")).expect("second metrics");
    let identical = first == second;
    verdict(
        12,
        "deterministic metrics",
        identical,
        &format!(
            "re-run of the same config: metrics.csv byte-identical = {identical} ({} bytes)",
            first.len()
        ),
    );
}
