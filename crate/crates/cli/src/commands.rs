//! The six subcommands. Each one loads a config, runs library code, and
//! writes machine-readable outputs (metrics.csv, JSON reports, edge lists)
//! plus a one-line human summary on stdout.
//!
//! Every directory-writing command drops the resolved config JSON next to
//! its outputs, so a run directory is self-describing and re-runnable.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, Array3};
use serde::Serialize;

use decoupled_uniformity::data::{sample_views, Dataset};
use decoupled_uniformity::encoder::{
    finite_difference_check, finite_difference_check_sign_flipped, load_checkpoint,
    save_checkpoint, train,
};
use decoupled_uniformity::eval::{
    embed_dataset, linear_probe, quality_accuracy_sweep, verify_bounds, BoundInputs, BoundReport,
    KernelBoundInputs,
};
use decoupled_uniformity::graphs::{
    augmentation_graph, class_connectivity, epsilon_kernel_graph, epsilon_star, kernel_quality,
    union_graph, GraphError,
};
use decoupled_uniformity::kernels::{build_kernel_matrix, centroid_weights};
use decoupled_uniformity::loss::{kernel_centroids, view_average_centroids, Centroids, EmbeddingBatch};
use decoupled_uniformity::{AugmentationSpec, CentroidMode, EncoderParams, Graph, PriorEmbedding};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::metrics::{run_id, MetricsWriter};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Common wrapper for every JSON file/stream the CLI emits.
#[derive(Serialize)]
struct ReportEnvelope<T: Serialize> {
    schema_version: u32,
    run_id: String,
    command: &'static str,
    report: T,
}

fn envelope<T: Serialize>(id: &str, command: &'static str, report: T) -> ReportEnvelope<T> {
    ReportEnvelope { schema_version: REPORT_SCHEMA_VERSION, run_id: id.to_string(), command, report }
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::io("serializing report", e))?;
    s.push('\n');
    Ok(s)
}

fn write_text(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::io(&format!("cannot write {}", path.display()), e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::io(&format!("cannot create {}", path.display()), e))
}

/// Loads, applies the global `--threads` override, validates.
pub fn load_config(path: &Path, threads: Option<usize>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(t) = threads {
        cfg.threads = t;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn required_test_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    cfg.test_dataset()?.ok_or_else(|| {
        CliError::Config(
            "dataset.test_per_class: this command needs a test split; \
             set dataset.test_per_class (or test_path)"
                .into(),
        )
    })
}

fn flatten_views(inputs: &Array3<f64>) -> Array2<f64> {
    let (n, v, dim) = inputs.dim();
    Array2::from_shape_fn((n * v, dim), |(r, j)| inputs[[r / v, r % v, j]])
}

/// Samples views, embeds them, and estimates centroids exactly as one
/// training step would, holding the encoder frozen.
fn embed_and_estimate(
    cfg: &ExperimentConfig,
    params: &EncoderParams,
    ds: &Dataset,
    aug: &AugmentationSpec,
    prior: Option<&PriorEmbedding>,
) -> Result<(EmbeddingBatch, Centroids)> {
    // Bound diagnostics need two views per anchor to measure alignment.
    let views = cfg.train.views.max(2);
    let view_batch = sample_views(ds, aug, views, cfg.train.seed)?;
    let (emb, _) = params.forward(&flatten_views(view_batch.inputs()))?;
    let d = emb.ncols();
    let batch = EmbeddingBatch::new(Array3::from_shape_fn((ds.n(), views, d), |(a, w, j)| {
        emb[[a * views + w, j]]
    }))?;
    let centroids = match cfg.train_config().centroids {
        CentroidMode::ViewAverage => view_average_centroids(&batch),
        CentroidMode::Kernel { spec, lambda_scale } => {
            let prior = prior.ok_or_else(|| {
                CliError::Config("prior.source: kernel centroids need a prior".into())
            })?;
            let k = build_kernel_matrix(prior.vectors(), &spec)?;
            let lambda = lambda_scale / (ds.n() as f64).sqrt();
            kernel_centroids(&batch, &centroid_weights(&k, lambda)?)?
        }
    };
    Ok((batch, centroids))
}

/// Assembles whatever bound inputs the config affords: the two loss-only
/// rows always, the graph row when the augmentation has an overlap graph,
/// the kernel row when a prior is configured as well.
fn bounds_report(
    cfg: &ExperimentConfig,
    params: &EncoderParams,
    ds: &Dataset,
    aug: &AugmentationSpec,
    prior: Option<&PriorEmbedding>,
) -> Result<BoundReport> {
    let labels = ds.require_labels("bound verification")?;
    let (batch, centroids) = embed_and_estimate(cfg, params, ds, aug, prior)?;
    let aug_graph = match augmentation_graph(ds, aug) {
        Ok(g) => Some(g),
        Err(GraphError::UnsupportedAugmentation) => None,
        Err(e) => return Err(e.into()),
    };
    let kernel_matrix = match prior {
        Some(p) => Some(build_kernel_matrix(p.vectors(), &cfg.kernel_spec())?),
        None => None,
    };
    let kernel_inputs = kernel_matrix.as_ref().map(|k| KernelBoundInputs {
        matrix: k,
        lambda: cfg.kernel.lambda_scale / (ds.n() as f64).sqrt(),
        epsilon: cfg.eval.bounds_epsilon,
    });
    Ok(verify_bounds(&BoundInputs {
        centroids: &centroids,
        labels,
        batch: Some(&batch),
        augmentation_graph: aug_graph.as_ref(),
        kernel: kernel_inputs,
    })?)
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

pub fn cmd_train(cfg: &ExperimentConfig, out: &Path, timing: bool) -> Result<()> {
    let resolved = cfg.resolved_json();
    let id = run_id(&resolved);
    create_dir(out)?;
    write_text(&out.join("resolved_config.json"), &resolved)?;

    let train_ds = cfg.train_dataset()?;
    let aug = cfg.augmentation_spec();
    let prior = cfg.prior(&train_ds)?;
    // Fail before the expensive part if the probe will want a test split.
    let test_ds = if cfg.eval.probe { Some(required_test_dataset(cfg)?) } else { None };
    let params = cfg.encoder_init(train_ds.input_dim()).build()?;
    let tcfg = cfg.train_config();
    let (params, metrics) = train(params, &train_ds, &aug, prior.as_ref(), &tcfg)?;

    let mut mw = MetricsWriter::create(&out.join("metrics.csv"), &id, timing)?;
    for m in &metrics {
        mw.record(m.epoch, "loss", m.loss)?;
        mw.record(m.epoch, "alignment", m.alignment)?;
        mw.record(m.epoch, "weak_alignment", m.weak_alignment)?;
        mw.record(m.epoch, "grad_norm", m.grad_norm)?;
        mw.record(m.epoch, "learning_rate", m.learning_rate)?;
    }
    save_checkpoint(&params, &out.join("checkpoint.json"))?;

    if let Some(test_ds) = &test_ds {
        let train_emb = embed_dataset(&params, &train_ds)?;
        let test_emb = embed_dataset(&params, test_ds)?;
        let probe = linear_probe(
            &train_emb,
            train_ds.require_labels("probe")?,
            &test_emb,
            test_ds.require_labels("probe")?,
            cfg.eval.probe_seed,
        )?;
        mw.record(tcfg.epochs, "probe_accuracy", probe.accuracy)?;
        write_text(&out.join("probe.json"), &to_pretty_json(&envelope(&id, "train", &probe))?)?;
    }
    if cfg.eval.bounds {
        let report = bounds_report(cfg, &params, &train_ds, &aug, prior.as_ref())?;
        write_text(&out.join("bounds.json"), &to_pretty_json(&envelope(&id, "train", &report))?)?;
    }
    mw.finish()?;

    match metrics.last() {
        Some(last) => println!(
            "train: run {id}: {} epochs, final loss {:.6}, outputs in {}",
            metrics.len(),
            last.loss,
            out.display()
        ),
        None => println!("train: run {id}: 0 epochs, initial checkpoint written to {}", out.display()),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// grad-check
// ---------------------------------------------------------------------------

pub fn cmd_grad_check(cfg: &ExperimentConfig, tolerance: f64, inject_sign_flip: bool) -> Result<()> {
    let ds = cfg.train_dataset()?;
    let aug = cfg.augmentation_spec();
    let prior = cfg.prior(&ds)?;
    let params = cfg.encoder_init(ds.input_dim()).build()?;
    let tcfg = cfg.train_config();
    let report = if inject_sign_flip {
        finite_difference_check_sign_flipped(&params, &ds, &aug, prior.as_ref(), &tcfg, tolerance)?
    } else {
        finite_difference_check(&params, &ds, &aug, prior.as_ref(), &tcfg, tolerance)?
    };
    println!(
        "grad check: max relative error {:.3e} over {} parameters (tolerance {:.1e}): {}",
        report.max_rel_error,
        report.parameters_checked,
        report.tolerance,
        if report.pass { "PASS" } else { "FAIL" }
    );
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "gradient check failed: max relative error {:.3e} exceeds tolerance {:.1e}",
            report.max_rel_error, report.tolerance
        )))
    }
}

// ---------------------------------------------------------------------------
// graph-analyze
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct GraphSection {
    edge_count: usize,
    per_class_connected: BTreeMap<usize, bool>,
    per_class_components: BTreeMap<usize, usize>,
    /// Induced-subgraph diameters as strings; "inf" marks a disconnected class.
    per_class_diameter: BTreeMap<usize, String>,
    max_intra_class_diameter: String,
    all_classes_connected: bool,
}

fn graph_section(g: &Graph, labels: &[usize]) -> Result<GraphSection> {
    let report = class_connectivity(g, labels)?;
    Ok(GraphSection {
        edge_count: g.edge_count(),
        per_class_connected: report.per_class_connected.clone(),
        per_class_components: report.per_class_components.clone(),
        per_class_diameter: report
            .per_class_diameter
            .iter()
            .map(|(&c, d)| (c, d.to_string()))
            .collect(),
        max_intra_class_diameter: report.max_intra_class_diameter.to_string(),
        all_classes_connected: report.all_classes_connected(),
    })
}

#[derive(Serialize)]
struct GraphAnalysis {
    n: usize,
    augmentation: GraphSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel: Option<GraphSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    union: Option<GraphSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel_quality: Option<f64>,
    m: usize,
    knn: usize,
}

fn write_edge_list(path: &Path, g: &Graph) -> Result<()> {
    let mut buf = Vec::new();
    g.write_edge_list(&mut buf)
        .map_err(|e| CliError::io(&format!("cannot write {}", path.display()), e))?;
    std::fs::write(path, buf)
        .map_err(|e| CliError::io(&format!("cannot write {}", path.display()), e))
}

pub fn cmd_graph_analyze(
    cfg: &ExperimentConfig,
    out: &Path,
    eps: Option<f64>,
    m: usize,
) -> Result<()> {
    if let Some(e) = eps {
        if !(e.is_finite() && e >= 0.0) {
            return Err(CliError::Config(format!("--eps must be finite and >= 0, got {e}")));
        }
    }
    let resolved = cfg.resolved_json();
    let id = run_id(&resolved);
    let ds = cfg.train_dataset()?;
    let labels = ds.require_labels("graph analysis")?;
    let aug = cfg.augmentation_spec();
    let prior = cfg.prior(&ds)?;
    if eps.is_some() && prior.is_none() {
        return Err(CliError::Config(
            "prior.source: --eps builds a kernel graph, which needs a prior".into(),
        ));
    }

    create_dir(out)?;
    write_text(&out.join("resolved_config.json"), &resolved)?;
    let aug_graph = augmentation_graph(&ds, &aug)?;
    write_edge_list(&out.join("augmentation_graph.txt"), &aug_graph)?;

    let mut analysis = GraphAnalysis {
        n: ds.n(),
        augmentation: graph_section(&aug_graph, labels)?,
        epsilon: eps,
        kernel: None,
        union: None,
        epsilon_star: None,
        kernel_quality: None,
        m,
        knn: cfg.eval.sweep_knn,
    };

    if let Some(prior) = &prior {
        let k = build_kernel_matrix(prior.vectors(), &cfg.kernel_spec())?;
        analysis.epsilon_star = Some(epsilon_star(&k, labels, m, None)?);
        analysis.kernel_quality = Some(kernel_quality(&k, labels, cfg.eval.sweep_knn)?);
        if let Some(eps) = eps {
            let kernel_graph = epsilon_kernel_graph(&k, eps)?;
            let union = union_graph(&aug_graph, &kernel_graph)?;
            write_edge_list(&out.join("kernel_graph.txt"), &kernel_graph)?;
            write_edge_list(&out.join("union_graph.txt"), &union)?;
            analysis.kernel = Some(graph_section(&kernel_graph, labels)?);
            analysis.union = Some(graph_section(&union, labels)?);
        }
    }

    let json = to_pretty_json(&envelope(&id, "graph-analyze", &analysis))?;
    write_text(&out.join("graph_report.json"), &json)?;
    print!("{json}");
    Ok(())
}

// ---------------------------------------------------------------------------
// bounds / probe
// ---------------------------------------------------------------------------

fn write_optional_report(
    out: Option<&Path>,
    resolved: &str,
    file_name: &str,
    json: &str,
) -> Result<()> {
    if let Some(dir) = out {
        create_dir(dir)?;
        write_text(&dir.join("resolved_config.json"), resolved)?;
        write_text(&dir.join(file_name), json)?;
    }
    Ok(())
}

pub fn cmd_bounds(cfg: &ExperimentConfig, checkpoint: &Path, out: Option<&Path>) -> Result<()> {
    let resolved = cfg.resolved_json();
    let id = run_id(&resolved);
    let params = load_checkpoint(checkpoint)?;
    let ds = cfg.train_dataset()?;
    let aug = cfg.augmentation_spec();
    let prior = cfg.prior(&ds)?;
    let report = bounds_report(cfg, &params, &ds, &aug, prior.as_ref())?;
    let json = to_pretty_json(&envelope(&id, "bounds", &report))?;
    write_optional_report(out, &resolved, "bounds.json", &json)?;
    print!("{json}");
    Ok(())
}

pub fn cmd_probe(cfg: &ExperimentConfig, checkpoint: &Path, out: Option<&Path>) -> Result<()> {
    let resolved = cfg.resolved_json();
    let id = run_id(&resolved);
    let params = load_checkpoint(checkpoint)?;
    let train_ds = cfg.train_dataset()?;
    let test_ds = required_test_dataset(cfg)?;
    let train_emb = embed_dataset(&params, &train_ds)?;
    let test_emb = embed_dataset(&params, &test_ds)?;
    let probe = linear_probe(
        &train_emb,
        train_ds.require_labels("probe")?,
        &test_emb,
        test_ds.require_labels("probe")?,
        cfg.eval.probe_seed,
    )?;
    let json = to_pretty_json(&envelope(&id, "probe", &probe))?;
    write_optional_report(out, &resolved, "probe.json", &json)?;
    print!("{json}");
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path, timing: bool) -> Result<()> {
    if cfg.train.centroids != "kernel" {
        return Err(CliError::Config(
            "train.centroids: the sweep varies prior quality, so it needs \
             train.centroids = \"kernel\""
                .into(),
        ));
    }
    if cfg.eval.sweep_sigma_grid.len() < 5 {
        return Err(CliError::Config(format!(
            "eval.sweep_sigma_grid: need at least 5 noise levels, got {}",
            cfg.eval.sweep_sigma_grid.len()
        )));
    }
    let resolved = cfg.resolved_json();
    let id = run_id(&resolved);
    let train_ds = cfg.train_dataset()?;
    let test_ds = required_test_dataset(cfg)?;
    let aug = cfg.augmentation_spec();
    let init = cfg.encoder_init(train_ds.input_dim());
    let tcfg = cfg.train_config();
    let sweep = cfg.sweep_config();

    create_dir(out)?;
    write_text(&out.join("resolved_config.json"), &resolved)?;
    let report = quality_accuracy_sweep(&train_ds, &test_ds, &aug, &init, &tcfg, &sweep)?;

    let mut mw = MetricsWriter::create(&out.join("metrics.csv"), &id, timing)?;
    for (i, row) in report.rows.iter().enumerate() {
        mw.record(i, "sigma_z", row.sigma_z)?;
        mw.record(i, "kernel_quality", row.kernel_quality)?;
        mw.record(i, "eps_star", row.eps_star)?;
        mw.record(i, "probe_accuracy", row.accuracy)?;
    }
    mw.finish()?;

    let json = to_pretty_json(&envelope(&id, "sweep", &report))?;
    write_text(&out.join("sweep.json"), &json)?;
    print!("{json}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.train.epochs = 1;
        cfg.train.batch_size = 8;
        cfg.encoder.hidden = vec![6];
        cfg.encoder.output_dim = 4;
        cfg
    }

    #[test]
    fn bounds_report_includes_graph_and_kernel_rows_when_configured() {
        let mut cfg = fast_config();
        cfg.prior.source = "oracle".into();
        cfg.train.centroids = "kernel".into();
        cfg.validate().unwrap();
        let ds = cfg.train_dataset().unwrap();
        let aug = cfg.augmentation_spec();
        let prior = cfg.prior(&ds).unwrap();
        let params = cfg.encoder_init(ds.input_dim()).build().unwrap();
        let report = bounds_report(&cfg, &params, &ds, &aug, prior.as_ref()).unwrap();
        let names: Vec<&str> = report.rows.iter().map(|r| r.name).collect();
        assert_eq!(
            names,
            vec![
                "uniformity_below_supervised",
                "variance_upper",
                "alignment_diameter_upper",
                "kernel_union_upper"
            ]
        );
    }

    #[test]
    fn mask_augmentation_drops_the_graph_rows_instead_of_failing() {
        let mut cfg = fast_config();
        cfg.augmentation.kind = "mask_one_coordinate".into();
        cfg.validate().unwrap();
        let ds = cfg.train_dataset().unwrap();
        let aug = cfg.augmentation_spec();
        let params = cfg.encoder_init(ds.input_dim()).build().unwrap();
        let report = bounds_report(&cfg, &params, &ds, &aug, None).unwrap();
        let names: Vec<&str> = report.rows.iter().map(|r| r.name).collect();
        assert_eq!(names, vec!["uniformity_below_supervised", "variance_upper"]);
    }

    #[test]
    fn embed_and_estimate_always_uses_at_least_two_views() {
        let mut cfg = fast_config();
        cfg.train.views = 1;
        cfg.validate().unwrap();
        let ds = cfg.train_dataset().unwrap();
        let aug = cfg.augmentation_spec();
        let params = cfg.encoder_init(ds.input_dim()).build().unwrap();
        let (batch, centroids) = embed_and_estimate(&cfg, &params, &ds, &aug, None).unwrap();
        assert_eq!(batch.views_per_anchor(), 2);
        assert_eq!(centroids.n(), ds.n());
    }
}
