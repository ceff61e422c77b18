//! A small dense encoder with hypersphere output and manual backprop.
//!
//! The network is a stack of affine layers with an elementwise activation
//! after every layer except the last backbone layer and the last head layer,
//! followed by exact l2 normalization onto the unit sphere. The optional
//! projection head is two more affine layers appended to the backbone.
//!
//! Gradients are computed by hand. The only non-obvious link in the chain is
//! the normalization Jacobian: for `u = z / ||z||`,
//!
//! ```text
//! dL/dz = (g - (g . u) u) / ||z||    where g = dL/du
//! ```
//!
//! which kills the radial component of the incoming gradient. [`train`] wires
//! sampling, embedding, centroid estimation (view averages or the kernel
//! ridge estimator), the decoupled uniformity loss, and SGD into one loop;
//! [`finite_difference_check`] validates the whole analytic chain against
//! central differences on a small instance.

use ndarray::{Array1, Array2, Array3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::data::{sample_views, sample_views_for, AugmentationSpec, DataError, Dataset, PriorEmbedding};
use crate::kernels::{build_kernel_matrix, centroid_weights, KernelError, KernelSpec};
use crate::loss::{
    alignment_metric, decoupled_uniformity_loss, kernel_centroids, view_average_centroids,
    weak_alignment_epsilon, EmbeddingBatch, LossError,
};

/// Pre-normalization norms below this abort the forward pass.
pub const MIN_EMBEDDING_NORM: f64 = 1e-12;

const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("layer_dims needs at least [input, output], got {got} entries")]
    TooFewLayerDims { got: usize },
    #[error("layer_dims entries must be >= 1, found 0 at position {position}")]
    ZeroLayerDim { position: usize },
    #[error("layer {layer}: bias length {bias} != output dim {cols}")]
    BiasShape { layer: usize, bias: usize, cols: usize },
    #[error("layer {layer} outputs {got} features but layer {next} expects {expected}")]
    LayerChain { layer: usize, next: usize, got: usize, expected: usize },
    #[error("projection head must keep at least one backbone layer")]
    HeadSwallowsBackbone,
    #[error("input has {got} columns, encoder expects {expected}")]
    InputDim { got: usize, expected: usize },
    #[error("non-finite value in encoder input")]
    NonFiniteInput,
    #[error("pre-normalization norm {norm:.3e} < 1e-12 for sample {sample} (degenerate encoder)")]
    DegenerateNorm { sample: usize, norm: f64 },
    #[error("gradient shape ({rows}, {cols}) does not match cached batch ({expected_rows}, {expected_cols})")]
    GradShape { rows: usize, cols: usize, expected_rows: usize, expected_cols: usize },
    #[error("batch_size must be >= 2, got {got}")]
    BadBatchSize { got: usize },
    #[error("views must be >= 1")]
    BadViews,
    #[error("temperature must be finite and > 0, got {got}")]
    BadTemperature { got: f64 },
    #[error("learning_rate must be finite and >= 0, got {got}")]
    BadLearningRate { got: f64 },
    #[error("momentum must lie in [0, 1), got {got}")]
    BadMomentum { got: f64 },
    #[error("lambda_scale must be finite and > 0, got {got}")]
    BadLambdaScale { got: f64 },
    #[error("kernel centroid mode requires a prior embedding")]
    MissingPrior,
    #[error("prior embedding has {got} rows, dataset has {expected}")]
    PriorLength { got: usize, expected: usize },
    #[error("dataset input dim {got} does not match encoder input dim {expected}")]
    DatasetDim { got: usize, expected: usize },
    #[error("training aborted at epoch {epoch}: non-finite loss or gradient (last good parameters attached)")]
    NumericalAbort { epoch: usize, last_good: Box<EncoderParams> },
    #[error("finite-difference check limited to n <= 16 anchors, got {n}")]
    FdTooManyAnchors { n: usize },
    #[error("finite-difference check limited to 5000 parameters, got {count}")]
    FdTooManyParameters { count: usize },
    #[error("checkpoint schema version {got} unsupported (expected {expected})")]
    CheckpointVersion { got: u32, expected: u32 },
    #[error("malformed checkpoint: {message}")]
    BadCheckpoint { message: String },
    #[error("unknown activation {name:?} in checkpoint")]
    UnknownActivation { name: String },
    #[error("checkpoint I/O failed for {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T> = std::result::Result<T, EncoderError>;

/// Elementwise nonlinearity applied between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative at the pre-activation value.
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    fn from_name(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(EncoderError::UnknownActivation { name: other.to_string() }),
        }
    }
}

/// One affine layer, row convention: `output = input . weights + bias`,
/// weights shape `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>) -> Option<Self> {
        (bias.len() == weights.ncols()).then_some(Layer { weights, bias })
    }

    fn zeros_like(&self) -> Layer {
        Layer {
            weights: Array2::zeros(self.weights.dim()),
            bias: Array1::zeros(self.bias.len()),
        }
    }
}

/// Two-layer projection head appended after the backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProjectionHead {
    pub hidden: usize,
    pub output: usize,
}

/// Architecture plus initialization seed; `build` draws Glorot-uniform
/// weights deterministically.
#[derive(Debug, Clone)]
pub struct EncoderInit {
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    pub projection_head: Option<ProjectionHead>,
    pub seed: u64,
}

impl EncoderInit {
    pub fn new(layer_dims: Vec<usize>, activation: Activation, seed: u64) -> Self {
        EncoderInit { layer_dims, activation, projection_head: None, seed }
    }

    pub fn with_projection_head(mut self, head: ProjectionHead) -> Self {
        self.projection_head = Some(head);
        self
    }

    pub fn build(&self) -> Result<EncoderParams> {
        let mut dims = self.layer_dims.clone();
        let backbone_layers = dims.len().saturating_sub(1);
        if backbone_layers == 0 {
            return Err(EncoderError::TooFewLayerDims { got: dims.len() });
        }
        if let Some(head) = self.projection_head {
            dims.push(head.hidden);
            dims.push(head.output);
        }
        if let Some(position) = dims.iter().position(|&d| d == 0) {
            return Err(EncoderError::ZeroLayerDim { position });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights =
                    Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..limit));
                Layer { weights, bias: Array1::zeros(fan_out) }
            })
            .collect();
        EncoderParams::from_layers(layers, self.activation, backbone_layers)
    }
}

/// Trainable encoder state: affine layers plus the activation rule.
///
/// Layer `i` is followed by the activation unless it is the last backbone
/// layer or the last layer overall; the final output is l2-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    layers: Vec<Layer>,
    activation: Activation,
    backbone_layers: usize,
}

impl EncoderParams {
    pub fn from_layers(
        layers: Vec<Layer>,
        activation: Activation,
        backbone_layers: usize,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(EncoderError::TooFewLayerDims { got: 1 });
        }
        if backbone_layers == 0 || backbone_layers > layers.len() {
            return Err(EncoderError::HeadSwallowsBackbone);
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.weights.ncols() {
                return Err(EncoderError::BiasShape {
                    layer: i,
                    bias: layer.bias.len(),
                    cols: layer.weights.ncols(),
                });
            }
            if i + 1 < layers.len() && layer.weights.ncols() != layers[i + 1].weights.nrows() {
                return Err(EncoderError::LayerChain {
                    layer: i,
                    next: i + 1,
                    got: layer.weights.ncols(),
                    expected: layers[i + 1].weights.nrows(),
                });
            }
        }
        Ok(EncoderParams { layers, activation, backbone_layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weights.ncols()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn backbone_layers(&self) -> usize {
        self.backbone_layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn activated(&self, layer: usize) -> bool {
        layer != self.backbone_layers - 1 && layer + 1 != self.layers.len()
    }

    /// Embeds a batch of input rows onto the unit sphere, caching what
    /// backward needs.
    pub fn forward(&self, inputs: &Array2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        if inputs.ncols() != self.input_dim() {
            return Err(EncoderError::InputDim { got: inputs.ncols(), expected: self.input_dim() });
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(EncoderError::NonFiniteInput);
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut current = inputs.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = current.dot(&layer.weights) + &layer.bias;
            let a = if self.activated(i) { z.mapv(|x| self.activation.apply(x)) } else { z.clone() };
            pre.push(z);
            post.push(a.clone());
            current = a;
        }
        let mut outputs = current.clone();
        let mut norms = Vec::with_capacity(outputs.nrows());
        for (sample, mut row) in outputs.rows_mut().into_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if norm.is_nan() || norm < MIN_EMBEDDING_NORM {
                return Err(EncoderError::DegenerateNorm { sample, norm });
            }
            row.mapv_inplace(|v| v / norm);
            norms.push(norm);
        }
        let cache = ForwardCache { inputs: inputs.clone(), pre, post, outputs: outputs.clone(), norms };
        Ok((outputs, cache))
    }

    /// Chains loss gradients w.r.t. the unit embeddings back to every weight
    /// and bias.
    pub fn backward(&self, cache: &ForwardCache, grad_embeddings: &Array2<f64>) -> Result<Gradients> {
        let rows = cache.inputs.nrows();
        let cols = self.output_dim();
        if grad_embeddings.dim() != (rows, cols) {
            return Err(EncoderError::GradShape {
                rows: grad_embeddings.nrows(),
                cols: grad_embeddings.ncols(),
                expected_rows: rows,
                expected_cols: cols,
            });
        }
        // Through the normalization: dL/dz = (g - (g.u)u) / ||z||.
        let mut g = grad_embeddings.clone();
        for (i, mut row) in g.rows_mut().into_iter().enumerate() {
            let u = cache.outputs.row(i);
            let radial = row.dot(&u);
            row.zip_mut_with(&u, |gv, uv| *gv = (*gv - radial * uv) / cache.norms[i]);
        }
        let mut grads: Vec<Layer> = self.layers.iter().map(Layer::zeros_like).collect();
        for l in (0..self.layers.len()).rev() {
            let delta = if self.activated(l) {
                let mut d = cache.pre[l].mapv(|x| self.activation.derivative(x));
                d.zip_mut_with(&g, |dv, gv| *dv *= gv);
                d
            } else {
                g
            };
            let prev = if l == 0 { &cache.inputs } else { &cache.post[l - 1] };
            grads[l].weights = prev.t().dot(&delta);
            grads[l].bias = delta.sum_axis(ndarray::Axis(0));
            g = delta.dot(&self.layers[l].weights.t());
        }
        Ok(Gradients { layers: grads })
    }

    fn apply_step(&mut self, velocity: &mut [Layer], grads: &Gradients, lr: f64, momentum: f64) {
        for ((layer, v), g) in self.layers.iter_mut().zip(velocity).zip(&grads.layers) {
            v.weights.zip_mut_with(&g.weights, |vv, gv| *vv = momentum * *vv + gv);
            v.bias.zip_mut_with(&g.bias, |vv, gv| *vv = momentum * *vv + gv);
            layer.weights.zip_mut_with(&v.weights, |w, vv| *w -= lr * vv);
            layer.bias.zip_mut_with(&v.bias, |b, vv| *b -= lr * vv);
        }
    }

    fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

/// Intermediate activations saved by [`EncoderParams::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Array2<f64>,
    /// Pre-activation `z_l` per layer.
    pre: Vec<Array2<f64>>,
    /// Post-activation output per layer; the last entry is pre-normalization.
    post: Vec<Array2<f64>>,
    /// Unit-norm outputs.
    outputs: Array2<f64>,
    /// Pre-normalization norms per sample.
    norms: Vec<f64>,
}

/// Parameter gradients, same shapes as the encoder's layers.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    /// l2 norm over every weight and bias entry.
    pub fn global_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                l.weights.iter().map(|v| v * v).sum::<f64>()
                    + l.bias.iter().map(|v| v * v).sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }

    fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

/// Learning-rate schedule over epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Constant,
    Cosine,
}

impl Schedule {
    pub fn rate(self, base: f64, epoch: usize, epochs: usize) -> f64 {
        match self {
            Schedule::Constant => base,
            Schedule::Cosine => {
                base * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / epochs as f64).cos())
            }
        }
    }
}

/// How per-anchor centroids are estimated during training.
#[derive(Debug, Clone, PartialEq)]
pub enum CentroidMode {
    /// Plain mode: average the anchor's view embeddings.
    ViewAverage,
    /// Kernel mode: ridge-regress centroids against a prior embedding; the
    /// batch regularizer is `lambda_scale / sqrt(batch_n)`.
    Kernel { spec: KernelSpec, lambda_scale: f64 },
}

/// Hyperparameters for [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub views: usize,
    pub temperature: f64,
    pub learning_rate: f64,
    pub schedule: Schedule,
    pub momentum: f64,
    pub centroids: CentroidMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            views: 2,
            temperature: 2.0,
            learning_rate: 0.1,
            schedule: Schedule::Constant,
            momentum: 0.0,
            centroids: CentroidMode::ViewAverage,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(EncoderError::BadBatchSize { got: self.batch_size });
        }
        if self.views == 0 {
            return Err(EncoderError::BadViews);
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(EncoderError::BadTemperature { got: self.temperature });
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(EncoderError::BadLearningRate { got: self.learning_rate });
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return Err(EncoderError::BadMomentum { got: self.momentum });
        }
        if let CentroidMode::Kernel { lambda_scale, .. } = &self.centroids {
            if !(lambda_scale.is_finite() && *lambda_scale > 0.0) {
                return Err(EncoderError::BadLambdaScale { got: *lambda_scale });
            }
        }
        Ok(())
    }
}

/// Per-epoch training diagnostics (means over the epoch's batches, except
/// `weak_alignment` which is the epoch max; alignment entries are NaN when
/// `views < 2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub alignment: f64,
    pub weak_alignment: f64,
    pub grad_norm: f64,
    pub learning_rate: f64,
}

/// SGD over the decoupled uniformity loss.
///
/// Each epoch reshuffles anchors and walks mini-batches: sample `V` views per
/// batch anchor, embed, estimate centroids (kernel weights recomputed from
/// the batch's prior rows), evaluate the loss, backpropagate, step. Batches
/// smaller than 2 anchors (shuffle tail) are dropped. Deterministic given
/// the seed; a non-finite loss, gradient, or embedding aborts with the last
/// parameters that produced a finite loss.
pub fn train(
    params: EncoderParams,
    dataset: &Dataset,
    augmentation: &AugmentationSpec,
    prior: Option<&PriorEmbedding>,
    config: &TrainConfig,
) -> Result<(EncoderParams, Vec<EpochMetrics>)> {
    config.validate()?;
    if dataset.input_dim() != params.input_dim() {
        return Err(EncoderError::DatasetDim {
            got: dataset.input_dim(),
            expected: params.input_dim(),
        });
    }
    let kernel = match &config.centroids {
        CentroidMode::ViewAverage => None,
        CentroidMode::Kernel { spec, lambda_scale } => {
            let prior = prior.ok_or(EncoderError::MissingPrior)?;
            if prior.n() != dataset.n() {
                return Err(EncoderError::PriorLength { got: prior.n(), expected: dataset.n() });
            }
            Some((spec, *lambda_scale, prior))
        }
    };

    let mut params = params;
    let mut last_good = params.clone();
    let mut velocity: Vec<Layer> = params.layers.iter().map(Layer::zeros_like).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut indices: Vec<usize> = (0..dataset.n()).collect();
    let mut metrics = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = config.schedule.rate(config.learning_rate, epoch, config.epochs);
        indices.shuffle(&mut rng);
        let mut sums = (0.0, 0.0, 0.0); // loss, alignment, grad norm
        let mut weak_max = f64::NAN;
        let mut batches = 0usize;
        for chunk in indices.chunks(config.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let view_seed: u64 = rng.random();
            let views = sample_views_for(dataset, augmentation, config.views, view_seed, chunk)?;
            let (bn, v, dim) = views.inputs().dim();
            let flat = flatten_views(views.inputs(), bn, v, dim);
            let candidate = params.clone();
            let (emb, cache) = params.forward(&flat)?;
            if emb.iter().any(|x| !x.is_finite()) {
                return Err(EncoderError::NumericalAbort { epoch, last_good: Box::new(last_good) });
            }
            let d = emb.ncols();
            let batch =
                EmbeddingBatch::new(Array3::from_shape_fn((bn, v, d), |(a, w, j)| emb[[a * v + w, j]]))?;
            let centroids = match &kernel {
                None => view_average_centroids(&batch),
                Some((spec, scale, prior)) => {
                    let k = build_kernel_matrix(&prior.subset(chunk), spec)?;
                    let lambda = scale / (bn as f64).sqrt();
                    kernel_centroids(&batch, &centroid_weights(&k, lambda)?)?
                }
            };
            let report = decoupled_uniformity_loss(&centroids, config.temperature)?;
            let grad_flat = Array2::from_shape_fn((bn * v, d), |(r, j)| {
                report.grad_views[[r / v, r % v, j]]
            });
            let grads = params.backward(&cache, &grad_flat)?;
            if !report.value.is_finite() || !grads.is_finite() {
                return Err(EncoderError::NumericalAbort { epoch, last_good: Box::new(last_good) });
            }
            last_good = candidate;
            params.apply_step(&mut velocity, &grads, lr, config.momentum);
            if !params.is_finite() {
                return Err(EncoderError::NumericalAbort { epoch, last_good: Box::new(last_good) });
            }
            sums.0 += report.value;
            sums.2 += grads.global_norm();
            if config.views >= 2 {
                sums.1 += alignment_metric(&batch)?;
                let weak = weak_alignment_epsilon(&batch)?;
                weak_max = if weak_max.is_nan() { weak } else { weak_max.max(weak) };
            }
            batches += 1;
        }
        let b = batches.max(1) as f64;
        metrics.push(EpochMetrics {
            epoch,
            loss: sums.0 / b,
            alignment: if config.views >= 2 { sums.1 / b } else { f64::NAN },
            weak_alignment: weak_max,
            grad_norm: sums.2 / b,
            learning_rate: lr,
        });
    }
    Ok((params, metrics))
}

fn flatten_views(inputs: &Array3<f64>, n: usize, v: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((n * v, dim), |(r, j)| inputs[[r / v, r % v, j]])
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct LayerDump {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    schema_version: u32,
    activation: String,
    backbone_layers: usize,
    layers: Vec<LayerDump>,
}

/// Writes a JSON checkpoint. Floats are printed shortest-round-trip, so
/// save -> load -> save is byte-identical.
pub fn save_checkpoint(params: &EncoderParams, path: &Path) -> Result<()> {
    let file = CheckpointFile {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        activation: params.activation.name().to_string(),
        backbone_layers: params.backbone_layers,
        layers: params
            .layers
            .iter()
            .map(|l| LayerDump {
                rows: l.weights.nrows(),
                cols: l.weights.ncols(),
                weights: l.weights.iter().copied().collect(),
                bias: l.bias.to_vec(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("checkpoint serialization");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| EncoderError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<EncoderParams> {
    let text = std::fs::read_to_string(path).map_err(|source| EncoderError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: CheckpointFile = serde_json::from_str(&text)
        .map_err(|e| EncoderError::BadCheckpoint { message: e.to_string() })?;
    if file.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(EncoderError::CheckpointVersion {
            got: file.schema_version,
            expected: CHECKPOINT_SCHEMA_VERSION,
        });
    }
    let activation = Activation::from_name(&file.activation)?;
    let mut layers = Vec::with_capacity(file.layers.len());
    for (i, dump) in file.layers.into_iter().enumerate() {
        if dump.weights.len() != dump.rows * dump.cols {
            return Err(EncoderError::BadCheckpoint {
                message: format!(
                    "layer {i}: {} weights for shape ({}, {})",
                    dump.weights.len(),
                    dump.rows,
                    dump.cols
                ),
            });
        }
        let weights = Array2::from_shape_vec((dump.rows, dump.cols), dump.weights)
            .expect("length checked above");
        let bias = Array1::from_vec(dump.bias);
        if bias.len() != dump.cols {
            return Err(EncoderError::BiasShape { layer: i, bias: bias.len(), cols: dump.cols });
        }
        layers.push(Layer { weights, bias });
    }
    let backbone_layers = file.backbone_layers;
    EncoderParams::from_layers(layers, activation, backbone_layers)
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

/// Outcome of [`finite_difference_check`].
#[derive(Debug, Clone, Copy)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub parameters_checked: usize,
    pub pass: bool,
}

/// Validates the analytic pipeline gradient (views -> encoder -> centroids ->
/// loss) against central differences over every parameter.
///
/// Views are sampled once from `config.seed` and frozen; in kernel mode the
/// centroid weights come from the full dataset's prior rows at
/// `lambda_scale / sqrt(n)` and are held constant, matching how the trainer
/// treats them within a step. Relative error uses
/// `|a - f| / max(1, |a|, |f|)`.
pub fn finite_difference_check(
    params: &EncoderParams,
    dataset: &Dataset,
    augmentation: &AugmentationSpec,
    prior: Option<&PriorEmbedding>,
    config: &TrainConfig,
    tolerance: f64,
) -> Result<FdReport> {
    fd_check(params, dataset, augmentation, prior, config, tolerance, 1.0)
}

/// Fault-injection variant of [`finite_difference_check`]: compares the
/// finite differences against the NEGATED analytic gradient, so on a correct
/// pipeline the report must come back failing. Lets callers exercise their
/// gradient-check failure handling end to end.
pub fn finite_difference_check_sign_flipped(
    params: &EncoderParams,
    dataset: &Dataset,
    augmentation: &AugmentationSpec,
    prior: Option<&PriorEmbedding>,
    config: &TrainConfig,
    tolerance: f64,
) -> Result<FdReport> {
    fd_check(params, dataset, augmentation, prior, config, tolerance, -1.0)
}

#[allow(clippy::too_many_arguments)]
fn fd_check(
    params: &EncoderParams,
    dataset: &Dataset,
    augmentation: &AugmentationSpec,
    prior: Option<&PriorEmbedding>,
    config: &TrainConfig,
    tolerance: f64,
    gradient_sign: f64,
) -> Result<FdReport> {
    config.validate()?;
    if dataset.n() > 16 {
        return Err(EncoderError::FdTooManyAnchors { n: dataset.n() });
    }
    let count = params.parameter_count();
    if count > 5000 {
        return Err(EncoderError::FdTooManyParameters { count });
    }
    let views = sample_views(dataset, augmentation, config.views, config.seed)?;
    let (n, v, dim) = views.inputs().dim();
    let flat = flatten_views(views.inputs(), n, v, dim);
    let weights = match &config.centroids {
        CentroidMode::ViewAverage => None,
        CentroidMode::Kernel { spec, lambda_scale } => {
            let prior = prior.ok_or(EncoderError::MissingPrior)?;
            if prior.n() != dataset.n() {
                return Err(EncoderError::PriorLength { got: prior.n(), expected: dataset.n() });
            }
            let k = build_kernel_matrix(prior.vectors(), spec)?;
            Some(centroid_weights(&k, lambda_scale / (dataset.n() as f64).sqrt())?)
        }
    };

    let loss_of = |p: &EncoderParams| -> Result<f64> {
        let (emb, _) = p.forward(&flat)?;
        let d = emb.ncols();
        let batch =
            EmbeddingBatch::new(Array3::from_shape_fn((n, v, d), |(a, w, j)| emb[[a * v + w, j]]))?;
        let centroids = match &weights {
            None => view_average_centroids(&batch),
            Some(w) => kernel_centroids(&batch, w)?,
        };
        Ok(decoupled_uniformity_loss(&centroids, config.temperature)?.value)
    };

    // Analytic gradient once.
    let (emb, cache) = params.forward(&flat)?;
    let d = emb.ncols();
    let batch =
        EmbeddingBatch::new(Array3::from_shape_fn((n, v, d), |(a, w, j)| emb[[a * v + w, j]]))?;
    let centroids = match &weights {
        None => view_average_centroids(&batch),
        Some(w) => kernel_centroids(&batch, w)?,
    };
    let report = decoupled_uniformity_loss(&centroids, config.temperature)?;
    let grad_flat =
        Array2::from_shape_fn((n * v, d), |(r, j)| report.grad_views[[r / v, r % v, j]]);
    let analytic = params.backward(&cache, &grad_flat)?;

    let h = 1e-5;
    let mut probe = params.clone();
    let mut max_rel: f64 = 0.0;
    for l in 0..probe.layers.len() {
        for entry in 0..probe.layers[l].weights.len() + probe.layers[l].bias.len() {
            let a = gradient_sign * read_param(&analytic.layers[l], entry);
            let original = read_param(&probe.layers[l], entry);
            write_param(&mut probe.layers[l], entry, original + h);
            let plus = loss_of(&probe)?;
            write_param(&mut probe.layers[l], entry, original - h);
            let minus = loss_of(&probe)?;
            write_param(&mut probe.layers[l], entry, original);
            let fd = (plus - minus) / (2.0 * h);
            let rel = (a - fd).abs() / 1.0_f64.max(a.abs()).max(fd.abs());
            max_rel = max_rel.max(rel);
        }
    }
    Ok(FdReport { max_rel_error: max_rel, tolerance, parameters_checked: count, pass: max_rel <= tolerance })
}

fn read_param(layer: &Layer, entry: usize) -> f64 {
    let nw = layer.weights.len();
    if entry < nw {
        layer.weights.as_slice().expect("standard layout")[entry]
    } else {
        layer.bias[entry - nw]
    }
}

fn write_param(layer: &mut Layer, entry: usize, value: f64) {
    let nw = layer.weights.len();
    if entry < nw {
        layer.weights.as_slice_mut().expect("standard layout")[entry] = value;
    } else {
        layer.bias[entry - nw] = value;
    }
}
