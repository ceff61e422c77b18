//! Synthetic datasets, augmentations, and prior embeddings.
//!
//! Datasets carry real-valued sample coordinates, optional class labels, and
//! optional binary "bit channels". Bit channels model nuisance features that
//! are perfectly view-invariant: augmentations never touch them, and they are
//! concatenated (scaled) to the sample coordinates whenever an encoder input
//! is formed. A handful of random bits gives every anchor a near-unique
//! signature, which is exactly the shortcut that makes centroid repulsion
//! collapse without a good prior.
//!
//! Prior embeddings are one vector per anchor and feed the kernel machinery
//! in [`crate::kernels`]. They can be oracle one-hots with Gaussian noise, a
//! label-shuffled control, the clean (pre-bit) features, or a CSV file.

use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("classes must be >= 1, got {classes}")]
    BadClassCount { classes: usize },
    #[error("per_class must be >= 1, got {per_class}")]
    BadPerClass { per_class: usize },
    #[error("input_dim {input_dim} must be >= classes {classes} to place orthogonal class means")]
    DimTooSmall { input_dim: usize, classes: usize },
    #[error("separation must be finite and >= 0, got {separation}")]
    BadSeparation { separation: f64 },
    #[error("bit count k = {k} exceeds the limit of 30")]
    TooManyBits { k: usize },
    #[error("dataset already has bit channels")]
    BitsAlreadyPresent,
    #[error("dataset has no labels, required for {operation}")]
    MissingLabels { operation: &'static str },
    #[error("augmentation radius must be finite and >= 0, got {radius}")]
    BadRadius { radius: f64 },
    #[error("augmentation must preserve bit channels when the dataset has them")]
    BitsNotPreserved,
    #[error("views per anchor must be >= 1")]
    NoViews,
    #[error("anchor index {anchor} out of bounds for dataset of size {n}")]
    AnchorOutOfBounds { anchor: usize, n: usize },
    #[error("support enumeration requires the mask-one-coordinate augmentation")]
    NotEnumerable,
    #[error("prior noise sigma_z must be finite and >= 0, got {sigma_z}")]
    BadSigmaZ { sigma_z: f64 },
    #[error("bit scale must be finite, got {scale}")]
    BadBitScale { scale: f64 },
    #[error("dataset must have at least 1 sample")]
    EmptyDataset,
    #[error("labels length {got} != sample count {expected}")]
    LabelsLength { got: usize, expected: usize },
    #[error("bit channel rows {got} != sample count {expected}")]
    BitsLength { got: usize, expected: usize },
    #[error("bit channels must be 0 or 1, got {value} at row {row}")]
    BadBitValue { row: usize, value: u8 },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{path}: expected {expected} data rows, found {got}")]
    WrongRowCount { path: PathBuf, expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, DataError>;

/// A synthetic dataset: samples, optional labels, optional bit channels.
#[derive(Debug, Clone)]
pub struct Dataset {
    samples: Array2<f64>,
    labels: Option<Vec<usize>>,
    bit_channels: Option<Array2<u8>>,
    bit_scale: f64,
    generator: String,
    seed: u64,
}

impl Dataset {
    /// Assembles and validates a dataset from raw parts.
    pub fn from_parts(
        samples: Array2<f64>,
        labels: Option<Vec<usize>>,
        bit_channels: Option<Array2<u8>>,
        generator: impl Into<String>,
        seed: u64,
    ) -> Result<Self> {
        let n = samples.nrows();
        if n == 0 || samples.ncols() == 0 {
            return Err(DataError::EmptyDataset);
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(DataError::LabelsLength { got: l.len(), expected: n });
            }
        }
        if let Some(bits) = &bit_channels {
            if bits.nrows() != n {
                return Err(DataError::BitsLength { got: bits.nrows(), expected: n });
            }
            if bits.ncols() > 30 {
                return Err(DataError::TooManyBits { k: bits.ncols() });
            }
            for (row, r) in bits.rows().into_iter().enumerate() {
                if let Some(&value) = r.iter().find(|&&b| b > 1) {
                    return Err(DataError::BadBitValue { row, value });
                }
            }
        }
        Ok(Dataset {
            samples,
            labels,
            bit_channels,
            bit_scale: 1.0,
            generator: generator.into(),
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.samples.nrows()
    }

    /// Dimension of the real-valued (perturbable) sample coordinates.
    pub fn sample_dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn k_bits(&self) -> usize {
        self.bit_channels.as_ref().map_or(0, |b| b.ncols())
    }

    /// Dimension seen by the encoder: sample coordinates plus bit channels.
    pub fn input_dim(&self) -> usize {
        self.sample_dim() + self.k_bits()
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn require_labels(&self, operation: &'static str) -> Result<&[usize]> {
        self.labels.as_deref().ok_or(DataError::MissingLabels { operation })
    }

    pub fn bit_channels(&self) -> Option<&Array2<u8>> {
        self.bit_channels.as_ref()
    }

    pub fn bit_scale(&self) -> f64 {
        self.bit_scale
    }

    /// Scale applied to bit channels when they enter encoder inputs.
    pub fn set_bit_scale(&mut self, scale: f64) -> Result<()> {
        if !scale.is_finite() {
            return Err(DataError::BadBitScale { scale });
        }
        self.bit_scale = scale;
        Ok(())
    }

    pub fn generator(&self) -> &str {
        &self.generator
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of classes, assuming 0-based contiguous label ids.
    pub fn class_count(&self) -> Result<usize> {
        let labels = self.require_labels("class_count")?;
        Ok(labels.iter().copied().max().map_or(0, |m| m + 1))
    }

    /// Unaugmented encoder inputs: `[samples | bits * bit_scale]`, one row
    /// per anchor.
    pub fn anchor_inputs(&self) -> Array2<f64> {
        let n = self.n();
        let mut out = Array2::zeros((n, self.input_dim()));
        for i in 0..n {
            self.write_input_row(i, self.samples.row(i).as_slice().unwrap(), &mut out, i);
        }
        out
    }

    fn write_input_row(
        &self,
        anchor: usize,
        sample: &[f64],
        out: &mut Array2<f64>,
        out_row: usize,
    ) {
        let d = self.sample_dim();
        for (col, &v) in sample.iter().enumerate() {
            out[[out_row, col]] = v;
        }
        if let Some(bits) = &self.bit_channels {
            for j in 0..bits.ncols() {
                out[[out_row, d + j]] = bits[[anchor, j]] as f64 * self.bit_scale;
            }
        }
    }

    /// Like `write_input_row` but into a 3-d view tensor.
    fn write_view_row(
        &self,
        anchor: usize,
        out_row: usize,
        view: usize,
        sample: &[f64],
        out: &mut Array3<f64>,
    ) {
        let d = self.sample_dim();
        for (col, &v) in sample.iter().enumerate() {
            out[[out_row, view, col]] = v;
        }
        if let Some(bits) = &self.bit_channels {
            for j in 0..bits.ncols() {
                out[[out_row, view, d + j]] = bits[[anchor, j]] as f64 * self.bit_scale;
            }
        }
    }
}

/// Gaussian mixture with orthogonal class means `separation * e_c` and unit
/// within-class variance.
pub fn make_gaussian_mixture(
    classes: usize,
    per_class: usize,
    input_dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes == 0 {
        return Err(DataError::BadClassCount { classes });
    }
    if per_class == 0 {
        return Err(DataError::BadPerClass { per_class });
    }
    if input_dim < classes {
        return Err(DataError::DimTooSmall { input_dim, classes });
    }
    if !(separation.is_finite() && separation >= 0.0) {
        return Err(DataError::BadSeparation { separation });
    }
    let n = classes * per_class;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Array2::zeros((n, input_dim));
    let mut labels = Vec::with_capacity(n);
    for c in 0..classes {
        for s in 0..per_class {
            let row = c * per_class + s;
            for col in 0..input_dim {
                let noise: f64 = rng.sample(StandardNormal);
                samples[[row, col]] = noise + if col == c { separation } else { 0.0 };
            }
            labels.push(c);
        }
    }
    Dataset::from_parts(samples, Some(labels), None, "gaussian_mixture", seed)
}

/// Attaches `k` iid fair random bit channels to a dataset.
///
/// `k = 0` returns the base unchanged; `k` is capped at 30.
pub fn make_randbits(base: Dataset, k: usize, seed: u64) -> Result<Dataset> {
    if k == 0 {
        return Ok(base);
    }
    if k > 30 {
        return Err(DataError::TooManyBits { k });
    }
    if base.bit_channels.is_some() {
        return Err(DataError::BitsAlreadyPresent);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = base.n();
    let mut bits = Array2::zeros((n, k));
    for i in 0..n {
        for j in 0..k {
            bits[[i, j]] = u8::from(rng.random::<bool>());
        }
    }
    let generator = format!("{}+randbits", base.generator);
    Dataset {
        bit_channels: Some(bits),
        generator,
        ..base
    }
    .validate_bits()
}

impl Dataset {
    fn validate_bits(self) -> Result<Self> {
        // Bit values are 0/1 by construction here; revalidate shape only.
        if let Some(bits) = &self.bit_channels {
            if bits.nrows() != self.n() {
                return Err(DataError::BitsLength { got: bits.nrows(), expected: self.n() });
            }
        }
        Ok(self)
    }
}

/// Augmentation families over the sample coordinates.
///
/// Ball kinds have support equal to the closed ball of the given radius
/// around the anchor; the mask kind has finite support (one zeroed
/// coordinate) and is the one [`enumerate_support`] can expand.
#[derive(Debug, Clone, PartialEq)]
pub enum AugmentationKind {
    /// Uniform draw from the closed ball of `radius`.
    UniformBall { radius: f64 },
    /// Gaussian with scale `radius / 3`, rejection-truncated to the ball.
    GaussianTruncated { radius: f64 },
    /// Zero one uniformly chosen sample coordinate.
    MaskOneCoordinate,
}

impl AugmentationKind {
    /// Support radius for ball-type kinds.
    pub fn radius(&self) -> Option<f64> {
        match self {
            AugmentationKind::UniformBall { radius }
            | AugmentationKind::GaussianTruncated { radius } => Some(*radius),
            AugmentationKind::MaskOneCoordinate => None,
        }
    }
}

/// An augmentation plus the pledge that bit channels pass through untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationSpec {
    pub kind: AugmentationKind,
    /// Always true for datasets with bit channels; augmentations never have
    /// a perturbing variant for bits.
    pub bit_preserving: bool,
}

impl AugmentationSpec {
    pub fn new(kind: AugmentationKind) -> Self {
        AugmentationSpec { kind, bit_preserving: true }
    }

    fn validate(&self, ds: &Dataset) -> Result<()> {
        if let Some(radius) = self.kind.radius() {
            if !(radius.is_finite() && radius >= 0.0) {
                return Err(DataError::BadRadius { radius });
            }
        }
        if ds.k_bits() > 0 && !self.bit_preserving {
            return Err(DataError::BitsNotPreserved);
        }
        Ok(())
    }
}

/// Augmented views in encoder-input space, shape `n x V x input_dim`.
#[derive(Debug, Clone)]
pub struct ViewBatch {
    inputs: Array3<f64>,
}

impl ViewBatch {
    pub fn inputs(&self) -> &Array3<f64> {
        &self.inputs
    }

    pub fn n(&self) -> usize {
        self.inputs.dim().0
    }

    pub fn views_per_anchor(&self) -> usize {
        self.inputs.dim().1
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.dim().2
    }
}

/// Draws `v` views per anchor; bit channels are copied verbatim.
pub fn sample_views(
    ds: &Dataset,
    aug: &AugmentationSpec,
    v: usize,
    seed: u64,
) -> Result<ViewBatch> {
    let anchors: Vec<usize> = (0..ds.n()).collect();
    sample_views_for(ds, aug, v, seed, &anchors)
}

/// Draws `v` views for a subset of anchors (mini-batch sampling). Row `r` of
/// the result holds the views of `anchors[r]`.
pub fn sample_views_for(
    ds: &Dataset,
    aug: &AugmentationSpec,
    v: usize,
    seed: u64,
    anchors: &[usize],
) -> Result<ViewBatch> {
    if v == 0 {
        return Err(DataError::NoViews);
    }
    aug.validate(ds)?;
    if let Some(&bad) = anchors.iter().find(|&&a| a >= ds.n()) {
        return Err(DataError::AnchorOutOfBounds { anchor: bad, n: ds.n() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = ds.sample_dim();
    let mut inputs = Array3::zeros((anchors.len(), v, ds.input_dim()));
    let mut sample = vec![0.0; d];
    for (row, &i) in anchors.iter().enumerate() {
        for w in 0..v {
            let anchor = ds.samples.row(i);
            sample.copy_from_slice(anchor.as_slice().unwrap());
            perturb(&mut sample, &aug.kind, &mut rng);
            ds.write_view_row(i, row, w, &sample, &mut inputs);
        }
    }
    Ok(ViewBatch { inputs })
}

fn perturb(sample: &mut [f64], kind: &AugmentationKind, rng: &mut ChaCha8Rng) {
    let d = sample.len();
    match kind {
        AugmentationKind::UniformBall { radius } => {
            if *radius == 0.0 {
                return;
            }
            // Uniform in the ball: uniform direction times r * u^(1/d).
            let mut dir = vec![0.0; d];
            let mut norm2 = 0.0;
            for x in dir.iter_mut() {
                *x = rng.sample::<f64, _>(StandardNormal);
                norm2 += *x * *x;
            }
            let norm = norm2.sqrt().max(1e-300);
            let scale = radius * rng.random::<f64>().powf(1.0 / d as f64) / norm;
            for (s, x) in sample.iter_mut().zip(dir.iter()) {
                *s += scale * x;
            }
        }
        AugmentationKind::GaussianTruncated { radius } => {
            if *radius == 0.0 {
                return;
            }
            let sigma = radius / 3.0;
            loop {
                let mut offset = vec![0.0; d];
                let mut norm2 = 0.0;
                for x in offset.iter_mut() {
                    *x = sigma * rng.sample::<f64, _>(StandardNormal);
                    norm2 += *x * *x;
                }
                if norm2.sqrt() <= *radius {
                    for (s, x) in sample.iter_mut().zip(offset.iter()) {
                        *s += *x;
                    }
                    return;
                }
            }
        }
        AugmentationKind::MaskOneCoordinate => {
            let c = rng.random_range(0..d);
            sample[c] = 0.0;
        }
    }
}

/// Expands the full augmentation support of one anchor in encoder-input
/// space. Only finite-support kinds can be enumerated.
pub fn enumerate_support(
    ds: &Dataset,
    aug: &AugmentationSpec,
    anchor: usize,
) -> Result<Array2<f64>> {
    if anchor >= ds.n() {
        return Err(DataError::AnchorOutOfBounds { anchor, n: ds.n() });
    }
    aug.validate(ds)?;
    if aug.kind != AugmentationKind::MaskOneCoordinate {
        return Err(DataError::NotEnumerable);
    }
    let d = ds.sample_dim();
    let mut out = Array2::zeros((d, ds.input_dim()));
    let mut sample = vec![0.0; d];
    for c in 0..d {
        sample.copy_from_slice(ds.samples.row(anchor).as_slice().unwrap());
        sample[c] = 0.0;
        ds.write_input_row(anchor, &sample, &mut out, c);
    }
    Ok(out)
}

/// Where a prior embedding came from.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSource {
    Oracle { sigma_z: f64 },
    Shuffled,
    CleanFeatures,
    File(PathBuf),
}

/// One prior vector per anchor; the input to kernel construction.
#[derive(Debug, Clone)]
pub struct PriorEmbedding {
    vectors: Array2<f64>,
    source: PriorSource,
}

impl PriorEmbedding {
    pub fn new(vectors: Array2<f64>, source: PriorSource) -> Result<Self> {
        if vectors.nrows() == 0 || vectors.ncols() == 0 {
            return Err(DataError::EmptyDataset);
        }
        Ok(PriorEmbedding { vectors, source })
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn source(&self) -> &PriorSource {
        &self.source
    }

    pub fn n(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    /// Rows for a subset of anchors (batch kernel construction).
    pub fn subset(&self, anchors: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros((anchors.len(), self.dim()));
        for (row, &a) in anchors.iter().enumerate() {
            out.row_mut(row).assign(&self.vectors.row(a));
        }
        out
    }
}

/// Oracle prior `z_i = one_hot(y_i) + sigma_z * N(0, I)`.
pub fn oracle_prior(ds: &Dataset, sigma_z: f64, seed: u64) -> Result<PriorEmbedding> {
    if !(sigma_z.is_finite() && sigma_z >= 0.0) {
        return Err(DataError::BadSigmaZ { sigma_z });
    }
    let labels = ds.require_labels("oracle_prior")?;
    let classes = ds.class_count()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vectors = Array2::zeros((ds.n(), classes));
    for (i, &y) in labels.iter().enumerate() {
        for c in 0..classes {
            let noise: f64 = rng.sample(StandardNormal);
            vectors[[i, c]] = sigma_z * noise + if c == y { 1.0 } else { 0.0 };
        }
    }
    PriorEmbedding::new(vectors, PriorSource::Oracle { sigma_z })
}

/// Pure-noise control: one-hot vectors of a random permutation of the labels.
pub fn shuffled_prior(ds: &Dataset, seed: u64) -> Result<PriorEmbedding> {
    let labels = ds.require_labels("shuffled_prior")?;
    let classes = ds.class_count()?;
    let mut permuted: Vec<usize> = labels.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    permuted.shuffle(&mut rng);
    let mut vectors = Array2::zeros((ds.n(), classes));
    for (i, &y) in permuted.iter().enumerate() {
        vectors[[i, y]] = 1.0;
    }
    PriorEmbedding::new(vectors, PriorSource::Shuffled)
}

/// The clean (pre-bit) sample coordinates as prior vectors.
pub fn clean_prior(ds: &Dataset) -> Result<PriorEmbedding> {
    PriorEmbedding::new(ds.samples.clone(), PriorSource::CleanFeatures)
}

// ===== CSV I/O =====
//
// Priors:   header `index,z0,z1,...`, one row per anchor, indices a
//           permutation of 0..n-1 (rows are re-sorted on load).
// Datasets: header `index,label,bit:0,...,x0,x1,...`; the label field is
//           empty for unlabeled data. Floats are written in shortest
//           round-trip form, so a dump/load cycle is exact.

/// Writes a prior embedding as CSV.
pub fn save_prior(prior: &PriorEmbedding, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str("index");
    for j in 0..prior.dim() {
        let _ = write!(out, ",z{j}");
    }
    out.push('\n');
    for i in 0..prior.n() {
        let _ = write!(out, "{i}");
        for j in 0..prior.dim() {
            let _ = write!(out, ",{}", prior.vectors[[i, j]]);
        }
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

/// Loads a prior embedding written by [`save_prior`].
///
/// Rows may appear in any order but must cover each index exactly once.
pub fn load_prior(path: impl AsRef<Path>) -> Result<PriorEmbedding> {
    let path = path.as_ref();
    let (header, rows) = read_csv(path)?;
    let dim = header.len().saturating_sub(1);
    if header.first().map(String::as_str) != Some("index") || dim == 0 {
        return Err(DataError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "expected header `index,z0,...`".into(),
        });
    }
    let n = rows.len();
    if n == 0 {
        return Err(DataError::WrongRowCount { path: path.to_path_buf(), expected: 1, got: 0 });
    }
    let mut vectors = Array2::zeros((n, dim));
    let mut seen = vec![false; n];
    for (record, line) in &rows {
        if record.len() != dim + 1 {
            return Err(DataError::Parse {
                path: path.to_path_buf(),
                line: *line,
                message: format!("expected {} fields, found {}", dim + 1, record.len()),
            });
        }
        let index = parse_index(&record[0], n, path, *line)?;
        if seen[index] {
            return Err(DataError::Parse {
                path: path.to_path_buf(),
                line: *line,
                message: format!("duplicate index {index}"),
            });
        }
        seen[index] = true;
        for j in 0..dim {
            vectors[[index, j]] = parse_float(&record[j + 1], path, *line)?;
        }
    }
    PriorEmbedding::new(vectors, PriorSource::File(path.to_path_buf()))
}

/// Writes a dataset (samples, labels, bits) as CSV.
pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str("index,label");
    for j in 0..ds.k_bits() {
        let _ = write!(out, ",bit:{j}");
    }
    for j in 0..ds.sample_dim() {
        let _ = write!(out, ",x{j}");
    }
    out.push('\n');
    for i in 0..ds.n() {
        let _ = write!(out, "{i}");
        match ds.labels() {
            Some(labels) => {
                let _ = write!(out, ",{}", labels[i]);
            }
            None => out.push(','),
        }
        if let Some(bits) = ds.bit_channels() {
            for j in 0..bits.ncols() {
                let _ = write!(out, ",{}", bits[[i, j]]);
            }
        }
        for j in 0..ds.sample_dim() {
            let _ = write!(out, ",{}", ds.samples[[i, j]]);
        }
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

/// Loads a dataset written by [`save_dataset`].
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let (header, rows) = read_csv(path)?;
    if header.len() < 3
        || header[0] != "index"
        || header[1] != "label"
    {
        return Err(DataError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "expected header `index,label[,bit:j...],x0,...`".into(),
        });
    }
    let k_bits = header.iter().filter(|h| h.starts_with("bit:")).count();
    let dim = header.len() - 2 - k_bits;
    if dim == 0 {
        return Err(DataError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "no sample columns".into(),
        });
    }
    let n = rows.len();
    if n == 0 {
        return Err(DataError::WrongRowCount { path: path.to_path_buf(), expected: 1, got: 0 });
    }
    let mut samples = Array2::zeros((n, dim));
    let mut bits = Array2::zeros((n, k_bits));
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut seen = vec![false; n];
    for (record, line) in &rows {
        if record.len() != header.len() {
            return Err(DataError::Parse {
                path: path.to_path_buf(),
                line: *line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let index = parse_index(&record[0], n, path, *line)?;
        if seen[index] {
            return Err(DataError::Parse {
                path: path.to_path_buf(),
                line: *line,
                message: format!("duplicate index {index}"),
            });
        }
        seen[index] = true;
        if !record[1].is_empty() {
            labels[index] = Some(record[1].parse::<usize>().map_err(|e| DataError::Parse {
                path: path.to_path_buf(),
                line: *line,
                message: format!("bad label `{}`: {e}", record[1]),
            })?);
        }
        for j in 0..k_bits {
            let raw = &record[2 + j];
            let value = raw.parse::<u8>().map_err(|e| DataError::Parse {
                path: path.to_path_buf(),
                line: *line,
                message: format!("bad bit `{raw}`: {e}"),
            })?;
            if value > 1 {
                return Err(DataError::Parse {
                    path: path.to_path_buf(),
                    line: *line,
                    message: format!("bit value {value} not in {{0,1}}"),
                });
            }
            bits[[index, j]] = value;
        }
        for j in 0..dim {
            samples[[index, j]] = parse_float(&record[2 + k_bits + j], path, *line)?;
        }
    }
    let labeled = labels.iter().filter(|l| l.is_some()).count();
    let labels = if labeled == n {
        Some(labels.into_iter().map(Option::unwrap).collect())
    } else if labeled == 0 {
        None
    } else {
        return Err(DataError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "labels must be present on all rows or none".into(),
        });
    };
    Dataset::from_parts(
        samples,
        labels,
        (k_bits > 0).then_some(bits),
        "file",
        0,
    )
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = std::fs::File::create(path)
        .map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    file.write_all(bytes)
        .map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

/// One parsed CSV row: its fields and the 1-based source line.
type CsvRow = (Vec<String>, u64);

/// Reads a headered CSV; returns the header and `(fields, line)` per row.
fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<CsvRow>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_open_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_record_error(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_record_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        rows.push((record.iter().map(str::to_owned).collect(), line));
    }
    Ok((header, rows))
}

fn csv_open_error(path: &Path, e: csv::Error) -> DataError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => DataError::Io { path: path.to_path_buf(), source },
        other => DataError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

fn csv_record_error(path: &Path, e: csv::Error) -> DataError {
    let line = e.position().map_or(0, |p| p.line());
    DataError::Parse { path: path.to_path_buf(), line, message: e.to_string() }
}

fn parse_index(raw: &str, n: usize, path: &Path, line: u64) -> Result<usize> {
    let index = raw.parse::<usize>().map_err(|e| DataError::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("bad index `{raw}`: {e}"),
    })?;
    if index >= n {
        return Err(DataError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("index {index} out of range for {n} rows"),
        });
    }
    Ok(index)
}

fn parse_float(raw: &str, path: &Path, line: u64) -> Result<f64> {
    let value = raw.parse::<f64>().map_err(|e| DataError::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("bad float `{raw}`: {e}"),
    })?;
    if !value.is_finite() {
        return Err(DataError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("non-finite value `{raw}`"),
        });
    }
    Ok(value)
}
