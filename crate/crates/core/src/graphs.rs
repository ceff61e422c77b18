//! Proximity graphs over anchors and their class-connectivity diagnostics.
//!
//! Two graphs matter here. The *augmentation graph* joins anchors whose
//! augmentation supports overlap: for ball-type augmentations of radius `r`,
//! that is `||x_i - x_j|| <= 2r` over the perturbable coordinates with bit
//! channels exactly equal. The *epsilon-kernel graph* joins anchors the
//! kernel sees as close: `max(K_ii, K_jj) - K_ij <= eps`. Their union is the
//! graph whose intra-class connectivity controls how tightly the decoupled
//! uniformity loss bounds its supervised counterpart; the diameter `D` that
//! appears in those bounds is the worst induced-subgraph diameter over
//! classes, infinite as soon as one class is disconnected.
//!
//! `epsilon_star` inverts the construction: it reports the smallest `eps`
//! that would connect at least `m` intra-class pairs, and `kernel_quality`
//! scores how often an anchor's kernel nearest neighbors share its class.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Write;
use thiserror::Error;

use crate::data::{AugmentationKind, AugmentationSpec, Dataset};
use crate::kernels::KernelMatrix;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("vertex {vertex} out of bounds for graph of size {n}")]
    VertexOutOfBounds { vertex: usize, n: usize },
    #[error("self-loops are not allowed (vertex {vertex})")]
    SelfLoop { vertex: usize },
    #[error("graphs have different sizes: {a} vs {b}")]
    SizeMismatch { a: usize, b: usize },
    #[error("labels length {got} != graph size {expected}")]
    LabelsLength { got: usize, expected: usize },
    #[error("epsilon must be finite and >= 0, got {eps}")]
    BadEpsilon { eps: f64 },
    #[error("augmentation graph requires a ball-type augmentation (finite radius support)")]
    UnsupportedAugmentation,
    #[error("exclude graph has {got} vertices, kernel has {expected}")]
    ExcludeSizeMismatch { got: usize, expected: usize },
    #[error("only {available} intra-class pairs available, m = {requested}")]
    NotEnoughIntraClassPairs { available: usize, requested: usize },
    #[error("m must be >= 1")]
    ZeroM,
    #[error("k-NN needs k in 1..n; got k = {k} with n = {n}")]
    BadKnn { k: usize, n: usize },
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// Undirected simple graph on anchor indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: Vec<BTreeSet<usize>>,
}

impl Graph {
    pub fn new(n: usize) -> Self {
        Graph { adjacency: vec![BTreeSet::new(); n] }
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<()> {
        let n = self.vertex_count();
        for v in [i, j] {
            if v >= n {
                return Err(GraphError::VertexOutOfBounds { vertex: v, n });
            }
        }
        if i == j {
            return Err(GraphError::SelfLoop { vertex: i });
        }
        self.adjacency[i].insert(j);
        self.adjacency[j].insert(i);
        Ok(())
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency.get(i).is_some_and(|adj| adj.contains(&j))
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[i].iter().copied()
    }

    /// Edges in canonical sorted order (`i < j`).
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (i, adj) in self.adjacency.iter().enumerate() {
            for &j in adj.range((i + 1)..) {
                out.push((i, j));
            }
        }
        out
    }

    /// Plain-text edge list: one `i j` line per edge, 0-based, sorted.
    pub fn write_edge_list(&self, mut w: impl Write) -> std::io::Result<()> {
        for (i, j) in self.edges() {
            writeln!(w, "{i} {j}")?;
        }
        Ok(())
    }
}

/// Overlap graph of augmentation supports.
///
/// Ball kinds only: anchors are joined when their perturbable coordinates
/// are within `2r` (closed) and their bit channels match exactly.
pub fn augmentation_graph(ds: &Dataset, aug: &AugmentationSpec) -> Result<Graph> {
    let radius = match aug.kind {
        AugmentationKind::UniformBall { radius }
        | AugmentationKind::GaussianTruncated { radius } => radius,
        AugmentationKind::MaskOneCoordinate => {
            return Err(GraphError::UnsupportedAugmentation)
        }
    };
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(GraphError::BadEpsilon { eps: radius });
    }
    let n = ds.n();
    let mut g = Graph::new(n);
    let threshold = 2.0 * radius;
    for i in 0..n {
        for j in (i + 1)..n {
            if let Some(bits) = ds.bit_channels() {
                let equal = (0..bits.ncols()).all(|c| bits[[i, c]] == bits[[j, c]]);
                if !equal {
                    continue;
                }
            }
            let d2: f64 = ds
                .samples()
                .row(i)
                .iter()
                .zip(ds.samples().row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d2.sqrt() <= threshold {
                g.add_edge(i, j)?;
            }
        }
    }
    Ok(g)
}

/// Kernel proximity graph: edge iff `max(K_ii, K_jj) - K_ij <= eps` (closed).
pub fn epsilon_kernel_graph(k: &KernelMatrix, eps: f64) -> Result<Graph> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(GraphError::BadEpsilon { eps });
    }
    let n = k.n();
    let e = k.entries();
    let mut g = Graph::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if e[[i, i]].max(e[[j, j]]) - e[[i, j]] <= eps {
                g.add_edge(i, j)?;
            }
        }
    }
    Ok(g)
}

/// Edge union of two graphs on the same vertex set.
pub fn union_graph(a: &Graph, b: &Graph) -> Result<Graph> {
    if a.vertex_count() != b.vertex_count() {
        return Err(GraphError::SizeMismatch { a: a.vertex_count(), b: b.vertex_count() });
    }
    let mut g = a.clone();
    for (i, j) in b.edges() {
        g.add_edge(i, j)?;
    }
    Ok(g)
}

/// Graph-distance diameter, infinite when disconnected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diameter {
    Finite(usize),
    Infinite,
}

impl Diameter {
    pub fn is_finite(&self) -> bool {
        matches!(self, Diameter::Finite(_))
    }

    /// Hop count as a float; `None` when infinite.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Diameter::Finite(d) => Some(*d as f64),
            Diameter::Infinite => None,
        }
    }
}

impl std::fmt::Display for Diameter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Diameter::Finite(d) => write!(f, "{d}"),
            Diameter::Infinite => write!(f, "inf"),
        }
    }
}

/// Per-class connectivity summary of a labeled graph.
#[derive(Debug, Clone)]
pub struct GraphReport {
    pub per_class_connected: BTreeMap<usize, bool>,
    pub per_class_components: BTreeMap<usize, usize>,
    pub per_class_diameter: BTreeMap<usize, Diameter>,
    /// Worst induced-subgraph diameter over classes.
    pub max_intra_class_diameter: Diameter,
}

impl GraphReport {
    pub fn all_classes_connected(&self) -> bool {
        self.per_class_connected.values().all(|&c| c)
    }
}

/// Connectivity, component counts, and diameters of every class's induced
/// subgraph. Paths must stay inside the class.
pub fn class_connectivity(g: &Graph, labels: &[usize]) -> Result<GraphReport> {
    if labels.len() != g.vertex_count() {
        return Err(GraphError::LabelsLength { got: labels.len(), expected: g.vertex_count() });
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        members.entry(y).or_default().push(i);
    }

    let mut per_class_connected = BTreeMap::new();
    let mut per_class_components = BTreeMap::new();
    let mut per_class_diameter = BTreeMap::new();
    let mut max_diameter = Diameter::Finite(0);
    for (&class, idx) in &members {
        let (components, diameter) = induced_components_and_diameter(g, labels, class, idx);
        per_class_connected.insert(class, components == 1);
        per_class_components.insert(class, components);
        per_class_diameter.insert(class, diameter);
        max_diameter = match (max_diameter, diameter) {
            (Diameter::Infinite, _) | (_, Diameter::Infinite) => Diameter::Infinite,
            (Diameter::Finite(a), Diameter::Finite(b)) => Diameter::Finite(a.max(b)),
        };
    }
    Ok(GraphReport {
        per_class_connected,
        per_class_components,
        per_class_diameter,
        max_intra_class_diameter: max_diameter,
    })
}

/// Worst intra-class induced diameter; `Infinite` if any class is
/// disconnected.
pub fn intra_class_diameter(g: &Graph, labels: &[usize]) -> Result<Diameter> {
    Ok(class_connectivity(g, labels)?.max_intra_class_diameter)
}

fn induced_components_and_diameter(
    g: &Graph,
    labels: &[usize],
    class: usize,
    members: &[usize],
) -> (usize, Diameter) {
    let mut components = 0;
    let mut visited: BTreeSet<usize> = BTreeSet::new();
    let mut max_ecc = 0usize;
    let mut disconnected = false;

    for &start in members {
        if visited.contains(&start) {
            continue;
        }
        components += 1;
        // BFS marks this component.
        for &v in bfs_distances(g, labels, class, start).keys() {
            visited.insert(v);
        }
    }
    if components > 1 {
        disconnected = true;
    } else {
        // Eccentricity of every member within the (single) component.
        for &start in members {
            let dist = bfs_distances(g, labels, class, start);
            max_ecc = max_ecc.max(dist.values().copied().max().unwrap_or(0));
        }
    }
    let diameter = if disconnected { Diameter::Infinite } else { Diameter::Finite(max_ecc) };
    (components, diameter)
}

fn bfs_distances(
    g: &Graph,
    labels: &[usize],
    class: usize,
    start: usize,
) -> BTreeMap<usize, usize> {
    let mut dist = BTreeMap::new();
    dist.insert(start, 0);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        let du = dist[&u];
        for v in g.neighbors(u) {
            if labels[v] == class && !dist.contains_key(&v) {
                dist.insert(v, du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// The m-th smallest kernel gap `max(K_ii, K_jj) - K_ij` over intra-class
/// pairs: the smallest epsilon whose kernel graph would connect at least `m`
/// such pairs.
///
/// Pairs already joined in `exclude` (e.g. by the augmentation graph) can be
/// left out of the ranking.
pub fn epsilon_star(
    k: &KernelMatrix,
    labels: &[usize],
    m: usize,
    exclude: Option<&Graph>,
) -> Result<f64> {
    if labels.len() != k.n() {
        return Err(GraphError::LabelsLength { got: labels.len(), expected: k.n() });
    }
    if m == 0 {
        return Err(GraphError::ZeroM);
    }
    if let Some(ex) = exclude {
        if ex.vertex_count() != k.n() {
            return Err(GraphError::ExcludeSizeMismatch {
                got: ex.vertex_count(),
                expected: k.n(),
            });
        }
    }
    let e = k.entries();
    let mut gaps = Vec::new();
    for i in 0..k.n() {
        for j in (i + 1)..k.n() {
            if labels[i] != labels[j] {
                continue;
            }
            if exclude.is_some_and(|ex| ex.has_edge(i, j)) {
                continue;
            }
            gaps.push(e[[i, i]].max(e[[j, j]]) - e[[i, j]]);
        }
    }
    if gaps.len() < m {
        return Err(GraphError::NotEnoughIntraClassPairs { available: gaps.len(), requested: m });
    }
    gaps.sort_by(f64::total_cmp);
    Ok(gaps[m - 1])
}

/// Mean fraction of each anchor's `knn` kernel-nearest neighbors that share
/// its class. Distance ties break toward the smaller index; the anchor
/// itself is excluded.
pub fn kernel_quality(k: &KernelMatrix, labels: &[usize], knn: usize) -> Result<f64> {
    let n = k.n();
    if labels.len() != n {
        return Err(GraphError::LabelsLength { got: labels.len(), expected: n });
    }
    if knn == 0 || knn >= n {
        return Err(GraphError::BadKnn { k: knn, n });
    }
    let e = k.entries();
    let mut total = 0.0;
    let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        candidates.clear();
        for j in 0..n {
            if j != i {
                let d = e[[i, i]] + e[[j, j]] - 2.0 * e[[i, j]];
                candidates.push((d, j));
            }
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let same = candidates[..knn].iter().filter(|(_, j)| labels[*j] == labels[i]).count();
        total += same as f64 / knn as f64;
    }
    Ok(total / n as f64)
}
