//! Fuzzy neighbourhood graphs over sentences and their low-dimensional layout.
//!
//! [`project`] chains the stages: exact kNN extraction from a full distance
//! matrix, smooth-kNN memberships symmetrised with the probabilistic t-conorm,
//! a spectral starting layout, and edge-sampled SGD on the fuzzy-set cross
//! entropy between the graph and the layout.

mod fuzzy;
mod knn;
mod layout;
mod spectral;

use std::fmt;

use thiserror::Error;

use crate::setdist::DistanceMatrix;

pub use fuzzy::{
    fuzzy_graph, membership, smooth_knn_params, symmetrize, Edge, FuzzyGraph, SIGMA_TOLERANCE,
};
pub use knn::{knn_from_matrix, KnnGraph};
pub use layout::{
    attractive_gradient, cross_entropy, curve_weight, edge_cross_entropy,
    edge_cross_entropy_gradient, optimize, optimize_parallel, repulsive_gradient,
    GRADIENT_CLIP, MIN_REPULSIVE_DISTANCE,
};
pub use spectral::{spectral_init, SpectralInit, COMPONENT_SPACING, INIT_HALF_RANGE};

#[derive(Debug, Error)]
pub enum ManifoldError {
    #[error("k = {k} neighbours requested but only {n} nodes")]
    TooFewNodes { k: usize, n: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidParams(String),
    #[error("embedding has {found} rows, graph has {expected} nodes")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),
    #[error("cannot build worker pool: {0}")]
    ThreadPool(String),
}

pub type Result<T> = std::result::Result<T, ManifoldError>;

/// Layout hyperparameters.
///
/// `min_dist` and `spread` are carried for run metadata only; the curve
/// shape is set directly through `a` and `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub n_neighbors: usize,
    pub embedding_dim: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub a: f64,
    pub b: f64,
    pub n_iters: usize,
    pub negative_sample_rate: usize,
    pub initial_learning_rate: f64,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            n_neighbors: 40,
            embedding_dim: 50,
            min_dist: 1.0,
            spread: 1.0,
            a: 1.929,
            b: 0.791,
            n_iters: 1000,
            negative_sample_rate: 5,
            initial_learning_rate: 1.0,
            seed: 0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(ManifoldError::InvalidParams(msg.to_owned()));
        if self.n_neighbors < 2 {
            return fail("n_neighbors must be at least 2");
        }
        if self.embedding_dim < 1 {
            return fail("embedding_dim must be at least 1");
        }
        if !(self.a > 0.0 && self.a.is_finite() && self.b > 0.0 && self.b.is_finite()) {
            return fail("a and b must be positive");
        }
        if self.n_iters < 1 {
            return fail("n_iters must be at least 1");
        }
        if !(self.initial_learning_rate > 0.0 && self.initial_learning_rate.is_finite()) {
            return fail("initial_learning_rate must be positive");
        }
        if !(self.min_dist.is_finite() && self.spread.is_finite()) {
            return fail("min_dist and spread must be finite");
        }
        Ok(())
    }

    /// `key=value` lines for run metadata files, in a fixed order.
    pub fn to_key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("n_neighbors", self.n_neighbors.to_string()),
            ("embedding_dim", self.embedding_dim.to_string()),
            ("min_dist", self.min_dist.to_string()),
            ("spread", self.spread.to_string()),
            ("a", self.a.to_string()),
            ("b", self.b.to_string()),
            ("n_iters", self.n_iters.to_string()),
            ("negative_sample_rate", self.negative_sample_rate.to_string()),
            ("initial_learning_rate", self.initial_learning_rate.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }
}

/// Row-major `n x dim` sentence coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(ManifoldError::InvalidEmbedding(format!(
                "{} values for {rows}x{dim}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(ManifoldError::InvalidEmbedding(
                "non-finite coordinate".to_owned(),
            ));
        }
        Ok(EmbeddingMatrix { rows, dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(ManifoldError::InvalidEmbedding("ragged rows".to_owned()));
        }
        EmbeddingMatrix::new(rows.len(), dim, rows.concat())
    }

    pub(crate) fn zeros(rows: usize, dim: usize) -> Self {
        EmbeddingMatrix {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Copies the listed rows into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> EmbeddingMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        EmbeddingMatrix {
            rows: indices.len(),
            dim: self.dim,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// How the layout optimiser runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizeMode {
    /// Single thread, seeded; output is bitwise reproducible.
    #[default]
    Deterministic,
    /// Lock-free concurrent updates on `workers` threads. Lost updates are
    /// tolerated, so only finiteness is guaranteed, not reproducibility.
    Parallel { workers: usize },
}

impl fmt::Display for OptimizeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptimizeMode::Deterministic => f.write_str("deterministic"),
            OptimizeMode::Parallel { workers } => write!(f, "parallel({workers})"),
        }
    }
}

/// Embedding plus what happened on the way there.
#[derive(Debug, Clone)]
pub struct Projection {
    pub embedding: EmbeddingMatrix,
    /// Neighbours actually used (capped at `n - 1`).
    pub n_neighbors: usize,
    pub n_edges: usize,
    pub n_components: usize,
    /// The eigensolver failed and the start layout is uniform random.
    pub spectral_fallback: bool,
    /// Start-layout columns filled at random because a component had too
    /// few nodes to supply enough eigenvectors.
    pub random_columns: usize,
}

/// Embeds all rows of `matrix` with the deterministic optimiser.
pub fn project(matrix: &DistanceMatrix, params: &HyperParams) -> Result<EmbeddingMatrix> {
    Ok(project_with(matrix, params, OptimizeMode::Deterministic)?.embedding)
}

pub fn project_with(
    matrix: &DistanceMatrix,
    params: &HyperParams,
    mode: OptimizeMode,
) -> Result<Projection> {
    params.validate()?;
    let n = matrix.n();
    if n == 0 {
        return Err(ManifoldError::TooFewNodes { k: 0, n });
    }
    let k = params.n_neighbors.min(n - 1);
    if k < params.n_neighbors {
        log::warn!("only {n} sentences; using {k} neighbours instead of {}", params.n_neighbors);
    }
    let knn = knn_from_matrix(matrix, k)?;
    let graph = fuzzy_graph(&knn);
    let init = spectral_init(&graph, params.embedding_dim, params.seed);
    if init.fallback {
        log::warn!("spectral initialisation did not converge; using random start layout");
    }
    let embedding = match mode {
        OptimizeMode::Deterministic => optimize(&graph, &init.embedding, params)?,
        OptimizeMode::Parallel { workers } => {
            optimize_parallel(&graph, &init.embedding, params, workers)?
        }
    };
    Ok(Projection {
        embedding,
        n_neighbors: k,
        n_edges: graph.edges().len(),
        n_components: init.components,
        spectral_fallback: init.fallback,
        random_columns: init.random_columns,
    })
}
