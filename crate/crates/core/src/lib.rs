//! Sentence embeddings by manifold approximation over set distances.
//!
//! A sentence is treated as a weighted cloud of word vectors. The crate
//! computes pairwise distances between such clouds (energy, Hausdorff and
//! word mover's distance), builds a fuzzy nearest-neighbour graph from the
//! resulting matrix, lays the graph out in a low-dimensional Euclidean space
//! by cross-entropy minimisation, and evaluates the coordinates with simple
//! classifiers.
//!
//! The modules mirror the pipeline stages:
//!
//! - [`corpus`]: word-vector tables, labelled datasets, tokenisation and
//!   conversion of token lists into [`corpus::SentenceCloud`]s.
//! - [`setdist`]: the three cloud distances, an exact transportation solver
//!   and the persisted [`setdist::DistanceMatrix`].
//! - [`manifold`]: kNN extraction, fuzzy graph construction, spectral
//!   initialisation and the stochastic layout optimiser.
//! - [`eval`]: kNN and linear SVM classifiers, accuracy reports, the
//!   two-proportion z-test and cosine retrieval.

pub mod corpus;
pub mod eval;
pub mod manifold;
pub mod setdist;

pub use corpus::{LabeledDocument, SentenceCloud, Split, WordEmbeddingTable};
pub use eval::{EvalReport, LabelSet, LinearModel};
pub use manifold::{EmbeddingMatrix, FuzzyGraph, HyperParams};
pub use setdist::{DistanceMatrix, MetricKind, TransportPlan};
