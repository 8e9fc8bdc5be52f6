use super::{ManifoldError, Result};
use crate::setdist::DistanceMatrix;

/// Exact k nearest neighbours of every node, self excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    n: usize,
    k: usize,
    indices: Vec<usize>,
    distances: Vec<f64>,
}

impl KnnGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Neighbour indices of `i`, nearest first.
    pub fn indices(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    /// Distances matching [`KnnGraph::indices`], ascending.
    pub fn distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }
}

/// Ties in distance go to the smaller index.
pub fn knn_from_matrix(matrix: &DistanceMatrix, k: usize) -> Result<KnnGraph> {
    let n = matrix.n();
    if k >= n {
        return Err(ManifoldError::TooFewNodes { k, n });
    }
    let mut indices = Vec::with_capacity(n * k);
    let mut distances = Vec::with_capacity(n * k);
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        let row = matrix.row(i);
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        let by_distance = |a: &usize, b: &usize| row[*a].total_cmp(&row[*b]).then(a.cmp(b));
        if k > 0 && k < order.len() {
            order.select_nth_unstable_by(k - 1, by_distance);
        }
        order.truncate(k);
        order.sort_unstable_by(by_distance);
        indices.extend_from_slice(&order);
        distances.extend(order.iter().map(|&j| row[j]));
    }
    Ok(KnnGraph {
        n,
        k,
        indices,
        distances,
    })
}
