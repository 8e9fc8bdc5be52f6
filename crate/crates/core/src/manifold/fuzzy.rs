use std::collections::BTreeMap;

use super::{KnnGraph, ManifoldError, Result};

pub const SIGMA_TOLERANCE: f64 = 1e-5;
const SIGMA_ITERATIONS: usize = 64;
const MIN_SIGMA_FRACTION: f64 = 1e-3;

/// Undirected weighted edge, `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Symmetric fuzzy neighbourhood graph with weights in (0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    n: usize,
    edges: Vec<Edge>,
    rho: Vec<f64>,
    sigma: Vec<f64>,
}

impl FuzzyGraph {
    /// Builds a graph from explicit edges; local scales are left empty.
    pub fn from_edges(n: usize, edges: Vec<Edge>) -> Result<Self> {
        for e in &edges {
            if e.i >= e.j || e.j >= n {
                return Err(ManifoldError::InvalidGraph(format!(
                    "edge ({}, {}) in a graph of {n} nodes",
                    e.i, e.j
                )));
            }
            if !(e.weight > 0.0 && e.weight <= 1.0) {
                return Err(ManifoldError::InvalidGraph(format!(
                    "edge ({}, {}) has weight {}",
                    e.i, e.j, e.weight
                )));
            }
        }
        let mut edges = edges;
        edges.sort_by_key(|e| (e.i, e.j));
        if edges.windows(2).any(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j)) {
            return Err(ManifoldError::InvalidGraph("duplicate edge".to_owned()));
        }
        Ok(FuzzyGraph {
            n,
            edges,
            rho: Vec::new(),
            sigma: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges sorted by `(i, j)`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Symmetric membership lookup; 0 for non-edges.
    pub fn weight(&self, a: usize, b: usize) -> f64 {
        let key = (a.min(b), a.max(b));
        self.edges
            .binary_search_by_key(&key, |e| (e.i, e.j))
            .map_or(0.0, |pos| self.edges[pos].weight)
    }
}

/// Directed membership of a neighbour at distance `d`.
pub fn membership(d: f64, rho: f64, sigma: f64) -> f64 {
    (-(d - rho).max(0.0) / sigma).exp()
}

/// Probabilistic t-conorm `a + b - ab`.
pub fn symmetrize(a: f64, b: f64) -> f64 {
    (a + b - a * b).min(1.0)
}

/// Local connectivity `rho` and scale `sigma` for one node.
///
/// `distances` are the node's kNN distances in ascending order. `rho` is the
/// smallest positive distance (0 if there is none), and `sigma` is found by
/// bisection so that the memberships sum to `log2(k)`, then clamped below
/// at a small fraction of the mean distance.
pub fn smooth_knn_params(distances: &[f64]) -> (f64, f64) {
    let k = distances.len();
    if k == 0 {
        return (0.0, 1.0);
    }
    let rho = distances.iter().copied().find(|&d| d > 0.0).unwrap_or(0.0);
    let target = (k as f64).log2();

    let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
    for _ in 0..SIGMA_ITERATIONS {
        let psum: f64 = distances.iter().map(|&d| membership(d, rho, mid)).sum();
        if (psum - target).abs() < SIGMA_TOLERANCE {
            break;
        }
        if psum > target {
            hi = mid;
            mid = (lo + hi) / 2.0;
        } else {
            lo = mid;
            mid = if hi.is_infinite() { mid * 2.0 } else { (lo + hi) / 2.0 };
        }
    }

    let mean = distances.iter().sum::<f64>() / k as f64;
    let floor = if mean > 0.0 { MIN_SIGMA_FRACTION * mean } else { f64::MIN_POSITIVE };
    (rho, mid.max(floor))
}

/// Builds the symmetrised membership graph.
///
/// Directed memberships `v` and `v'` of a pair combine as `v + v' - v v'`.
/// Pairs whose combined weight underflows to zero are dropped.
pub fn fuzzy_graph(knn: &KnnGraph) -> FuzzyGraph {
    let n = knn.n();
    let mut rho = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut pairs: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for i in 0..n {
        let (r, s) = smooth_knn_params(knn.distances(i));
        rho.push(r);
        sigma.push(s);
        for (&j, &d) in knn.indices(i).iter().zip(knn.distances(i)) {
            let v = membership(d, r, s);
            let slot = pairs.entry((i.min(j), i.max(j))).or_insert((0.0, 0.0));
            if i < j {
                slot.0 = v;
            } else {
                slot.1 = v;
            }
        }
    }
    let edges = pairs
        .into_iter()
        .map(|((i, j), (a, b))| Edge {
            i,
            j,
            weight: symmetrize(a, b),
        })
        .filter(|e| e.weight > 0.0)
        .collect();
    FuzzyGraph {
        n,
        edges,
        rho,
        sigma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::knn_from_matrix;
    use crate::setdist::{DistanceMatrix, MetricKind};
    use emap_testkit::{membership_sum, sigma_bisection};
    use proptest::prelude::*;

    #[test]
    fn sigma_for_small_example() {
        let (rho, sigma) = smooth_knn_params(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(rho, 1.0);
        // Independently bisected to machine precision.
        assert!((sigma - 1.641017929928488).abs() < 1e-4);
        let psum = membership_sum(&[1.0, 2.0, 3.0, 4.0], rho, sigma);
        assert!((psum - 2.0).abs() < SIGMA_TOLERANCE);
    }

    #[test]
    fn all_zero_distances() {
        let (rho, sigma) = smooth_knn_params(&[0.0, 0.0, 0.0]);
        assert_eq!(rho, 0.0);
        assert!(sigma > 0.0 && sigma.is_finite());
        assert_eq!(membership(0.0, rho, sigma), 1.0);
    }

    #[test]
    fn equal_distances_hit_the_lower_clamp() {
        let (rho, sigma) = smooth_knn_params(&[2.0, 2.0, 2.0, 2.0]);
        assert_eq!(rho, 2.0);
        assert!((sigma - 2e-3).abs() < 1e-15);
        let (rho, sigma) = smooth_knn_params(&[0.0, 0.0, 5.0]);
        assert_eq!(rho, 5.0);
        assert!((sigma - 5.0 / 3.0 * 1e-3).abs() < 1e-15);
    }

    #[test]
    fn t_conorm_values() {
        assert_eq!(symmetrize(1.0, 1.0), 1.0);
        assert_eq!(symmetrize(0.5, 0.0), 0.5);
        assert_eq!(symmetrize(0.5, 0.5), 0.75);
    }

    #[test]
    fn graph_from_three_points() {
        let values = vec![0.0, 1.0, 2.0, 1.0, 0.0, 1.5, 2.0, 1.5, 0.0];
        let m = DistanceMatrix::new(3, values, MetricKind::Wmd).unwrap();
        let g = fuzzy_graph(&knn_from_matrix(&m, 2).unwrap());
        assert_eq!(g.edges().len(), 3);
        for e in g.edges() {
            assert!(e.weight > 0.0 && e.weight <= 1.0);
        }
        // 0 and 1 are mutual nearest neighbours.
        assert_eq!(g.weight(0, 1), 1.0);
        assert_eq!(g.weight(1, 0), g.weight(0, 1));
    }

    #[test]
    fn from_edges_validates() {
        let e = |i, j, weight| Edge { i, j, weight };
        assert!(FuzzyGraph::from_edges(2, vec![e(0, 1, 0.5)]).is_ok());
        assert!(FuzzyGraph::from_edges(2, vec![e(1, 0, 0.5)]).is_err());
        assert!(FuzzyGraph::from_edges(2, vec![e(0, 2, 0.5)]).is_err());
        assert!(FuzzyGraph::from_edges(2, vec![e(0, 1, 0.0)]).is_err());
        assert!(FuzzyGraph::from_edges(2, vec![e(0, 1, 1.5)]).is_err());
        assert!(FuzzyGraph::from_edges(3, vec![e(0, 1, 0.5), e(0, 1, 0.2)]).is_err());
    }

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(f64::total_cmp);
        v
    }

    proptest! {
        #[test]
        fn sigma_hits_target(dists in prop::collection::vec(0.0f64..10.0, 2..40)) {
            let dists = sorted(dists);
            let (rho, sigma) = smooth_knn_params(&dists);
            let target = (dists.len() as f64).log2();
            let zeros = dists.iter().filter(|&&d| d <= rho).count() as f64;
            let mean = dists.iter().sum::<f64>() / dists.len() as f64;
            // Attainable unless the neighbours at or below rho already exceed the target.
            prop_assume!(zeros < target - 1e-3);
            let exact = sigma_bisection(&dists, rho, target);
            prop_assume!(exact > MIN_SIGMA_FRACTION * mean);
            prop_assert!((membership_sum(&dists, rho, sigma) - target).abs() < SIGMA_TOLERANCE);
        }

        #[test]
        fn nearest_neighbour_membership_is_one(dists in prop::collection::vec(0.0f64..10.0, 2..40)) {
            let dists = sorted(dists);
            let (rho, sigma) = smooth_knn_params(&dists);
            prop_assert!(sigma > 0.0);
            prop_assert_eq!(membership(dists[0], rho, sigma), 1.0);
            for &d in &dists {
                let v = membership(d, rho, sigma);
                prop_assert!(v > 0.0 || d > rho);
                prop_assert!(v <= 1.0);
            }
        }

        #[test]
        fn t_conorm_bounds(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let v = symmetrize(a, b);
            prop_assert!(v >= a.max(b) - 1e-15 && v <= 1.0);
        }

        #[test]
        fn sigma_objective_is_monotone(dists in prop::collection::vec(0.0f64..10.0, 2..20), s in 0.01f64..10.0, ds in 0.0f64..5.0) {
            let dists = sorted(dists);
            let rho = dists.iter().copied().find(|&d| d > 0.0).unwrap_or(0.0);
            prop_assert!(membership_sum(&dists, rho, s + ds) >= membership_sum(&dists, rho, s) - 1e-12);
        }

        #[test]
        fn graph_is_symmetric_and_bounded(points in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..25)) {
            let n = points.len();
            let values = (0..n * n).map(|k| {
                let (a, b) = (points[k / n], points[k % n]);
                ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
            }).collect();
            let m = DistanceMatrix::new(n, values, MetricKind::Energy).unwrap();
            let g = fuzzy_graph(&knn_from_matrix(&m, 2.min(n - 1)).unwrap());
            for e in g.edges() {
                prop_assert!(e.i < e.j);
                prop_assert!(e.weight > 0.0 && e.weight <= 1.0);
            }
            for a in 0..n {
                for b in 0..n {
                    prop_assert_eq!(g.weight(a, b), g.weight(b, a));
                }
            }
        }
    }
}
