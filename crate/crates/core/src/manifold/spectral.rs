use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EmbeddingMatrix, FuzzyGraph};

/// Start-layout coordinates lie in `[-INIT_HALF_RANGE, INIT_HALF_RANGE]`.
pub const INIT_HALF_RANGE: f64 = 10.0;
/// Offset between consecutive connected components along the first axis.
pub const COMPONENT_SPACING: f64 = 20.0;
/// Half-width of each component when there are several, leaving a gap
/// between neighbours.
const COMPONENT_HALF_WIDTH: f64 = 9.0;

const DENSE_LIMIT: usize = 2500;
const LANCZOS_MAX_STEPS: usize = 1500;
const LANCZOS_TOLERANCE: f64 = 1e-8;
const RNG_STREAM_FILL: u64 = 1;
const RNG_STREAM_FALLBACK: u64 = 2;

#[derive(Debug, Clone)]
pub struct SpectralInit {
    pub embedding: EmbeddingMatrix,
    pub components: usize,
    /// True when the eigensolver failed and every coordinate is random.
    pub fallback: bool,
    /// Columns of the largest component drawn at random because it has
    /// fewer than `dim + 1` nodes.
    pub random_columns: usize,
}

/// Start layout from the normalised graph Laplacian `I - D^-1/2 W D^-1/2`.
///
/// Each connected component (ordered by its smallest node) gets the
/// eigenvectors of its smallest nonzero eigenvalues, sign-fixed so the
/// largest-magnitude entry is positive, scaled to a maximum magnitude of 10
/// (9 when there are several components), and shifted by `20 * component`
/// along the first axis. Columns a component cannot fill are drawn uniformly
/// from the same range.
pub fn spectral_init(graph: &FuzzyGraph, dim: usize, seed: u64) -> SpectralInit {
    spectral_init_with_limit(graph, dim, seed, DENSE_LIMIT)
}

pub(crate) fn spectral_init_with_limit(
    graph: &FuzzyGraph,
    dim: usize,
    seed: u64,
    dense_limit: usize,
) -> SpectralInit {
    let n = graph.n();
    let components = connected_components(graph);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(RNG_STREAM_FILL);

    let largest = components.iter().map(Vec::len).max().unwrap_or(0);
    let random_columns = dim - dim.min(largest.saturating_sub(1));
    let mut embedding = EmbeddingMatrix::zeros(n, dim);
    let mut local = vec![usize::MAX; n];
    let mut adjacency: Vec<Vec<(usize, f64)>> = Vec::new();
    let half = if components.len() > 1 { COMPONENT_HALF_WIDTH } else { INIT_HALF_RANGE };

    for (c, nodes) in components.iter().enumerate() {
        for (pos, &node) in nodes.iter().enumerate() {
            local[node] = pos;
        }
        adjacency.clear();
        adjacency.resize(nodes.len(), Vec::new());
        for e in graph.edges() {
            if local[e.i] != usize::MAX && local[e.j] != usize::MAX {
                adjacency[local[e.i]].push((local[e.j], e.weight));
                adjacency[local[e.j]].push((local[e.i], e.weight));
            }
        }
        let wanted = dim.min(nodes.len().saturating_sub(1));
        let vectors = if wanted == 0 {
            Vec::new()
        } else {
            let solved = if nodes.len() <= dense_limit {
                dense_eigenvectors(&adjacency, wanted)
            } else {
                lanczos_eigenvectors(&adjacency, wanted, &mut rng)
            };
            match solved {
                Some((_, vectors)) => vectors,
                None => return random_fallback(n, dim, seed, components.len(), random_columns),
            }
        };

        let max_abs = vectors
            .iter()
            .flatten()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        let scale = if max_abs > 0.0 { half / max_abs } else { 0.0 };
        for (pos, &node) in nodes.iter().enumerate() {
            let row = embedding.row_mut(node);
            for (col, slot) in row.iter_mut().enumerate() {
                *slot = match vectors.get(col) {
                    Some(v) => v[pos] * scale,
                    None => rng.random_range(-half..=half),
                };
            }
            if dim > 0 {
                row[0] += COMPONENT_SPACING * c as f64;
            }
        }
        for &node in nodes {
            local[node] = usize::MAX;
        }
    }

    SpectralInit {
        embedding,
        components: components.len(),
        fallback: false,
        random_columns,
    }
}

fn random_fallback(
    n: usize,
    dim: usize,
    seed: u64,
    components: usize,
    random_columns: usize,
) -> SpectralInit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(RNG_STREAM_FALLBACK);
    let mut embedding = EmbeddingMatrix::zeros(n, dim);
    for x in embedding.as_mut_slice() {
        *x = rng.random_range(-INIT_HALF_RANGE..=INIT_HALF_RANGE);
    }
    SpectralInit {
        embedding,
        components,
        fallback: true,
        random_columns: random_columns.max(dim),
    }
}

/// Components as sorted node lists, ordered by their smallest node.
fn connected_components(graph: &FuzzyGraph) -> Vec<Vec<usize>> {
    let n = graph.n();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for e in graph.edges() {
        let (a, b) = (find(&mut parent, e.i), find(&mut parent, e.j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut slot = vec![usize::MAX; n];
    let mut out: Vec<Vec<usize>> = Vec::new();
    for node in 0..n {
        let root = find(&mut parent, node);
        if slot[root] == usize::MAX {
            slot[root] = out.len();
            out.push(Vec::new());
        }
        out[slot[root]].push(node);
    }
    out
}

fn inverse_sqrt_degrees(adjacency: &[Vec<(usize, f64)>]) -> Vec<f64> {
    adjacency
        .iter()
        .map(|row| {
            let d: f64 = row.iter().map(|&(_, w)| w).sum();
            if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }
        })
        .collect()
}

/// Smallest nonzero Laplacian eigenpairs, eigenvalues ascending.
fn dense_eigenvectors(
    adjacency: &[Vec<(usize, f64)>],
    count: usize,
) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
    let m = adjacency.len();
    let dinv = inverse_sqrt_degrees(adjacency);
    let mut laplacian = DMatrix::<f64>::identity(m, m);
    for (i, row) in adjacency.iter().enumerate() {
        for &(j, w) in row {
            laplacian[(i, j)] -= w * dinv[i] * dinv[j];
        }
    }
    let eigen = SymmetricEigen::try_new(laplacian, f64::EPSILON, 100 * m.max(10))?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]).then(a.cmp(&b)));
    let picked = &order[1..=count];
    let values = picked.iter().map(|&k| eigen.eigenvalues[k]).collect();
    let vectors = picked
        .iter()
        .map(|&k| fix_sign(eigen.eigenvectors.column(k).iter().copied().collect()))
        .collect();
    Some((values, vectors))
}

/// Lanczos with full reorthogonalisation on `D^-1/2 W D^-1/2`, with the
/// trivial eigenvector projected out. Returns `None` if the Ritz pairs do
/// not converge within the step budget.
fn lanczos_eigenvectors(
    adjacency: &[Vec<(usize, f64)>],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
    let m = adjacency.len();
    let dinv = inverse_sqrt_degrees(adjacency);
    let apply = |x: &[f64], y: &mut [f64]| {
        for (i, row) in adjacency.iter().enumerate() {
            y[i] = row.iter().map(|&(j, w)| w * dinv[i] * dinv[j] * x[j]).sum();
        }
    };
    let mut trivial: Vec<f64> = dinv.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect();
    normalize(&mut trivial);

    let limit = LANCZOS_MAX_STEPS.min(m - 1);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut q = random_orthogonal(m, &trivial, &basis, rng)?;
    let mut w = vec![0.0; m];
    let mut next_check = (2 * count + 20).min(limit);

    loop {
        apply(&q, &mut w);
        let a = dot(&q, &w);
        alpha.push(a);
        basis.push(q);
        for _ in 0..2 {
            orthogonalize(&mut w, &trivial, &basis);
        }
        let b = norm(&w);
        let steps = basis.len();

        if steps >= next_check || steps == limit || b < 1e-10 {
            if let Some(result) = ritz_pairs(&alpha, &beta, b, &basis, count) {
                return Some(result);
            }
            if steps == limit {
                return None;
            }
            next_check = (steps * 2).min(limit);
        }

        if b < 1e-10 {
            // Invariant subspace found; restart in a fresh direction.
            q = random_orthogonal(m, &trivial, &basis, rng)?;
            beta.push(0.0);
        } else {
            q = w.iter().map(|x| x / b).collect();
            beta.push(b);
        }
    }
}

/// Converged top Ritz pairs, returned as Laplacian eigenpairs.
fn ritz_pairs(
    alpha: &[f64],
    beta: &[f64],
    residual_beta: f64,
    basis: &[Vec<f64>],
    count: usize,
) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
    let k = alpha.len();
    if k < count {
        return None;
    }
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eigen = SymmetricEigen::try_new(t, f64::EPSILON, 100 * k.max(10))?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]).then(a.cmp(&b)));
    let picked = &order[..count];
    let converged = picked
        .iter()
        .all(|&c| (residual_beta * eigen.eigenvectors[(k - 1, c)]).abs() <= LANCZOS_TOLERANCE);
    if !converged {
        return None;
    }
    let m = basis[0].len();
    let values = picked.iter().map(|&c| 1.0 - eigen.eigenvalues[c]).collect();
    let vectors = picked
        .iter()
        .map(|&c| {
            let mut v = vec![0.0; m];
            for (row, q) in basis.iter().enumerate() {
                let s = eigen.eigenvectors[(row, c)];
                for (x, qi) in v.iter_mut().zip(q) {
                    *x += s * qi;
                }
            }
            normalize(&mut v);
            fix_sign(v)
        })
        .collect();
    Some((values, vectors))
}

fn random_orthogonal(
    m: usize,
    trivial: &[f64],
    basis: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Option<Vec<f64>> {
    let mut v: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    for _ in 0..2 {
        orthogonalize(&mut v, trivial, basis);
    }
    let len = norm(&v);
    if len < 1e-10 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= len);
    Some(v)
}

fn orthogonalize(v: &mut [f64], trivial: &[f64], basis: &[Vec<f64>]) {
    for q in std::iter::once(trivial).chain(basis.iter().map(Vec::as_slice)) {
        let p = dot(v, q);
        for (x, qi) in v.iter_mut().zip(q) {
            *x -= p * qi;
        }
    }
}

/// Flips `v` so its largest-magnitude entry (first on ties) is positive.
fn fix_sign(mut v: Vec<f64>) -> Vec<f64> {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn normalize(v: &mut [f64]) {
    let len = norm(v);
    if len > 0.0 {
        v.iter_mut().for_each(|x| *x /= len);
    }
}
