use std::cell::Cell;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{EmbeddingMatrix, FuzzyGraph, HyperParams, ManifoldError, Result};

/// Per-coordinate cap on a single gradient step.
pub const GRADIENT_CLIP: f64 = 4.0;
/// Distance floor for repulsive updates.
pub const MIN_REPULSIVE_DISTANCE: f64 = 1e-3;

const RNG_STREAM_LAYOUT: u64 = 3;
const PARALLEL_CHUNK: usize = 256;

/// Layout-space membership `1 / (1 + a d^(2b))`.
pub fn curve_weight(d: f64, a: f64, b: f64) -> f64 {
    1.0 / (1.0 + a * (d * d).powf(b))
}

fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Scalar `c` with `grad_x(-ln w) = c (x - y)`, given `d2 = |x - y|^2`.
fn attractive_coefficient(d2: f64, a: f64, b: f64) -> f64 {
    if d2 <= 0.0 {
        return 0.0;
    }
    2.0 * a * b * d2.powf(b - 1.0) / (1.0 + a * d2.powf(b))
}

/// Scalar `c` with `grad_x(-ln(1 - w)) = -c (x - y)`.
fn repulsive_coefficient(d2: f64, a: f64, b: f64) -> f64 {
    2.0 * b / (d2 * (1.0 + a * d2.powf(b)))
}

/// Gradient of `-ln w(|x - y|)` with respect to `x`.
pub fn attractive_gradient(x: &[f64], y: &[f64], a: f64, b: f64) -> Vec<f64> {
    let c = attractive_coefficient(squared_distance(x, y), a, b);
    x.iter().zip(y).map(|(p, q)| c * (p - q)).collect()
}

/// Gradient of `-ln(1 - w(|x - y|))` with respect to `x`. Unbounded as the
/// points meet; the optimiser floors the distance.
pub fn repulsive_gradient(x: &[f64], y: &[f64], a: f64, b: f64) -> Vec<f64> {
    let c = repulsive_coefficient(squared_distance(x, y), a, b);
    x.iter().zip(y).map(|(p, q)| -c * (p - q)).collect()
}

fn xlogx_ratio(p: f64, q: f64) -> f64 {
    if p <= 0.0 { 0.0 } else { p * (p / q).ln() }
}

/// Fuzzy-set cross entropy of one pair with graph membership `v`.
pub fn edge_cross_entropy(v: f64, x: &[f64], y: &[f64], a: f64, b: f64) -> f64 {
    let w = curve_weight(squared_distance(x, y).sqrt(), a, b);
    xlogx_ratio(v, w) + xlogx_ratio(1.0 - v, 1.0 - w)
}

/// Gradient of [`edge_cross_entropy`] with respect to `x`.
pub fn edge_cross_entropy_gradient(v: f64, x: &[f64], y: &[f64], a: f64, b: f64) -> Vec<f64> {
    let att = attractive_gradient(x, y, a, b);
    let rep = repulsive_gradient(x, y, a, b);
    att.iter().zip(&rep).map(|(p, q)| v * p + (1.0 - v) * q).collect()
}

/// Cross entropy summed over all unordered pairs, non-edges counting with
/// membership 0. Quadratic in the number of nodes.
pub fn cross_entropy(graph: &FuzzyGraph, embedding: &EmbeddingMatrix, a: f64, b: f64) -> f64 {
    let n = graph.n();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = graph.weight(i, j);
            total += edge_cross_entropy(v, embedding.row(i), embedding.row(j), a, b);
        }
    }
    total
}

fn clip(x: f64) -> f64 {
    x.clamp(-GRADIENT_CLIP, GRADIENT_CLIP)
}

/// Shared coordinate storage for the update kernel.
trait Coords {
    fn get(&self, idx: usize) -> f64;
    fn set(&self, idx: usize, value: f64);
}

struct LocalCoords<'a>(&'a [Cell<f64>]);

impl Coords for LocalCoords<'_> {
    fn get(&self, idx: usize) -> f64 {
        self.0[idx].get()
    }
    fn set(&self, idx: usize, value: f64) {
        self.0[idx].set(value);
    }
}

struct AtomicCoords(Vec<AtomicU64>);

impl Coords for AtomicCoords {
    fn get(&self, idx: usize) -> f64 {
        f64::from_bits(self.0[idx].load(Ordering::Relaxed))
    }
    fn set(&self, idx: usize, value: f64) {
        self.0[idx].store(value.to_bits(), Ordering::Relaxed);
    }
}

struct Kernel {
    n: usize,
    dim: usize,
    a: f64,
    b: f64,
    negatives: usize,
}

impl Kernel {
    fn d2<C: Coords>(&self, coords: &C, i: usize, j: usize) -> f64 {
        (0..self.dim)
            .map(|c| {
                let diff = coords.get(i * self.dim + c) - coords.get(j * self.dim + c);
                diff * diff
            })
            .sum()
    }

    /// One positive sample on `(head, tail)` and its negative samples.
    fn step<C: Coords, R: Rng>(&self, coords: &C, head: usize, tail: usize, lr: f64, rng: &mut R) {
        let dim = self.dim;
        let c = attractive_coefficient(self.d2(coords, head, tail), self.a, self.b);
        for k in 0..dim {
            let (hi, ti) = (head * dim + k, tail * dim + k);
            let (x, y) = (coords.get(hi), coords.get(ti));
            let g = clip(c * (x - y));
            coords.set(hi, x - lr * g);
            coords.set(ti, y + lr * g);
        }
        if self.n < 3 {
            return;
        }
        let floor = MIN_REPULSIVE_DISTANCE * MIN_REPULSIVE_DISTANCE;
        for _ in 0..self.negatives {
            let other = loop {
                let k = rng.random_range(0..self.n);
                if k != head && k != tail {
                    break k;
                }
            };
            let d2 = self.d2(coords, head, other).max(floor);
            let c = repulsive_coefficient(d2, self.a, self.b);
            for k in 0..dim {
                let (hi, oi) = (head * dim + k, other * dim + k);
                let x = coords.get(hi);
                coords.set(hi, x + lr * clip(c * (x - coords.get(oi))));
            }
        }
    }
}

/// Edge schedule: an edge of weight `w` is sampled every `max_w / w` epochs.
struct Schedule {
    period: Vec<f64>,
    next: Vec<f64>,
}

impl Schedule {
    fn new(graph: &FuzzyGraph) -> Self {
        let max_w = graph.edges().iter().map(|e| e.weight).fold(0.0, f64::max);
        let period: Vec<f64> = graph.edges().iter().map(|e| max_w / e.weight).collect();
        let next = period.clone();
        Schedule { period, next }
    }

    /// Indices of edges due at `epoch` (1-based), advancing their clocks.
    fn due(&mut self, epoch: usize, out: &mut Vec<usize>) {
        out.clear();
        let t = epoch as f64;
        for (idx, next) in self.next.iter_mut().enumerate() {
            if *next <= t {
                out.push(idx);
                *next += self.period[idx];
            }
        }
    }
}

fn check_shapes(graph: &FuzzyGraph, init: &EmbeddingMatrix) -> Result<()> {
    if init.rows() != graph.n() {
        return Err(ManifoldError::ShapeMismatch {
            expected: graph.n(),
            found: init.rows(),
        });
    }
    if !init.is_finite() {
        return Err(ManifoldError::InvalidEmbedding("non-finite start layout".to_owned()));
    }
    Ok(())
}

fn learning_rate(params: &HyperParams, epoch: usize) -> f64 {
    params.initial_learning_rate * (1.0 - (epoch - 1) as f64 / params.n_iters as f64)
}

/// Edge-sampled SGD from `init`, single threaded and reproducible.
///
/// Each epoch visits the edges due under the weight-proportional schedule.
/// A visit pulls both endpoints together and pushes the head away from
/// `negative_sample_rate` nodes drawn uniformly from the rest.
pub fn optimize(
    graph: &FuzzyGraph,
    init: &EmbeddingMatrix,
    params: &HyperParams,
) -> Result<EmbeddingMatrix> {
    params.validate()?;
    check_shapes(graph, init)?;
    let cells: Vec<Cell<f64>> = init.as_slice().iter().copied().map(Cell::new).collect();
    let coords = LocalCoords(&cells);
    let kernel = kernel(graph, init, params);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(RNG_STREAM_LAYOUT);
    let mut schedule = Schedule::new(graph);
    let mut due = Vec::new();
    for epoch in 1..=params.n_iters {
        schedule.due(epoch, &mut due);
        let lr = learning_rate(params, epoch);
        for &idx in &due {
            let e = graph.edges()[idx];
            // Alternate orientation so both endpoints receive repulsion.
            let (head, tail) = if (epoch + idx) % 2 == 0 { (e.i, e.j) } else { (e.j, e.i) };
            kernel.step(&coords, head, tail, lr, &mut rng);
        }
    }
    finish(init, cells.into_iter().map(Cell::into_inner))
}

/// Lock-free parallel variant of [`optimize`] on `workers` threads.
///
/// Concurrent updates may overwrite each other, so results vary between
/// runs; only finiteness is checked.
pub fn optimize_parallel(
    graph: &FuzzyGraph,
    init: &EmbeddingMatrix,
    params: &HyperParams,
    workers: usize,
) -> Result<EmbeddingMatrix> {
    if workers <= 1 {
        return optimize(graph, init, params);
    }
    params.validate()?;
    check_shapes(graph, init)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ManifoldError::ThreadPool(e.to_string()))?;
    let coords = AtomicCoords(
        init.as_slice()
            .iter()
            .map(|x| AtomicU64::new(x.to_bits()))
            .collect(),
    );
    let kernel = kernel(graph, init, params);
    let mut schedule = Schedule::new(graph);
    let mut due = Vec::new();
    pool.install(|| {
        for epoch in 1..=params.n_iters {
            schedule.due(epoch, &mut due);
            let lr = learning_rate(params, epoch);
            due.par_chunks(PARALLEL_CHUNK).enumerate().for_each(|(chunk, idxs)| {
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
                rng.set_stream(RNG_STREAM_LAYOUT + 1 + ((epoch as u64) << 24) + chunk as u64);
                for &idx in idxs {
                    let e = graph.edges()[idx];
                    let (head, tail) = if (epoch + idx) % 2 == 0 { (e.i, e.j) } else { (e.j, e.i) };
                    kernel.step(&coords, head, tail, lr, &mut rng);
                }
            });
        }
    });
    finish(init, coords.0.into_iter().map(|x| f64::from_bits(x.into_inner())))
}

fn kernel(graph: &FuzzyGraph, init: &EmbeddingMatrix, params: &HyperParams) -> Kernel {
    Kernel {
        n: graph.n(),
        dim: init.dim(),
        a: params.a,
        b: params.b,
        negatives: params.negative_sample_rate,
    }
}

fn finish(init: &EmbeddingMatrix, values: impl Iterator<Item = f64>) -> Result<EmbeddingMatrix> {
    let data: Vec<f64> = values.collect();
    if data.iter().any(|x| !x.is_finite()) {
        return Err(ManifoldError::InvalidEmbedding(
            "layout diverged to non-finite coordinates".to_owned(),
        ));
    }
    EmbeddingMatrix::new(init.rows(), init.dim(), data)
}
