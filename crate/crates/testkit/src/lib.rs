//! Reference oracles and fixtures shared by the emap test suites.
//!
//! Everything here is deliberately naive: enumeration, nested loops and
//! plain iteration, so the checks stay independent of the optimised code
//! paths in `emap-core`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Zipf};

/// Euclidean distance accumulated in `f64`, same operation order as the library.
pub fn euclid(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        let d = f64::from(a[k]) - f64::from(b[k]);
        s += d * d;
    }
    s.sqrt()
}

/// Symmetric Hausdorff distance by nested max-min loops.
pub fn hausdorff_nested(a: &[Vec<f32>], b: &[Vec<f32>]) -> f64 {
    let directed = |x: &[Vec<f32>], y: &[Vec<f32>]| {
        let mut worst: f64 = 0.0;
        for p in x {
            let mut best = f64::INFINITY;
            for q in y {
                best = best.min(euclid(p, q));
            }
            worst = worst.max(best);
        }
        worst
    };
    directed(a, b).max(directed(b, a))
}

/// Energy distance over explicit token lists (repeated words appear repeatedly).
pub fn energy_over_tokens(a: &[Vec<f32>], b: &[Vec<f32>]) -> f64 {
    let mean = |x: &[Vec<f32>], y: &[Vec<f32>]| {
        let mut s = 0.0;
        for p in x {
            for q in y {
                s += euclid(p, q);
            }
        }
        s / (x.len() * y.len()) as f64
    };
    2.0 * mean(a, b) - mean(a, a) - mean(b, b)
}

/// Energy distance between weighted point sets by direct double summation.
pub fn energy_weighted(a: &[Vec<f32>], wa: &[f64], b: &[Vec<f32>], wb: &[f64]) -> f64 {
    let mean = |x: &[Vec<f32>], wx: &[f64], y: &[Vec<f32>], wy: &[f64]| {
        let mut s = 0.0;
        for (p, &u) in x.iter().zip(wx) {
            for (q, &v) in y.iter().zip(wy) {
                s += u * v * euclid(p, q);
            }
        }
        s
    };
    (2.0 * mean(a, wa, b, wb) - mean(a, wa, a, wa) - mean(b, wb, b, wb)).max(0.0)
}

/// Optimal value of the balanced transportation LP by enumerating every
/// basic solution: each spanning tree of `p + q - 1` cells fixes a unique
/// flow, and the feasible ones are exactly the polytope's vertices.
///
/// Exponential; intended for `p, q <= 4`.
pub fn transport_vertex_enumeration(cost: &[f64], supply: &[f64], demand: &[f64]) -> f64 {
    let (p, q) = (supply.len(), demand.len());
    let cells = p * q;
    let k = p + q - 1;
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(k);
    enumerate(0, cells, k, &mut chosen, &mut |subset| {
        if let Some(flows) = tree_flows(subset, p, q, supply, demand) {
            if flows.iter().all(|&f| f >= -1e-12) {
                let value: f64 = subset.iter().zip(&flows).map(|(&c, &f)| f * cost[c]).sum();
                best = best.min(value);
            }
        }
    });
    best
}

fn enumerate(start: usize, n: usize, k: usize, chosen: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
    if chosen.len() == k {
        visit(chosen);
        return;
    }
    let needed = k - chosen.len();
    for c in start..=(n - needed) {
        chosen.push(c);
        enumerate(c + 1, n, k, chosen, visit);
        chosen.pop();
    }
}

/// Flows on a spanning tree of cells by repeatedly peeling leaf nodes.
/// Returns `None` when the cells contain a cycle.
fn tree_flows(subset: &[usize], p: usize, q: usize, supply: &[f64], demand: &[f64]) -> Option<Vec<f64>> {
    let nodes = p + q;
    let mut parent: Vec<usize> = (0..nodes).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        parent[x] = r;
        r
    }
    for &c in subset {
        let (a, b) = (find(&mut parent, c / q), find(&mut parent, p + c % q));
        if a == b {
            return None;
        }
        parent[a] = b;
    }

    let mut residual: Vec<f64> = supply.iter().chain(demand).copied().collect();
    let mut flows = vec![0.0; subset.len()];
    let mut done = vec![false; subset.len()];
    for _ in 0..subset.len() {
        let mut degree = vec![0usize; nodes];
        for (e, &c) in subset.iter().enumerate() {
            if !done[e] {
                degree[c / q] += 1;
                degree[p + c % q] += 1;
            }
        }
        let (e, leaf) = subset
            .iter()
            .enumerate()
            .filter(|(e, _)| !done[*e])
            .find_map(|(e, &c)| {
                if degree[c / q] == 1 {
                    Some((e, c / q))
                } else if degree[p + c % q] == 1 {
                    Some((e, p + c % q))
                } else {
                    None
                }
            })?;
        let c = subset[e];
        let other = if leaf < p { p + c % q } else { c / q };
        flows[e] = residual[leaf];
        residual[other] -= residual[leaf];
        residual[leaf] = 0.0;
        done[e] = true;
    }
    Some(flows)
}

/// `sum_i exp(-max(0, d_i - rho) / sigma)`.
pub fn membership_sum(dists: &[f64], rho: f64, sigma: f64) -> f64 {
    dists.iter().map(|&d| (-(d - rho).max(0.0) / sigma).exp()).sum()
}

/// Bandwidth solving `membership_sum = target` by 200 bisection steps on a
/// bracket grown by doubling. Assumes the target is attainable.
pub fn sigma_bisection(dists: &[f64], rho: f64, target: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = 1.0;
    while membership_sum(dists, rho, hi) < target {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if membership_sum(dists, rho, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues ascending with matching eigenvectors as columns
/// (`vectors[row][k]` belongs to `values[k]`).
pub fn jacobi_eigen(matrix: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = matrix.len();
    let mut a = matrix.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[x][x].total_cmp(&a[y][y]));
    let values = order.iter().map(|&k| a[k][k]).collect();
    let vectors = (0..n).map(|r| order.iter().map(|&k| v[r][k]).collect()).collect();
    (values, vectors)
}

/// Standard normal survival function `P(Z > z)` from the positive-term
/// series of `erf` for moderate arguments and a continued fraction for
/// `erfc` in the tails.
pub fn normal_survival(z: f64) -> f64 {
    if z.is_infinite() {
        return if z > 0.0 { 0.0 } else { 1.0 };
    }
    let x = z.abs() / std::f64::consts::SQRT_2;
    let erfc = if x < 3.0 {
        // erf(x) = 2/sqrt(pi) exp(-x^2) sum_n 2^n x^(2n+1) / (1*3*...*(2n+1))
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        while term > 1e-20 * sum {
            n += 1.0;
            term *= 2.0 * x * x / (2.0 * n + 1.0);
            sum += term;
        }
        1.0 - 2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp() * sum
    } else {
        // erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + 1/2/(x + 1/(x + 3/2/(x + ...))))
        let mut frac = x;
        for k in (1..200).rev() {
            frac = x + (k as f64 / 2.0) / frac;
        }
        (-x * x).exp() / std::f64::consts::PI.sqrt() / frac
    };
    if z >= 0.0 {
        0.5 * erfc
    } else {
        1.0 - 0.5 * erfc
    }
}

/// Pooled two-proportion z statistic evaluated term by term.
pub fn pooled_z(acc1: f64, n1: usize, acc2: f64, n2: usize) -> f64 {
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (acc1 * n1f + acc2 * n2f) / (n1f + n2f);
    let variance = pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f);
    (acc1 - acc2) / variance.sqrt()
}

/// Minimises `0.5 * |(w, b)|^2 + c * sum_i max(0, 1 - y_i (w.x_i + b))` by
/// full-batch subgradient descent with `1/t` steps and iterate averaging.
/// Labels are `+1.0` / `-1.0`. Returns `(w, b)`.
pub fn svm_subgradient(x: &[Vec<f64>], y: &[f64], c: f64, iterations: usize) -> (Vec<f64>, f64) {
    let d = x[0].len();
    let mut w = vec![0.0; d + 1];
    let mut avg = vec![0.0; d + 1];
    for t in 1..=iterations {
        let mut g = w.clone();
        for (xi, &yi) in x.iter().zip(y) {
            let margin = yi * (xi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[d]);
            if margin < 1.0 {
                for k in 0..d {
                    g[k] -= c * yi * xi[k];
                }
                g[d] -= c * yi;
            }
        }
        let step = 1.0 / t as f64;
        for k in 0..=d {
            w[k] -= step * g[k];
        }
        let blend = 1.0 / t as f64;
        for k in 0..=d {
            avg[k] += blend * (w[k] - avg[k]);
        }
    }
    let b = avg[d];
    avg.truncate(d);
    (avg, b)
}

pub struct CorpusFiles {
    pub train: std::path::PathBuf,
    pub test: std::path::PathBuf,
    pub embeddings: std::path::PathBuf,
}

/// Synthetic corpus whose "words" are noisy copies of a few cluster centres.
pub struct SyntheticCorpus {
    /// `(word, vector)` rows of the word-vector table.
    pub words: Vec<(String, Vec<f32>)>,
    /// `(label, text)` per document.
    pub documents: Vec<(String, String)>,
}

impl SyntheticCorpus {
    /// Word-vector table in text format.
    pub fn embeddings_text(&self) -> String {
        let dim = self.words[0].1.len();
        let mut out = format!("{} {}\n", self.words.len(), dim);
        for (w, v) in &self.words {
            out.push_str(w);
            for x in v {
                out.push_str(&format!(" {x}"));
            }
            out.push('\n');
        }
        out
    }

    /// Writes `train.tsv` (the first `n_train` documents), `test.tsv` and
    /// `vectors.txt` into `dir`.
    pub fn write_to(&self, dir: &std::path::Path, n_train: usize) -> std::io::Result<CorpusFiles> {
        let files = CorpusFiles {
            train: dir.join("train.tsv"),
            test: dir.join("test.tsv"),
            embeddings: dir.join("vectors.txt"),
        };
        std::fs::write(&files.train, self.dataset_text(0..n_train))?;
        std::fs::write(&files.test, self.dataset_text(n_train..self.documents.len()))?;
        std::fs::write(&files.embeddings, self.embeddings_text())?;
        Ok(files)
    }

    /// TSV lines for documents `range`.
    pub fn dataset_text(&self, range: std::ops::Range<usize>) -> String {
        self.documents[range]
            .iter()
            .map(|(l, t)| format!("{l}\t{t}\n"))
            .collect()
    }
}

/// `docs` sentences of 3-8 points drawn around one of `clusters` centres.
///
/// Centres are `separation / sqrt(2)` times scaled basis vectors, so every
/// pair of centres is exactly `separation` apart; points add `N(0, noise^2)`
/// per coordinate. Labels cycle through the clusters.
pub fn clustered_corpus(
    seed: u64,
    docs: usize,
    clusters: usize,
    dim: usize,
    separation: f64,
    noise: f64,
) -> SyntheticCorpus {
    assert!(clusters <= dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise).unwrap();
    let scale = separation / std::f64::consts::SQRT_2;
    let mut words = Vec::new();
    let mut documents = Vec::new();
    for d in 0..docs {
        let cluster = d % clusters;
        let len = rng.random_range(3..=8);
        let mut tokens = Vec::with_capacity(len);
        for _ in 0..len {
            let name = format!("w{}", words.len());
            let vector = (0..dim)
                .map(|k| {
                    let centre = if k == cluster { scale } else { 0.0 };
                    (centre + normal.sample(&mut rng)) as f32
                })
                .collect();
            tokens.push(name.clone());
            words.push((name, vector));
        }
        documents.push((format!("c{cluster}"), tokens.join(" ")));
    }
    SyntheticCorpus { words, documents }
}

/// Large random corpus for throughput checks.
///
/// `vocab` Gaussian word vectors of length `dim`; each document draws a
/// length uniformly from `mean_tokens / 2 ..= 3 * mean_tokens / 2` and its
/// tokens from a Zipf(1.0) law over the vocabulary. Labels cycle over five classes.
pub fn bulk_corpus(seed: u64, docs: usize, vocab: usize, dim: usize, mean_tokens: usize) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.3).unwrap();
    let words = (0..vocab)
        .map(|w| (format!("v{w}"), (0..dim).map(|_| normal.sample(&mut rng) as f32).collect()))
        .collect();
    let zipf = Zipf::new(vocab as f64, 1.0).unwrap();
    let documents = (0..docs)
        .map(|d| {
            let len = rng.random_range(mean_tokens / 2..=3 * mean_tokens / 2);
            let tokens: Vec<String> = (0..len)
                .map(|_| format!("v{}", zipf.sample(&mut rng) as usize - 1))
                .collect();
            (format!("class{}", d % 5), tokens.join(" "))
        })
        .collect();
    SyntheticCorpus { words, documents }
}
