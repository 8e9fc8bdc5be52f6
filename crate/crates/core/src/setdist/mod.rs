//! Distances between sentence clouds.
//!
//! All three distances use the Euclidean ground distance between word
//! vectors. Energy distance weighs every word pair by the product of the
//! term frequencies, which is the same as summing over token multisets.
//! Hausdorff ignores the weights. Word mover's distance is the optimal
//! transport cost between the two term-frequency distributions.

mod matrix;
mod transport;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{SentenceCloud, WordEmbeddingTable};

pub use matrix::{DistanceMatrix, MATRIX_MAGIC, MATRIX_VERSION};
pub use transport::{solve_transport, TransportEntry, TransportPlan, BALANCE_TOLERANCE};

#[derive(Debug, Error)]
pub enum SetDistError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("sentence cloud {doc_id} is empty")]
    EmptyCloud { doc_id: usize },
    #[error("unbalanced marginals: supply {supply} vs demand {demand}")]
    Unbalanced { supply: f64, demand: f64 },
    #[error("invalid transport problem: {0}")]
    InvalidTransport(String),
    #[error("transport solver did not terminate on a {rows}x{cols} problem")]
    SolverStalled { rows: usize, cols: usize },
    #[error("pair ({i}, {j}): {source}")]
    Pair {
        i: usize,
        j: usize,
        #[source]
        source: Box<SetDistError>,
    },
    #[error("corrupt distance matrix: {0}")]
    CorruptMatrix(String),
    #[error("invalid distance matrix: {0}")]
    InvalidMatrix(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot build worker pool: {0}")]
    ThreadPool(String),
}

pub type Result<T> = std::result::Result<T, SetDistError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    Energy,
    Hausdorff,
    Wmd,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Energy, MetricKind::Hausdorff, MetricKind::Wmd];

    pub fn code(self) -> u8 {
        match self {
            MetricKind::Energy => 0,
            MetricKind::Hausdorff => 1,
            MetricKind::Wmd => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(MetricKind::Energy),
            1 => Some(MetricKind::Hausdorff),
            2 => Some(MetricKind::Wmd),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Energy => "energy",
            MetricKind::Hausdorff => "hausdorff",
            MetricKind::Wmd => "wmd",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "energy" => Ok(MetricKind::Energy),
            "hausdorff" => Ok(MetricKind::Hausdorff),
            "wmd" => Ok(MetricKind::Wmd),
            other => Err(format!(
                "unknown metric {other:?} (expected energy, hausdorff or wmd)"
            )),
        }
    }
}

/// Euclidean distance between two word vectors, accumulated in `f64`.
pub fn word_distance(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(SetDistError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(euclidean(a, b))
}

#[inline]
fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Largest word-pair table `pairwise_matrix` will precompute, in bytes.
pub const GROUND_CACHE_BYTES: usize = 1 << 30;

/// Ground distances between every pair of words used by a corpus, stored
/// as the strict upper triangle. Values are produced by the same routine as
/// the uncached path, so cached and direct results agree bit for bit.
struct WordDistances {
    compact: Vec<u32>,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl WordDistances {
    fn cells(words: usize) -> usize {
        words * words.saturating_sub(1) / 2
    }

    fn build(clouds: &[SentenceCloud], table: &WordEmbeddingTable, pool: Option<&rayon::ThreadPool>) -> Option<Self> {
        let mut compact = vec![u32::MAX; table.len()];
        let mut used = Vec::new();
        for cloud in clouds {
            for &w in cloud.word_indices() {
                if compact[w] == u32::MAX {
                    compact[w] = 0;
                    used.push(w);
                }
            }
        }
        if Self::cells(used.len()) * std::mem::size_of::<f64>() > GROUND_CACHE_BYTES {
            return None;
        }
        used.sort_unstable();
        for (c, &w) in used.iter().enumerate() {
            compact[w] = c as u32;
        }
        let u = used.len();
        let mut offsets = Vec::with_capacity(u);
        let mut next = 0;
        for i in 0..u {
            offsets.push(next);
            next += u - i - 1;
        }
        let row = |i: usize| -> Vec<f64> {
            let a = table.vector(used[i]);
            used[i + 1..].iter().map(|&w| euclidean(a, table.vector(w))).collect()
        };
        let rows: Vec<Vec<f64>> = match pool {
            Some(pool) => pool.install(|| (0..u).into_par_iter().map(row).collect()),
            None => (0..u).map(row).collect(),
        };
        Some(WordDistances {
            compact,
            offsets,
            values: rows.concat(),
        })
    }

    #[inline]
    fn get(&self, a: u32, b: u32) -> f64 {
        let (i, j) = match a.cmp(&b) {
            std::cmp::Ordering::Less => (a as usize, b as usize),
            std::cmp::Ordering::Greater => (b as usize, a as usize),
            std::cmp::Ordering::Equal => return 0.0,
        };
        self.values[self.offsets[i] + j - i - 1]
    }
}

/// Word vectors of a cloud gathered next to its weights.
struct Points<'a> {
    vectors: Vec<&'a [f32]>,
    weights: &'a [f64],
    /// Cache rows, filled only when a [`WordDistances`] table is in use.
    ids: Vec<u32>,
}

impl<'a> Points<'a> {
    fn new(cloud: &'a SentenceCloud, table: &'a WordEmbeddingTable) -> Result<Self> {
        if cloud.is_empty() {
            return Err(SetDistError::EmptyCloud {
                doc_id: cloud.doc_id(),
            });
        }
        Ok(Points {
            vectors: cloud.word_indices().iter().map(|&i| table.vector(i)).collect(),
            weights: cloud.weights(),
            ids: Vec::new(),
        })
    }

    fn with_cache(cloud: &'a SentenceCloud, table: &'a WordEmbeddingTable, cache: Option<&WordDistances>) -> Result<Self> {
        let mut points = Points::new(cloud, table)?;
        if let Some(cache) = cache {
            points.ids = cloud.word_indices().iter().map(|&w| cache.compact[w]).collect();
        }
        Ok(points)
    }

    /// Ground distances, row-major `self.len() x other.len()`.
    fn ground(&self, other: &Points<'_>, cache: Option<&WordDistances>) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.vectors.len() * other.vectors.len());
        match cache {
            Some(cache) => {
                for &a in &self.ids {
                    out.extend(other.ids.iter().map(|&b| cache.get(a, b)));
                }
            }
            None => {
                for a in &self.vectors {
                    out.extend(other.vectors.iter().map(|b| euclidean(a, b)));
                }
            }
        }
        out
    }

    /// `sum_ij w_i w'_j e(i, j)`.
    fn mean_distance(&self, other: &Points<'_>, cache: Option<&WordDistances>) -> f64 {
        let mut total = 0.0;
        for (i, &wa) in self.weights.iter().enumerate() {
            let mut row = 0.0;
            match cache {
                Some(cache) => {
                    let a = self.ids[i];
                    for (&b, &wb) in other.ids.iter().zip(other.weights) {
                        row += wb * cache.get(a, b);
                    }
                }
                None => {
                    let a = self.vectors[i];
                    for (b, &wb) in other.vectors.iter().zip(other.weights) {
                        row += wb * euclidean(a, b);
                    }
                }
            }
            total += wa * row;
        }
        total
    }
}

fn energy_from_terms(cross: f64, self_left: f64, self_right: f64) -> f64 {
    (2.0 * cross - self_left - self_right).max(0.0)
}

fn directed_from_ground(ground: &[f64], rows: usize, cols: usize) -> (f64, f64) {
    let mut row_min = vec![f64::INFINITY; rows];
    let mut col_min = vec![f64::INFINITY; cols];
    for i in 0..rows {
        for j in 0..cols {
            let d = ground[i * cols + j];
            row_min[i] = row_min[i].min(d);
            col_min[j] = col_min[j].min(d);
        }
    }
    let forward = row_min.into_iter().fold(0.0, f64::max);
    let backward = col_min.into_iter().fold(0.0, f64::max);
    (forward, backward)
}

/// Energy distance between the two token distributions.
pub fn energy_distance(
    s: &SentenceCloud,
    t: &SentenceCloud,
    table: &WordEmbeddingTable,
) -> Result<f64> {
    let (a, b) = (Points::new(s, table)?, Points::new(t, table)?);
    Ok(energy_from_terms(
        a.mean_distance(&b, None),
        a.mean_distance(&a, None),
        b.mean_distance(&b, None),
    ))
}

/// Largest distance from a word of `s` to its nearest word in `t`.
pub fn directed_hausdorff(
    s: &SentenceCloud,
    t: &SentenceCloud,
    table: &WordEmbeddingTable,
) -> Result<f64> {
    let (a, b) = (Points::new(s, table)?, Points::new(t, table)?);
    let ground = a.ground(&b, None);
    Ok(directed_from_ground(&ground, a.vectors.len(), b.vectors.len()).0)
}

pub fn hausdorff(s: &SentenceCloud, t: &SentenceCloud, table: &WordEmbeddingTable) -> Result<f64> {
    let (a, b) = (Points::new(s, table)?, Points::new(t, table)?);
    let ground = a.ground(&b, None);
    let (forward, backward) = directed_from_ground(&ground, a.vectors.len(), b.vectors.len());
    Ok(forward.max(backward))
}

fn plan_between(
    s: &SentenceCloud,
    t: &SentenceCloud,
    a: &Points<'_>,
    b: &Points<'_>,
    cache: Option<&WordDistances>,
) -> Result<TransportPlan> {
    if s.word_indices() == t.word_indices() && s.weights() == t.weights() {
        let entries = (0..s.len())
            .map(|k| TransportEntry {
                source: k,
                target: k,
                mass: s.weights()[k],
            })
            .collect();
        return Ok(TransportPlan { entries, cost: 0.0 });
    }
    solve_transport(&a.ground(b, cache), a.weights, b.weights)
}

/// Optimal transport plan between the term-frequency distributions of two clouds.
pub fn wmd_plan(
    s: &SentenceCloud,
    t: &SentenceCloud,
    table: &WordEmbeddingTable,
) -> Result<TransportPlan> {
    let (a, b) = (Points::new(s, table)?, Points::new(t, table)?);
    plan_between(s, t, &a, &b, None)
}

/// Word mover's distance: the cost of [`wmd_plan`].
pub fn wmd(s: &SentenceCloud, t: &SentenceCloud, table: &WordEmbeddingTable) -> Result<f64> {
    Ok(wmd_plan(s, t, table)?.cost)
}

pub fn distance(
    kind: MetricKind,
    s: &SentenceCloud,
    t: &SentenceCloud,
    table: &WordEmbeddingTable,
) -> Result<f64> {
    match kind {
        MetricKind::Energy => energy_distance(s, t, table),
        MetricKind::Hausdorff => hausdorff(s, t, table),
        MetricKind::Wmd => wmd(s, t, table),
    }
}

/// Full symmetric distance matrix over `clouds`.
///
/// Each unordered pair is computed once on a pool of `workers` threads and
/// written to a fixed location, so the result does not depend on `workers`.
/// Word-pair ground distances are precomputed when the table fits in
/// [`GROUND_CACHE_BYTES`].
pub fn pairwise_matrix(
    clouds: &[SentenceCloud],
    table: &WordEmbeddingTable,
    kind: MetricKind,
    workers: usize,
) -> Result<DistanceMatrix> {
    let pool = if workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| SetDistError::ThreadPool(e.to_string()))?,
        )
    } else {
        None
    };
    if let Some(empty) = clouds.iter().find(|c| c.is_empty()) {
        return Err(SetDistError::EmptyCloud {
            doc_id: empty.doc_id(),
        });
    }
    let cache = if clouds.len() > 2 {
        WordDistances::build(clouds, table, pool.as_ref())
    } else {
        None
    };
    match &cache {
        Some(c) => log::debug!("cached {} word-pair distances", c.values.len()),
        None => log::debug!("computing word-pair distances on demand"),
    }
    let cache = cache.as_ref();
    let points = clouds
        .iter()
        .map(|c| Points::with_cache(c, table, cache))
        .collect::<Result<Vec<_>>>()?;
    let self_terms: Vec<f64> = match kind {
        MetricKind::Energy => points.iter().map(|p| p.mean_distance(p, cache)).collect(),
        _ => Vec::new(),
    };
    let n = clouds.len();

    let row = |i: usize| -> Result<Vec<f64>> {
        ((i + 1)..n)
            .map(|j| {
                let value = match kind {
                    MetricKind::Energy => Ok(energy_from_terms(
                        points[i].mean_distance(&points[j], cache),
                        self_terms[i],
                        self_terms[j],
                    )),
                    MetricKind::Hausdorff => {
                        let (p, q) = (points[i].vectors.len(), points[j].vectors.len());
                        let (f, b) = directed_from_ground(&points[i].ground(&points[j], cache), p, q);
                        Ok(f.max(b))
                    }
                    MetricKind::Wmd => {
                        plan_between(&clouds[i], &clouds[j], &points[i], &points[j], cache).map(|p| p.cost)
                    }
                };
                value.map_err(|e| SetDistError::Pair {
                    i,
                    j,
                    source: Box::new(e),
                })
            })
            .collect()
    };

    let upper: Vec<Vec<f64>> = match &pool {
        Some(pool) => pool.install(|| (0..n).into_par_iter().map(row).collect::<Result<_>>())?,
        None => (0..n).map(row).collect::<Result<_>>()?,
    };

    let mut values = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        for (offset, &d) in row.iter().enumerate() {
            let j = i + 1 + offset;
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    DistanceMatrix::new(n, values, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use emap_testkit as oracle;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane() -> WordEmbeddingTable {
        WordEmbeddingTable::from_rows([
            ("o", vec![0.0, 0.0]),
            ("x", vec![1.0, 0.0]),
            ("y", vec![0.0, 1.0]),
            ("far", vec![3.0, 4.0]),
            ("two", vec![2.0, 0.0]),
            ("diag1", vec![1.0, 1.0]),
            ("diag2", vec![2.0, 2.0]),
        ])
        .unwrap()
    }

    fn cloud(t: &WordEmbeddingTable, words: &[&str]) -> SentenceCloud {
        crate::corpus::to_cloud(words, t, 0).unwrap()
    }

    #[test]
    fn word_distance_examples() {
        assert_eq!(word_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(word_distance(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        assert_eq!(word_distance(&[1.0, 1.0], &[2.0, 2.0]).unwrap(), 2f64.sqrt());
        assert!(matches!(
            word_distance(&[1.0], &[1.0, 2.0]),
            Err(SetDistError::DimensionMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn energy_examples() {
        let t = plane();
        let d = energy_distance(&cloud(&t, &["o"]), &cloud(&t, &["far"]), &t).unwrap();
        assert_eq!(d, 10.0);
        let s = cloud(&t, &["o", "x"]);
        assert_eq!(energy_distance(&s, &s, &t).unwrap(), 0.0);
        let d = energy_distance(&s, &cloud(&t, &["y"]), &t).unwrap();
        assert!((d - 1.914_213_562_373_095).abs() < 1e-12, "{d}");
    }

    #[test]
    fn energy_uses_token_multiplicity() {
        let t = plane();
        let s = cloud(&t, &["o", "o", "x"]);
        let u = cloud(&t, &["y"]);
        let expanded = oracle::energy_over_tokens(
            &[vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0]],
            &[vec![0.0, 1.0]],
        );
        assert!((energy_distance(&s, &u, &t).unwrap() - expanded).abs() < 1e-12);
    }

    #[test]
    fn hausdorff_examples() {
        let t = plane();
        let s = cloud(&t, &["o", "two"]);
        let u = cloud(&t, &["o"]);
        assert_eq!(directed_hausdorff(&s, &u, &t).unwrap(), 2.0);
        assert_eq!(directed_hausdorff(&u, &s, &t).unwrap(), 0.0);
        assert_eq!(hausdorff(&s, &u, &t).unwrap(), 2.0);
        assert_eq!(hausdorff(&u, &s, &t).unwrap(), 2.0);
        assert_eq!(hausdorff(&s, &s, &t).unwrap(), 0.0);
    }

    #[test]
    fn wmd_examples() {
        let t = plane();
        let s = cloud(&t, &["o", "x"]);
        assert_eq!(wmd(&s, &s, &t).unwrap(), 0.0);
        assert_eq!(wmd(&cloud(&t, &["diag1"]), &cloud(&t, &["diag2"]), &t).unwrap(), 2f64.sqrt());
        let d = wmd(&s, &cloud(&t, &["y"]), &t).unwrap();
        assert!((d - 1.207_106_781_186_547_5).abs() < 1e-12);
    }

    #[test]
    fn singleton_matrix_relations() {
        let t = plane();
        let clouds = vec![cloud(&t, &["o"]), cloud(&t, &["x"]), cloud(&t, &["far"])];
        let e = pairwise_matrix(&clouds, &t, MetricKind::Energy, 1).unwrap();
        let h = pairwise_matrix(&clouds, &t, MetricKind::Hausdorff, 1).unwrap();
        let w = pairwise_matrix(&clouds, &t, MetricKind::Wmd, 2).unwrap();
        let euclid = [[0.0, 1.0, 5.0], [1.0, 0.0, 20f64.sqrt()], [5.0, 20f64.sqrt(), 0.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((h.get(i, j) - euclid[i][j]).abs() < 1e-12);
                assert!((w.get(i, j) - euclid[i][j]).abs() < 1e-12);
                assert!((e.get(i, j) - 2.0 * euclid[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_cloud_matrix() {
        let t = plane();
        let m = pairwise_matrix(&[cloud(&t, &["o", "x"])], &t, MetricKind::Wmd, 1).unwrap();
        assert_eq!(m.n(), 1);
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn matrix_is_independent_of_worker_count() {
        let (t, clouds) = random_corpus(7, 12, 4, 6);
        for kind in MetricKind::ALL {
            let one = pairwise_matrix(&clouds, &t, kind, 1).unwrap();
            let three = pairwise_matrix(&clouds, &t, kind, 3).unwrap();
            let bits = |m: &DistanceMatrix| m.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&one), bits(&three));
            one.validate().unwrap();
        }
    }

    #[test]
    fn cached_ground_matches_direct_evaluation() {
        let (t, clouds) = random_corpus(21, 9, 5, 6);
        for kind in MetricKind::ALL {
            let m = pairwise_matrix(&clouds, &t, kind, 1).unwrap();
            for i in 0..clouds.len() {
                for j in 0..clouds.len() {
                    let (a, b) = (i.min(j), i.max(j));
                    let direct = if a == b { 0.0 } else { distance(kind, &clouds[a], &clouds[b], &t).unwrap() };
                    assert_eq!(m.get(i, j).to_bits(), direct.to_bits(), "{kind} ({i}, {j})");
                }
            }
        }
    }

    fn random_corpus(seed: u64, docs: usize, dim: usize, max_words: usize) -> (WordEmbeddingTable, Vec<SentenceCloud>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = 30;
        let t = WordEmbeddingTable::from_rows((0..vocab).map(|i| {
            (format!("w{i}"), (0..dim).map(|_| rng.random_range(-2.0f32..2.0)).collect())
        }))
        .unwrap();
        let clouds = (0..docs)
            .map(|d| {
                let len = rng.random_range(1..=max_words);
                let counts: Vec<(usize, usize)> =
                    (0..len).map(|_| (rng.random_range(0..vocab), rng.random_range(1..4))).collect();
                SentenceCloud::from_counts(d, &counts).unwrap()
            })
            .collect();
        (t, clouds)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn metrics_match_brute_force(seed in any::<u64>()) {
            let (t, clouds) = random_corpus(seed, 2, 3, 4);
            let pts = |c: &SentenceCloud| -> Vec<Vec<f32>> {
                c.word_indices().iter().map(|&i| t.vector(i).to_vec()).collect()
            };
            let (a, b) = (&clouds[0], &clouds[1]);
            prop_assert_eq!(hausdorff(a, b, &t).unwrap(), oracle::hausdorff_nested(&pts(a), &pts(b)));
            let e = oracle::energy_weighted(&pts(a), a.weights(), &pts(b), b.weights());
            prop_assert!((energy_distance(a, b, &t).unwrap() - e).abs() < 1e-12);
            let cost: Vec<f64> = pts(a).iter()
                .flat_map(|x| pts(b).into_iter().map(move |y| oracle::euclid(x, &y)))
                .collect();
            let lp = oracle::transport_vertex_enumeration(&cost, a.weights(), b.weights());
            prop_assert!((wmd(a, b, &t).unwrap() - lp).abs() < 1e-9);
        }

        #[test]
        fn energy_is_scale_equivariant(seed in any::<u64>(), scale in 0.1f32..10.0) {
            let (t, clouds) = random_corpus(seed, 2, 4, 5);
            let scaled = WordEmbeddingTable::from_rows(
                t.words().iter().enumerate().map(|(i, w)| (w.clone(), t.vector(i).iter().map(|x| x * scale).collect())),
            ).unwrap();
            let base = energy_distance(&clouds[0], &clouds[1], &t).unwrap();
            let big = energy_distance(&clouds[0], &clouds[1], &scaled).unwrap();
            prop_assert!((big - f64::from(scale) * base).abs() <= 1e-5 * (1.0 + big));
        }

        #[test]
        fn wmd_is_a_metric_and_dominates_centroid_gap(seed in any::<u64>()) {
            let (t, c) = random_corpus(seed, 3, 3, 5);
            let d = |x: &SentenceCloud, y: &SentenceCloud| wmd(x, y, &t).unwrap();
            prop_assert!(d(&c[0], &c[2]) <= d(&c[0], &c[1]) + d(&c[1], &c[2]) + 1e-7);
            prop_assert!((d(&c[0], &c[1]) - d(&c[1], &c[0])).abs() <= 1e-9);
            let centroid = |x: &SentenceCloud| -> Vec<f64> {
                let mut m = vec![0.0; t.dim()];
                for (&i, &w) in x.word_indices().iter().zip(x.weights()) {
                    for (acc, &v) in m.iter_mut().zip(t.vector(i)) { *acc += w * f64::from(v); }
                }
                m
            };
            let (ca, cb) = (centroid(&c[0]), centroid(&c[1]));
            let gap = ca.iter().zip(&cb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            prop_assert!(d(&c[0], &c[1]) >= gap - 1e-9);
        }
    }
}
