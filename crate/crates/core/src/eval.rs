//! Classification and retrieval on distances or embeddings.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::manifold::EmbeddingMatrix;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("training data has a single class")]
    SingleClass,
    #[error("no training examples")]
    Empty,
    #[error("{what}: expected {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("k must be positive")]
    ZeroK,
    #[error("k = {k} exceeds the {n} training items")]
    KTooLarge { k: usize, n: usize },
    #[error("empty C grid")]
    EmptyGrid,
    #[error("invalid C value {0}")]
    InvalidC(f64),
    #[error("invalid proportion test input: {0}")]
    InvalidProportion(String),
    #[error("row {0} has zero norm")]
    ZeroNorm(usize),
    #[error("row {index} out of range for {rows} rows")]
    OutOfRange { index: usize, rows: usize },
}

pub type Result<T> = std::result::Result<T, EvalError>;

pub const DEFAULT_C_GRID: [f64; 6] = [0.001, 0.01, 0.1, 1.0, 10.0, 100.0];

const SVM_GAP_TOLERANCE: f64 = 1e-4;
const SVM_MAX_EPOCHS: usize = 10_000;

/// Sorted distinct labels; a label's index is its rank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<String>,
}

impl LabelSet {
    pub fn new<S: AsRef<str>>(labels: impl IntoIterator<Item = S>) -> Self {
        let mut labels: Vec<String> = labels.into_iter().map(|s| s.as_ref().to_owned()).collect();
        labels.sort();
        labels.dedup();
        LabelSet { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Maps labels to indices; labels not in the set yield `None`.
    pub fn encode<S: AsRef<str>>(&self, labels: &[S]) -> Vec<Option<usize>> {
        labels.iter().map(|l| self.index_of(l.as_ref())).collect()
    }
}

/// Majority vote over the `k` nearest training items.
///
/// `distances[t][j]` is the distance from test item `t` to training item
/// `j`. Neighbours are ranked by distance then index. A tied vote goes to
/// the class with the nearest member, then to the smaller class index.
pub fn knn_classify(distances: &[Vec<f64>], train_labels: &[usize], k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if train_labels.is_empty() {
        return Err(EvalError::Empty);
    }
    if k > train_labels.len() {
        return Err(EvalError::KTooLarge { k, n: train_labels.len() });
    }
    let mut order: Vec<usize> = Vec::with_capacity(train_labels.len());
    distances
        .iter()
        .map(|row| {
            if row.len() != train_labels.len() {
                return Err(EvalError::Shape {
                    what: "distance row",
                    expected: train_labels.len(),
                    found: row.len(),
                });
            }
            order.clear();
            order.extend(0..row.len());
            order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
            // class -> (votes, nearest distance)
            let mut votes: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
            for &j in order.iter().take(k) {
                let slot = votes.entry(train_labels[j]).or_insert((0, row[j]));
                slot.0 += 1;
            }
            let best = votes
                .iter()
                .min_by(|(ca, (va, da)), (cb, (vb, db))| {
                    vb.cmp(va).then(da.total_cmp(db)).then(ca.cmp(cb))
                })
                .map(|(&c, _)| c)
                .expect("k > 0 and training set non-empty");
            Ok(best)
        })
        .collect()
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    correct as f64 / truth.len() as f64
}

/// Binary L1-loss linear SVM solved in the dual.
#[derive(Debug, Clone)]
pub struct BinarySvm {
    /// Weights followed by the bias term.
    pub weights: Vec<f64>,
    /// Dual objective after each epoch.
    pub dual_trace: Vec<f64>,
    pub converged: bool,
}

/// Dual coordinate descent on `min 1/2 |w|^2 + C sum max(0, 1 - y w.x)`,
/// with the bias folded in as a constant feature.
///
/// Stops when the duality gap falls below `1e-4 * max(1, primal)` or after
/// 10000 epochs. `y` holds +1 or -1.
pub fn train_binary_svm(x: &EmbeddingMatrix, y: &[f64], c: f64, seed: u64) -> Result<BinarySvm> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(EvalError::InvalidC(c));
    }
    let n = x.rows();
    if y.len() != n {
        return Err(EvalError::Shape {
            what: "labels",
            expected: n,
            found: y.len(),
        });
    }
    if n == 0 {
        return Err(EvalError::Empty);
    }
    let dim = x.dim();
    let score = |w: &[f64], i: usize| -> f64 {
        x.row(i).iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + w[dim]
    };
    let q: Vec<f64> = (0..n).map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>() + 1.0).collect();
    let mut w = vec![0.0; dim + 1];
    let mut alpha = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dual_trace = Vec::new();
    let mut converged = false;

    for _ in 0..SVM_MAX_EPOCHS {
        order.shuffle(&mut rng);
        for &i in &order {
            let g = y[i] * score(&w, i) - 1.0;
            let new = (alpha[i] - g / q[i]).clamp(0.0, c);
            let delta = new - alpha[i];
            if delta != 0.0 {
                alpha[i] = new;
                let step = delta * y[i];
                for (wk, xk) in w.iter_mut().zip(x.row(i)) {
                    *wk += step * xk;
                }
                w[dim] += step;
            }
        }
        let half_norm = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
        let hinge: f64 = (0..n).map(|i| (1.0 - y[i] * score(&w, i)).max(0.0)).sum();
        let primal = half_norm + c * hinge;
        let dual = alpha.iter().sum::<f64>() - half_norm;
        dual_trace.push(dual);
        if primal - dual <= SVM_GAP_TOLERANCE * primal.max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("linear SVM with C={c} stopped at the epoch limit before convergence");
    }
    Ok(BinarySvm {
        weights: w,
        dual_trace,
        converged,
    })
}

/// One-vs-rest linear SVM.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// Per class: weights then bias.
    pub weights: Vec<Vec<f64>>,
    pub c: f64,
}

impl LinearModel {
    pub fn n_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| {
                let (bias, w) = w.split_last().expect("weights include a bias");
                row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + bias
            })
            .collect()
    }

    /// Highest score wins; ties go to the smaller class index.
    pub fn predict_row(&self, row: &[f64]) -> usize {
        let scores = self.scores(row);
        let mut best = 0;
        for (k, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = k;
            }
        }
        best
    }

    pub fn predict(&self, x: &EmbeddingMatrix) -> Vec<usize> {
        (0..x.rows()).map(|i| self.predict_row(x.row(i))).collect()
    }
}

/// Trains one binary SVM per class in `0..n_classes`.
pub fn train_linear_svm(
    x: &EmbeddingMatrix,
    y: &[usize],
    n_classes: usize,
    c: f64,
    seed: u64,
) -> Result<LinearModel> {
    if y.len() != x.rows() {
        return Err(EvalError::Shape {
            what: "labels",
            expected: x.rows(),
            found: y.len(),
        });
    }
    let mut present: Vec<usize> = y.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(if y.is_empty() { EvalError::Empty } else { EvalError::SingleClass });
    }
    let weights = (0..n_classes)
        .map(|class| {
            let signs: Vec<f64> = y.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
            train_binary_svm(x, &signs, c, seed.wrapping_add(class as u64)).map(|m| m.weights)
        })
        .collect::<Result<_>>()?;
    Ok(LinearModel { weights, c })
}

/// Picks C by validation accuracy; ties go to the smaller C.
pub fn sweep_c(
    train_x: &EmbeddingMatrix,
    train_y: &[usize],
    val_x: &EmbeddingMatrix,
    val_y: &[usize],
    n_classes: usize,
    grid: &[f64],
    seed: u64,
) -> Result<(f64, f64)> {
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64)> = None;
    for c in grid {
        let model = train_linear_svm(train_x, train_y, n_classes, c, seed)?;
        let acc = accuracy(&model.predict(val_x), val_y);
        log::debug!("C={c}: validation accuracy {acc:.4}");
        if best.is_none_or(|(_, b)| acc > b) {
            best = Some((c, acc));
        }
    }
    best.ok_or(EvalError::EmptyGrid)
}

/// Stratified split: about `fraction` of each class goes to validation.
///
/// Returns `(train, validation)` positions, each sorted. Every class keeps
/// at least one training item.
pub fn stratified_holdout(labels: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (pos, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(pos);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (_, mut members) in by_class {
        members.shuffle(&mut rng);
        let take = ((members.len() as f64 * fraction).round() as usize).min(members.len() - 1);
        val.extend_from_slice(&members[..take]);
        train.extend_from_slice(&members[take..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZTest {
    pub z: f64,
    /// One-sided p-value `P(Z > z)`.
    pub p: f64,
}

/// Two-proportion z-test that accuracy 1 exceeds accuracy 2.
///
/// The pooled variant uses the combined proportion in the standard error;
/// the unpooled one uses each sample's own.
pub fn two_proportion_ztest(acc1: f64, n1: usize, acc2: f64, n2: usize, pooled: bool) -> Result<ZTest> {
    for (acc, n) in [(acc1, n1), (acc2, n2)] {
        if !(0.0..=1.0).contains(&acc) {
            return Err(EvalError::InvalidProportion(format!("accuracy {acc} outside [0, 1]")));
        }
        if n == 0 {
            return Err(EvalError::InvalidProportion("sample size 0".to_owned()));
        }
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let variance = if pooled {
        let p = (acc1 * n1f + acc2 * n2f) / (n1f + n2f);
        p * (1.0 - p) * (1.0 / n1f + 1.0 / n2f)
    } else {
        acc1 * (1.0 - acc1) / n1f + acc2 * (1.0 - acc2) / n2f
    };
    let diff = acc1 - acc2;
    if variance <= 0.0 {
        return Ok(if diff == 0.0 {
            ZTest { z: 0.0, p: 0.5 }
        } else if diff > 0.0 {
            ZTest { z: f64::INFINITY, p: 0.0 }
        } else {
            ZTest { z: f64::NEG_INFINITY, p: 1.0 }
        });
    }
    let z = diff / variance.sqrt();
    let normal = Normal::standard();
    Ok(ZTest { z, p: normal.sf(z) })
}

/// The `top_k` rows most cosine-similar to `query`, excluding itself.
/// Ties go to the smaller row index.
pub fn cosine_neighbours(embedding: &EmbeddingMatrix, query: usize, top_k: usize) -> Result<Vec<(usize, f64)>> {
    let rows = embedding.rows();
    if query >= rows {
        return Err(EvalError::OutOfRange { index: query, rows });
    }
    let norm = |i: usize| embedding.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
    let q_norm = norm(query);
    if q_norm == 0.0 {
        return Err(EvalError::ZeroNorm(query));
    }
    let mut scored = Vec::with_capacity(rows.saturating_sub(1));
    for i in (0..rows).filter(|&i| i != query) {
        let n = norm(i);
        if n == 0.0 {
            return Err(EvalError::ZeroNorm(i));
        }
        let dot: f64 = embedding.row(i).iter().zip(embedding.row(query)).map(|(a, b)| a * b).sum();
        scored.push((i, dot / (n * q_norm)));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(top_k);
    Ok(scored)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// kNN on the sentence distances.
    Knn,
    /// Linear SVM on the embedding.
    Emap,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Knn => "knn",
            Method::Emap => "emap",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassCount {
    pub label: String,
    pub correct: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub dataset: String,
    pub metric: String,
    pub method: Method,
    pub correct: usize,
    pub n_test: usize,
    pub accuracy: f64,
    pub best_c: Option<f64>,
    /// How C was selected, when it was.
    pub protocol: Option<String>,
    pub per_class: Vec<ClassCount>,
    /// Wall-clock seconds; not written to report files.
    pub runtime_secs: f64,
}

impl EvalReport {
    pub fn new(
        dataset: &str,
        metric: &str,
        method: Method,
        labels: &LabelSet,
        predicted: &[usize],
        truth: &[usize],
    ) -> Self {
        let mut per_class: Vec<ClassCount> = labels
            .labels()
            .iter()
            .map(|l| ClassCount { label: l.clone(), correct: 0, total: 0 })
            .collect();
        for (&p, &t) in predicted.iter().zip(truth) {
            per_class[t].total += 1;
            if p == t {
                per_class[t].correct += 1;
            }
        }
        let correct = per_class.iter().map(|c| c.correct).sum();
        EvalReport {
            dataset: dataset.to_owned(),
            metric: metric.to_owned(),
            method,
            correct,
            n_test: truth.len(),
            accuracy: accuracy(predicted, truth),
            best_c: None,
            protocol: None,
            per_class,
            runtime_secs: 0.0,
        }
    }

    pub fn result_line(&self) -> String {
        let c = self.best_c.map_or_else(|| "NA".to_owned(), |c| c.to_string());
        format!(
            "RESULT dataset={} metric={} method={} accuracy={:.4} C={}",
            self.dataset, self.metric, self.method, self.accuracy, c
        )
    }

    /// Report file contents, free of timing so reruns are byte-identical.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("dataset={}\n", self.dataset));
        out.push_str(&format!("metric={}\n", self.metric));
        out.push_str(&format!("method={}\n", self.method));
        out.push_str(&format!("correct={}\n", self.correct));
        out.push_str(&format!("n_test={}\n", self.n_test));
        out.push_str(&format!("accuracy={}\n", self.accuracy));
        out.push_str(&format!(
            "C={}\n",
            self.best_c.map_or_else(|| "NA".to_owned(), |c| c.to_string())
        ));
        if let Some(protocol) = &self.protocol {
            out.push_str(&format!("protocol={protocol}\n"));
        }
        for class in &self.per_class {
            out.push_str(&format!("class.{}={}/{}\n", class.label, class.correct, class.total));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use emap_testkit::{normal_survival, pooled_z, svm_subgradient};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn label_set_is_sorted() {
        let set = LabelSet::new(["b", "a", "c", "a"]);
        assert_eq!(set.labels(), &["a", "b", "c"]);
        assert_eq!(set.index_of("c"), Some(2));
        assert_eq!(set.encode(&["b", "z"]), vec![Some(1), None]);
    }

    #[test]
    fn knn_vote_and_ties() {
        let labels = [0, 1, 1, 0];
        // Clear majority.
        assert_eq!(knn_classify(&[vec![0.5, 0.1, 0.2, 0.9]], &labels, 3).unwrap(), vec![1]);
        // 1-1 tie: nearest member decides.
        assert_eq!(knn_classify(&[vec![0.3, 0.2, 0.9, 0.9]], &labels, 2).unwrap(), vec![1]);
        // 1-1 tie at equal distance: smaller class.
        assert_eq!(knn_classify(&[vec![0.2, 0.2, 0.9, 0.9]], &labels, 2).unwrap(), vec![0]);
        assert!(knn_classify(&[vec![0.0; 3]], &labels, 1).is_err());
        assert!(matches!(knn_classify(&[vec![0.0; 4]], &labels, 0), Err(EvalError::ZeroK)));
    }

    #[test]
    fn knn_spec_cases() {
        assert_eq!(knn_classify(&[vec![3.0, 0.0, 2.0]], &[1, 0, 1], 1).unwrap(), vec![0]);
        assert_eq!(knn_classify(&[vec![0.1, 0.2, 0.3, 5.0]], &[0, 0, 1, 1], 3).unwrap(), vec![0]);
        assert!(matches!(knn_classify(&[vec![0.0; 2]], &[0, 1], 3), Err(EvalError::KTooLarge { k: 3, n: 2 })));
    }

    #[test]
    fn svm_two_points() {
        let x = EmbeddingMatrix::from_rows(&[vec![-1.0], vec![1.0]]).unwrap();
        let model = train_linear_svm(&x, &[0, 1], 2, 1.0, 0).unwrap();
        assert_eq!(model.predict(&x), vec![0, 1]);
    }

    #[test]
    fn svm_identical_points_predict_majority() {
        let x = EmbeddingMatrix::from_rows(&vec![vec![0.5, -0.5]; 7]).unwrap();
        let y = [1, 0, 1, 1, 0, 1, 1];
        let model = train_linear_svm(&x, &y, 2, 1.0, 0).unwrap();
        assert!((accuracy(&model.predict(&x), &y) - 5.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn sweep_single_value_and_empty_grid() {
        let (x, y) = blobs(5, 30);
        assert_eq!(sweep_c(&x, &y, &x, &y, 3, &[0.5], 0).unwrap().0, 0.5);
        assert!(matches!(sweep_c(&x, &y, &x, &y, 3, &[], 0), Err(EvalError::EmptyGrid)));
    }

    fn blobs(seed: u64, n: usize) -> (EmbeddingMatrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let class = i % 3;
            let centre = [(0.0, 0.0), (4.0, 0.0), (0.0, 4.0)][class];
            rows.push(vec![centre.0 + rng.random_range(-1.0..1.0), centre.1 + rng.random_range(-1.0..1.0)]);
            y.push(class);
        }
        (EmbeddingMatrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn svm_separates_blobs() {
        let (x, y) = blobs(1, 90);
        let model = train_linear_svm(&x, &y, 3, 1.0, 0).unwrap();
        assert_eq!(accuracy(&model.predict(&x), &y), 1.0);
    }

    #[test]
    fn svm_dual_is_monotone_and_matches_primal_oracle() {
        let (x, y) = blobs(2, 60);
        let signs: Vec<f64> = y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        let c = 0.5;
        let svm = train_binary_svm(&x, &signs, c, 7).unwrap();
        assert!(svm.converged);
        for pair in svm.dual_trace.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-12);
        }
        let rows: Vec<Vec<f64>> = (0..x.rows()).map(|i| x.row(i).to_vec()).collect();
        let (w, b) = svm_subgradient(&rows, &signs, c, 200_000);
        let primal = |w: &[f64], b: f64| {
            0.5 * (w.iter().map(|v| v * v).sum::<f64>() + b * b)
                + c * rows
                    .iter()
                    .zip(&signs)
                    .map(|(r, s)| (1.0 - s * (r.iter().zip(w).map(|(p, q)| p * q).sum::<f64>() + b)).max(0.0))
                    .sum::<f64>()
        };
        let ours = primal(&svm.weights[..2], svm.weights[2]);
        let oracle = primal(&w, b);
        // Dual coordinate descent should reach at least the subgradient optimum.
        assert!(ours <= oracle * (1.0 + 1e-3) + 1e-6, "{ours} vs {oracle}");
    }

    #[test]
    fn svm_rejects_single_class() {
        let (x, _) = blobs(3, 6);
        assert!(matches!(train_linear_svm(&x, &[0; 6], 1, 1.0, 0), Err(EvalError::SingleClass)));
        assert!(train_binary_svm(&x, &[1.0; 6], 0.0, 0).is_err());
    }

    #[test]
    fn sweep_prefers_smaller_c_on_ties() {
        let (x, y) = blobs(4, 60);
        let (c, acc) = sweep_c(&x, &y, &x, &y, 3, &[100.0, 10.0, 1.0], 0).unwrap();
        assert_eq!(acc, 1.0);
        assert_eq!(c, 1.0);
    }

    #[test]
    fn holdout_is_stratified() {
        let labels: Vec<usize> = (0..50).map(|i| usize::from(i % 5 == 0)).collect();
        let (train, val) = stratified_holdout(&labels, 0.2, 3);
        assert_eq!(train.len() + val.len(), 50);
        assert_eq!(val.iter().filter(|&&i| labels[i] == 1).count(), 2);
        assert_eq!(val.iter().filter(|&&i| labels[i] == 0).count(), 8);
        assert_eq!(stratified_holdout(&labels, 0.2, 3), (train, val));
    }

    #[test]
    fn ztest_reference_values() {
        let r8 = two_proportion_ztest(0.973, 2189, 0.951, 2189, true).unwrap();
        assert!((r8.z - 3.806722591137123).abs() < 1e-9);
        assert!((r8.p - 7.041027514914642e-05).abs() < 1e-9);
        let bbc = two_proportion_ztest(0.987, 220, 0.972, 220, true).unwrap();
        assert!((bbc.z - 1.110218477167966).abs() < 1e-9);
        assert!((bbc.p - 0.1334524462614524).abs() < 1e-9);
    }

    #[test]
    fn ztest_degenerate_cases() {
        assert_eq!(two_proportion_ztest(1.0, 10, 1.0, 10, true).unwrap(), ZTest { z: 0.0, p: 0.5 });
        let up = two_proportion_ztest(1.0, 10, 0.0, 10, false).unwrap();
        assert_eq!((up.z, up.p), (f64::INFINITY, 0.0));
        assert!(two_proportion_ztest(1.2, 10, 0.5, 10, true).is_err());
        assert!(two_proportion_ztest(0.5, 0, 0.5, 10, true).is_err());
    }

    #[test]
    fn cosine_retrieval() {
        let e = EmbeddingMatrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.1], vec![0.0, 1.0], vec![3.0, 0.15]]).unwrap();
        let hits = cosine_neighbours(&e, 0, 2).unwrap();
        assert_eq!(hits[0].0, 1);
        assert_eq!(hits[1].0, 3);
        assert!((hits[0].1 - hits[1].1).abs() < 1e-15);
        let zero = EmbeddingMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(cosine_neighbours(&zero, 0, 1), Err(EvalError::ZeroNorm(0))));
        assert!(cosine_neighbours(&zero, 5, 1).is_err());
    }

    #[test]
    fn report_lines() {
        let labels = LabelSet::new(["neg", "pos"]);
        let mut report = EvalReport::new("toy", "wmd", Method::Emap, &labels, &[0, 1, 1], &[0, 1, 0]);
        report.best_c = Some(0.1);
        report.runtime_secs = 3.5;
        assert_eq!(report.result_line(), "RESULT dataset=toy metric=wmd method=emap accuracy=0.6667 C=0.1");
        assert!(report.to_text().contains("class.neg=1/2\n"));
        assert!(!report.to_text().contains("3.5"));
        report.best_c = None;
        report.method = Method::Knn;
        assert!(report.result_line().ends_with("method=knn accuracy=0.6667 C=NA"));
    }

    proptest! {
        #[test]
        fn ztest_matches_oracle(
            a in 0.01f64..0.99, b in 0.01f64..0.99, n1 in 10usize..5000, n2 in 10usize..5000,
        ) {
            let t = two_proportion_ztest(a, n1, b, n2, true).unwrap();
            let z = pooled_z(a, n1, b, n2);
            prop_assert!((t.z - z).abs() <= 1e-9 * z.abs().max(1.0));
            prop_assert!((t.p - normal_survival(z)).abs() <= 1e-9);
        }

        #[test]
        fn ztest_is_antisymmetric(a in 0.0f64..=1.0, b in 0.0f64..=1.0, n1 in 1usize..3000, n2 in 1usize..3000) {
            let ab = two_proportion_ztest(a, n1, b, n2, true).unwrap();
            let ba = two_proportion_ztest(b, n2, a, n1, true).unwrap();
            prop_assert_eq!(ab.z, -ba.z);
        }

        #[test]
        fn cosine_ranking_is_scale_invariant(
            rows in prop::collection::vec(prop::collection::vec(0.1f64..5.0, 3), 2..10),
            scale in 0.01f64..100.0,
        ) {
            let e = EmbeddingMatrix::from_rows(&rows).unwrap();
            let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
            let s = EmbeddingMatrix::from_rows(&scaled).unwrap();
            let ids = |m: &EmbeddingMatrix| cosine_neighbours(m, 0, rows.len()).unwrap().into_iter().map(|(i, _)| i).collect::<Vec<_>>();
            let plain = cosine_neighbours(&e, 0, rows.len()).unwrap();
            // Rankings agree wherever the similarities are not numerically tied.
            let tied = plain.windows(2).any(|w| (w[0].1 - w[1].1).abs() < 1e-12);
            prop_assume!(!tied);
            prop_assert_eq!(ids(&e), ids(&s));
        }

        #[test]
        fn cosine_matches_brute_force(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 5)) {
            prop_assume!(rows.iter().all(|r| r.iter().map(|v| v * v).sum::<f64>() > 1e-6));
            let e = EmbeddingMatrix::from_rows(&rows).unwrap();
            let cos = |a: &[f64], b: &[f64]| {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
            };
            for (id, c) in cosine_neighbours(&e, 2, 4).unwrap() {
                prop_assert!((c - cos(&rows[2], &rows[id])).abs() < 1e-12);
            }
        }

        #[test]
        fn knn_with_k1_returns_nearest_label(row in prop::collection::vec(0.0f64..10.0, 1..20)) {
            let labels: Vec<usize> = (0..row.len()).map(|i| i % 3).collect();
            let nearest = (0..row.len()).min_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b))).unwrap();
            prop_assert_eq!(knn_classify(std::slice::from_ref(&row), &labels, 1).unwrap(), vec![labels[nearest]]);
        }
    }
}
