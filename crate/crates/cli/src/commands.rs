//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use emap_core::corpus::{load_embeddings, read_dataset, to_cloud, tokenize, CorpusError};
use emap_core::eval::{
    cosine_neighbours, knn_classify, stratified_holdout, sweep_c, train_linear_svm,
    two_proportion_ztest, Method,
};
use emap_core::manifold::project_with;
use emap_core::setdist::pairwise_matrix;
use emap_core::{DistanceMatrix, EvalReport, LabelSet, LabeledDocument, MetricKind, Split};

use crate::artifacts::{
    embedding_path, format_sig9, matrix_path, meta_path, read_embedding, read_rows, report_path,
    rows_path, write_embedding, write_key_values, write_rows, write_text, RowRecord,
};
use crate::cache::{file_digest, materialize, Cache, KeyBuilder};
use crate::config::{Classifier, Protocol, RunConfig, SgdMode};
use crate::CliError;

const HOLDOUT_FRACTION: f64 = 0.2;

fn existing<'a>(cfg: &RunConfig, value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    let path = cfg.require(value, flag)?;
    if !path.exists() {
        return Err(anyhow!("{} does not exist", path.display()).into());
    }
    Ok(path)
}

/// Train documents numbered from 0, then test documents.
pub fn load_documents(train: &Path, test: &Path) -> Result<Vec<LabeledDocument>> {
    let read = |path: &Path, split: Split, first_id: usize| -> Result<Vec<LabeledDocument>> {
        let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        read_dataset(BufReader::new(file), split, first_id)
            .with_context(|| format!("{} set {}", split, path.display()))
    };
    let mut docs = read(train, Split::Train, 0)?;
    docs.extend(read(test, Split::Test, docs.len())?);
    Ok(docs)
}

/// Computes the joint matrix; documents without known words are skipped.
pub fn compute_matrix(cfg: &RunConfig) -> Result<(DistanceMatrix, Vec<RowRecord>), CliError> {
    let train = existing(cfg, &cfg.train, "train")?;
    let test = existing(cfg, &cfg.test, "test")?;
    let embeddings = existing(cfg, &cfg.embeddings, "embeddings")?;
    let docs = load_documents(train, test)?;
    let table = load_embeddings(embeddings).with_context(|| format!("word vectors {}", embeddings.display()))?;
    log::info!("{} documents, {} word vectors of dimension {}", docs.len(), table.len(), table.dim());

    let mut clouds = Vec::with_capacity(docs.len());
    let mut rows = Vec::with_capacity(docs.len());
    let mut skipped = Vec::new();
    for doc in &docs {
        match to_cloud(&tokenize(&doc.text), &table, doc.id) {
            Ok(cloud) => {
                clouds.push(cloud);
                rows.push(RowRecord {
                    doc_id: doc.id,
                    split: doc.split,
                    label: doc.label.clone(),
                });
            }
            Err(CorpusError::EmptyCloud { .. }) => skipped.push(doc.id),
            Err(e) => return Err(anyhow!(e).context(format!("document {}", doc.id)).into()),
        }
    }
    if !skipped.is_empty() {
        let ids: Vec<String> = skipped.iter().map(usize::to_string).collect();
        log::warn!("skipped {} documents with no known words: {}", skipped.len(), ids.join(","));
    }
    if clouds.len() < 2 {
        return Err(anyhow!("fewer than two usable documents").into());
    }
    let started = Instant::now();
    let matrix = pairwise_matrix(&clouds, &table, cfg.metric, cfg.workers).context("distance matrix")?;
    log::info!(
        "{} matrix {}x{} in {:.1}s",
        cfg.metric,
        matrix.n(),
        matrix.n(),
        started.elapsed().as_secs_f64()
    );
    Ok((matrix, rows))
}

fn distances_key(cfg: &RunConfig) -> Result<String, CliError> {
    let mut key = KeyBuilder::new("distances-v1");
    key.field("metric", cfg.metric.name());
    key.file("train", existing(cfg, &cfg.train, "train")?)?;
    key.file("test", existing(cfg, &cfg.test, "test")?)?;
    key.file("embeddings", existing(cfg, &cfg.embeddings, "embeddings")?)?;
    Ok(key.finish())
}

fn cache(cfg: &RunConfig) -> Cache {
    Cache::new(cfg.out.join("cache"))
}

/// Writes the matrix and its row sidecar to the output directory, reusing
/// a cached copy when the inputs are unchanged.
pub fn distances_stage(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let target = matrix_path(&cfg.out, cfg.metric);
    let rows_target = rows_path(&target);
    let key = if cfg.use_cache { Some(distances_key(cfg)?) } else { None };
    if let Some(key) = &key {
        if let Some(hit) = cache(cfg).lookup(key, &["matrix.emapdm", "rows.tsv"]) {
            log::info!("cache hit: {} distances ({})", cfg.metric, &key[..12]);
            materialize(&hit[0], &target).context("restoring cached matrix")?;
            materialize(&hit[1], &rows_target).context("restoring cached rows")?;
            return Ok(target);
        }
    }
    let (matrix, rows) = compute_matrix(cfg)?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("cannot create {}", cfg.out.display()))?;
    matrix
        .save(&target)
        .with_context(|| format!("cannot write {}", target.display()))?;
    write_rows(&rows_target, &rows)?;
    if let Some(key) = &key {
        cache(cfg).store(key, &[("matrix.emapdm", &target), ("rows.tsv", &rows_target)])?;
    }
    log::info!("wrote {}", target.display());
    Ok(target)
}

fn load_matrix(path: &Path) -> Result<(DistanceMatrix, Vec<RowRecord>)> {
    let matrix = DistanceMatrix::load(path).with_context(|| format!("distance matrix {}", path.display()))?;
    let rows = read_rows(&rows_path(path))?;
    if rows.len() != matrix.n() {
        bail!(
            "{} has {} rows but its row file lists {}",
            path.display(),
            matrix.n(),
            rows.len()
        );
    }
    Ok((matrix, rows))
}

fn matrix_input(cfg: &RunConfig) -> PathBuf {
    cfg.matrix.clone().unwrap_or_else(|| matrix_path(&cfg.out, cfg.metric))
}

fn embedding_input(cfg: &RunConfig) -> PathBuf {
    cfg.sentence_embeddings
        .clone()
        .unwrap_or_else(|| embedding_path(&cfg.out, cfg.metric))
}

fn projection_meta(cfg: &RunConfig, matrix: &DistanceMatrix, digest: &str) -> Vec<(String, String)> {
    let mut meta: Vec<(String, String)> = vec![
        ("metric".into(), matrix.kind().to_string()),
        ("rows".into(), matrix.n().to_string()),
        ("matrix_sha256".into(), digest.to_owned()),
        (
            "sgd_mode".into(),
            match cfg.sgd_mode {
                SgdMode::Deterministic => "deterministic".into(),
                SgdMode::Parallel => "parallel".into(),
            },
        ),
    ];
    meta.extend(
        cfg.params
            .to_key_values()
            .into_iter()
            .map(|(k, v)| (k.to_owned(), v)),
    );
    meta
}

/// Embeds the matrix rows, reusing a cached projection for deterministic runs.
pub fn project_stage(cfg: &RunConfig, matrix_file: &Path) -> Result<PathBuf, CliError> {
    let (matrix, rows) = load_matrix(matrix_file)?;
    let target = embedding_path(&cfg.out, matrix.kind());
    let meta_target = meta_path(&target);
    let digest = file_digest(matrix_file)?;
    let mut meta = projection_meta(cfg, &matrix, &digest);

    let key = (cfg.use_cache && cfg.sgd_mode == SgdMode::Deterministic).then(|| {
        let mut key = KeyBuilder::new("projection-v1");
        for (k, v) in &meta {
            key.field(k, v);
        }
        key.file("rows", &rows_path(matrix_file)).map(|k| k.finish())
    });
    let key = key.transpose()?;
    if let Some(key) = &key {
        if let Some(hit) = cache(cfg).lookup(key, &["embedding.tsv", "embedding.meta"]) {
            log::info!("cache hit: projection ({})", &key[..12]);
            materialize(&hit[0], &target).context("restoring cached embedding")?;
            materialize(&hit[1], &meta_target).context("restoring cached metadata")?;
            return Ok(target);
        }
    }

    let started = Instant::now();
    let projection = project_with(&matrix, &cfg.params, cfg.optimize_mode()).context("projection")?;
    log::info!(
        "projected {} rows to {} dimensions in {:.1}s",
        matrix.n(),
        cfg.params.embedding_dim,
        started.elapsed().as_secs_f64()
    );
    meta.extend([
        ("n_neighbors_used".into(), projection.n_neighbors.to_string()),
        ("edges".into(), projection.n_edges.to_string()),
        ("components".into(), projection.n_components.to_string()),
        ("spectral_fallback".into(), projection.spectral_fallback.to_string()),
        ("random_init_columns".into(), projection.random_columns.to_string()),
    ]);
    write_embedding(&target, &rows, &projection.embedding)?;
    write_key_values(&meta_target, &meta)?;
    if let Some(key) = &key {
        cache(cfg).store(key, &[("embedding.tsv", &target), ("embedding.meta", &meta_target)])?;
    }
    log::info!("wrote {}", target.display());
    Ok(target)
}

struct Partition {
    labels: LabelSet,
    train: Vec<usize>,
    test: Vec<usize>,
    train_y: Vec<usize>,
    test_y: Vec<usize>,
}

fn partition(rows: &[RowRecord]) -> Result<Partition> {
    let labels = LabelSet::new(rows.iter().map(|r| r.label.as_str()));
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, r) in rows.iter().enumerate() {
        match r.split {
            Split::Train => train.push(i),
            Split::Test => test.push(i),
        }
    }
    if train.is_empty() || test.is_empty() {
        bail!("need both train and test rows (found {} and {})", train.len(), test.len());
    }
    let encode = |idx: &[usize]| -> Vec<usize> {
        idx.iter()
            .map(|&i| labels.index_of(&rows[i].label).expect("label in set"))
            .collect()
    };
    let (train_y, test_y) = (encode(&train), encode(&test));
    Ok(Partition {
        labels,
        train,
        test,
        train_y,
        test_y,
    })
}

fn emit(cfg: &RunConfig, report: &EvalReport, method: &str) -> Result<()> {
    let metric: MetricKind = report.metric.parse().map_err(anyhow::Error::msg)?;
    write_text(&report_path(&cfg.out, metric, method), &report.to_text())?;
    println!("{}", report.result_line());
    log::info!("{} evaluation took {:.2}s", method, report.runtime_secs);
    Ok(())
}

pub fn eval_knn(cfg: &RunConfig, matrix_file: &Path) -> Result<EvalReport, CliError> {
    let started = Instant::now();
    let (matrix, rows) = load_matrix(matrix_file)?;
    let part = partition(&rows)?;
    let block: Vec<Vec<f64>> = part
        .test
        .iter()
        .map(|&t| part.train.iter().map(|&j| matrix.get(t, j)).collect())
        .collect();
    let predicted = knn_classify(&block, &part.train_y, cfg.k).context("kNN")?;
    let mut report = EvalReport::new(
        &cfg.dataset,
        matrix.kind().name(),
        Method::Knn,
        &part.labels,
        &predicted,
        &part.test_y,
    );
    report.runtime_secs = started.elapsed().as_secs_f64();
    emit(cfg, &report, "knn")?;
    Ok(report)
}

fn read_meta(path: &Path) -> BTreeMap<String, String> {
    fs::read_to_string(meta_path(path))
        .map(|text| {
            text.lines()
                .filter_map(|l| l.split_once('='))
                .map(|(k, v)| (k.to_owned(), v.to_owned()))
                .collect()
        })
        .unwrap_or_default()
}

/// Checks embedding rows against the source datasets, when given.
fn check_against_dataset(cfg: &RunConfig, rows: &[RowRecord]) -> Result<(), CliError> {
    let (Some(train), Some(test)) = (&cfg.train, &cfg.test) else {
        return Ok(());
    };
    let docs = load_documents(train, test)?;
    if rows.len() > docs.len() {
        return Err(anyhow!("{} embedding rows but only {} documents", rows.len(), docs.len()).into());
    }
    for r in rows {
        let doc = docs
            .get(r.doc_id)
            .ok_or_else(|| anyhow!("embedding row for unknown document {}", r.doc_id))?;
        if doc.label != r.label || doc.split != r.split {
            return Err(anyhow!(
                "document {}: embedding says {}/{}, dataset says {}/{}",
                r.doc_id,
                r.label,
                r.split,
                doc.label,
                doc.split
            )
            .into());
        }
    }
    Ok(())
}

pub fn eval_svm(cfg: &RunConfig, embedding_file: &Path) -> Result<EvalReport, CliError> {
    let started = Instant::now();
    let (rows, embedding) = read_embedding(embedding_file)?;
    check_against_dataset(cfg, &rows)?;
    let metric = read_meta(embedding_file)
        .get("metric")
        .cloned()
        .unwrap_or_else(|| cfg.metric.name().to_owned());
    let part = partition(&rows)?;
    let n_classes = part.labels.len();
    let train_x = embedding.select_rows(&part.train);
    let test_x = embedding.select_rows(&part.test);
    let seed = cfg.params.seed;

    let (c, model) = match cfg.protocol {
        Protocol::TestSweep => {
            let (c, _) = sweep_c(&train_x, &part.train_y, &test_x, &part.test_y, n_classes, &cfg.c_grid, seed)
                .context("C sweep")?;
            (c, train_linear_svm(&train_x, &part.train_y, n_classes, c, seed).context("SVM")?)
        }
        Protocol::Holdout => {
            let (fit, val) = stratified_holdout(&part.train_y, HOLDOUT_FRACTION, seed);
            let fit_x = train_x.select_rows(&fit);
            let fit_y: Vec<usize> = fit.iter().map(|&i| part.train_y[i]).collect();
            let val_x = train_x.select_rows(&val);
            let val_y: Vec<usize> = val.iter().map(|&i| part.train_y[i]).collect();
            let (c, val_acc) = if val.is_empty() {
                log::warn!("training set too small for a validation split; using the first C");
                (cfg.c_grid[0], f64::NAN)
            } else {
                sweep_c(&fit_x, &fit_y, &val_x, &val_y, n_classes, &cfg.c_grid, seed).context("C sweep")?
            };
            log::info!("selected C={c} (validation accuracy {val_acc:.4})");
            (c, train_linear_svm(&train_x, &part.train_y, n_classes, c, seed).context("SVM")?)
        }
    };
    let predicted = model.predict(&test_x);
    let mut report = EvalReport::new(&cfg.dataset, &metric, Method::Emap, &part.labels, &predicted, &part.test_y);
    report.best_c = Some(c);
    report.protocol = Some(cfg.protocol.to_string());
    report.runtime_secs = started.elapsed().as_secs_f64();
    emit(cfg, &report, "emap")?;
    Ok(report)
}

pub fn cmd_distances(cfg: &RunConfig) -> Result<(), CliError> {
    distances_stage(cfg).map(|_| ())
}

pub fn cmd_project(cfg: &RunConfig) -> Result<(), CliError> {
    let matrix = matrix_input(cfg);
    project_stage(cfg, &matrix).map(|_| ())
}

pub fn cmd_eval_knn(cfg: &RunConfig) -> Result<(), CliError> {
    eval_knn(cfg, &matrix_input(cfg)).map(|_| ())
}

pub fn cmd_eval_svm(cfg: &RunConfig) -> Result<(), CliError> {
    eval_svm(cfg, &embedding_input(cfg)).map(|_| ())
}

pub fn cmd_pipeline(cfg: &RunConfig) -> Result<(), CliError> {
    let started = Instant::now();
    let matrix = distances_stage(cfg)?;
    let knn = match cfg.classifier {
        Classifier::Knn | Classifier::Both => Some(eval_knn(cfg, &matrix)?),
        Classifier::Svm => None,
    };
    let emap = match cfg.classifier {
        Classifier::Svm | Classifier::Both => {
            let embedding = project_stage(cfg, &matrix)?;
            Some(eval_svm(cfg, &embedding)?)
        }
        Classifier::Knn => None,
    };
    if let (Some(knn), Some(emap)) = (&knn, &emap) {
        let test = two_proportion_ztest(emap.accuracy, emap.n_test, knn.accuracy, knn.n_test, cfg.pooled)
            .context("z-test")?;
        let line = format!(
            "ZTEST dataset={} metric={} emap={:.4} knn={:.4} n={} z={} p={} variance={}",
            cfg.dataset,
            cfg.metric,
            emap.accuracy,
            knn.accuracy,
            emap.n_test,
            format_sig9(test.z),
            format_sig9(test.p),
            if cfg.pooled { "pooled" } else { "unpooled" }
        );
        write_text(&cfg.out.join(format!("ztest-{}.txt", cfg.metric)), &format!("{line}\n"))?;
        println!("{line}");
    }
    log::info!("pipeline finished in {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}

pub fn cmd_neighbours(cfg: &RunConfig) -> Result<(), CliError> {
    let query = cfg
        .query
        .ok_or_else(|| CliError::Usage("--query is required".to_owned()))?;
    let path = embedding_input(cfg);
    let (rows, embedding) = read_embedding(&path)?;
    let position = rows
        .iter()
        .position(|r| r.doc_id == query)
        .ok_or_else(|| anyhow!("document {query} is not in {}", path.display()))?;
    let texts: BTreeMap<usize, String> = match (&cfg.train, &cfg.test) {
        (Some(train), Some(test)) => load_documents(train, test)?
            .into_iter()
            .map(|d| (d.id, d.text))
            .collect(),
        _ => BTreeMap::new(),
    };
    let hits = cosine_neighbours(&embedding, position, cfg.top_k).context("retrieval")?;
    let show = |id: usize| texts.get(&id).map_or(String::new(), |t| format!("\t{t}"));
    println!("QUERY\t{}\t{}{}", query, rows[position].label, show(query));
    for (rank, (row, cosine)) in hits.iter().enumerate() {
        let r = &rows[*row];
        println!("{}\t{}\t{}\t{:.6}{}", rank + 1, r.doc_id, r.label, cosine, show(r.doc_id));
    }
    Ok(())
}
