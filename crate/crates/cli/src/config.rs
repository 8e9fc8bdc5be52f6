//! Command-line flags, `key=value` config files and their resolution into a
//! [`RunConfig`].

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use emap_core::eval::DEFAULT_C_GRID;
use emap_core::manifold::OptimizeMode;
use emap_core::{HyperParams, MetricKind};

use crate::CliError;

pub const WORKERS_ENV: &str = "EMAP_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "emap", version, about = "Sentence embeddings from set distances between word-vector clouds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the joint train+test distance matrix.
    Distances(RunArgs),
    /// Embed every row of a distance matrix.
    Project(RunArgs),
    /// kNN classification from a distance matrix.
    EvalKnn(RunArgs),
    /// Linear SVM classification from sentence embeddings.
    EvalSvm(RunArgs),
    /// Distances, projection and evaluation with cached intermediates.
    Pipeline(RunArgs),
    /// Most cosine-similar sentences to a query sentence.
    Neighbours(RunArgs),
}

impl Command {
    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Distances(a)
            | Command::Project(a)
            | Command::EvalKnn(a)
            | Command::EvalSvm(a)
            | Command::Pipeline(a)
            | Command::Neighbours(a) => a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classifier {
    Knn,
    Svm,
    Both,
}

impl FromStr for Classifier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "knn" => Ok(Classifier::Knn),
            "svm" => Ok(Classifier::Svm),
            "both" => Ok(Classifier::Both),
            other => Err(format!("unknown classifier {other:?} (expected knn, svm or both)")),
        }
    }
}

/// How the SVM regularisation strength is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Stratified 20% validation split of the training set.
    Holdout,
    /// Best test accuracy over the grid.
    TestSweep,
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "holdout" => Ok(Protocol::Holdout),
            "test-sweep" => Ok(Protocol::TestSweep),
            other => Err(format!("unknown protocol {other:?} (expected holdout or test-sweep)")),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Holdout => "holdout",
            Protocol::TestSweep => "test-sweep",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgdMode {
    Deterministic,
    Parallel,
}

impl FromStr for SgdMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deterministic" => Ok(SgdMode::Deterministic),
            "parallel" => Ok(SgdMode::Parallel),
            other => Err(format!("unknown sgd mode {other:?} (expected deterministic or parallel)")),
        }
    }
}

/// Flags shared by every subcommand. Each may also be set in the file given
/// by `--config`; flags on the command line win.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// key=value file supplying any of the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training set, one `label<TAB>text` per line.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Test set, same format.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Word vectors in text format.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// energy, hausdorff or wmd.
    #[arg(long)]
    pub metric: Option<MetricKind>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (falls back to EMAP_WORKERS, then all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset name used in RESULT lines.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub n_neighbors: Option<usize>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    pub min_dist: Option<f64>,
    #[arg(long)]
    pub spread: Option<f64>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub n_iters: Option<usize>,
    #[arg(long)]
    pub negative_sample_rate: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// knn, svm or both.
    #[arg(long)]
    pub classifier: Option<Classifier>,
    /// Neighbours for the kNN classifier.
    #[arg(long)]
    pub k: Option<usize>,
    /// Comma-separated SVM C values.
    #[arg(long, value_delimiter = ',')]
    pub c_grid: Option<Vec<f64>>,
    /// holdout or test-sweep.
    #[arg(long)]
    pub protocol: Option<Protocol>,
    /// Unpooled variance in the z-test.
    #[arg(long)]
    pub unpooled: bool,
    /// deterministic or parallel.
    #[arg(long)]
    pub sgd_mode: Option<SgdMode>,
    /// Distance matrix file (defaults to the one in the output directory).
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Sentence-embedding TSV (defaults to the one in the output directory).
    #[arg(long)]
    pub sentence_embeddings: Option<PathBuf>,
    /// Query document id for `neighbours`.
    #[arg(long)]
    pub query: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Ignore and do not populate the cache.
    #[arg(long)]
    pub no_cache: bool,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub metric: MetricKind,
    pub out: PathBuf,
    pub workers: usize,
    pub dataset: String,
    pub params: HyperParams,
    pub classifier: Classifier,
    pub k: usize,
    pub c_grid: Vec<f64>,
    pub protocol: Protocol,
    pub pooled: bool,
    pub sgd_mode: SgdMode,
    pub matrix: Option<PathBuf>,
    pub sentence_embeddings: Option<PathBuf>,
    pub query: Option<usize>,
    pub top_k: usize,
    pub use_cache: bool,
}

impl RunConfig {
    pub fn optimize_mode(&self) -> OptimizeMode {
        match self.sgd_mode {
            SgdMode::Deterministic => OptimizeMode::Deterministic,
            SgdMode::Parallel => OptimizeMode::Parallel { workers: self.workers },
        }
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
        value
            .as_deref()
            .ok_or_else(|| CliError::Usage(format!("--{flag} is required")))
    }
}

/// Parses a `key=value` file. Blank lines and `#` comments are skipped;
/// underscores in keys are read as dashes.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
        let key = key.trim().replace('_', "-");
        if map.insert(key.clone(), value.trim().to_owned()).is_some() {
            return Err(format!("line {}: duplicate key {key}", i + 1));
        }
    }
    Ok(map)
}

struct Layer {
    file: BTreeMap<String, String>,
}

impl Layer {
    fn pick<T: FromStr>(&mut self, cli: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        let from_file = self.file.remove(key);
        if cli.is_some() {
            return Ok(cli);
        }
        from_file
            .map(|raw| {
                raw.parse::<T>()
                    .map_err(|e| CliError::Usage(format!("config key {key}: {e}")))
            })
            .transpose()
    }

    fn flag(&mut self, cli: bool, key: &str) -> Result<bool, CliError> {
        Ok(self.pick(cli.then_some(true), key)?.unwrap_or(false))
    }

    fn grid(&mut self, cli: Option<Vec<f64>>, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        let from_file = self.file.remove(key);
        if cli.is_some() {
            return Ok(cli);
        }
        from_file
            .map(|raw| {
                raw.split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|e| CliError::Usage(format!("config key {key}: {e}")))
                    })
                    .collect()
            })
            .transpose()
    }
}

/// Resolves flags, then the config file, then `EMAP_WORKERS`, then defaults.
pub fn resolve(args: &RunArgs, env_workers: Option<String>) -> Result<RunConfig, CliError> {
    let file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            parse_config_file(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?
        }
        None => BTreeMap::new(),
    };
    let mut layer = Layer { file };
    let a = args.clone();
    let defaults = HyperParams::default();

    let train = layer.pick(a.train, "train")?;
    let test = layer.pick(a.test, "test")?;
    let embeddings = layer.pick(a.embeddings, "embeddings")?;
    let metric = layer.pick(a.metric, "metric")?.unwrap_or(MetricKind::Wmd);
    let out = layer.pick(a.out, "out")?.unwrap_or_else(|| PathBuf::from("out"));
    let workers = match layer.pick(a.workers, "workers")? {
        Some(w) => w,
        None => match env_workers {
            Some(raw) => raw
                .trim()
                .parse()
                .map_err(|e| CliError::Usage(format!("{WORKERS_ENV}: {e}")))?,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    };
    if workers == 0 {
        return Err(CliError::Usage("worker count must be at least 1".to_owned()));
    }
    let seed = layer.pick(a.seed, "seed")?.unwrap_or(defaults.seed);
    let dataset = layer.pick(a.dataset, "dataset")?;
    let params = HyperParams {
        n_neighbors: layer.pick(a.n_neighbors, "n-neighbors")?.unwrap_or(defaults.n_neighbors),
        embedding_dim: layer.pick(a.embedding_dim, "embedding-dim")?.unwrap_or(defaults.embedding_dim),
        min_dist: layer.pick(a.min_dist, "min-dist")?.unwrap_or(defaults.min_dist),
        spread: layer.pick(a.spread, "spread")?.unwrap_or(defaults.spread),
        a: layer.pick(a.a, "a")?.unwrap_or(defaults.a),
        b: layer.pick(a.b, "b")?.unwrap_or(defaults.b),
        n_iters: layer.pick(a.n_iters, "n-iters")?.unwrap_or(defaults.n_iters),
        negative_sample_rate: layer
            .pick(a.negative_sample_rate, "negative-sample-rate")?
            .unwrap_or(defaults.negative_sample_rate),
        initial_learning_rate: layer
            .pick(a.learning_rate, "learning-rate")?
            .unwrap_or(defaults.initial_learning_rate),
        seed,
    };
    params
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let classifier = layer.pick(a.classifier, "classifier")?.unwrap_or(Classifier::Both);
    let k = layer.pick(a.k, "k")?.unwrap_or(1);
    if k == 0 {
        return Err(CliError::Usage("k must be at least 1".to_owned()));
    }
    let c_grid = layer.grid(a.c_grid, "c-grid")?.unwrap_or_else(|| DEFAULT_C_GRID.to_vec());
    if c_grid.is_empty() || c_grid.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
        return Err(CliError::Usage("C grid must be non-empty and positive".to_owned()));
    }
    let protocol = layer.pick(a.protocol, "protocol")?.unwrap_or(Protocol::Holdout);
    let pooled = !layer.flag(a.unpooled, "unpooled")?;
    let sgd_mode = layer.pick(a.sgd_mode, "sgd-mode")?.unwrap_or(SgdMode::Deterministic);
    let matrix = layer.pick(a.matrix, "matrix")?;
    let sentence_embeddings = layer.pick(a.sentence_embeddings, "sentence-embeddings")?;
    let query = layer.pick(a.query, "query")?;
    let top_k = layer.pick(a.top_k, "top-k")?.unwrap_or(10);
    let use_cache = !layer.flag(a.no_cache, "no-cache")?;

    if let Some(key) = layer.file.keys().next() {
        return Err(CliError::Usage(format!("unknown config key {key}")));
    }

    let dataset = dataset.unwrap_or_else(|| {
        train
            .as_deref()
            .and_then(Path::file_stem)
            .map_or_else(|| "dataset".to_owned(), |s| s.to_string_lossy().into_owned())
    });

    Ok(RunConfig {
        train,
        test,
        embeddings,
        metric,
        out,
        workers,
        dataset,
        params,
        classifier,
        k,
        c_grid,
        protocol,
        pooled,
        sgd_mode,
        matrix,
        sentence_embeddings,
        query,
        top_k,
        use_cache,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn args(list: &[&str]) -> RunArgs {
        let mut full = vec!["emap", "pipeline"];
        full.extend_from_slice(list);
        match Cli::try_parse_from(full).unwrap().command {
            Command::Pipeline(a) => a,
            _ => unreachable!(),
        }
    }

    fn config_file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn defaults() {
        let cfg = resolve(&args(&[]), None).unwrap();
        assert_eq!(cfg.metric, MetricKind::Wmd);
        assert_eq!(cfg.params, HyperParams::default());
        assert_eq!(cfg.classifier, Classifier::Both);
        assert_eq!(cfg.c_grid, DEFAULT_C_GRID.to_vec());
        assert!(cfg.pooled && cfg.use_cache);
        assert!(cfg.workers >= 1);
    }

    #[test]
    fn precedence_cli_over_file_over_env() {
        let f = config_file("metric=energy\nworkers=3\nn_neighbors=7\n# comment\nc-grid=0.5, 2\n");
        let path = f.path().to_str().unwrap();
        let cfg = resolve(&args(&["--config", path]), Some("5".into())).unwrap();
        assert_eq!((cfg.metric, cfg.workers, cfg.params.n_neighbors), (MetricKind::Energy, 3, 7));
        assert_eq!(cfg.c_grid, vec![0.5, 2.0]);
        let cfg = resolve(&args(&["--config", path, "--workers", "2", "--metric", "hausdorff"]), None).unwrap();
        assert_eq!((cfg.metric, cfg.workers), (MetricKind::Hausdorff, 2));
        let cfg = resolve(&args(&[]), Some("6".into())).unwrap();
        assert_eq!(cfg.workers, 6);
    }

    #[test]
    fn usage_errors() {
        let bad_metric = config_file("metric=cosine\n");
        let unknown = config_file("colour=blue\n");
        for f in [&bad_metric, &unknown] {
            let err = resolve(&args(&["--config", f.path().to_str().unwrap()]), None).unwrap_err();
            assert!(matches!(err, CliError::Usage(_)), "{err:?}");
        }
        assert!(matches!(resolve(&args(&["--workers", "0"]), None), Err(CliError::Usage(_))));
        assert!(matches!(resolve(&args(&[]), Some("many".into())), Err(CliError::Usage(_))));
        assert!(matches!(resolve(&args(&["--n-neighbors", "1"]), None), Err(CliError::Usage(_))));
        assert!(Cli::try_parse_from(["emap", "pipeline", "--metric", "cosine"]).is_err());
    }

    #[test]
    fn config_parser() {
        let map = parse_config_file("a = 1\n\n#x=2\nsgd_mode=parallel\n").unwrap();
        assert_eq!(map.get("a").map(String::as_str), Some("1"));
        assert_eq!(map.get("sgd-mode").map(String::as_str), Some("parallel"));
        assert!(parse_config_file("novalue\n").is_err());
        assert!(parse_config_file("a=1\na=2\n").is_err());
    }

    #[test]
    fn dataset_name_from_train_file() {
        let cfg = resolve(&args(&["--train", "/data/bbcsport.tsv"]), None).unwrap();
        assert_eq!(cfg.dataset, "bbcsport");
    }
}
