//! Word-vector tables, labelled datasets and sentence clouds.
//!
//! Word vectors are read from the plain text layout used by GloVe and by
//! word2vec's text output: an optional `N d` shape line followed by one
//! `word c1 ... cd` line per word. Binary word2vec files must be converted
//! to this layout first.
//!
//! Datasets are UTF-8 TSV files with one `label<TAB>text` document per line.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

/// Tolerance on the sum of cloud weights.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: expected {expected} vector components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: duplicate word {word:?}")]
    DuplicateWord { line: usize, word: String },
    #[error("embedding table is empty")]
    EmptyTable,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("document {doc_id} has no in-vocabulary tokens")]
    EmptyCloud { doc_id: usize },
    #[error("invalid sentence cloud: {0}")]
    InvalidCloud(String),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

fn io_error(path: &Path, source: io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Vocabulary mapped onto a dense `N x d` matrix of word vectors.
///
/// Vectors are stored as `f32`; all distance computations widen to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddingTable {
    words: Vec<String>,
    vocab: HashMap<String, usize>,
    vectors: Vec<f32>,
    dim: usize,
}

impl WordEmbeddingTable {
    /// Builds a table from `(word, vector)` rows, enforcing the table invariants.
    pub fn from_rows<I, S>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        let mut builder = TableBuilder::default();
        for (line, (word, vector)) in rows.into_iter().enumerate() {
            builder.push(line + 1, word.into(), &vector)?;
        }
        builder.finish()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.vocab.get(word).copied()
    }

    pub fn word(&self, index: usize) -> &str {
        &self.words[index]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Vector of the word at `index`.
    ///
    /// Panics if `index >= self.len()`.
    pub fn vector(&self, index: usize) -> &[f32] {
        &self.vectors[index * self.dim..(index + 1) * self.dim]
    }

    /// Writes the table in text format with an `N d` header line.
    ///
    /// Components use the shortest decimal form that parses back to the same
    /// `f32`, so reading the output reproduces the table bit for bit.
    pub fn write_text<W: Write>(&self, mut writer: W) -> io::Result<()> {
        writeln!(writer, "{} {}", self.len(), self.dim)?;
        for (index, word) in self.words.iter().enumerate() {
            write!(writer, "{word}")?;
            for component in self.vector(index) {
                write!(writer, " {component}")?;
            }
            writeln!(writer)?;
        }
        writer.flush()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| io_error(path, e))?;
        self.write_text(BufWriter::new(file))
            .map_err(|e| io_error(path, e))
    }
}

#[derive(Default)]
struct TableBuilder {
    words: Vec<String>,
    vocab: HashMap<String, usize>,
    vectors: Vec<f32>,
    dim: Option<usize>,
}

impl TableBuilder {
    fn push(&mut self, line: usize, word: String, vector: &[f32]) -> Result<()> {
        if vector.is_empty() {
            return Err(CorpusError::Parse {
                line,
                message: format!("word {word:?} has no vector components"),
            });
        }
        let dim = *self.dim.get_or_insert(vector.len());
        if vector.len() != dim {
            return Err(CorpusError::DimensionMismatch {
                line,
                expected: dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|c| !c.is_finite()) {
            return Err(CorpusError::Parse {
                line,
                message: format!("word {word:?} has a non-finite component"),
            });
        }
        if self.vocab.contains_key(&word) {
            return Err(CorpusError::DuplicateWord { line, word });
        }
        self.vocab.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.vectors.extend_from_slice(vector);
        Ok(())
    }

    fn finish(self) -> Result<WordEmbeddingTable> {
        let dim = self.dim.ok_or(CorpusError::EmptyTable)?;
        Ok(WordEmbeddingTable {
            words: self.words,
            vocab: self.vocab,
            vectors: self.vectors,
            dim,
        })
    }
}

/// Returns the `(N, d)` shape if `line` is a header: exactly two integer fields.
fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut fields = line.split_whitespace();
    let n = fields.next()?.parse().ok()?;
    let d = fields.next()?.parse().ok()?;
    match fields.next() {
        None => Some((n, d)),
        Some(_) => None,
    }
}

/// Reads a word-vector table in text format.
///
/// Blank lines are ignored. When an `N d` header is present, every vector must
/// have `d` components and exactly `N` words must follow.
pub fn read_embeddings<R: BufRead>(reader: R) -> Result<WordEmbeddingTable> {
    let mut builder = TableBuilder::default();
    let mut header = None;
    let mut components = Vec::new();

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        if line_no == 1 {
            if let Some((n, d)) = parse_header(&line) {
                builder.dim = Some(d);
                header = Some(n);
                continue;
            }
        }

        let mut fields = line.split_whitespace();
        let word = fields.next().unwrap_or_default().to_owned();
        components.clear();
        for field in fields {
            let value = field.parse::<f32>().map_err(|_| CorpusError::Parse {
                line: line_no,
                message: format!("cannot parse {field:?} as a real number"),
            })?;
            components.push(value);
        }
        builder.push(line_no, word, &components)?;
    }

    if let Some(n) = header {
        if n != builder.words.len() {
            return Err(CorpusError::Parse {
                line: 1,
                message: format!(
                    "header declares {n} words but {} were read",
                    builder.words.len()
                ),
            });
        }
    }
    if builder.words.is_empty() {
        return Err(CorpusError::EmptyTable);
    }
    builder.finish()
}

pub fn load_embeddings(path: &Path) -> Result<WordEmbeddingTable> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    read_embeddings(BufReader::new(file))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDocument {
    pub id: usize,
    pub label: String,
    pub text: String,
    pub split: Split,
}

/// Parses `label<TAB>text` lines, numbering documents from `first_id`.
pub fn read_dataset<R: BufRead>(
    reader: R,
    split: Split,
    first_id: usize,
) -> Result<Vec<LabeledDocument>> {
    let mut documents = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        let (label, text) = line.split_once('\t').ok_or_else(|| CorpusError::Parse {
            line: line_no,
            message: "missing TAB between label and text".to_owned(),
        })?;
        if label.is_empty() {
            return Err(CorpusError::Parse {
                line: line_no,
                message: "empty label".to_owned(),
            });
        }
        if text.trim().is_empty() {
            return Err(CorpusError::Parse {
                line: line_no,
                message: "empty text".to_owned(),
            });
        }
        documents.push(LabeledDocument {
            id: first_id + documents.len(),
            label: label.to_owned(),
            text: text.to_owned(),
            split,
        });
    }
    if documents.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    Ok(documents)
}

/// Loads a TSV dataset; documents are numbered `0..n` in file order.
pub fn load_dataset(path: &Path, split: Split) -> Result<Vec<LabeledDocument>> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    read_dataset(BufReader::new(file), split, 0)
}

/// Lowercases `text` and splits it on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|token| !token.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// A sentence as a normalised bag of unique in-vocabulary words.
///
/// `word_indices` is sorted ascending; `weights[i]` is the term frequency of
/// `word_indices[i]` divided by the number of in-vocabulary tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceCloud {
    doc_id: usize,
    word_indices: Vec<usize>,
    weights: Vec<f64>,
    length: usize,
}

impl SentenceCloud {
    /// Builds a cloud from `(word index, count)` pairs.
    pub fn from_counts(doc_id: usize, counts: &[(usize, usize)]) -> Result<Self> {
        let mut merged = BTreeMap::new();
        for &(index, count) in counts {
            if count > 0 {
                *merged.entry(index).or_insert(0usize) += count;
            }
        }
        let length: usize = merged.values().sum();
        if length == 0 {
            return Err(CorpusError::EmptyCloud { doc_id });
        }
        let total = length as f64;
        Ok(SentenceCloud {
            doc_id,
            word_indices: merged.keys().copied().collect(),
            weights: merged.values().map(|&c| c as f64 / total).collect(),
            length,
        })
    }

    /// Builds a cloud from explicit normalised weights.
    ///
    /// Indices must be unique and weights strictly positive with unit sum.
    /// The token length is taken to be the number of words.
    pub fn from_weights(doc_id: usize, word_indices: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if word_indices.is_empty() {
            return Err(CorpusError::EmptyCloud { doc_id });
        }
        if word_indices.len() != weights.len() {
            return Err(CorpusError::InvalidCloud(format!(
                "{} indices but {} weights",
                word_indices.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(CorpusError::InvalidCloud(
                "weights must be finite and strictly positive".to_owned(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(CorpusError::InvalidCloud(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        let mut pairs: Vec<(usize, f64)> = word_indices.into_iter().zip(weights).collect();
        pairs.sort_by_key(|&(index, _)| index);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(CorpusError::InvalidCloud("duplicate word index".to_owned()));
        }
        let length = pairs.len();
        let (word_indices, weights) = pairs.into_iter().unzip();
        Ok(SentenceCloud {
            doc_id,
            word_indices,
            weights,
            length,
        })
    }

    pub fn doc_id(&self) -> usize {
        self.doc_id
    }

    pub fn word_indices(&self) -> &[usize] {
        &self.word_indices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of in-vocabulary tokens the cloud was built from.
    pub fn length(&self) -> usize {
        self.length
    }

    /// Number of unique words.
    pub fn len(&self) -> usize {
        self.word_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_indices.is_empty()
    }
}

/// Converts tokens to a cloud, dropping out-of-vocabulary tokens.
pub fn to_cloud<S: AsRef<str>>(
    tokens: &[S],
    table: &WordEmbeddingTable,
    doc_id: usize,
) -> Result<SentenceCloud> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for token in tokens {
        if let Some(index) = table.index_of(token.as_ref()) {
            *counts.entry(index).or_insert(0) += 1;
        }
    }
    let counts: Vec<(usize, usize)> = counts.into_iter().collect();
    SentenceCloud::from_counts(doc_id, &counts)
}
