//! On-disk formats written next to the distance matrix and embeddings.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use emap_core::{EmbeddingMatrix, MetricKind, Split};

/// One matrix or embedding row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowRecord {
    pub doc_id: usize,
    pub split: Split,
    pub label: String,
}

pub fn matrix_path(out: &Path, metric: MetricKind) -> PathBuf {
    out.join(format!("distances-{metric}.emapdm"))
}

pub fn embedding_path(out: &Path, metric: MetricKind) -> PathBuf {
    out.join(format!("embedding-{metric}.tsv"))
}

pub fn report_path(out: &Path, metric: MetricKind, method: &str) -> PathBuf {
    out.join(format!("report-{metric}-{method}.txt"))
}

/// `<path>.<suffix>`, keeping the original extension.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name: OsString = path.as_os_str().to_owned();
    name.push(".");
    name.push(suffix);
    PathBuf::from(name)
}

pub fn rows_path(matrix: &Path) -> PathBuf {
    sidecar(matrix, "rows.tsv")
}

pub fn meta_path(embedding: &Path) -> PathBuf {
    sidecar(embedding, "meta")
}

const ROWS_HEADER: &str = "row\tdoc_id\tsplit\tlabel";

pub fn write_rows(path: &Path, rows: &[RowRecord]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{ROWS_HEADER}")?;
    for (i, r) in rows.iter().enumerate() {
        writeln!(w, "{i}\t{}\t{}\t{}", r.doc_id, r.split, r.label)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<RowRecord>> {
    let reader = open(path)?;
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.with_context(|| format!("{}: line {}", path.display(), i + 1))?;
        if i == 0 {
            if line != ROWS_HEADER {
                bail!("{}: line 1: unexpected header", path.display());
            }
            continue;
        }
        let fields: Vec<&str> = line.splitn(4, '\t').collect();
        let parsed = (|| -> Result<RowRecord> {
            if fields.len() != 4 {
                bail!("expected 4 fields");
            }
            if fields[0].parse::<usize>()? != rows.len() {
                bail!("rows out of order");
            }
            Ok(RowRecord {
                doc_id: fields[1].parse()?,
                split: fields[2].parse().map_err(anyhow::Error::msg)?,
                label: fields[3].to_owned(),
            })
        })();
        rows.push(parsed.with_context(|| format!("{}: line {}", path.display(), i + 1))?);
    }
    Ok(rows)
}

/// Formats like C's `%.9g`.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_owned();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..9).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        return format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (8 - exp) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_owned()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_embedding(path: &Path, rows: &[RowRecord], embedding: &EmbeddingMatrix) -> Result<()> {
    if rows.len() != embedding.rows() {
        bail!("{} row records for {} embedding rows", rows.len(), embedding.rows());
    }
    let mut w = create(path)?;
    write!(w, "doc_id\tlabel\tsplit")?;
    for c in 0..embedding.dim() {
        write!(w, "\tx{c}")?;
    }
    writeln!(w)?;
    for (i, r) in rows.iter().enumerate() {
        write!(w, "{}\t{}\t{}", r.doc_id, r.label, r.split)?;
        for &x in embedding.row(i) {
            write!(w, "\t{}", format_sig9(x))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embedding(path: &Path) -> Result<(Vec<RowRecord>, EmbeddingMatrix)> {
    let reader = open(path)?;
    let mut rows = Vec::new();
    let mut values = Vec::new();
    let mut dim = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.with_context(|| format!("{}: line {line_no}", path.display()))?;
        let fields: Vec<&str> = line.split('\t').collect();
        if i == 0 {
            if fields.len() < 4 || fields[..3] != ["doc_id", "label", "split"] {
                bail!("{}: line 1: unexpected header", path.display());
            }
            dim = Some(fields.len() - 3);
            continue;
        }
        let dim = dim.expect("header read");
        if fields.len() != dim + 3 {
            bail!(
                "{}: line {line_no}: expected {} fields, found {}",
                path.display(),
                dim + 3,
                fields.len()
            );
        }
        let record = (|| -> Result<RowRecord> {
            Ok(RowRecord {
                doc_id: fields[0].parse()?,
                label: fields[1].to_owned(),
                split: fields[2].parse().map_err(anyhow::Error::msg)?,
            })
        })()
        .with_context(|| format!("{}: line {line_no}", path.display()))?;
        rows.push(record);
        for f in &fields[3..] {
            let x: f64 = f
                .parse()
                .with_context(|| format!("{}: line {line_no}: bad coordinate {f:?}", path.display()))?;
            values.push(x);
        }
    }
    let Some(dim) = dim else {
        bail!("{}: empty embedding file", path.display());
    };
    let matrix = EmbeddingMatrix::new(rows.len(), dim, values)
        .with_context(|| format!("{}", path.display()))?;
    Ok((rows, matrix))
}

pub fn write_key_values(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    let mut w = create(path)?;
    for (k, v) in pairs {
        writeln!(w, "{k}={v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.0), "1");
        assert_eq!(format_sig9(-2.5), "-2.5");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(123456.7891), "123456.789");
        assert_eq!(format_sig9(9.9999999999), "10");
        assert_eq!(format_sig9(1.5e-7), "1.5e-07");
        assert_eq!(format_sig9(2.0e12), "2e+12");
    }

    #[test]
    fn sidecar_names() {
        let m = matrix_path(Path::new("out"), MetricKind::Wmd);
        assert_eq!(m, Path::new("out/distances-wmd.emapdm"));
        assert_eq!(rows_path(&m), Path::new("out/distances-wmd.emapdm.rows.tsv"));
    }

    #[test]
    fn rows_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.tsv");
        let rows = vec![
            RowRecord { doc_id: 0, split: Split::Train, label: "a".into() },
            RowRecord { doc_id: 3, split: Split::Test, label: "b c".into() },
        ];
        write_rows(&path, &rows).unwrap();
        assert_eq!(read_rows(&path).unwrap(), rows);
        fs::write(&path, "row\tdoc_id\tsplit\tlabel\n0\t1\tdev\tx\n").unwrap();
        let err = read_rows(&path).unwrap_err();
        assert!(format!("{err:#}").contains("line 2"), "{err:#}");
    }

    #[test]
    fn embedding_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.tsv");
        let rows = vec![
            RowRecord { doc_id: 0, split: Split::Train, label: "x".into() },
            RowRecord { doc_id: 1, split: Split::Test, label: "y".into() },
        ];
        let e = EmbeddingMatrix::from_rows(&[vec![0.1, -2.0], vec![3.25, 1e-9]]).unwrap();
        write_embedding(&path, &rows, &e).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("doc_id\tlabel\tsplit\tx0\tx1\n0\tx\ttrain\t0.1\t-2\n"));
        let (r, m) = read_embedding(&path).unwrap();
        assert_eq!(r, rows);
        assert_eq!(m, e);
        fs::write(&path, "doc_id\tlabel\tsplit\tx0\n0\tx\ttrain\t1\t2\n").unwrap();
        assert!(format!("{:#}", read_embedding(&path).unwrap_err()).contains("line 2"));
    }

    proptest! {
        #[test]
        fn sig9_keeps_nine_digits(x in -1e12f64..1e12) {
            let parsed: f64 = format_sig9(x).parse().unwrap();
            prop_assert!((parsed - x).abs() <= 5e-9 * x.abs().max(f64::MIN_POSITIVE));
        }
    }
}
