use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use emap_testkit::{clustered_corpus, CorpusFiles};

fn emap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emap"))
        .args(args)
        .env("RUST_LOG", "info")
        .env_remove("EMAP_WORKERS")
        .output()
        .expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn corpus(dir: &Path) -> CorpusFiles {
    clustered_corpus(5, 60, 3, 6, 10.0, 1.0).write_to(dir, 45).unwrap()
}

fn base_args<'a>(files: &'a CorpusFiles, out: &'a str) -> Vec<&'a str> {
    vec![
        "--train",
        files.train.to_str().unwrap(),
        "--test",
        files.test.to_str().unwrap(),
        "--embeddings",
        files.embeddings.to_str().unwrap(),
        "--out",
        out,
        "--n-neighbors",
        "8",
        "--embedding-dim",
        "2",
        "--n-iters",
        "100",
        "--workers",
        "1",
    ]
}

#[test]
fn pipeline_reports_and_caches() {
    let dir = tempfile::tempdir().unwrap();
    let files = corpus(dir.path());
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let mut args = vec!["pipeline"];
    args.extend(base_args(&files, out));
    args.extend(["--dataset", "toy"]);

    let first = emap(&args);
    assert_eq!(first.status.code(), Some(0), "{}", text(&first.stderr));
    let stdout = text(&first.stdout);
    assert!(stdout.contains("RESULT dataset=toy metric=wmd method=knn accuracy="), "{stdout}");
    assert!(stdout.contains("RESULT dataset=toy metric=wmd method=emap accuracy="), "{stdout}");
    assert!(stdout.contains("ZTEST dataset=toy metric=wmd"), "{stdout}");
    assert!(!text(&first.stderr).contains("cache hit"));
    for name in [
        "distances-wmd.emapdm",
        "distances-wmd.emapdm.rows.tsv",
        "embedding-wmd.tsv",
        "embedding-wmd.tsv.meta",
        "report-wmd-knn.txt",
        "report-wmd-emap.txt",
    ] {
        assert!(Path::new(out).join(name).is_file(), "{name}");
    }
    let meta = fs::read_to_string(Path::new(out).join("embedding-wmd.tsv.meta")).unwrap();
    assert!(meta.contains("spectral_fallback=false\n") && meta.contains("a=1.929\n"), "{meta}");

    let second = emap(&args);
    assert_eq!(second.status.code(), Some(0));
    assert!(text(&second.stderr).contains("cache hit: wmd distances"), "{}", text(&second.stderr));
    assert!(text(&second.stderr).contains("cache hit: projection"));
    assert_eq!(first.stdout, second.stdout);

    // A changed input must miss the cache.
    fs::write(&files.test, fs::read_to_string(&files.test).unwrap().replacen("c0\t", "c1\t", 1)).unwrap();
    let third = emap(&args);
    assert_eq!(third.status.code(), Some(0));
    assert!(!text(&third.stderr).contains("cache hit: wmd distances"));
}

#[test]
fn stepwise_commands() {
    let dir = tempfile::tempdir().unwrap();
    let files = corpus(dir.path());
    let out_dir = dir.path().join("out");
    let out = out_dir.to_str().unwrap();
    let run = |cmd: &str, extra: &[&str]| {
        let mut args = vec![cmd];
        args.extend(base_args(&files, out));
        args.extend(extra);
        emap(&args)
    };

    let d = run("distances", &["--metric", "energy"]);
    assert_eq!(d.status.code(), Some(0), "{}", text(&d.stderr));
    let matrix = out_dir.join("distances-energy.emapdm");
    assert_eq!(fs::read(&matrix).unwrap().len(), 21 + 60 * 60 * 8);

    let p = run("project", &["--metric", "energy"]);
    assert_eq!(p.status.code(), Some(0), "{}", text(&p.stderr));
    let tsv = fs::read_to_string(out_dir.join("embedding-energy.tsv")).unwrap();
    let lines: Vec<&str> = tsv.lines().collect();
    assert_eq!(lines.len(), 61);
    assert_eq!(lines[0], "doc_id\tlabel\tsplit\tx0\tx1");
    assert!(lines[1].starts_with("0\tc0\ttrain\t"));
    assert!(lines[60].starts_with("59\tc2\ttest\t"));

    let k = run("eval-knn", &["--metric", "energy", "--k", "3"]);
    assert_eq!(k.status.code(), Some(0));
    assert!(text(&k.stdout).starts_with("RESULT dataset=train metric=energy method=knn"));

    let s = run("eval-svm", &["--metric", "energy", "--protocol", "test-sweep", "--c-grid", "0.1,1"]);
    assert_eq!(s.status.code(), Some(0), "{}", text(&s.stderr));
    let report = fs::read_to_string(out_dir.join("report-energy-emap.txt")).unwrap();
    assert!(report.contains("protocol=test-sweep\n"));

    let n = run("neighbours", &["--metric", "energy", "--query", "4", "--top-k", "3"]);
    assert_eq!(n.status.code(), Some(0));
    let shown = text(&n.stdout);
    assert_eq!(shown.lines().count(), 4);
    assert!(shown.starts_with("QUERY\t4\tc1\t"));

    // Labels that disagree with the dataset are rejected.
    fs::write(&files.test, fs::read_to_string(&files.test).unwrap().replace("c0\t", "c9\t")).unwrap();
    let bad = run("eval-svm", &["--metric", "energy"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(text(&bad.stderr).contains("dataset says"), "{}", text(&bad.stderr));
}

#[test]
fn corrupt_matrix_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let files = corpus(dir.path());
    let out_dir = dir.path().join("out");
    let out = out_dir.to_str().unwrap();
    let mut args = vec!["distances"];
    args.extend(base_args(&files, out));
    assert_eq!(emap(&args).status.code(), Some(0));
    let matrix = out_dir.join("distances-wmd.emapdm");
    let bytes = fs::read(&matrix).unwrap();
    fs::write(&matrix, &bytes[..bytes.len() - 5]).unwrap();
    let mut args = vec!["project"];
    args.extend(base_args(&files, out));
    let res = emap(&args);
    assert_eq!(res.status.code(), Some(1));
    assert!(text(&res.stderr).contains("corrupt"), "{}", text(&res.stderr));
}

#[test]
fn usage_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let files = corpus(dir.path());
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let mut args = vec!["pipeline"];
    args.extend(base_args(&files, out));
    args.extend(["--metric", "cosine"]);
    assert_eq!(emap(&args).status.code(), Some(2));

    let config = dir.path().join("run.cfg");
    fs::write(&config, "metric=cosine\n").unwrap();
    let mut args = vec!["pipeline"];
    args.extend(base_args(&files, out));
    args.extend(["--config", config.to_str().unwrap()]);
    assert_eq!(emap(&args).status.code(), Some(2));

    assert_eq!(emap(&["distances", "--out", out]).status.code(), Some(2));
    assert_eq!(emap(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(emap(&["neighbours", "--out", out]).status.code(), Some(2));

    let empty = dir.path().join("empty.tsv");
    fs::write(&empty, "").unwrap();
    let res = emap(&[
        "distances",
        "--train",
        empty.to_str().unwrap(),
        "--test",
        files.test.to_str().unwrap(),
        "--embeddings",
        files.embeddings.to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_eq!(res.status.code(), Some(1));

    let broken = dir.path().join("broken.tsv");
    fs::write(&broken, "a\tgood line\nno tab here\n").unwrap();
    let res = emap(&[
        "distances",
        "--train",
        broken.to_str().unwrap(),
        "--test",
        files.test.to_str().unwrap(),
        "--embeddings",
        files.embeddings.to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_eq!(res.status.code(), Some(1));
    let err = text(&res.stderr);
    assert!(err.contains("broken.tsv") && err.contains("line 2"), "{err}");
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let files = corpus(dir.path());
    let out = dir.path().join("cfg-out");
    let config = dir.path().join("run.cfg");
    fs::write(
        &config,
        format!(
            "train={}\ntest={}\nembeddings={}\nout={}\nmetric=hausdorff\nworkers=2\n",
            files.train.display(),
            files.test.display(),
            files.embeddings.display(),
            out.display()
        ),
    )
    .unwrap();
    let res = emap(&["distances", "--config", config.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", text(&res.stderr));
    assert!(out.join("distances-hausdorff.emapdm").is_file());
}

#[test]
fn skipped_documents_are_logged() {
    let dir = tempfile::tempdir().unwrap();
    let files = corpus(dir.path());
    let mut train = fs::read_to_string(&files.train).unwrap();
    train.push_str("c0\tunknown tokens only\n");
    fs::write(&files.train, train).unwrap();
    let out = dir.path().join("out");
    let mut args = vec!["distances"];
    args.extend(base_args(&files, out.to_str().unwrap()));
    let res = emap(&args);
    assert_eq!(res.status.code(), Some(0));
    assert!(text(&res.stderr).contains("skipped 1 documents with no known words: 45"), "{}", text(&res.stderr));
    let rows = fs::read_to_string(out.join("distances-wmd.emapdm.rows.tsv")).unwrap();
    assert_eq!(rows.lines().count(), 61);
    assert!(!rows.contains("\t45\t"));
}
