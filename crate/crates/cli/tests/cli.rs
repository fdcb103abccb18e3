use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ctxlm::corpus::write_corpus;
use ctxlm::{CaseFrame, DialogueContext, TaskParameter, Token, Utterance};

fn ctxlm(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctxlm"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr_line(o: &Output) -> String {
    let s = String::from_utf8_lossy(&o.stderr).to_string();
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines.len(), 1, "expected a single error line, got {s:?}");
    lines[0].to_string()
}

#[test]
fn config_errors_are_one_parseable_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[recognizer]\nnbest = 0\n").unwrap();
    let o = ctxlm(dir.path(), &["--config", cfg.to_str().unwrap(), "compare"]);
    assert!(!o.status.success());
    let line = stderr_line(&o);
    let fields: Vec<&str> = line.split('\t').collect();
    assert_eq!(fields[..2], ["ERROR", "config"]);
    assert!(fields[2].contains("recognizer.nbest"), "{line}");

    fs::write(&cfg, "[corpus]\nscael = 2\n").unwrap();
    let o = ctxlm(dir.path(), &["--config", cfg.to_str().unwrap(), "gen-corpus"]);
    assert!(stderr_line(&o).starts_with("ERROR\tconfig\t"));
}

#[test]
fn missing_inputs_and_bad_usage_fail() {
    let dir = tempfile::tempdir().unwrap();
    let o = ctxlm(dir.path(), &["eval-pp", "--models", "/nonexistent/models.tsv"]);
    assert!(!o.status.success());
    assert!(stderr_line(&o).starts_with("ERROR\tio\t"));

    let o = ctxlm(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_line(&o).starts_with("ERROR\tusage\t"));

    let bad = dir.path().join("bad.tsv");
    fs::write(&bad, "only\ttwo\n").unwrap();
    let o = ctxlm(dir.path(), &["train", "--train", bad.to_str().unwrap()]);
    assert!(stderr_line(&o).starts_with("ERROR\tparse\t"));
}

#[test]
fn generation_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(ctxlm(&a, &["--seed", "4", "gen-corpus"]).status.success());
    assert!(ctxlm(&b, &["--seed", "4", "gen-corpus"]).status.success());
    assert!(ctxlm(&c, &["--seed", "5", "gen-corpus"]).status.success());
    let read = |d: &Path| fs::read(d.join("corpus.tsv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let listed = fs::read_to_string(a.join("gen-corpus.manifest")).unwrap();
    assert_eq!(listed.lines().count(), 3);
}

#[test]
fn train_writes_eleven_model_pairs_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert!(ctxlm(out, &["gen-corpus"]).status.success());
    let train = out.join("train.tsv");
    let o = ctxlm(out, &["train", "--train", train.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = out.join("models").join("models.tsv");
    let rows = fs::read_to_string(&manifest).unwrap();
    assert_eq!(rows.lines().count(), 11);
    assert!(rows.lines().next().unwrap().starts_with("CONTEXT_INDEPENDENT\t"));
    for f in fs::read_to_string(out.join("train.manifest")).unwrap().lines() {
        assert!(Path::new(f).is_file(), "{f}");
    }

    let test = out.join("test.tsv");
    let o = ctxlm(
        out,
        &[
            "eval-pp",
            "--models",
            manifest.to_str().unwrap(),
            "--test",
            test.to_str().unwrap(),
        ],
    );
    assert!(o.status.success());
    let table = fs::read_to_string(out.join("eval-pp.tsv")).unwrap();
    let global: Vec<f64> = table
        .lines()
        .find(|l| l.starts_with("Global\t"))
        .unwrap()
        .split('\t')
        .skip(3)
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(global[1] < global[0], "{table}");
}

#[test]
fn cluster_words_writes_requested_class_count() {
    let dir = tempfile::tempdir().unwrap();
    let corpus: Vec<Utterance> = (0..1200)
        .map(|i| Utterance {
            id: i.to_string(),
            context: DialogueContext::request(&[TaskParameter::DepCity]),
            ref_frame: CaseFrame::default(),
            tokens: (0..4)
                .map(|j| Token::new(&format!("w{}", (i * 7 + j * 13) % 360)).unwrap())
                .collect(),
        })
        .collect();
    let path = dir.path().join("train.tsv");
    let mut buf = Vec::new();
    write_corpus(&mut buf, &corpus).unwrap();
    fs::write(&path, buf).unwrap();
    let o = ctxlm(
        dir.path(),
        &["cluster-words", "--train", path.to_str().unwrap(), "--classes", "120"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("words=361\tK=120"), "{stdout}");
    let map = fs::read_to_string(dir.path().join("classes.txt")).unwrap();
    assert_eq!(map.lines().next(), Some("K=120"));
}

#[test]
fn repl_verifies_typed_cities() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("user.txt");
    fs::write(&input, "from milano to roma\n").unwrap();
    let o = ctxlm(dir.path(), &["repl", "--input", input.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    let system: Vec<&str> = text.lines().filter(|l| l.starts_with("S[")).collect();
    assert!(system[0].contains("(DA-REQUEST=dep-city,arr-city; active LM: DA-REQUEST dep-city, arr-city)"));
    assert!(
        system[1].contains("(DA-VERIFY=dep-city,arr-city; active LM: DA-VERIFY dep-city, arr-city)"),
        "{text}"
    );
    assert!(text.lines().any(|l| l.starts_with("U[1] from milano to roma")));
}
