use std::path::Path;
use std::process::{Command, Output};

fn pdspeech(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdspeech")).args(args).env("RUST_LOG", "error").output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_corpus(dir: &Path, seed: &str) {
    let out = pdspeech(&["synth", "--seed", seed, "--out", p(dir), "--subjects-per-group", "3", "--segments-per-subject", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for sub in ["", "audio"] {
        let mut names: Vec<_> = std::fs::read_dir(dir.join(sub))
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|path| path.is_file())
            .collect();
        names.sort();
        for f in names {
            files.push((f.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&f).unwrap()));
        }
    }
    files
}

#[test]
fn missing_config_fails_and_names_file() {
    let out = pdspeech(&["evaluate", "--config", "missing.json"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing.json"), "{err}");
    assert!(err.contains("stage config"), "{err}");
}

#[test]
fn unknown_flag_and_bad_config_fail() {
    assert!(!pdspeech(&["evaluate", "--no-such-flag"]).status.success());
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"branch": "svm"}"#).unwrap();
    assert!(!pdspeech(&["evaluate", "--config", p(&cfg)]).status.success());
    std::fs::write(&cfg, r#"{"not_a_field": 1}"#).unwrap();
    assert!(!pdspeech(&["evaluate", "--config", p(&cfg)]).status.success());
}

#[test]
fn failed_run_writes_no_report() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = pdspeech(&["evaluate", "--manifest", p(&dir.path().join("nope.csv")), "--out", p(&out_dir)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage ingest"));
    assert!(!out_dir.join("report.json").exists());
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    small_corpus(&a, "7");
    small_corpus(&b, "7");
    let ta = tree(&a);
    assert_eq!(ta.len(), 1 + 18);
    assert_eq!(ta, tree(&b));
    let c = dir.path().join("c");
    small_corpus(&c, "8");
    assert_ne!(ta, tree(&c));
}

#[test]
fn sweep_over_every_m() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    small_corpus(&corpus, "7");
    let out_dir = dir.path().join("sweep");
    let manifest = corpus.join("manifest.csv");
    let out = pdspeech(&["sweep", "--method", "ls_l21", "--m", "1:480", "--manifest", p(&manifest), "--out", p(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let points = report["sweep"]["points"].as_array().unwrap();
    assert_eq!(points.len(), 480);
    assert!(points.iter().enumerate().all(|(i, pt)| pt["m"] == i + 1));
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 481);
}

#[test]
fn evaluate_reports_match_except_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    small_corpus(&corpus, "7");
    let cfg = dir.path().join("config.json");
    let manifest = corpus.join("manifest.csv");
    std::fs::write(&cfg, format!(r#"{{"manifest": {:?}, "seed": 3, "classical": {{"m": 50}}}}"#, p(&manifest))).unwrap();
    let mut texts = Vec::new();
    let out_dir = dir.path().join("out");
    for _ in 0..2 {
        let out = pdspeech(&["evaluate", "--config", p(&cfg), "--out", p(&out_dir)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let text = std::fs::read_to_string(out_dir.join("report.json")).unwrap();
        let stripped: Vec<&str> = text.lines().filter(|l| !l.contains("\"generated_at_unix\"")).collect();
        texts.push(stripped.join("\n"));
        assert!(out_dir.join("predictions_classical.csv").exists());
    }
    assert_eq!(texts[0], texts[1]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["classical"]["m"], 50);
    assert_eq!(report["seed"], 3);
}

#[test]
fn help_lists_defaults() {
    for sub in ["synth", "extract", "rank", "evaluate", "sweep"] {
        let out = pdspeech(&[sub, "--help"]);
        assert!(out.status.success());
        let text = String::from_utf8_lossy(&out.stdout);
        // one block per flag: the flag line plus its indented description
        let mut blocks: Vec<String> = Vec::new();
        for line in text.lines().skip_while(|l| !l.starts_with("Options:")).skip(1) {
            if line.trim_start().starts_with('-') {
                blocks.push(line.to_string());
            } else if let Some(b) = blocks.last_mut() {
                b.push_str(line);
            }
        }
        assert!(blocks.len() >= 3, "{sub}: {text}");
        for b in blocks.iter().filter(|b| !b.contains("--help")) {
            // the synth output directory is required
            if sub == "synth" && b.contains("--out") {
                continue;
            }
            assert!(b.contains("[default"), "{sub}: {b}");
        }
    }
}
