use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use procstate::corpus::{load_procedures, CorpusFormat, StateGrid};
use procstate::prediction::write_predictions;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn procstate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_procstate"))
        .args(args)
        .env_remove("PROCSTATE_CONFIG_DIR")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn predict(extra: &[&str]) -> Output {
    let f = fixtures();
    let corpus = f.join("corpus.jsonl");
    let parses = f.join("parses");
    let mut args = vec!["predict", "--corpus", s(&corpus), "--parses", s(&parses)];
    args.extend_from_slice(extra);
    procstate(&args)
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn predict_matches_golden() {
    let golden = std::fs::read_to_string(fixtures().join("predict.golden.tsv")).unwrap();
    assert_eq!(stdout(&predict(&[])), golden);
}

#[test]
fn predict_is_byte_identical_across_runs_and_job_counts() {
    let first = stdout(&predict(&["--jobs", "1"]));
    for jobs in ["1", "2", "4"] {
        assert_eq!(stdout(&predict(&["--jobs", jobs])), first, "jobs={jobs}");
    }
    let j1 = stdout(&predict(&["--format", "json", "--jobs", "1"]));
    let j4 = stdout(&predict(&["--format", "json", "--jobs", "4"]));
    assert_eq!(j1, j4);
}

#[test]
fn predict_writes_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pred.tsv");
    let o = predict(&["-o", s(&out)]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let golden = std::fs::read_to_string(fixtures().join("predict.golden.tsv")).unwrap();
    assert_eq!(std::fs::read_to_string(out).unwrap(), golden);
}

#[test]
fn evaluate_perfect_prediction_scores_100() {
    let f = fixtures().join("metrics");
    let corpus = load_procedures(&f.join("corpus.jsonl"), CorpusFormat::Json).unwrap();
    let gold: Vec<StateGrid> = corpus.iter().map(|lp| lp.gold.clone()).collect();
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("gold.tsv");
    std::fs::write(&pred, write_predictions(&gold)).unwrap();

    let o = procstate(&[
        "evaluate",
        "--corpus",
        s(&f.join("corpus.jsonl")),
        "--pred",
        s(&pred),
        "--parses",
        s(&f.join("parses")),
        "--format",
        "json",
    ]);
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let mut scores = Vec::new();
    collect_numbers(&report, &mut scores);
    assert!(!scores.is_empty());
    for (path, v) in scores {
        assert_eq!(v, 100.0, "{path}");
    }
}

// Every numeric leaf that is a score (counts and supports are skipped).
fn collect_numbers(v: &serde_json::Value, out: &mut Vec<(String, f64)>) {
    fn walk(v: &serde_json::Value, path: String, out: &mut Vec<(String, f64)>) {
        match v {
            serde_json::Value::Object(m) => {
                for (k, x) in m {
                    walk(x, format!("{path}.{k}"), out);
                }
            }
            serde_json::Value::Array(a) => {
                for (i, x) in a.iter().enumerate() {
                    walk(x, format!("{path}[{i}]"), out);
                }
            }
            serde_json::Value::Number(n) if n.is_f64() => out.push((path, n.as_f64().unwrap())),
            _ => {}
        }
    }
    walk(v, String::new(), out);
}

#[test]
fn evaluate_text_table_has_all_tiers() {
    let f = fixtures().join("metrics");
    let o = procstate(&[
        "evaluate",
        "--corpus",
        s(&f.join("corpus.jsonl")),
        "--pred",
        s(&f.join("pred.tsv")),
    ]);
    let text = stdout(&o);
    for label in ["Sentence level", "Document level", "Decision level", "Conversions"] {
        assert!(text.contains(label), "missing {label}");
    }
    assert!(!text.contains("Ambiguous"), "overlay needs parses");
}

#[test]
fn srl_parser_is_rejected_for_predict() {
    let o = predict(&["--parser", "srl"]);
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn missing_corpus_exits_3() {
    let o = procstate(&[
        "predict",
        "--corpus",
        "/nonexistent/c.jsonl",
        "--parses",
        "/nonexistent",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn missing_parse_file_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixtures().join("corpus.jsonl");
    let o = procstate(&["predict", "--corpus", s(&corpus), "--parses", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn malformed_corpus_exits_4_with_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\": 3}\n").unwrap();
    let o = procstate(&[
        "predict",
        "--corpus",
        s(&bad),
        "--parses",
        s(dir.path()),
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(4));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["exit_code"], 4);
    assert!(err["error"].as_str().unwrap().contains("bad.jsonl"));
}

#[test]
fn malformed_prediction_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("pred.tsv");
    std::fs::write(&bad, "photo\t1\twater\tMOVE\tsoil\n").unwrap();
    let corpus = fixtures().join("corpus.jsonl");
    let o = procstate(&["evaluate", "--corpus", s(&corpus), "--pred", s(&bad)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("expected 6 columns"));
}

#[test]
fn ontology_cycle_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("ontology.tsv"), "ont::a\tont::b\nont::b\tont::a\n").unwrap();
    let o = predict(&["--config-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(5), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unknown_flag_exits_2() {
    assert_eq!(procstate(&["predict", "--bogus"]).status.code(), Some(2));
    assert_eq!(procstate(&[]).status.code(), Some(2));
}

#[test]
fn zero_jobs_is_a_config_error() {
    assert_eq!(predict(&["--jobs", "0"]).status.code(), Some(5));
}

#[test]
fn gat_check_passes_and_reports_json() {
    let o = procstate(&["gat-check", "--graphs", "20", "--seed", "7", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["passed"], true);
}

#[test]
fn build_graph_qa_extension_adds_nodes() {
    let f = fixtures();
    let corpus = f.join("corpus.jsonl");
    let parses = f.join("parses");
    let o = procstate(&[
        "build-graph",
        "--corpus",
        s(&corpus),
        "--parses",
        s(&parses),
        "--qa-entity",
        "water",
        "--format",
        "json",
    ]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let recs = v.as_array().unwrap();
    assert_eq!(recs.len(), 3);
    let base = recs[0]["graph"]["nodes"].as_array().unwrap().len();
    let qa = recs[1]["graph"]["nodes"].as_array().unwrap().len();
    assert_eq!(recs[1]["entity"], "water");
    // one question node plus one node per step
    assert_eq!(qa, base + 1 + 5);
}

#[test]
fn build_graph_rejects_unknown_qa_entity() {
    let f = fixtures();
    let corpus = f.join("corpus.jsonl");
    let parses = f.join("parses");
    let o = procstate(&[
        "build-graph",
        "--corpus",
        s(&corpus),
        "--parses",
        s(&parses),
        "--qa-entity",
        "unicorn",
    ]);
    assert_eq!(o.status.code(), Some(5));
}
