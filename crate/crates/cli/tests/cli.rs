use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("tmr").chain(args.iter().copied());
    let code = tmr_cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TM: &str = "\
open the window\tabre la ventana
close the window now\tcierra la ventana ahora
the red house\tla casa roja
the green door\tla puerta verde
a small cat sleeps\tun gato pequeño duerme
pay 300 euros by 5 de marzo de 2018\tpagar 300 euros antes del 5 de marzo de 2018
";

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let tm = dir.path().join("tm.tsv");
    fs::write(&tm, TM).unwrap();
    (dir, tm)
}

fn ingest(dir: &Path, tm: &Path, embed: bool) -> PathBuf {
    let db = dir.join("tm.db");
    let mut args = vec!["ingest", "--input", p(tm), "--db", p(&db), "--dim", "64"];
    if embed {
        args.push("--embed");
    }
    let (code, out, err) = run(&args);
    assert_eq!(code, 0, "{err}");
    let summary: Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(summary["units"], 6);
    assert_eq!(summary["embedded"], embed);
    db
}

#[test]
fn ingest_then_lexical_query() {
    let (dir, tm) = setup();
    let db = ingest(dir.path(), &tm, false);
    let (code, out, _) = run(&["query", "--db", p(&db), "--text", "open the windows", "--k", "2"]);
    assert_eq!(code, 0);
    let lines: Vec<Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["id"], 0);
    assert_eq!(lines[0]["rank"], 1);
    assert_eq!(lines[0]["method"], "lexical");
    assert_eq!(lines[0]["target"], "abre la ventana");
    assert!((lines[0]["score"].as_f64().unwrap() - 15.0 / 16.0).abs() < 1e-12);
}

#[test]
fn embed_query_returns_k_lines() {
    let (dir, tm) = setup();
    let db = ingest(dir.path(), &tm, true);
    let (code, out, err) = run(&["query", "--db", p(&db), "--text", "the red house", "--method", "embed", "--k", "3"]);
    assert_eq!(code, 0, "{err}");
    let lines: Vec<Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["id"], 2);
    assert_eq!(lines[0]["score"], 1.0);
    assert_eq!(lines[0]["method"], "embedding");
    let scores: Vec<f64> = lines.iter().map(|l| l["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn embed_query_needs_vectors() {
    let (dir, tm) = setup();
    let db = ingest(dir.path(), &tm, false);
    let (code, _, err) = run(&["query", "--db", p(&db), "--text", "x", "--method", "embed"]);
    assert_eq!(code, 1, "{err}");
}

#[test]
fn eval_sts_reports_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sts.tsv");
    fs::write(
        &data,
        "a cat\tthe cat\t4.2\na man is walking\ta dog runs\t1.0\nhello there\thello there\t5.0\nred\tgreen blue\t0.5\n",
    )
    .unwrap();
    let (code, out, err) = run(&["eval-sts", "--dataset", p(&data), "--method", "edit"]);
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["method"], "edit_minmax");
    assert_eq!(v["n"], 4);
    for key in ["pearson", "spearman", "mse"] {
        assert!(v[key].is_number(), "{key}: {out}");
    }
    let (code, out, _) = run(&["eval-sts", "--dataset", p(&data), "--method", "embed", "--dim", "32"]);
    assert_eq!(code, 0);
    assert!(out.contains("\"method\":\"embed_cosine\""));

    let sick = dir.path().join("sick.txt");
    fs::write(
        &sick,
        "pair_ID\tsentence_A\tsentence_B\trelatedness_score\tentailment_judgment\n1\ta\tb\t4.5\tNEUTRAL\n2\tab\tab\t5\tENTAILMENT\n3\tabc\tx\t1\tNEUTRAL\n",
    )
    .unwrap();
    let (code, out, err) = run(&["eval-sts", "--dataset", p(&sick), "--method", "edit"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("\"n\":3"));
}

#[test]
fn bad_score_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sts.tsv");
    fs::write(&data, "a\tb\t1.0\na\tb\tlots\n").unwrap();
    let (code, _, err) = run(&["eval-sts", "--dataset", p(&data), "--method", "edit"]);
    assert_eq!(code, 2);
    assert!(err.contains("line 2"), "{err}");
}

fn eval_tm_files(dir: &Path) -> (PathBuf, PathBuf) {
    let input = dir.join("input.txt");
    let refs = dir.join("refs.txt");
    fs::write(&input, "open the window\nclose the door now\nthe red car\npay 250 euros by 7 de mayo de 2019\n").unwrap();
    fs::write(&refs, "abre la ventana\ncierra la puerta ahora\nel coche rojo\npagar 250 euros antes del 7 de mayo de 2019\n").unwrap();
    (input, refs)
}

#[test]
fn eval_tm_without_refs_is_usage_error() {
    let (dir, tm) = setup();
    let (input, _) = eval_tm_files(dir.path());
    let (code, _, err) = run(&["eval-tm", "--tm", p(&tm), "--input", p(&input)]);
    assert_eq!(code, 1);
    assert!(err.contains("--refs"), "{err}");
}

#[test]
fn eval_tm_is_deterministic_and_formats() {
    let (dir, tm) = setup();
    let (input, refs) = eval_tm_files(dir.path());
    let args = ["eval-tm", "--tm", p(&tm), "--input", p(&input), "--refs", p(&refs), "--dim", "64", "--mean-sts"];
    let (code, first, err) = run(&args);
    assert_eq!(code, 0, "{err}");
    let (_, second, _) = run(&args);
    assert_eq!(first, second);
    let mut lines = first.lines();
    let report: Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(report["rows_in"], 4);
    assert_eq!(report["normalized"], false);
    let counts: u64 = report["buckets"].as_array().unwrap().iter().map(|b| b["count"].as_u64().unwrap()).sum();
    assert_eq!(counts, report["rows_retained"].as_u64().unwrap());
    let sts: Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(sts["pairing"], "query_vs_source");

    let mut table_args = args.to_vec();
    table_args.extend(["--format", "table", "--threads", "1"]);
    let (code, table, _) = run(&table_args);
    assert_eq!(code, 0);
    assert!(table.starts_with("fuzzy range"), "{table}");
    assert!(table.lines().nth(1).unwrap().starts_with("0.8-1"));

    let report_path = dir.path().join("report.json");
    let mut file_args = args.to_vec();
    file_args.extend(["--report", p(&report_path)]);
    let (code, out, _) = run(&file_args);
    assert_eq!(code, 0);
    assert!(out.is_empty());
    assert_eq!(fs::read_to_string(&report_path).unwrap(), first);
}

#[test]
fn eval_tm_normalized_with_gazetteer_and_db() {
    let (dir, tm) = setup();
    let db = ingest(dir.path(), &tm, true);
    let (input, refs) = eval_tm_files(dir.path());
    let gaz = dir.path().join("gaz.tsv");
    fs::write(&gaz, "Madrid\tLOC\n").unwrap();
    let (code, _, err) = run(&["eval-tm", "--db", p(&db), "--input", p(&input), "--refs", p(&refs), "--gazetteer", p(&gaz)]);
    assert_eq!(code, 1, "gazetteer without --normalize: {err}");
    let (code, out, err) = run(&[
        "eval-tm", "--db", p(&db), "--input", p(&input), "--refs", p(&refs), "--normalize", "--gazetteer", p(&gaz),
    ]);
    assert_eq!(code, 0, "{err}");
    let report: Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(report["normalized"], true);
}

#[test]
fn eval_tm_line_count_mismatch_is_data_error() {
    let (dir, tm) = setup();
    let (input, _) = eval_tm_files(dir.path());
    let refs = dir.path().join("short.txt");
    fs::write(&refs, "uno\n").unwrap();
    let (code, _, err) = run(&["eval-tm", "--tm", p(&tm), "--input", p(&input), "--refs", p(&refs)]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn usage_and_help() {
    assert_eq!(run(&["query", "--bogus"]).0, 1);
    assert_eq!(run(&[]).0, 1);
    assert_eq!(run(&["bench", "--n", "0"]).0, 1);
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("eval-tm"));
    assert_eq!(run(&["--version"]).0, 0);
    let (code, _, _) = run(&["query", "--db", "/nonexistent/tm.db", "--text", "x"]);
    assert_eq!(code, 2);
}

#[test]
fn bench_reports() {
    let (code, out, err) = run(&["bench", "--n", "1", "--reps", "1", "--dim", "16"]);
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["n"], 1);
    assert!(v["embed_memory_total"]["median"].is_number());
    let (code, out, _) = run(&["bench", "--n", "100", "--reps", "3", "--dim", "16", "--mode", "retrieval"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["retrieve_single_query"]["samples"].as_array().unwrap().len(), 3);
}

#[test]
fn sidecar_provider_from_flag_and_env() {
    let (dir, tm) = setup();
    let script = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/fake_sidecar.py");
    let cmd = format!("python3 '{}' ok 8", script.display());
    let db = dir.path().join("side.db");
    let (code, out, err) = run(&[
        "ingest", "--input", p(&tm), "--db", p(&db), "--embed", "--provider", "sidecar", "--sidecar-cmd", &cmd,
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("\"dim\":8"));
    let (code, _, err) = run(&["query", "--db", p(&db), "--text", "x", "--method", "embed", "--provider", "sidecar"]);
    assert_eq!(code, 1, "no command given: {err}");

    std::env::set_var(tmr_cli::SIDECAR_ENV, &cmd);
    let (code, out, err) = run(&[
        "query", "--db", p(&db), "--text", "the red house", "--method", "embed", "--provider", "sidecar",
        "--sidecar-cmd", "false",
    ]);
    std::env::remove_var(tmr_cli::SIDECAR_ENV);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("\"id\":2"), "{out}");
}
