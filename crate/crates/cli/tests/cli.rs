use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn ccl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccl"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[track_caller]
fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = ccl(dir, args);
    assert_eq!(
        code(&out),
        0,
        "ccl {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Twelve dialogues of 4..=15 turns in DailyDialog's raw format.
fn write_dailydialog(dir: &Path) -> PathBuf {
    let mut raw = String::new();
    for k in 0..12 {
        let n = 4 + k;
        for i in 0..n {
            raw.push_str(&format!("dialogue {k} says line {i} about topic {} __eou__ ", (k + i) % 5));
        }
        raw.push('\n');
    }
    let path = dir.join("dialogues_text.txt");
    fs::write(&path, raw).unwrap();
    path
}

fn write_candidates(dir: &Path) -> PathBuf {
    let mut raw = String::new();
    for k in 0..12 {
        let cands: Vec<String> = (0..6).map(|j| format!("\"generated reply {j} for {k}\"")).collect();
        raw.push_str(&format!(
            "{{\"dialogue_id\": \"{k}\", \"candidates\": [{}], \"generator\": {{\"name\": \"test\"}}}}\n",
            cands.join(",")
        ));
    }
    let path = dir.join("candidates.jsonl");
    fs::write(&path, raw).unwrap();
    path
}

/// Corpus, requests, LTP samples and a mock store for the later tests.
fn pipeline() -> TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_dailydialog(d);
    write_candidates(d);
    ok(d, &["preprocess", "--in", "dialogues_text.txt", "--out", "corpus.jsonl"]);
    ok(
        d,
        &[
            "embed-requests",
            "--corpus",
            "corpus.jsonl",
            "--stp",
            "2:1,3:2",
            "--candidates",
            "candidates.jsonl",
            "--ltp",
            "2:2:0,1:2:1",
            "--ltp-samples-out",
            "ltp.jsonl",
            "--next",
            "1,2,3",
            "--out",
            "requests.jsonl",
        ],
    );
    ok(
        d,
        &["embed", "--encoder", "mock", "--dim", "32", "--requests", "requests.jsonl", "--out", "store"],
    );
    tmp
}

fn report(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn eval_ltp_from_samples_writes_report() {
    let tmp = pipeline();
    let d = tmp.path();
    ok(d, &["eval-ltp", "--method", "iec", "--store", "store", "--samples", "ltp.jsonl", "--out", "r.json"]);
    let r = report(&d.join("r.json"));
    assert_eq!(r["kind"], "ltp");
    assert_eq!(r["_meta"]["command"], "eval-ltp");
    assert!(r["_meta"]["inputs"]["store"].is_string());
    assert!(r["report"]["overall"]["n"].as_u64().unwrap() > 0);
}

#[test]
fn full_pipeline_and_rendering() {
    let tmp = pipeline();
    let d = tmp.path();
    ok(d, &["pairgen", "--mode", "speaker", "--seed", "42", "--in", "corpus.jsonl", "--out", "pairs.jsonl"]);
    let pairs = fs::read_to_string(d.join("pairs.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(pairs.lines().next().unwrap()).unwrap();
    assert_eq!(first["_meta"]["seed"], 42);
    assert!(pairs.lines().count() > 100);

    ok(
        d,
        &[
            "eval-stp", "--corpus", "corpus.jsonl", "--candidates", "candidates.jsonl", "--cells", "2:1,3:2", "--store",
            "store", "--out", "stp.json",
        ],
    );
    for m in ["iec", "iec-cu", "gc"] {
        ok(
            d,
            &[
                "eval-ltp", "--method", m, "--store", "store", "--corpus", "corpus.jsonl", "--cells", "2:2:0", "--out",
                &format!("ltp-{m}.json"),
            ],
        );
    }
    ok(d, &["eval-next", "--corpus", "corpus.jsonl", "--store", "store", "--h-l", "1,2,3", "--out", "next.json"]);
    ok(d, &["eval-next", "--corpus", "corpus.jsonl", "--variant", "bm25", "--h-l", "1,2", "--out", "bm25.json"]);
    ok(d, &["bench-encoding", "--corpus", "corpus.jsonl", "--max-h-l", "3", "--out", "cost.json"]);

    let stp = report(&d.join("stp.json"));
    assert_eq!(stp["report"]["pool_size"], 7);
    let table = String::from_utf8(ok(d, &["report", "--in", "ltp-iec.json"]).stdout).unwrap();
    assert!(table.lines().next().unwrap().contains("reverse_hits@1"));
    let gc = String::from_utf8(ok(d, &["report", "--in", "ltp-gc.json", "--format", "csv"]).stdout).unwrap();
    assert!(gc.starts_with("cell,n,hits@1,hits@2,avg_rank\n"));
    let plot = String::from_utf8(ok(d, &["report", "--in", "next.json", "--format", "plotdata"]).stdout).unwrap();
    assert_eq!(plot.lines().filter(|l| l.starts_with("full ")).count(), 3);
    ok(d, &["report", "--in", "cost.json", "--format", "csv", "--out", "cost.csv"]);
    assert!(fs::read_to_string(d.join("cost.csv")).unwrap().contains("utterances_encoded_context_mode"));
    ok(d, &["report", "--in", "stp.json"]);
    ok(d, &["report", "--in", "bm25.json"]);
    assert_eq!(code(&ccl(d, &["report", "--in", "stp.json", "--format", "plotdata"])), 3);
}

#[test]
fn unknown_flag_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ccl(tmp.path(), &["eval-ltp", "--bogus"]);
    assert_eq!(code(&out), 64);
    assert!(String::from_utf8_lossy(&out.stderr).contains("hint:"));
    assert_eq!(code(&ccl(tmp.path(), &["frobnicate"])), 64);
    assert_eq!(code(&ccl(tmp.path(), &["--help"])), 0);
}

#[test]
fn missing_store_exits_2() {
    let tmp = pipeline();
    let d = tmp.path();
    let out = ccl(d, &["eval-ltp", "--method", "iec", "--store", "nowhere", "--samples", "ltp.jsonl", "--out", "r.json"]);
    assert_eq!(code(&out), 2);
    assert!(!d.join("r.json").exists());
}

#[test]
fn missing_embedding_exits_2() {
    let tmp = pipeline();
    let d = tmp.path();
    fs::write(d.join("few.jsonl"), "{\"text\": \"x\", \"direction\": \"after\", \"speaker\": \"none\"}\n").unwrap();
    ok(d, &["embed", "--encoder", "mock", "--requests", "few.jsonl", "--out", "small"]);
    let out = ccl(d, &["eval-ltp", "--method", "gc", "--store", "small", "--samples", "ltp.jsonl", "--out", "r.json"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn malformed_inputs_exit_3() {
    let tmp = pipeline();
    let d = tmp.path();
    fs::write(d.join("bad.jsonl"), "{not json\n").unwrap();
    let out = ccl(d, &["eval-ltp", "--method", "iec", "--store", "store", "--samples", "bad.jsonl", "--out", "r.json"]);
    assert_eq!(code(&out), 3);
    let out = ccl(d, &["bench-encoding", "--corpus", "bad.jsonl", "--out", "c.json"]);
    assert_eq!(code(&out), 3);
    fs::write(d.join("store.vec"), [0u8; 3]).unwrap();
    let out = ccl(d, &["eval-ltp", "--method", "iec", "--store", "store", "--samples", "ltp.jsonl", "--out", "r.json"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn config_file_supplies_flags_and_command_line_wins() {
    let tmp = pipeline();
    let d = tmp.path();
    fs::write(d.join("cfg.json"), r#"{"corpus": "corpus.jsonl", "max_h_l": 2, "out": "a.json"}"#).unwrap();
    ok(d, &["bench-encoding", "--config", "cfg.json"]);
    assert_eq!(report(&d.join("a.json"))["report"]["max_h_l"], 2);
    ok(d, &["--config", "cfg.json", "bench-encoding", "--max-h-l", "4", "--out", "b.json"]);
    let b = report(&d.join("b.json"));
    assert_eq!(b["report"]["max_h_l"], 4);
    assert_eq!(b["config"]["max_h_l"], 4);
    assert_eq!(code(&ccl(d, &["bench-encoding", "--config", "missing.json"])), 2);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = pipeline();
    let d = tmp.path();
    let args = |out: &str| {
        vec![
            "pairgen".to_string(),
            "--mode".into(),
            "curved".into(),
            "--seed".into(),
            "9".into(),
            "--in".into(),
            "corpus.jsonl".into(),
            "--out".into(),
            out.into(),
        ]
    };
    let run = |out: &str, workers: &str| {
        let mut a = vec!["--workers".to_string(), workers.to_string()];
        a.extend(args(out));
        let refs: Vec<&str> = a.iter().map(String::as_str).collect();
        ok(d, &refs);
        let text = fs::read_to_string(d.join(out)).unwrap();
        // the header echoes the output path; compare the pairs
        text.lines().skip(1).collect::<Vec<_>>().join("\n")
    };
    assert_eq!(run("p1.jsonl", "1"), run("p2.jsonl", "4"));
    let once = fs::read(d.join("p1.jsonl")).unwrap();
    run("p1.jsonl", "3");
    assert_eq!(fs::read(d.join("p1.jsonl")).unwrap(), once);

    let next = |workers: &str| {
        ok(
            d,
            &["--workers", workers, "eval-next", "--corpus", "corpus.jsonl", "--store", "store", "--h-l", "1,2,3", "--out", "n.json"],
        );
        fs::read(d.join("n.json")).unwrap()
    };
    assert_eq!(next("1"), next("4"));
}

#[test]
fn empty_plan_writes_header_only_requests() {
    let tmp = pipeline();
    let d = tmp.path();
    ok(d, &["embed-requests", "--corpus", "corpus.jsonl", "--out", "empty.jsonl"]);
    let text = fs::read_to_string(d.join("empty.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("{\"_meta\""));
    ok(d, &["embed", "--encoder", "mock", "--requests", "empty.jsonl", "--out", "e"]);
}

#[test]
fn speaker_mode_requests_carry_parity_tokens() {
    let tmp = pipeline();
    let d = tmp.path();
    ok(
        d,
        &[
            "embed-requests", "--corpus", "corpus.jsonl", "--speaker-mode", "--stp", "2:1", "--candidates",
            "candidates.jsonl", "--out", "sp.jsonl",
        ],
    );
    let text = fs::read_to_string(d.join("sp.jsonl")).unwrap();
    let rows: Vec<serde_json::Value> = text.lines().skip(1).map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!rows.is_empty());
    for r in rows {
        let speaker = r["speaker"].as_str().unwrap();
        match r["direction"].as_str().unwrap() {
            "after" => assert_eq!(speaker, "none"),
            _ => assert_eq!(speaker, "O", "g_d = 1 is odd"),
        }
    }
}
