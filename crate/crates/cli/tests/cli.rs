use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "synth_docs=40",
    "sft_epochs=1",
    "embed_dim=8",
    "hidden_dim=12",
    "max_len=12",
    "context_tokens=16",
    "batch_size=16",
    "cpl_batch_size=16",
    "cpl_epochs=1",
    "min_score=0",
    "margin_lo=0",
];

fn cpl(out: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cpl"));
    cmd.arg("--out").arg(out).arg("--seed").arg("7");
    for kv in TINY {
        cmd.arg("--set").arg(kv);
    }
    cmd.args(args).output().expect("binary runs")
}

fn ok_json(out: &Path, args: &[&str]) -> serde_json::Value {
    let mut all = args.to_vec();
    all.push("--json");
    let o = cpl(out, &all);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    serde_json::from_slice(&o.stdout).expect("stdout is one JSON object")
}

fn upstream(out: &Path) {
    for st in [&["prepare", "--synthetic"][..], &["sft"], &["candidates"], &["pairs"]] {
        ok_json(out, st);
    }
}

#[test]
fn full_pipeline_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    upstream(out);
    for obj in ["cpl", "intra_only", "cross_only"] {
        let v = ok_json(out, &["train", "--objective", obj]);
        assert_eq!(v["summary"]["objective"], obj);
    }
    ok_json(out, &["eval", "--checkpoint", "sft"]);
    ok_json(out, &["eval", "--checkpoint", "cpl"]);
    let v = ok_json(out, &["analyze"]);
    assert_eq!(v["summary"]["models"].as_array().unwrap().len(), 4);
    for f in ["cpl.ckpt", "cpl_curve.csv", "cpl_report.json", "scores.csv", "pair_counts.csv", "analysis.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let curve = std::fs::read_to_string(out.join("cpl_curve.csv")).unwrap();
    assert!(curve.starts_with("step,intra,cross,cpl,mean_margin_s,mean_margin_c,mean_margin_cr\n"));
}

#[test]
fn human_output_is_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = cpl(dir.path(), &["prepare", "--synthetic"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("stage") && l.ends_with("\"prepare\"")));
}

#[test]
fn duplicate_key_is_rejected_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    std::fs::write(
        &input,
        "{\"doc_id\":\"d\",\"index\":0,\"source\":\"a b\",\"reference\":\"x y\"}\n\
         {\"doc_id\":\"d\",\"index\":1,\"source\":\"a c\",\"reference\":\"x z\"}\n\
         {\"doc_id\":\"d\",\"index\":0,\"source\":\"b c\",\"reference\":\"y z\"}\n",
    )
    .unwrap();
    let o = cpl(&dir.path().join("run"), &["prepare", "--input", input.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("first seen on line 1"), "{err}");
}

#[test]
fn prepared_corpus_reserializes_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok_json(&a, &["prepare", "--synthetic", "--set", "split=1,0,0"]);
    let src = a.join("corpus.train.jsonl");
    ok_json(&b, &["prepare", "--input", src.to_str().unwrap(), "--set", "split=1,0,0"]);
    assert_eq!(
        std::fs::read(&src).unwrap(),
        std::fs::read(b.join("corpus.train.jsonl")).unwrap()
    );
}

#[test]
fn synthetic_prepare_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok_json(&a, &["prepare", "--synthetic"]);
    ok_json(&b, &["prepare", "--synthetic"]);
    for f in ["corpus.train.jsonl", "corpus.pref.jsonl", "corpus.test.jsonl", "vocab.txt", "prepare.manifest.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn stale_upstream_hash_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok_json(out, &["prepare", "--synthetic"]);
    ok_json(out, &["sft"]);
    let ckpt = out.join("sft.ckpt");
    let mut bytes = std::fs::read(&ckpt).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&ckpt, bytes).unwrap();
    let o = cpl(out, &["candidates"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("stale artifact") && err.contains("expected sha256"), "{err}");
}

#[test]
fn ablation_is_recorded_and_applied() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    for st in [&["prepare", "--synthetic"][..], &["sft"], &["candidates"]] {
        ok_json(out, st);
    }
    ok_json(out, &["pairs", "--ablation", "drop_wl_plus"]);
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("pairs.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["params"]["ablation"], "drop_wl_plus");
    assert_eq!(m["config"]["ablation"], "drop_wl_plus");
    let pairs = std::fs::read_to_string(out.join("pairs.jsonl")).unwrap();
    let ranks: Vec<String> = pairs
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter(|v| v["kind"] == "cross")
        .map(|v| v["rival_rank"].as_str().unwrap().to_string())
        .collect();
    assert!(!ranks.is_empty());
    assert!(ranks.iter().all(|r| r == "minus"));
}

#[test]
fn delta_bin_report_sums_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok_json(out, &["prepare", "--synthetic"]);
    ok_json(out, &["sft"]);
    let v = ok_json(out, &["eval", "--checkpoint", "sft", "--report", "delta-bins"]);
    let fr = v["summary"]["fractions"].as_array().unwrap();
    assert_eq!(fr.len(), 5);
    let total: f64 = fr.iter().map(|x| x.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12, "{total}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(cpl(&out.join("none"), &["sft"]).status.code(), Some(2));
    assert_eq!(cpl(out, &["--set", "colour=red", "prepare", "--synthetic"]).status.code(), Some(2));
    assert_eq!(cpl(out, &["prepare"]).status.code(), Some(2));
    let cfg = out.join("bad.conf");
    std::fs::write(&cfg, "beta = 0.1\nbeta\n").unwrap();
    let o = cpl(out, &["--config", cfg.to_str().unwrap(), "prepare", "--synthetic"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    ok_json(out, &["prepare", "--synthetic"]);
    let o = cpl(
        out,
        &["--set", "learning_rate=1e200", "--set", "optimizer=sgd", "--set", "grad_clip=0", "sft"],
    );
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("sft.last_good.ckpt").exists());
}
