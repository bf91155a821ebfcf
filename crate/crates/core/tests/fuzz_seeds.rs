//! Replays the checked-in fuzz seeds through the fuzz targets' invariants.

use std::fs;
use std::path::PathBuf;

use cpl::corpus::{corpus_to_jsonl, parse_corpus_jsonl, Vocab};
use cpl::pairs::{candidates_to_jsonl, pairs_to_jsonl, parse_candidates_jsonl, parse_pairs_jsonl};
use cpl::pipeline::{PipelineConfig, RunManifest};
use cpl::policy::{parse_checkpoint, write_checkpoint};

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let b = fs::read(&p).unwrap();
            (p, b)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(b: &[u8]) -> &str {
    std::str::from_utf8(b).unwrap()
}

#[test]
fn corpus_seeds() {
    let mut ok = 0;
    for (p, b) in seeds("corpus_jsonl") {
        if let Ok(docs) = parse_corpus_jsonl(text(&b)) {
            assert_eq!(corpus_to_jsonl(&docs).as_bytes(), &b[..], "{}", p.display());
            ok += 1;
        }
    }
    assert!(ok >= 1);
}

#[test]
fn vocab_seeds() {
    for (_, b) in seeds("vocab") {
        let v = Vocab::parse(text(&b)).unwrap();
        assert_eq!(v.to_text().as_bytes(), &b[..]);
    }
}

#[test]
fn checkpoint_seeds() {
    for (_, b) in seeds("checkpoint") {
        let p = parse_checkpoint(&b, None).unwrap();
        assert_eq!(write_checkpoint(&p), b);
        let mut cut = b.clone();
        cut.pop();
        assert!(parse_checkpoint(&cut, None).is_err());
    }
}

#[test]
fn config_seeds() {
    for (_, b) in seeds("config") {
        let c = PipelineConfig::parse(text(&b)).unwrap();
        assert_eq!(PipelineConfig::parse(&c.to_text()).unwrap(), c);
    }
}

#[test]
fn pair_and_candidate_seeds() {
    for (_, b) in seeds("pairs_jsonl") {
        let p = parse_pairs_jsonl(text(&b)).unwrap();
        assert_eq!(pairs_to_jsonl(&p).as_bytes(), &b[..]);
    }
    for (_, b) in seeds("candidates_jsonl") {
        let s = parse_candidates_jsonl(text(&b)).unwrap();
        assert_eq!(candidates_to_jsonl(&s).as_bytes(), &b[..]);
    }
}

#[test]
fn manifest_seeds() {
    for (_, b) in seeds("manifest") {
        let m = RunManifest::parse(text(&b)).unwrap();
        assert_eq!(m.to_json().as_bytes(), &b[..]);
    }
}
