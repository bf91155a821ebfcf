#![no_main]
use cpl::corpus::{corpus_to_jsonl, parse_corpus_jsonl, validate_documents};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(docs) = parse_corpus_jsonl(text) {
        validate_documents(&docs).expect("parsed corpora are valid");
        let canon = corpus_to_jsonl(&docs);
        assert_eq!(parse_corpus_jsonl(&canon).unwrap(), docs);
    }
});
