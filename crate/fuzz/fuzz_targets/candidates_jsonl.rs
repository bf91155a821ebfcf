#![no_main]
use cpl::pairs::{candidates_to_jsonl, parse_candidates_jsonl};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(sets) = parse_candidates_jsonl(text) {
        assert_eq!(parse_candidates_jsonl(&candidates_to_jsonl(&sets)).unwrap(), sets);
    }
});
