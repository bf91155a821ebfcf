#![no_main]
use cpl::pairs::{pairs_to_jsonl, parse_pairs_jsonl};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = parse_pairs_jsonl(text) {
        let back = parse_pairs_jsonl(&pairs_to_jsonl(&p)).unwrap();
        assert_eq!(back.intra_s, p.intra_s);
        assert_eq!(back.intra_c, p.intra_c);
        assert_eq!(back.cross, p.cross);
    }
});
