#![no_main]
use cpl::policy::{parse_checkpoint, write_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(p) = parse_checkpoint(data, None) {
        assert_eq!(write_checkpoint(&p), data);
    }
});
