#![no_main]
use cpl::corpus::Vocab;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(v) = Vocab::parse(text) {
        assert_eq!(Vocab::parse(&v.to_text()).unwrap(), v);
    }
});
