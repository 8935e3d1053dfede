#![no_main]

use libfuzzer_sys::fuzz_target;
use np_corner::parse::parse_real;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(v) = parse_real(text) {
        assert!(v.is_finite());
    }
});
