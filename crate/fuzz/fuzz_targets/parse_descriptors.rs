#![no_main]

use libfuzzer_sys::fuzz_target;
use np_corner::parse::{parse_fem_geometry, parse_kernel_mode, parse_shape};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(shape) = parse_shape(text) {
        assert_eq!(parse_shape(&shape.descriptor()).expect("descriptor parses"), shape);
    }
    let _ = parse_fem_geometry(text);
    let _ = parse_kernel_mode(text);
});
