#![no_main]

use libfuzzer_sys::fuzz_target;
use np_corner::parse::{parse_eps_range, parse_n_list, parse_sweep};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(sweep) = parse_sweep(text) {
        assert!(!sweep.values.is_empty() && sweep.values.iter().all(|v| v.is_finite()));
    }
    if let Ok(eps) = parse_eps_range(text) {
        assert!(eps.windows(2).all(|w| w[0] > w[1]));
    }
    if let Ok(n) = parse_n_list(text) {
        assert!(n.iter().all(|&v| v > 0));
    }
});
