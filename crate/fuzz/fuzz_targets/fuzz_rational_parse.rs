#![no_main]

use libfuzzer_sys::fuzz_target;

use dtc_core::rational::{decimal_string, exact_string, parse_rational};

// Rational literals appear in configs, profile files and CLI flags. Parsing
// must be total, parsed values must round-trip through their exact rendering,
// and decimal rendering must not panic on anything that parsed.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(value) = parse_rational(text) {
        let exact = exact_string(&value);
        let reparsed = parse_rational(&exact).expect("exact rendering must re-parse");
        assert_eq!(reparsed, value);
        let _ = decimal_string(&value, 6);
        let _ = decimal_string(&value, 0);
    }
});
