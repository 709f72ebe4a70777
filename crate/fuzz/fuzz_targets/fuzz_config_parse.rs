#![no_main]

use libfuzzer_sys::fuzz_target;

// The experiment-config parser must return a value or a line-numbered error
// on any input, never panic. When a config parses, its provenance rendering
// must parse back to the same experiment.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(spec) = dtc_core::experiment::parse_experiment_text(text) {
        let rendered = spec.to_config_text();
        let reparsed = dtc_core::experiment::parse_experiment_text(&rendered)
            .expect("resolved config must re-parse");
        assert_eq!(reparsed, spec);
    }
});
