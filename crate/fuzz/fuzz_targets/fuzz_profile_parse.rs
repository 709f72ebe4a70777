#![no_main]

use libfuzzer_sys::fuzz_target;

use dtc_core::model::{profile_from_departures, GameConfig};
use dtc_core::rational::{rat, ratio};

// Profile files come from outside; parsing plus semantic validation must be
// total. A successfully built profile always satisfies the distinct-tick
// invariant, so arrival computation on it must not panic either.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(entries) = dtc_core::experiment::parse_profile_text(text) else {
        return;
    };
    let config = GameConfig::new(
        entries.len().clamp(1, 64),
        rat(1),
        rat(1),
        ratio(1, 2),
        rat(2),
        ratio(1, 10),
        rat(100),
    )
    .expect("fixed fuzz config is valid");
    if let Ok(profile) = profile_from_departures(&entries, &config) {
        let outcomes = dtc_core::model::compute_arrivals(&profile, &config);
        assert_eq!(outcomes.num_users(), profile.num_users());
    }
});
