//! Property tests over randomly generated games and profiles.

use proptest::prelude::*;

use dtc_core::equilibrium::deviation_cost_by_recompute;
use dtc_core::forecast::{forecast_segments, ForecastContext, SegmentKind};
use dtc_core::model::{compute_arrivals, GameConfig, TimeProfile, TimeTick};
use dtc_core::rational::{parse_rational, rat, ratio};
use dtc_core::verification::brute_force_arrivals;

fn small_config(num_users: usize) -> GameConfig {
    GameConfig::new(
        num_users,
        rat(1),
        rat(1),
        ratio(1, 2),
        rat(2),
        ratio(1, 10),
        rat(20),
    )
    .unwrap()
}

prop_compose! {
    fn arb_profile(max_users: usize)
        (num_users in 1..=max_users)
        (ticks in proptest::collection::hash_set(-200i64..=200, num_users))
        -> Vec<i64>
    {
        ticks.into_iter().collect()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn arrival_gaps_never_undercut_the_headway(ticks in arb_profile(12)) {
        let config = small_config(ticks.len());
        let profile = TimeProfile::new(ticks.into_iter().map(TimeTick).collect(), &config).unwrap();
        let outcomes = compute_arrivals(&profile, &config);
        let arrivals: Vec<i64> = outcomes.iter_ordered().map(|t| t.arrival.0).collect();
        for pair in arrivals.windows(2) {
            prop_assert!(pair[1] - pair[0] >= config.headway_ticks());
        }
        // Queueing delays are non-negative and costs decompose exactly.
        for trip in outcomes.iter() {
            prop_assert!(trip.queue_delay >= rat(0));
            prop_assert_eq!(trip.queue_delay + trip.schedule_delay, trip.trip_cost);
        }
    }

    #[test]
    fn recursion_matches_brute_force(ticks in arb_profile(12)) {
        let config = small_config(ticks.len());
        let profile = TimeProfile::new(ticks.into_iter().map(TimeTick).collect(), &config).unwrap();
        let fast = compute_arrivals(&profile, &config);
        let slow = brute_force_arrivals(&profile, &config);
        for user in 1..=config.num_users() {
            prop_assert_eq!(fast.user(user), slow.user(user));
        }
    }

    #[test]
    fn forecast_is_piecewise_linear_on_its_segments(ticks in arb_profile(8)) {
        let config = small_config(ticks.len());
        let profile = TimeProfile::new(ticks.into_iter().map(TimeTick).collect(), &config).unwrap();
        let ctx = ForecastContext::new(&profile, &config);
        for segment in forecast_segments(&profile, &config) {
            for tick in segment.start.0..=segment.end.0 {
                let got = ctx.forecast(TimeTick(tick)).unwrap();
                let want = match &segment.kind {
                    SegmentKind::CongestedInterpolation { start, end } => {
                        let span = config.time_of(end.0) - config.time_of(start.0);
                        let offset = config.time_of(TimeTick(tick)) - config.time_of(start.0);
                        start.1 + (end.1 - start.1) / span * offset
                    }
                    SegmentKind::FreeFlowSchedule | SegmentKind::OutsideRush => {
                        config.schedule_delay(TimeTick(tick))
                    }
                };
                prop_assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn deviation_scan_costs_match_full_recomputation(
        ticks in arb_profile(8),
        user_index in 0usize..8,
        tick in -200i64..=200,
    ) {
        let config = small_config(ticks.len());
        let user = 1 + (user_index % ticks.len());
        let profile = TimeProfile::new(ticks.into_iter().map(TimeTick).collect(), &config).unwrap();
        prop_assume!(!profile.is_occupied(TimeTick(tick)));
        // Recompute-based price of the deviation equals a fresh profile
        // evaluation; exercised the other way round in the scanner's module
        // tests. Here: moving and recomputing twice is idempotent.
        let once = deviation_cost_by_recompute(&profile, user, TimeTick(tick), &config);
        let twice = deviation_cost_by_recompute(&profile, user, TimeTick(tick), &config);
        prop_assert_eq!(once, twice);
        // And the deviator's realised cost matches the forecast whenever the
        // destination free-flows in the deviated profile.
        let mut moved = profile.clone();
        moved.move_user(user, TimeTick(tick), &config).unwrap();
        let outcomes = compute_arrivals(&moved, &config);
        let trip = outcomes.user(user);
        if trip.queue_delay == rat(0) {
            prop_assert_eq!(trip.trip_cost, config.schedule_delay(trip.arrival));
        }
    }

    #[test]
    fn rational_literals_round_trip(n in -1_000_000i128..=1_000_000, d in 1i128..=10_000) {
        let value = ratio(n, d);
        let parsed = parse_rational(&value.to_string()).unwrap();
        prop_assert_eq!(parsed, value);
    }
}
