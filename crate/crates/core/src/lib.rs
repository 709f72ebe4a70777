//! Exact simulation engine for the atomic departure-time-choice bottleneck
//! game: closed-form epsilon-Nash equilibrium, forecast-driven better
//! responses, convergent day-to-day dynamics, and brute-force verification
//! oracles. All model arithmetic is exact rational; nothing in the engine
//! rounds until values are rendered for output.

pub mod dynamics;
pub mod equilibrium;
pub mod experiment;
pub mod forecast;
pub mod model;
pub mod rational;
pub mod verification;

pub use dynamics::{
    adjust_bounds_and_release, classify_eventual_profile, reference_departure_time, rmse, run,
    Classification, DayEvent, DayRecord, DynamicsKind, DynamicsState, RunSettings, Trajectory,
};
pub use equilibrium::{
    equilibrium_solution, fluid_correspondence, max_unilateral_improvement, verify_epsilon_nash,
    DeviationWitness, EquilibriumSolution, FluidCorrespondence, NashVerdict,
};
pub use forecast::{
    better_response_set, forecast_segments, forecasted_cost, is_stationary,
    sample_better_response, ForecastContext, ForecastSegment, SegmentKind,
};
pub use model::{
    compute_arrivals, profile_from_departures, validate_grid, GameConfig, GridViolation,
    Outcomes, TimeProfile, TimeTick, TripOutcome, UserId,
};
pub use rational::{parse_rational, Cost, Rational};
pub use verification::{
    brute_force_arrivals, build_ordered_path, exhaustive_weak_acyclicity, validate_path,
    AcyclicityReport, BetterResponsePath, PathStep, ProfileGraph,
};
