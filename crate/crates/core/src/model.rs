//! Game definition and bottleneck arrival physics.
//!
//! A fixed population of `P` atomic users, each of size `m`, departs through
//! a single bottleneck of capacity `mu`. Departure times live on a discrete
//! grid of step `delta_s` spanning `[-horizon, horizon]`, and each user must
//! hold a distinct grid tick. Arrivals follow the point-queue recursion: a
//! user arrives at `max(previous arrival + m/mu, own departure)`, so consecutive
//! arrival headways never drop below `m/mu` and FIFO causality holds (a user's
//! outcome depends only on departures at or before their own).
//!
//! All quantities are exact rationals; times additionally stay on the grid,
//! which the admissibility checks below guarantee.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::rational::{exact_quotient, is_multiple_of, rat, Cost, Rational};

/// A departure/arrival instant, stored as a signed multiple of the grid step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeTick(pub i64);

impl TimeTick {
    pub fn offset(self, ticks: i64) -> TimeTick {
        TimeTick(self.0 + ticks)
    }
}

impl fmt::Display for TimeTick {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tick {}", self.0)
    }
}

/// User identifier, 1-based as reported in all outputs.
pub type UserId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("num_users must be at least 1")]
    NoUsers,
    #[error("user_size must lie in (0, 1], got {0}")]
    UserSize(String),
    #[error("capacity must be positive, got {0}")]
    Capacity(String),
    #[error("early_penalty must lie in (0, 1), got {0}")]
    EarlyPenalty(String),
    #[error("late_penalty must be positive, got {0}")]
    LatePenalty(String),
    #[error("grid_step must be positive, got {0}")]
    GridStep(String),
    #[error("horizon must be positive, got {0}")]
    Horizon(String),
    #[error("horizon {horizon} is not an integer multiple of grid_step {step}")]
    HorizonOffGrid { horizon: String, step: String },
    #[error("headway m/mu = {headway} is not an integer multiple of grid_step {step}; arrivals would leave the grid")]
    HeadwayOffGrid { headway: String, step: String },
    #[error("rush hour [{t_minus}, {t_plus}] does not lie strictly inside [-{horizon}, {horizon}]")]
    HorizonTooSmall {
        t_minus: String,
        t_plus: String,
        horizon: String,
    },
    #[error("{field} = {value} exceeds the supported scale (components up to {limit})")]
    OutOfScale {
        field: &'static str,
        value: String,
        limit: i128,
    },
}

/// Largest numerator/denominator any rate or penalty constant may carry,
/// plus the user-count and grid-size ceilings. Construction and the grid
/// checks stay provably clear of `i128` overflow under these bounds (worst
/// unreduced intermediates sit around 10^31), and every realistic experiment
/// fits with orders of magnitude to spare.
pub const MAX_COMPONENT: i128 = 10_000;
pub const MAX_USERS: usize = 1_000_000;
pub const MAX_HORIZON_TICKS: i128 = 1_000_000_000;

fn check_scale(field: &'static str, value: &Rational) -> Result<(), ConfigError> {
    if value.numer().abs() > MAX_COMPONENT || *value.denom() > MAX_COMPONENT {
        return Err(ConfigError::OutOfScale {
            field,
            value: value.to_string(),
            limit: MAX_COMPONENT,
        });
    }
    Ok(())
}

/// All model constants. Construction enforces the field-level invariants;
/// [`validate_grid`] separately reports the full grid-admissibility check
/// needed for the closed-form equilibrium to be representable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameConfig {
    num_users: usize,
    user_size: Rational,
    capacity: Rational,
    early_penalty: Rational,
    late_penalty: Rational,
    grid_step: Rational,
    horizon: Rational,
    // Derived, cached at construction.
    headway_ticks: i64,
    max_tick: i64,
}

impl GameConfig {
    pub fn new(
        num_users: usize,
        user_size: Rational,
        capacity: Rational,
        early_penalty: Rational,
        late_penalty: Rational,
        grid_step: Rational,
        horizon: Rational,
    ) -> Result<GameConfig, ConfigError> {
        use num_traits::Signed;
        if num_users == 0 {
            return Err(ConfigError::NoUsers);
        }
        if num_users > MAX_USERS {
            return Err(ConfigError::OutOfScale {
                field: "num_users",
                value: num_users.to_string(),
                limit: MAX_USERS as i128,
            });
        }
        if !user_size.is_positive() || user_size > rat(1) {
            return Err(ConfigError::UserSize(user_size.to_string()));
        }
        if !capacity.is_positive() {
            return Err(ConfigError::Capacity(capacity.to_string()));
        }
        if !early_penalty.is_positive() || early_penalty >= rat(1) {
            return Err(ConfigError::EarlyPenalty(early_penalty.to_string()));
        }
        if !late_penalty.is_positive() {
            return Err(ConfigError::LatePenalty(late_penalty.to_string()));
        }
        if !grid_step.is_positive() {
            return Err(ConfigError::GridStep(grid_step.to_string()));
        }
        if !horizon.is_positive() {
            return Err(ConfigError::Horizon(horizon.to_string()));
        }
        check_scale("user_size", &user_size)?;
        check_scale("capacity", &capacity)?;
        check_scale("early_penalty", &early_penalty)?;
        check_scale("late_penalty", &late_penalty)?;
        check_scale("grid_step", &grid_step)?;
        let max_tick = exact_quotient(&horizon, &grid_step).ok_or(ConfigError::HorizonOffGrid {
            horizon: horizon.to_string(),
            step: grid_step.to_string(),
        })?;
        if max_tick > MAX_HORIZON_TICKS {
            return Err(ConfigError::OutOfScale {
                field: "horizon/grid_step",
                value: max_tick.to_string(),
                limit: MAX_HORIZON_TICKS,
            });
        }
        let headway = user_size / capacity;
        let headway_ticks =
            exact_quotient(&headway, &grid_step).ok_or(ConfigError::HeadwayOffGrid {
                headway: headway.to_string(),
                step: grid_step.to_string(),
            })?;
        let config = GameConfig {
            num_users,
            user_size,
            capacity,
            early_penalty,
            late_penalty,
            grid_step,
            horizon,
            headway_ticks: headway_ticks as i64,
            max_tick: max_tick as i64,
        };
        let t_minus = config.rush_start_time();
        let t_plus = config.rush_end_time();
        if t_minus <= -&config.horizon || t_plus >= config.horizon {
            return Err(ConfigError::HorizonTooSmall {
                t_minus: t_minus.to_string(),
                t_plus: t_plus.to_string(),
                horizon: config.horizon.to_string(),
            });
        }
        Ok(config)
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }
    pub fn user_size(&self) -> &Rational {
        &self.user_size
    }
    pub fn capacity(&self) -> &Rational {
        &self.capacity
    }
    pub fn early_penalty(&self) -> &Rational {
        &self.early_penalty
    }
    pub fn late_penalty(&self) -> &Rational {
        &self.late_penalty
    }
    pub fn grid_step(&self) -> &Rational {
        &self.grid_step
    }
    pub fn horizon(&self) -> &Rational {
        &self.horizon
    }

    /// Minimum arrival headway `m/mu`.
    pub fn headway(&self) -> Rational {
        self.user_size / self.capacity
    }

    /// Minimum arrival headway in grid ticks.
    pub fn headway_ticks(&self) -> i64 {
        self.headway_ticks
    }

    /// Earliest selectable tick (`-horizon`).
    pub fn min_tick(&self) -> i64 {
        -self.max_tick
    }

    /// Latest selectable tick (`horizon`).
    pub fn max_tick(&self) -> i64 {
        self.max_tick
    }

    pub fn tick_in_range(&self, tick: TimeTick) -> bool {
        tick.0 >= self.min_tick() && tick.0 <= self.max_tick()
    }

    /// The instant represented by a tick.
    pub fn time_of(&self, tick: TimeTick) -> Rational {
        rat(tick.0 as i128) * self.grid_step
    }

    /// Exact tick for an on-grid instant, `None` if the instant is off-grid
    /// or outside `[-horizon, horizon]`.
    pub fn tick_of_time(&self, time: &Rational) -> Option<TimeTick> {
        let q = exact_quotient(time, &self.grid_step)?;
        let tick = TimeTick(i64::try_from(q).ok()?);
        self.tick_in_range(tick).then_some(tick)
    }

    /// Piecewise-linear schedule delay cost for arriving at `time`.
    pub fn schedule_delay_time(&self, time: &Rational) -> Cost {
        use num_traits::Signed;
        if time.is_negative() {
            self.early_penalty * -time
        } else {
            self.late_penalty * time
        }
    }

    /// Schedule delay cost for arriving at a grid tick.
    pub fn schedule_delay(&self, arrival: TimeTick) -> Cost {
        self.schedule_delay_time(&self.time_of(arrival))
    }

    /// Rush-hour start `t-`: the first equilibrium departure.
    pub fn rush_start_time(&self) -> Rational {
        let span = self.rush_length();
        -span * self.late_penalty / (self.early_penalty + self.late_penalty)
    }

    /// Rush-hour end `t+ = t- + m(P-1)/mu`.
    pub fn rush_end_time(&self) -> Rational {
        self.rush_start_time() + self.rush_length()
    }

    /// Rush-hour length `m(P-1)/mu`.
    pub fn rush_length(&self) -> Rational {
        rat((self.num_users - 1) as i128) * self.headway()
    }

    /// Identical equilibrium trip cost `rho`.
    pub fn equilibrium_cost(&self) -> Cost {
        self.rush_length() * self.early_penalty * self.late_penalty
            / (self.early_penalty + self.late_penalty)
    }

    /// The `epsilon` for which the closed-form profile is an epsilon-Nash
    /// equilibrium: `m(1 + late_penalty)/mu`.
    pub fn epsilon(&self) -> Cost {
        self.headway() * (rat(1) + self.late_penalty)
    }

    /// Equilibrium departure spacing for early arrivals, `m(1-beta)/mu`.
    pub fn early_spacing(&self) -> Rational {
        self.headway() * (rat(1) - self.early_penalty)
    }

    /// Equilibrium departure spacing for late arrivals, `m(1+gamma)/mu`.
    pub fn late_spacing(&self) -> Rational {
        self.epsilon()
    }
}

/// One grid-admissibility condition that a config can violate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridViolation {
    pub condition: &'static str,
    pub value: Rational,
}

impl fmt::Display for GridViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} = {} is not an integer multiple of the grid step",
            self.condition, self.value
        )
    }
}

/// Checks that every quantity the closed-form equilibrium produces lands on
/// the grid: `rho/beta` (the rush-hour start magnitude), both equilibrium
/// departure spacings, the straddling term `(beta+gamma) * rho/beta`, and the
/// headway `m/mu`. Total: returns all violated conditions.
pub fn validate_grid(config: &GameConfig) -> Result<(), Vec<GridViolation>> {
    let step = config.grid_step();
    let rho_over_beta = config.equilibrium_cost() / config.early_penalty();
    let checks = [
        ("rho/beta", rho_over_beta),
        ("m(1-beta)/mu", config.early_spacing()),
        ("m(1+gamma)/mu", config.late_spacing()),
        (
            "(beta+gamma)*rho/beta",
            (config.early_penalty() + config.late_penalty()) * rho_over_beta,
        ),
        ("m/mu", config.headway()),
    ];
    let violations: Vec<GridViolation> = checks
        .into_iter()
        .filter(|(_, value)| !is_multiple_of(value, step))
        .map(|(condition, value)| GridViolation { condition, value })
        .collect();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("profile must assign exactly {expected} departures, got {got}")]
    WrongSize { expected: usize, got: usize },
    #[error("user {0} appears more than once")]
    DuplicateUser(UserId),
    #[error("user id {0} is outside 1..={1}")]
    UnknownUser(UserId, usize),
    #[error("users {first} and {second} share departure {tick}")]
    DuplicateTime {
        first: UserId,
        second: UserId,
        tick: TimeTick,
    },
    #[error("departure {time} for user {user} is off-grid (between ticks {below} and {above})")]
    OffGrid {
        user: UserId,
        time: String,
        below: TimeTick,
        above: TimeTick,
    },
    #[error("departure {tick} for user {user} is outside the horizon [{min}, {max}]")]
    OutOfRange {
        user: UserId,
        tick: TimeTick,
        min: i64,
        max: i64,
    },
    #[error("tick {0} is already occupied")]
    Occupied(TimeTick),
}

/// A strategy profile: one distinct departure tick per user.
///
/// The departure order (rank of each user's tick, ascending) is derived on
/// demand; all mutation goes through [`TimeProfile::move_user`], which keeps
/// the distinctness invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeProfile {
    departures: Vec<TimeTick>,
}

impl TimeProfile {
    /// Builds a profile from per-user ticks (index 0 is user 1).
    pub fn new(departures: Vec<TimeTick>, config: &GameConfig) -> Result<TimeProfile, ProfileError> {
        if departures.len() != config.num_users() {
            return Err(ProfileError::WrongSize {
                expected: config.num_users(),
                got: departures.len(),
            });
        }
        let mut seen: HashMap<i64, UserId> = HashMap::with_capacity(departures.len());
        for (idx, tick) in departures.iter().enumerate() {
            let user = idx + 1;
            if !config.tick_in_range(*tick) {
                return Err(ProfileError::OutOfRange {
                    user,
                    tick: *tick,
                    min: config.min_tick(),
                    max: config.max_tick(),
                });
            }
            if let Some(first) = seen.insert(tick.0, user) {
                return Err(ProfileError::DuplicateTime {
                    first,
                    second: user,
                    tick: *tick,
                });
            }
        }
        Ok(TimeProfile { departures })
    }

    pub fn num_users(&self) -> usize {
        self.departures.len()
    }

    pub fn departure(&self, user: UserId) -> TimeTick {
        self.departures[user - 1]
    }

    pub fn departures(&self) -> &[TimeTick] {
        &self.departures
    }

    pub fn is_occupied(&self, tick: TimeTick) -> bool {
        self.departures.contains(&tick)
    }

    /// User ids sorted by departure tick: `by_order()[0]` departs first.
    pub fn users_by_order(&self) -> Vec<UserId> {
        let mut users: Vec<UserId> = (1..=self.departures.len()).collect();
        users.sort_by_key(|u| self.departures[u - 1].0);
        users
    }

    /// Moves one user to an unoccupied in-range tick.
    pub fn move_user(
        &mut self,
        user: UserId,
        to: TimeTick,
        config: &GameConfig,
    ) -> Result<(), ProfileError> {
        if user == 0 || user > self.departures.len() {
            return Err(ProfileError::UnknownUser(user, self.departures.len()));
        }
        if !config.tick_in_range(to) {
            return Err(ProfileError::OutOfRange {
                user,
                tick: to,
                min: config.min_tick(),
                max: config.max_tick(),
            });
        }
        if self.departures[user - 1] != to && self.is_occupied(to) {
            return Err(ProfileError::Occupied(to));
        }
        self.departures[user - 1] = to;
        Ok(())
    }
}

/// Canonical profile construction from `(user, time)` pairs.
///
/// Times must be exact grid multiples inside the horizon; duplicate times are
/// a hard error naming both users (the game forbids shared departure times).
pub fn profile_from_departures(
    entries: &[(UserId, Rational)],
    config: &GameConfig,
) -> Result<TimeProfile, ProfileError> {
    if entries.len() != config.num_users() {
        return Err(ProfileError::WrongSize {
            expected: config.num_users(),
            got: entries.len(),
        });
    }
    let mut departures: Vec<Option<TimeTick>> = vec![None; config.num_users()];
    for (user, time) in entries {
        let user = *user;
        if user == 0 || user > config.num_users() {
            return Err(ProfileError::UnknownUser(user, config.num_users()));
        }
        if departures[user - 1].is_some() {
            return Err(ProfileError::DuplicateUser(user));
        }
        let tick = config.tick_of_time(time).ok_or_else(|| {
            let below = (time / config.grid_step()).floor().to_integer() as i64;
            ProfileError::OffGrid {
                user,
                time: time.to_string(),
                below: TimeTick(below),
                above: TimeTick(below + 1),
            }
        })?;
        departures[user - 1] = Some(tick);
    }
    let departures: Vec<TimeTick> = departures.into_iter().map(|d| d.unwrap()).collect();
    TimeProfile::new(departures, config)
}

/// Realised trip of a single user under a given profile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripOutcome {
    pub user: UserId,
    /// Departure rank (1 = first to depart).
    pub order: usize,
    pub departure: TimeTick,
    pub arrival: TimeTick,
    pub queue_delay: Rational,
    pub schedule_delay: Cost,
    pub trip_cost: Cost,
}

/// All per-user outcomes for one profile, with order lookups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcomes {
    by_user: Vec<TripOutcome>,
    users_by_order: Vec<UserId>,
}

impl Outcomes {
    /// Assembles outcomes computed elsewhere (the brute-force oracle).
    pub fn from_parts(by_user: Vec<TripOutcome>, users_by_order: Vec<UserId>) -> Outcomes {
        Outcomes {
            by_user,
            users_by_order,
        }
    }

    pub fn user(&self, user: UserId) -> &TripOutcome {
        &self.by_user[user - 1]
    }

    /// Outcome of the user at departure rank `order` (1-based).
    pub fn by_order(&self, order: usize) -> &TripOutcome {
        self.user(self.users_by_order[order - 1])
    }

    pub fn users_by_order(&self) -> &[UserId] {
        &self.users_by_order
    }

    pub fn num_users(&self) -> usize {
        self.by_user.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TripOutcome> {
        self.by_user.iter()
    }

    /// Outcomes in departure order.
    pub fn iter_ordered(&self) -> impl Iterator<Item = &TripOutcome> + '_ {
        self.users_by_order.iter().map(|u| self.user(*u))
    }
}

/// Runs the point-queue arrival recursion over a profile and prices every
/// trip. The first departing user always free-flows; each later user arrives
/// at `max(leader arrival + headway, own departure)`.
pub fn compute_arrivals(profile: &TimeProfile, config: &GameConfig) -> Outcomes {
    let users_by_order = profile.users_by_order();
    let headway = config.headway_ticks();
    let mut by_user: Vec<Option<TripOutcome>> = vec![None; profile.num_users()];
    let mut prev_arrival: Option<i64> = None;
    for (idx, user) in users_by_order.iter().enumerate() {
        let departure = profile.departure(*user);
        let arrival_tick = match prev_arrival {
            Some(prev) => (prev + headway).max(departure.0),
            None => departure.0,
        };
        prev_arrival = Some(arrival_tick);
        let arrival = TimeTick(arrival_tick);
        let queue_delay = config.time_of(arrival) - config.time_of(departure);
        let schedule_delay = config.schedule_delay(arrival);
        let trip_cost = queue_delay + schedule_delay;
        by_user[*user - 1] = Some(TripOutcome {
            user: *user,
            order: idx + 1,
            departure,
            arrival,
            queue_delay,
            schedule_delay,
            trip_cost,
        });
    }
    Outcomes {
        by_user: by_user.into_iter().map(|o| o.unwrap()).collect(),
        users_by_order,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    /// The experiment configuration used throughout the test suite:
    /// P=101, m=1, mu=1, beta=1/2, gamma=2, grid step 1/100, horizon 100.
    pub(crate) fn benchmark_config() -> GameConfig {
        GameConfig::new(
            101,
            rat(1),
            rat(1),
            ratio(1, 2),
            rat(2),
            ratio(1, 100),
            rat(100),
        )
        .unwrap()
    }

    fn tiny_config(num_users: usize, grid_step: Rational, horizon: Rational) -> GameConfig {
        GameConfig::new(
            num_users,
            rat(1),
            rat(1),
            ratio(1, 2),
            rat(2),
            grid_step,
            horizon,
        )
        .unwrap()
    }

    #[test]
    fn benchmark_config_is_grid_admissible() {
        // 80, 1/2, 3, 200 and 1 are all multiples of 1/100.
        let config = benchmark_config();
        assert!(validate_grid(&config).is_ok());
        assert_eq!(config.rush_start_time(), rat(-80));
        assert_eq!(config.equilibrium_cost(), rat(40));
    }

    #[test]
    fn coarse_grid_violates_rush_start_condition() {
        // P=2, m=mu=1, grid step equal to the headway: rho/beta = 4/5 is not a
        // multiple of 1, so the check must name that condition.
        let config = tiny_config(2, rat(1), rat(10));
        let violations = validate_grid(&config).unwrap_err();
        assert!(violations.iter().any(|v| v.condition == "rho/beta"));
        assert!(violations
            .iter()
            .all(|v| v.condition != "m/mu" && v.condition != "m(1+gamma)/mu"));
    }

    #[test]
    fn headway_off_grid_is_rejected_at_construction() {
        let err = GameConfig::new(
            2,
            rat(1),
            rat(3),
            ratio(1, 2),
            rat(2),
            ratio(1, 10),
            rat(10),
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::HeadwayOffGrid { .. }));
    }

    #[test]
    fn out_of_scale_constants_are_rejected() {
        // A five-digit penalty denominator is over the supported scale.
        let err = GameConfig::new(
            2,
            rat(1),
            rat(1),
            ratio(4999, 10_001),
            rat(2),
            ratio(1, 10),
            rat(10),
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::OutOfScale { field: "early_penalty", .. }));
        // So is a grid fine enough to need more than a billion ticks.
        let err = GameConfig::new(
            2,
            rat(1),
            rat(1),
            ratio(1, 2),
            rat(2),
            ratio(1, 10_000),
            rat(1_000_000),
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::OutOfScale { .. }));
    }

    #[test]
    fn horizon_must_contain_rush_hour_strictly() {
        // Rush hour for P=101 is [-80, 20]; horizon 80 puts t- on the boundary.
        let err = GameConfig::new(
            101,
            rat(1),
            rat(1),
            ratio(1, 2),
            rat(2),
            ratio(1, 100),
            rat(80),
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::HorizonTooSmall { .. }));
    }

    #[test]
    fn schedule_delay_matches_piecewise_form() {
        let config = benchmark_config();
        assert_eq!(config.schedule_delay(TimeTick(0)), rat(0));
        // Arriving at -80 with beta = 1/2 costs 40.
        assert_eq!(config.schedule_delay(TimeTick(-8000)), rat(40));
        // Arriving at 4 with gamma = 2 costs 8.
        assert_eq!(config.schedule_delay(TimeTick(400)), rat(8));
    }

    #[test]
    fn single_user_free_flows() {
        let config = tiny_config(1, ratio(1, 10), rat(10));
        let profile = TimeProfile::new(vec![TimeTick(50)], &config).unwrap();
        let outcomes = compute_arrivals(&profile, &config);
        let trip = outcomes.user(1);
        assert_eq!(trip.arrival, TimeTick(50));
        assert_eq!(trip.queue_delay, rat(0));
        assert_eq!(trip.trip_cost, rat(10)); // V(5) = 2 * 5
    }

    #[test]
    fn three_user_recursion_matches_hand_computation() {
        // Headway 1, departures (0, 1/2, 3) -> arrivals (0, 1, 3), queues (0, 1/2, 0).
        let config = tiny_config(3, ratio(1, 2), rat(20));
        let profile = TimeProfile::new(vec![TimeTick(0), TimeTick(1), TimeTick(6)], &config).unwrap();
        let outcomes = compute_arrivals(&profile, &config);
        assert_eq!(outcomes.user(1).arrival, TimeTick(0));
        assert_eq!(outcomes.user(2).arrival, TimeTick(2));
        assert_eq!(outcomes.user(3).arrival, TimeTick(6));
        assert_eq!(outcomes.user(2).queue_delay, ratio(1, 2));
        assert_eq!(outcomes.user(3).queue_delay, rat(0));
    }

    #[test]
    fn arrival_gaps_never_undercut_headway() {
        let config = tiny_config(4, ratio(1, 2), rat(20));
        let profile = TimeProfile::new(
            vec![TimeTick(0), TimeTick(1), TimeTick(-3), TimeTick(2)],
            &config,
        )
        .unwrap();
        let outcomes = compute_arrivals(&profile, &config);
        let ordered: Vec<i64> = outcomes.iter_ordered().map(|t| t.arrival.0).collect();
        for pair in ordered.windows(2) {
            assert!(pair[1] - pair[0] >= config.headway_ticks());
        }
    }

    #[test]
    fn profile_construction_rejects_bad_input() {
        let config = tiny_config(2, ratio(1, 100), rat(10));
        let dup = profile_from_departures(&[(1, rat(0)), (2, rat(0))], &config).unwrap_err();
        assert!(matches!(
            dup,
            ProfileError::DuplicateTime { first: 1, second: 2, .. }
        ));
        let off = profile_from_departures(&[(1, ratio(1, 200)), (2, rat(1))], &config).unwrap_err();
        assert!(matches!(off, ProfileError::OffGrid { user: 1, .. }));
        let ok = profile_from_departures(&[(1, rat(0)), (2, rat(1))], &config).unwrap();
        let outcomes = compute_arrivals(&ok, &config);
        assert_eq!(outcomes.user(1).order, 1);
        assert_eq!(outcomes.user(2).order, 2);
    }
}
