//! Day-to-day better-response dynamics.
//!
//! Two variants run over the same game:
//!
//! * **Naive**: each day one user, picked uniformly, draws a single random
//!   free tick and moves iff the forecast strictly beats their current cost.
//! * **Fixation**: the convergent variant. The current first departer is the
//!   reference user; their trip cost `C^r` is the provisional equilibrium
//!   cost. Users matching `C^r` at minimum headway form a fixed prefix that
//!   never moves; everyone else better-responds strictly later than the
//!   prefix, checking the reference departure time (the unique tick where the
//!   next user would realise exactly `C^r`) before random candidates. When
//!   the prefix stops growing for `stuck_threshold` days the eventual profile
//!   is classified: costs above `C^r` mean the first departure is too late,
//!   costs below (or all-equal with a queued last user) mean too early. The
//!   matching bound on the first departure is tightened, everyone is
//!   released, and fixation resumes once the first departure changes to a
//!   time strictly inside the bounds.
//!
//! All state evolves deterministically from `(config, initial profile, seed)`.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::equilibrium::{equilibrium_solution, EquilibriumError};
use crate::forecast::{sample_better_response_with, ForecastContext};
use crate::model::{
    compute_arrivals, GameConfig, Outcomes, TimeProfile, TimeTick, UserId,
};
use crate::rational::{rat, to_f64, Cost};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynamicsKind {
    Naive,
    Fixation,
}

impl std::fmt::Display for DynamicsKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DynamicsKind::Naive => write!(f, "naive"),
            DynamicsKind::Fixation => write!(f, "fixation"),
        }
    }
}

/// What happened on a given day.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DayEvent {
    /// A user accepted a better response.
    Move,
    /// No improving candidate was found (or nothing had to happen).
    NoMove,
    /// The fixed prefix grew, either by absorbing users after a move or by
    /// re-entering fixation after a release.
    Fix,
    /// Stuck trigger fired and a bound on the first departure was tightened;
    /// all users were released.
    BoundUpdate,
    /// Stuck trigger fired but no bound could be updated (anomalous or
    /// degenerate evidence); users were released with bounds unchanged.
    Release,
}

impl DayEvent {
    pub fn as_str(&self) -> &'static str {
        match self {
            DayEvent::Move => "move",
            DayEvent::NoMove => "no-move",
            DayEvent::Fix => "fix",
            DayEvent::BoundUpdate => "bound-update",
            DayEvent::Release => "release",
        }
    }
}

/// Shape of an eventual (stuck) profile relative to the reference cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    /// Every user matches the reference cost at minimum headway with no
    /// terminal queue: the equilibrium.
    Converged,
    /// All users match the reference cost but the last one still queues;
    /// the first departure is too early.
    AllEqualWithTerminalQueue,
    /// Some users are off the reference cost, all of them above it; the
    /// first departure is too late.
    SomeAboveReference,
    /// Some users are off the reference cost, all of them below it; the
    /// first departure is too early.
    SomeBelowReference,
    /// Off-reference costs on both sides: the stuck trigger fired on a
    /// transitional state (the theory rules this out for truly stuck ones).
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
}

/// Per-day sampling and stopping knobs.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub kind: DynamicsKind,
    pub seed: u64,
    pub max_days: u64,
    /// Stop as soon as every trip cost equals the equilibrium cost exactly.
    pub stop_on_equilibrium: bool,
    /// Consecutive fixation days without prefix growth before the bounds are
    /// adjusted and users released.
    pub stuck_threshold: u64,
    /// Random candidates a selected user evaluates per day.
    pub max_candidates: usize,
    /// Initial bounds on the first departure; defaults to the full horizon.
    pub initial_bounds: Option<(TimeTick, TimeTick)>,
    /// Days whose full profiles should be captured.
    pub snapshot_days: BTreeSet<u64>,
}

impl RunSettings {
    pub fn new(kind: DynamicsKind, seed: u64, max_days: u64) -> RunSettings {
        RunSettings {
            kind,
            seed,
            max_days,
            stop_on_equilibrium: true,
            stuck_threshold: 10_000,
            max_candidates: 100,
            initial_bounds: None,
            snapshot_days: BTreeSet::new(),
        }
    }
}

/// One trajectory row.
#[derive(Debug, Clone, PartialEq)]
pub struct DayRecord {
    pub day: u64,
    pub rmse: f64,
    pub first_departure: TimeTick,
    pub fixed_prefix: usize,
    pub event: DayEvent,
    pub lower_bound: TimeTick,
    pub upper_bound: TimeTick,
}

/// Full run output: per-day records, requested snapshots, final state.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<DayRecord>,
    pub snapshots: Vec<(u64, TimeProfile)>,
    pub final_profile: TimeProfile,
    pub final_day: u64,
    pub converged: bool,
    /// Diagnostics for stuck triggers that fired on states the classification
    /// could not act on.
    pub anomalies: Vec<String>,
}

/// Evolving simulation state for one run.
pub struct DynamicsState {
    pub day: u64,
    pub profile: TimeProfile,
    outcomes: Outcomes,
    /// Trip cost of the reference (first) user while fixation is active.
    pub reference_cost: Option<Cost>,
    /// Number of leading users fixed at the reference cost.
    pub fixed_prefix: usize,
    /// Users still allowed to move, ascending ids.
    pub free_users: Vec<UserId>,
    pub lower_bound: TimeTick,
    pub upper_bound: TimeTick,
    /// Consecutive fixation days without prefix growth.
    pub stuck_counter: u64,
    /// True between a release and the next re-fixation.
    released: bool,
    /// First departure at the moment of the last release; re-fixation
    /// requires it to have changed.
    first_at_release: Option<TimeTick>,
    /// Random candidates evaluated per selected user per day.
    pub max_candidates: usize,
    rng: ChaCha8Rng,
    pub anomalies: Vec<String>,
}

impl DynamicsState {
    pub fn new(
        profile: TimeProfile,
        config: &GameConfig,
        kind: DynamicsKind,
        seed: u64,
        initial_bounds: Option<(TimeTick, TimeTick)>,
    ) -> DynamicsState {
        Self::with_rng(
            profile,
            config,
            kind,
            ChaCha8Rng::seed_from_u64(seed),
            initial_bounds,
        )
    }

    pub fn with_rng(
        profile: TimeProfile,
        config: &GameConfig,
        kind: DynamicsKind,
        rng: ChaCha8Rng,
        initial_bounds: Option<(TimeTick, TimeTick)>,
    ) -> DynamicsState {
        let outcomes = compute_arrivals(&profile, config);
        let (lower, upper) = initial_bounds.unwrap_or((
            TimeTick(config.min_tick()),
            TimeTick(config.max_tick()),
        ));
        let mut state = DynamicsState {
            day: 0,
            profile,
            outcomes,
            reference_cost: None,
            fixed_prefix: 0,
            free_users: Vec::new(),
            lower_bound: lower,
            upper_bound: upper,
            stuck_counter: 0,
            released: false,
            first_at_release: None,
            max_candidates: 100,
            rng,
            anomalies: Vec::new(),
        };
        match kind {
            DynamicsKind::Naive => {
                state.free_users = (1..=state.profile.num_users()).collect();
            }
            DynamicsKind::Fixation => state.enter_fixation(config),
        }
        state
    }

    pub fn outcomes(&self) -> &Outcomes {
        &self.outcomes
    }

    /// Departure tick of the current first user.
    pub fn first_departure(&self) -> TimeTick {
        self.outcomes.by_order(1).departure
    }

    /// True when every trip cost equals the equilibrium cost exactly.
    pub fn at_equilibrium_cost(&self, rho: &Cost) -> bool {
        self.outcomes.iter().all(|t| t.trip_cost == *rho)
    }

    fn refresh_outcomes(&mut self, config: &GameConfig) {
        self.outcomes = compute_arrivals(&self.profile, config);
    }

    /// Starts (or restarts) a fixation phase from the current profile: the
    /// first user's trip cost becomes the reference cost and the maximal
    /// matching prefix is fixed.
    fn enter_fixation(&mut self, config: &GameConfig) {
        let reference = self.outcomes.by_order(1).trip_cost;
        self.reference_cost = Some(reference);
        self.released = false;
        self.first_at_release = None;
        self.stuck_counter = 0;
        self.recompute_prefix(config);
    }

    /// Recomputes the fixed prefix and free set from the cached outcomes.
    fn recompute_prefix(&mut self, config: &GameConfig) {
        let reference = self
            .reference_cost
            .as_ref()
            .expect("prefix only exists during fixation");
        let headway = config.headway_ticks();
        let mut n = 0;
        let mut prev_arrival: Option<i64> = None;
        for trip in self.outcomes.iter_ordered() {
            if trip.trip_cost != *reference {
                break;
            }
            if let Some(prev) = prev_arrival {
                if trip.arrival.0 - prev != headway {
                    break;
                }
            }
            prev_arrival = Some(trip.arrival.0);
            n += 1;
        }
        self.fixed_prefix = n;
        let mut free: Vec<UserId> = self.outcomes.users_by_order()[n..].to_vec();
        free.sort_unstable();
        self.free_users = free;
    }

    /// Releases every user, optionally after a bound update.
    fn release_all(&mut self) {
        self.released = true;
        self.first_at_release = Some(self.first_departure());
        self.reference_cost = None;
        self.fixed_prefix = 0;
        self.free_users = (1..=self.profile.num_users()).collect();
        self.stuck_counter = 0;
    }

    /// One day of naive dynamics: a uniform user draws one tick uniformly
    /// from the unoccupied grid and moves iff the forecast strictly improves.
    pub fn naive_step(&mut self, config: &GameConfig) -> DayEvent {
        self.day += 1;
        let user = *self
            .free_users
            .choose(&mut self.rng)
            .expect("population is never empty");
        // Occupied ticks are not strategies; rejection keeps the draw uniform
        // over the free ticks (the population is a sliver of the grid).
        let mut tick = TimeTick(self.rng.random_range(config.min_tick()..=config.max_tick()));
        let mut rejections = 0usize;
        while self.profile.is_occupied(tick) {
            rejections += 1;
            if rejections > 10_000 {
                return DayEvent::NoMove;
            }
            tick = TimeTick(self.rng.random_range(config.min_tick()..=config.max_tick()));
        }
        let ctx = ForecastContext::from_outcomes(&self.outcomes, config);
        let forecast = ctx
            .forecast(tick)
            .expect("tick checked unoccupied and in range");
        if forecast < self.outcomes.user(user).trip_cost {
            self.profile
                .move_user(user, tick, config)
                .expect("candidate tick is unoccupied");
            self.refresh_outcomes(config);
            DayEvent::Move
        } else {
            DayEvent::NoMove
        }
    }

    /// One day of fixation dynamics (including released free days and the
    /// stuck-trigger bound adjustment).
    pub fn fixation_step(&mut self, config: &GameConfig) -> DayEvent {
        self.day += 1;
        if self.released {
            return self.released_day(config);
        }
        if self.free_users.is_empty() {
            // Everyone fixed; nothing can move until a release.
            self.stuck_counter += 1;
            return DayEvent::NoMove;
        }
        let user = *self
            .free_users
            .choose(&mut self.rng)
            .expect("free set checked non-empty");
        let prefix_end = if self.fixed_prefix > 0 {
            Some(self.outcomes.by_order(self.fixed_prefix).departure)
        } else {
            None
        };
        let restriction = prefix_end.map(|t| TimeTick(t.0 + 1));
        let reference_tick = self.reference_tick(config);
        let ctx = ForecastContext::from_outcomes(&self.outcomes, config);
        let chosen = sample_better_response_with(
            &ctx,
            &self.outcomes,
            user,
            config,
            &mut self.rng,
            self.max_candidates,
            restriction,
            reference_tick,
        );
        let mut event = DayEvent::NoMove;
        if let Some(tick) = chosen {
            debug_assert!(restriction.map(|r| tick.0 >= r.0).unwrap_or(true));
            self.profile
                .move_user(user, tick, config)
                .expect("sampled tick is unoccupied");
            self.refresh_outcomes(config);
            event = DayEvent::Move;
            let before = self.fixed_prefix;
            self.recompute_prefix(config);
            if self.fixed_prefix > before {
                event = DayEvent::Fix;
            }
        }
        if event == DayEvent::Fix {
            self.stuck_counter = 0;
        } else {
            self.stuck_counter += 1;
        }
        event
    }

    /// Reference departure time for the next user to fix, if it exists on the
    /// grid and respects the no-overtaking restriction.
    fn reference_tick(&self, config: &GameConfig) -> Option<TimeTick> {
        let reference = self.reference_cost.as_ref()?;
        reference_departure_time_from(&self.outcomes, self.fixed_prefix, reference, config)
    }

    /// A day in released mode: unrestricted better responses; fixation
    /// resumes once the first departure has changed to a time strictly
    /// inside the bounds.
    fn released_day(&mut self, config: &GameConfig) -> DayEvent {
        let user = *self
            .free_users
            .choose(&mut self.rng)
            .expect("population is never empty");
        let ctx = ForecastContext::from_outcomes(&self.outcomes, config);
        let chosen = sample_better_response_with(
            &ctx,
            &self.outcomes,
            user,
            config,
            &mut self.rng,
            self.max_candidates,
            None,
            None,
        );
        let mut event = DayEvent::NoMove;
        if let Some(tick) = chosen {
            self.profile
                .move_user(user, tick, config)
                .expect("sampled tick is unoccupied");
            self.refresh_outcomes(config);
            event = DayEvent::Move;
        }
        let first = self.first_departure();
        let changed = self.first_at_release.map(|t| t != first).unwrap_or(true);
        if changed && first.0 > self.lower_bound.0 && first.0 < self.upper_bound.0 {
            self.enter_fixation(config);
            event = DayEvent::Fix;
        }
        event
    }
}

/// Classifies a stuck profile against the reference cost.
pub fn classify_eventual_profile(state: &DynamicsState, config: &GameConfig) -> Classification {
    let reference = match &state.reference_cost {
        Some(c) => c,
        None => return Classification::Mixed,
    };
    let outcomes = &state.outcomes;
    let mut above = false;
    let mut below = false;
    for trip in outcomes.iter() {
        if trip.trip_cost > *reference {
            above = true;
        } else if trip.trip_cost < *reference {
            below = true;
        }
    }
    let _ = config;
    match (above, below) {
        (true, true) => Classification::Mixed,
        (true, false) => Classification::SomeAboveReference,
        (false, true) => Classification::SomeBelowReference,
        (false, false) => {
            let last = outcomes.by_order(outcomes.num_users());
            if last.queue_delay > rat(0) {
                Classification::AllEqualWithTerminalQueue
            } else if state.fixed_prefix == outcomes.num_users() {
                Classification::Converged
            } else {
                // All costs equal the reference but the headway chain is
                // broken; treat as a transitional anomaly.
                Classification::Mixed
            }
        }
    }
}

/// Applies the stuck-trigger adjustment: tightens the bound matching the
/// classification (upper bound on too-late evidence, lower bound on
/// too-early evidence) and releases every user. Updates that would not
/// strictly shrink the window, or that would evict the known equilibrium
/// first departure from `[lower, upper]`, are skipped as anomalies; users
/// are still released so free better responses can move the first departure.
pub fn adjust_bounds_and_release(
    state: &mut DynamicsState,
    classification: Classification,
    config: &GameConfig,
) -> DayEvent {
    debug_assert!(classification != Classification::Converged);
    let s1 = state.first_departure();
    let too_late = matches!(classification, Classification::SomeAboveReference);
    let too_early = matches!(
        classification,
        Classification::SomeBelowReference | Classification::AllEqualWithTerminalQueue
    );
    let strictly_inside = s1.0 > state.lower_bound.0 && s1.0 < state.upper_bound.0;

    // The engine knows t- exactly; it is used only to keep the bound-safety
    // invariant checkable, never to pick moves.
    let t_minus_tick = config
        .tick_of_time(&config.rush_start_time())
        .map(|t| t.0);

    let mut updated = false;
    if strictly_inside && (too_late || too_early) {
        let (lower, upper) = if too_late {
            (state.lower_bound, s1)
        } else {
            (s1, state.upper_bound)
        };
        let safe = match t_minus_tick {
            Some(t) => lower.0 <= t && t <= upper.0,
            None => true,
        };
        if safe {
            state.lower_bound = lower;
            state.upper_bound = upper;
            updated = true;
        } else {
            state.anomalies.push(format!(
                "day {}: {:?} update to [{}, {}] would exclude the equilibrium first departure; skipped",
                state.day, classification, lower.0, upper.0
            ));
        }
    } else if too_late || too_early {
        state.anomalies.push(format!(
            "day {}: {:?} with first departure {} on or outside bounds [{}, {}]; bound unchanged",
            state.day, classification, s1.0, state.lower_bound.0, state.upper_bound.0
        ));
    } else {
        state.anomalies.push(format!(
            "day {}: stuck trigger fired on a {:?} profile; bound unchanged",
            state.day, classification
        ));
    }
    state.release_all();
    if updated {
        DayEvent::BoundUpdate
    } else {
        DayEvent::Release
    }
}

/// The departure time at which the next user after an `prefix_len`-user
/// reference prefix would realise exactly `reference_cost`:
/// `d_n + m/mu + V(d_n + m/mu) - C^r`. Returns `None` when the schedule
/// delay at the target arrival already exceeds the reference cost, when the
/// time is not representable on the grid, or when no user is fixed yet.
pub fn reference_departure_time(
    profile: &TimeProfile,
    prefix_len: usize,
    reference_cost: &Cost,
    config: &GameConfig,
) -> Option<TimeTick> {
    if prefix_len == 0 || prefix_len >= profile.num_users() {
        return None;
    }
    let outcomes = compute_arrivals(profile, config);
    reference_departure_time_from(&outcomes, prefix_len, reference_cost, config)
}

pub(crate) fn reference_departure_time_from(
    outcomes: &Outcomes,
    prefix_len: usize,
    reference_cost: &Cost,
    config: &GameConfig,
) -> Option<TimeTick> {
    if prefix_len == 0 || prefix_len >= outcomes.num_users() {
        return None;
    }
    let d_n = outcomes.by_order(prefix_len).arrival;
    let target_arrival = TimeTick(d_n.0 + config.headway_ticks());
    let schedule = config.schedule_delay(target_arrival);
    if schedule > *reference_cost {
        return None;
    }
    let time = config.time_of(target_arrival) + schedule - reference_cost;
    config.tick_of_time(&time)
}

/// Root mean squared deviation of all trip costs from the equilibrium cost.
/// The inner sum is exact; only the final square root is floating point.
pub fn rmse(profile: &TimeProfile, config: &GameConfig) -> f64 {
    let outcomes = compute_arrivals(profile, config);
    rmse_from(&outcomes, &config.equilibrium_cost(), config.num_users())
}

pub(crate) fn rmse_from(outcomes: &Outcomes, rho: &Cost, num_users: usize) -> f64 {
    let mut sum = rat(0);
    for trip in outcomes.iter() {
        let diff = trip.trip_cost - rho;
        sum += diff * diff;
    }
    if sum == rat(0) {
        return 0.0;
    }
    to_f64(&(sum / rat(num_users as i128))).sqrt()
}

/// Runs the chosen dynamics until every cost equals the equilibrium cost,
/// or `max_days` elapse. Day 0 records the initial profile.
pub fn run(
    config: &GameConfig,
    initial: &TimeProfile,
    settings: &RunSettings,
) -> Result<Trajectory, RunError> {
    run_with_rng(
        config,
        initial,
        settings,
        ChaCha8Rng::seed_from_u64(settings.seed),
    )
}

pub fn run_with_rng(
    config: &GameConfig,
    initial: &TimeProfile,
    settings: &RunSettings,
    rng: ChaCha8Rng,
) -> Result<Trajectory, RunError> {
    let solution = equilibrium_solution(config)?;
    let rho = solution.equilibrium_cost;
    let mut state = DynamicsState::with_rng(
        initial.clone(),
        config,
        settings.kind,
        rng,
        settings.initial_bounds,
    );
    state.max_candidates = settings.max_candidates;

    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let mut rmse_value = rmse_from(&state.outcomes, &rho, config.num_users());
    let mut converged = state.at_equilibrium_cost(&rho);
    let record =
        |state: &DynamicsState, event: DayEvent, rmse_value: f64, records: &mut Vec<DayRecord>| {
            records.push(DayRecord {
                day: state.day,
                rmse: rmse_value,
                first_departure: state.first_departure(),
                fixed_prefix: state.fixed_prefix,
                event,
                lower_bound: state.lower_bound,
                upper_bound: state.upper_bound,
            });
        };
    record(&state, DayEvent::NoMove, rmse_value, &mut records);
    if settings.snapshot_days.contains(&0) {
        snapshots.push((0, state.profile.clone()));
    }

    while state.day < settings.max_days && !(converged && settings.stop_on_equilibrium) {
        let event = match settings.kind {
            DynamicsKind::Naive => state.naive_step(config),
            DynamicsKind::Fixation => {
                if !state.released && state.stuck_counter >= settings.stuck_threshold {
                    state.day += 1;
                    let classification = classify_eventual_profile(&state, config);
                    if classification == Classification::Converged {
                        state.stuck_counter = 0;
                        DayEvent::NoMove
                    } else {
                        adjust_bounds_and_release(&mut state, classification, config)
                    }
                } else {
                    state.fixation_step(config)
                }
            }
        };
        if matches!(event, DayEvent::Move | DayEvent::Fix) {
            rmse_value = rmse_from(&state.outcomes, &rho, config.num_users());
            converged = state.at_equilibrium_cost(&rho);
        }
        record(&state, event, rmse_value, &mut records);
        if settings.snapshot_days.contains(&state.day) {
            snapshots.push((state.day, state.profile.clone()));
        }
    }

    Ok(Trajectory {
        final_day: state.day,
        records,
        snapshots,
        final_profile: state.profile,
        converged,
        anomalies: state.anomalies,
    })
}
