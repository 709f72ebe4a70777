//! Forecasted trip costs for unoccupied departure times.
//!
//! A user weighing a move to an empty tick does not know the cost they would
//! realise; they forecast it from the current profile. Between two users
//! whose arrivals are exactly one headway apart the forecast interpolates
//! their (departure, trip cost) points linearly. Where the arrival gap is
//! wider, the queue dissipates at the leading user's arrival time `d_k`:
//! candidate times up to `d_k` interpolate from `(s_k, C_k)` to
//! `(d_k, V(d_k))`, and candidate times beyond forecast the bare schedule
//! delay `V`. Times before the first departure or at/after the last arrival
//! also forecast `V`. Ticks after the last departure but before its arrival
//! use the same dissipation split with an unbounded tail.
//!
//! A better response is a move whose forecast is strictly below the mover's
//! current trip cost; the epsilon-Nash profile is the unique profile offering
//! none to anyone.

use rand::Rng;
use thiserror::Error;

use crate::model::{compute_arrivals, GameConfig, Outcomes, TimeProfile, TimeTick, UserId};
use crate::rational::{rat, Cost};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ForecastError {
    #[error("tick {0} is occupied; forecasts are defined only for free ticks")]
    Occupied(TimeTick),
    #[error("tick {0} is outside the horizon")]
    OutOfRange(TimeTick),
}

/// Profile view with everything the forecast needs, reusable across many
/// candidate ticks.
pub struct ForecastContext<'a> {
    config: &'a GameConfig,
    /// Departure ticks ascending.
    departures: Vec<i64>,
    /// Arrival ticks in departure order.
    arrivals: Vec<i64>,
    /// Trip costs in departure order.
    costs: Vec<Cost>,
}

impl<'a> ForecastContext<'a> {
    pub fn new(profile: &TimeProfile, config: &'a GameConfig) -> Self {
        let outcomes = compute_arrivals(profile, config);
        Self::from_outcomes(&outcomes, config)
    }

    pub fn from_outcomes(outcomes: &Outcomes, config: &'a GameConfig) -> Self {
        let mut departures = Vec::with_capacity(outcomes.num_users());
        let mut arrivals = Vec::with_capacity(outcomes.num_users());
        let mut costs = Vec::with_capacity(outcomes.num_users());
        for trip in outcomes.iter_ordered() {
            departures.push(trip.departure.0);
            arrivals.push(trip.arrival.0);
            costs.push(trip.trip_cost);
        }
        ForecastContext {
            config,
            departures,
            arrivals,
            costs,
        }
    }

    pub fn is_occupied(&self, tick: TimeTick) -> bool {
        self.departures.binary_search(&tick.0).is_ok()
    }

    /// Forecasted cost at an unoccupied, in-range tick.
    pub fn forecast(&self, tick: TimeTick) -> Result<Cost, ForecastError> {
        if !self.config.tick_in_range(tick) {
            return Err(ForecastError::OutOfRange(tick));
        }
        if self.is_occupied(tick) {
            return Err(ForecastError::Occupied(tick));
        }
        Ok(self.forecast_unchecked(tick.0))
    }

    /// Core evaluation; `tick` must be unoccupied and in range.
    fn forecast_unchecked(&self, tick: i64) -> Cost {
        let config = self.config;
        let schedule = |t: i64| config.schedule_delay(TimeTick(t));
        let n = self.departures.len();
        // Candidates before the first departure or at/after the last arrival
        // free-flow by assumption.
        if n == 0 || tick < self.departures[0] || tick >= self.arrivals[n - 1] {
            return schedule(tick);
        }
        // Index of the latest user departing before the candidate.
        let k = self.departures.partition_point(|s| *s < tick) - 1;
        if k + 1 < n && self.arrivals[k + 1] - self.arrivals[k] == config.headway_ticks() {
            // Congested bracket: interpolate the two users' costs.
            let s_a = self.departures[k];
            let s_b = self.departures[k + 1];
            let c_a = &self.costs[k];
            let c_b = &self.costs[k + 1];
            let span = config.time_of(TimeTick(s_b)) - config.time_of(TimeTick(s_a));
            let offset = config.time_of(TimeTick(tick)) - config.time_of(TimeTick(s_a));
            return c_a + (c_b - c_a) / span * offset;
        }
        // Queue from user k dissipates at their arrival d_k.
        let d_k = self.arrivals[k];
        if tick <= d_k {
            let s_k = self.departures[k];
            let c_k = &self.costs[k];
            let v_dk = schedule(d_k);
            let span = config.time_of(TimeTick(d_k)) - config.time_of(TimeTick(s_k));
            let offset = config.time_of(TimeTick(tick)) - config.time_of(TimeTick(s_k));
            debug_assert!(span > rat(0));
            c_k + (v_dk - c_k) / span * offset
        } else {
            schedule(tick)
        }
    }
}

/// One-off forecast; building a [`ForecastContext`] is cheaper when scanning
/// many ticks.
pub fn forecasted_cost(
    profile: &TimeProfile,
    tick: TimeTick,
    config: &GameConfig,
) -> Result<Cost, ForecastError> {
    ForecastContext::new(profile, config).forecast(tick)
}

/// How a stretch of free ticks is priced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SegmentKind {
    /// Linear interpolation between two endpoint (time, cost) pairs.
    CongestedInterpolation {
        start: (TimeTick, Cost),
        end: (TimeTick, Cost),
    },
    /// Bare schedule delay `V`.
    FreeFlowSchedule,
    /// Before the first departure or at/after the last arrival; also `V`.
    OutsideRush,
}

/// A maximal run of unoccupied ticks priced by one rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForecastSegment {
    /// First unoccupied tick covered (inclusive).
    pub start: TimeTick,
    /// Last unoccupied tick covered (inclusive).
    pub end: TimeTick,
    pub kind: SegmentKind,
}

/// Splits the free ticks of `[-horizon, horizon]` into forecast segments.
/// Mostly a debugging and testing aid; the hot path evaluates directly.
pub fn forecast_segments(profile: &TimeProfile, config: &GameConfig) -> Vec<ForecastSegment> {
    let ctx = ForecastContext::new(profile, config);
    let n = ctx.departures.len();
    let mut segments = Vec::new();
    let mut push = |start: i64, end: i64, kind: SegmentKind| {
        if start <= end {
            segments.push(ForecastSegment {
                start: TimeTick(start),
                end: TimeTick(end),
                kind,
            });
        }
    };
    if n == 0 {
        push(
            config.min_tick(),
            config.max_tick(),
            SegmentKind::OutsideRush,
        );
        return segments;
    }
    push(
        config.min_tick(),
        ctx.departures[0] - 1,
        SegmentKind::OutsideRush,
    );
    for k in 0..n {
        let s_k = ctx.departures[k];
        let d_k = ctx.arrivals[k];
        let next_departure = if k + 1 < n {
            ctx.departures[k + 1]
        } else {
            config.max_tick() + 1
        };
        let interior_end = next_departure - 1;
        if k + 1 < n && ctx.arrivals[k + 1] - d_k == config.headway_ticks() {
            push(
                s_k + 1,
                interior_end,
                SegmentKind::CongestedInterpolation {
                    start: (TimeTick(s_k), ctx.costs[k]),
                    end: (TimeTick(next_departure), ctx.costs[k + 1]),
                },
            );
        } else if k + 1 < n {
            // In the non-congested case the next user departs after d_k, so
            // the dissipation split lies strictly inside the bracket.
            push(
                s_k + 1,
                d_k.min(interior_end),
                SegmentKind::CongestedInterpolation {
                    start: (TimeTick(s_k), ctx.costs[k]),
                    end: (TimeTick(d_k), config.schedule_delay(TimeTick(d_k))),
                },
            );
            push(d_k + 1, interior_end, SegmentKind::FreeFlowSchedule);
        } else {
            // Tail after the last departure: the dissipation interpolation
            // runs up to (not including) the last arrival, which opens the
            // outside-rush region.
            push(
                s_k + 1,
                (d_k - 1).min(interior_end),
                SegmentKind::CongestedInterpolation {
                    start: (TimeTick(s_k), ctx.costs[k]),
                    end: (TimeTick(d_k), config.schedule_delay(TimeTick(d_k))),
                },
            );
            push(d_k.max(s_k + 1), config.max_tick(), SegmentKind::OutsideRush);
        }
    }
    segments
}

/// Every unoccupied tick (at or after `restriction`, when given) whose
/// forecast strictly beats the user's current trip cost.
pub fn better_response_set(
    profile: &TimeProfile,
    user: UserId,
    config: &GameConfig,
    restriction: Option<TimeTick>,
) -> Vec<TimeTick> {
    let ctx = ForecastContext::new(profile, config);
    let outcomes = compute_arrivals(profile, config);
    better_response_set_with(&ctx, &outcomes, user, config, restriction)
}

pub(crate) fn better_response_set_with(
    ctx: &ForecastContext,
    outcomes: &Outcomes,
    user: UserId,
    config: &GameConfig,
    restriction: Option<TimeTick>,
) -> Vec<TimeTick> {
    let current = &outcomes.user(user).trip_cost;
    let lo = restriction.map(|t| t.0).unwrap_or(config.min_tick());
    let mut improving = Vec::new();
    for tick in lo.max(config.min_tick())..=config.max_tick() {
        if ctx.is_occupied(TimeTick(tick)) {
            continue;
        }
        if ctx.forecast_unchecked(tick) < *current {
            improving.push(TimeTick(tick));
        }
    }
    improving
}

/// True when no user has any better response anywhere on the grid.
pub fn is_stationary(profile: &TimeProfile, config: &GameConfig) -> bool {
    let ctx = ForecastContext::new(profile, config);
    let outcomes = compute_arrivals(profile, config);
    // The cheapest improving tick for ANY user is the one with the smallest
    // forecast, so compare every free tick against the per-user costs once.
    let mut max_cost: Option<&Cost> = None;
    for trip in outcomes.iter() {
        if max_cost.map(|c| trip.trip_cost > *c).unwrap_or(true) {
            max_cost = Some(&trip.trip_cost);
        }
    }
    let max_cost = match max_cost {
        Some(c) => c,
        None => return true,
    };
    for tick in config.min_tick()..=config.max_tick() {
        if ctx.is_occupied(TimeTick(tick)) {
            continue;
        }
        if ctx.forecast_unchecked(tick) < *max_cost {
            return false;
        }
    }
    true
}

/// Candidate search used by the dynamics: check the reference tick first,
/// then up to `max_candidates` uniform draws over the free ticks at or after
/// `restriction`. Returns the first strict improvement, `None` otherwise.
/// Deterministic given the RNG stream.
pub fn sample_better_response<R: Rng + ?Sized>(
    profile: &TimeProfile,
    user: UserId,
    config: &GameConfig,
    rng: &mut R,
    max_candidates: usize,
    restriction: Option<TimeTick>,
    reference: Option<TimeTick>,
) -> Option<TimeTick> {
    let ctx = ForecastContext::new(profile, config);
    let outcomes = compute_arrivals(profile, config);
    sample_better_response_with(
        &ctx,
        &outcomes,
        user,
        config,
        rng,
        max_candidates,
        restriction,
        reference,
    )
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn sample_better_response_with<R: Rng + ?Sized>(
    ctx: &ForecastContext,
    outcomes: &Outcomes,
    user: UserId,
    config: &GameConfig,
    rng: &mut R,
    max_candidates: usize,
    restriction: Option<TimeTick>,
    reference: Option<TimeTick>,
) -> Option<TimeTick> {
    let current = &outcomes.user(user).trip_cost;
    let lo = restriction
        .map(|t| t.0)
        .unwrap_or(config.min_tick())
        .max(config.min_tick());
    let hi = config.max_tick();
    if lo > hi {
        return None;
    }
    if let Some(reference) = reference {
        if reference.0 >= lo
            && reference.0 <= hi
            && !ctx.is_occupied(reference)
            && ctx.forecast_unchecked(reference.0) < *current
        {
            return Some(reference);
        }
    }
    // The occupied ticks are a vanishing fraction of the grid, so rejection
    // sampling terminates quickly; the cap below is a hard stop for
    // pathological profiles that fill their whole range.
    let mut drawn = 0usize;
    let mut rejections = 0usize;
    let rejection_cap = 64 * max_candidates + 1024;
    while drawn < max_candidates && rejections < rejection_cap {
        let tick = TimeTick(rng.random_range(lo..=hi));
        if ctx.is_occupied(tick) {
            rejections += 1;
            continue;
        }
        drawn += 1;
        if ctx.forecast_unchecked(tick.0) < *current {
            return Some(tick);
        }
    }
    None
}

/// True when the realised cost of departing at `tick` equals `V(tick)`, i.e.
/// the tick free-flows in the current profile.
pub fn free_flow_realises_forecast(
    profile: &TimeProfile,
    user: UserId,
    tick: TimeTick,
    config: &GameConfig,
) -> bool {
    let mut deviated = profile.clone();
    if deviated.move_user(user, tick, config).is_err() {
        return false;
    }
    let outcomes = compute_arrivals(&deviated, config);
    outcomes.user(user).trip_cost == config.schedule_delay(tick)
}
