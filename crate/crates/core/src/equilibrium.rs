//! Closed-form epsilon-Nash equilibrium and its verification.
//!
//! The equilibrium profile gives every user the same trip cost `rho`, packs
//! arrivals at the minimum headway, and leaves the first and last departures
//! queue-free. Verification is an exhaustive, exact deviation scan: every
//! user against every unoccupied grid tick.

use thiserror::Error;

use crate::model::{
    compute_arrivals, validate_grid, GameConfig, GridViolation, Outcomes, TimeProfile, TimeTick,
    UserId,
};
use crate::rational::{rat, Cost, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EquilibriumError {
    #[error("grid step is inadmissible: {}", format_violations(.0))]
    InadmissibleGrid(Vec<GridViolation>),
}

fn format_violations(violations: &[GridViolation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// The closed-form equilibrium profile and its constants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquilibriumSolution {
    /// First equilibrium departure `t-`.
    pub first_departure: TimeTick,
    /// Last equilibrium departure `t+ = t- + m(P-1)/mu`.
    pub last_departure: TimeTick,
    /// Identical trip cost `rho`.
    pub equilibrium_cost: Cost,
    /// The tolerance for which the profile is an epsilon-Nash equilibrium.
    pub epsilon: Cost,
    /// Number of users arriving no later than the desired arrival time.
    pub critical_order: usize,
    /// Departure tick per rank (index 0 is the first departure).
    pub departures_by_order: Vec<TimeTick>,
}

impl EquilibriumSolution {
    /// Equilibrium profile with user `k` at rank `k`.
    pub fn profile(&self, config: &GameConfig) -> TimeProfile {
        TimeProfile::new(self.departures_by_order.clone(), config)
            .expect("equilibrium departures are distinct in-range ticks")
    }
}

/// Fluid-model counterpart for total mass `Q = m(P-1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FluidCorrespondence {
    pub total_mass: Rational,
    pub fluid_cost: Cost,
    pub fluid_first_departure: Rational,
    pub early_rate: Rational,
    pub late_rate: Rational,
}

/// Evaluates the closed-form equilibrium.
///
/// Requires a grid-admissible config so every departure lands exactly on a
/// tick: early ranks are spaced `m(1-beta)/mu` from `t-`, late ranks are
/// spaced `m(1+gamma)/mu` back from `t+`, and the critical rank
/// `floor(gamma(P-1)/(beta+gamma)) + 1` splits the two regimes.
pub fn equilibrium_solution(config: &GameConfig) -> Result<EquilibriumSolution, EquilibriumError> {
    validate_grid(config).map_err(EquilibriumError::InadmissibleGrid)?;
    let num_users = config.num_users();
    let t_minus = config.rush_start_time();
    let t_plus = config.rush_end_time();
    let rho = config.equilibrium_cost();
    let epsilon = config.epsilon();
    let critical = (config.late_penalty() * rat((num_users - 1) as i128)
        / (config.early_penalty() + config.late_penalty()))
    .floor()
    .to_integer() as usize
        + 1;

    let early_spacing = config.early_spacing();
    let late_spacing = config.late_spacing();
    let on_grid = |time: &Rational| -> TimeTick {
        config
            .tick_of_time(time)
            .expect("admissible grid keeps equilibrium departures on ticks")
    };
    let mut departures = Vec::with_capacity(num_users);
    for rank in 1..=num_users {
        let time = if rank <= critical {
            t_minus + early_spacing * rat((rank - 1) as i128)
        } else {
            t_plus - late_spacing * rat((num_users - rank) as i128)
        };
        departures.push(on_grid(&time));
    }

    Ok(EquilibriumSolution {
        first_departure: on_grid(&t_minus),
        last_departure: on_grid(&t_plus),
        equilibrium_cost: rho,
        epsilon,
        critical_order: critical,
        departures_by_order: departures,
    })
}

/// A unilateral deviation and how much it gains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviationWitness {
    pub user: UserId,
    pub from: TimeTick,
    pub to: TimeTick,
    pub cost_before: Cost,
    pub cost_after: Cost,
    /// `cost_before - cost_after`; positive means the move helps.
    pub improvement: Cost,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NashVerdict {
    Holds,
    /// The worst violation found (largest improvement, ties broken by lowest
    /// user id then earliest tick).
    Violated(DeviationWitness),
}

impl NashVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, NashVerdict::Holds)
    }
}

/// Arrival prefix of a profile with one user removed, used to price that
/// user's deviations in O(1) per candidate tick.
///
/// By FIFO causality the deviating user's arrival depends only on the users
/// departing before the candidate tick, and removing the deviator never
/// changes those users' arrivals, so `max(prefix arrival + headway, tick)`
/// reproduces exactly what a full recomputation of the deviated profile
/// would yield for the mover. Tests cross-check this against the full
/// recomputation.
struct DeviationScanner<'a> {
    config: &'a GameConfig,
    /// Departure ticks of the remaining users, ascending.
    other_departures: Vec<i64>,
    /// Arrival ticks of the remaining users, same order.
    other_arrivals: Vec<i64>,
}

impl<'a> DeviationScanner<'a> {
    fn new(profile: &TimeProfile, skip_user: UserId, config: &'a GameConfig) -> Self {
        let mut other_departures: Vec<i64> = profile
            .departures()
            .iter()
            .enumerate()
            .filter(|(idx, _)| idx + 1 != skip_user)
            .map(|(_, t)| t.0)
            .collect();
        other_departures.sort_unstable();
        let headway = config.headway_ticks();
        let mut other_arrivals = Vec::with_capacity(other_departures.len());
        let mut prev: Option<i64> = None;
        for s in &other_departures {
            let arrival = match prev {
                Some(p) => (p + headway).max(*s),
                None => *s,
            };
            other_arrivals.push(arrival);
            prev = Some(arrival);
        }
        DeviationScanner {
            config,
            other_departures,
            other_arrivals,
        }
    }

    /// Trip cost of the deviating user when departing at `tick`.
    fn cost_at(&self, tick: i64) -> Cost {
        let idx = self.other_departures.partition_point(|s| *s < tick);
        let arrival = if idx == 0 {
            tick
        } else {
            (self.other_arrivals[idx - 1] + self.config.headway_ticks()).max(tick)
        };
        let queue = self.config.time_of(TimeTick(arrival)) - self.config.time_of(TimeTick(tick));
        queue + self.config.schedule_delay(TimeTick(arrival))
    }
}

fn scan_deviations<F>(profile: &TimeProfile, config: &GameConfig, mut visit: F)
where
    F: FnMut(&DeviationWitness) -> bool,
{
    let outcomes = compute_arrivals(profile, config);
    let occupied: std::collections::HashSet<i64> =
        profile.departures().iter().map(|t| t.0).collect();
    'users: for user in 1..=profile.num_users() {
        let scanner = DeviationScanner::new(profile, user, config);
        let base = outcomes.user(user);
        for tick in config.min_tick()..=config.max_tick() {
            if occupied.contains(&tick) {
                continue;
            }
            let cost_after = scanner.cost_at(tick);
            let witness = DeviationWitness {
                user,
                from: base.departure,
                to: TimeTick(tick),
                improvement: base.trip_cost - cost_after,
                cost_before: base.trip_cost,
                cost_after,
            };
            if !visit(&witness) {
                break 'users;
            }
        }
    }
}

/// Exhaustive epsilon-Nash check over every user and unoccupied tick.
pub fn verify_epsilon_nash(
    profile: &TimeProfile,
    epsilon: &Cost,
    config: &GameConfig,
) -> NashVerdict {
    let mut worst: Option<DeviationWitness> = None;
    scan_deviations(profile, config, |witness| {
        if witness.improvement > *epsilon
            && worst
                .as_ref()
                .map(|w| witness.improvement > w.improvement)
                .unwrap_or(true)
        {
            worst = Some(witness.clone());
        }
        true
    });
    match worst {
        Some(w) => NashVerdict::Violated(w),
        None => NashVerdict::Holds,
    }
}

/// Largest trip-cost improvement any single user can realise by moving to an
/// unoccupied tick. Returns zero and no witness when no deviation helps.
pub fn max_unilateral_improvement(
    profile: &TimeProfile,
    config: &GameConfig,
) -> (Cost, Option<DeviationWitness>) {
    let mut best: Option<DeviationWitness> = None;
    scan_deviations(profile, config, |witness| {
        if best
            .as_ref()
            .map(|b| witness.improvement > b.improvement)
            .unwrap_or(true)
        {
            best = Some(witness.clone());
        }
        true
    });
    match best {
        Some(w) if w.improvement > rat(0) => (w.improvement, Some(w)),
        _ => (rat(0), None),
    }
}

/// Fluid-model equilibrium for total mass `Q = m(P-1)`. The atomic constants
/// coincide with these values exactly, which `debug_assert`s pin down.
pub fn fluid_correspondence(config: &GameConfig) -> FluidCorrespondence {
    let total_mass = rat((config.num_users() - 1) as i128) * config.user_size();
    let beta = config.early_penalty();
    let gamma = config.late_penalty();
    let fluid_cost = total_mass / config.capacity() * beta * gamma / (beta + gamma);
    let fluid_first_departure = -(total_mass / config.capacity()) * gamma / (beta + gamma);
    debug_assert_eq!(fluid_cost, config.equilibrium_cost());
    debug_assert_eq!(fluid_first_departure, config.rush_start_time());
    FluidCorrespondence {
        total_mass,
        fluid_cost,
        fluid_first_departure,
        early_rate: config.capacity() / (rat(1) - beta),
        late_rate: config.capacity() / (rat(1) + gamma),
    }
}

/// Full recomputation of a deviated profile; the slow reference used to
/// validate the incremental scanner.
pub fn deviation_cost_by_recompute(
    profile: &TimeProfile,
    user: UserId,
    to: TimeTick,
    config: &GameConfig,
) -> Cost {
    let mut deviated = profile.clone();
    deviated
        .move_user(user, to, config)
        .expect("candidate tick must be unoccupied and in range");
    let outcomes = compute_arrivals(&deviated, config);
    outcomes.user(user).trip_cost
}

/// Convenience: outcomes of the equilibrium profile.
pub fn equilibrium_outcomes(
    solution: &EquilibriumSolution,
    config: &GameConfig,
) -> (TimeProfile, Outcomes) {
    let profile = solution.profile(config);
    let outcomes = compute_arrivals(&profile, config);
    (profile, outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    fn benchmark_config() -> GameConfig {
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

    #[test]
    fn benchmark_constants_are_exact() {
        let config = benchmark_config();
        let eq = equilibrium_solution(&config).unwrap();
        assert_eq!(config.time_of(eq.first_departure), rat(-80));
        assert_eq!(config.time_of(eq.last_departure), rat(20));
        assert_eq!(eq.equilibrium_cost, rat(40));
        assert_eq!(eq.epsilon, rat(3));
        assert_eq!(eq.critical_order, 81);
        // Rank 2 departs at -79.5.
        assert_eq!(
            config.time_of(eq.departures_by_order[1]),
            ratio(-159, 2)
        );
    }

    #[test]
    fn equilibrium_costs_are_identical_and_boundaries_queue_free() {
        let config = benchmark_config();
        let eq = equilibrium_solution(&config).unwrap();
        let (_, outcomes) = equilibrium_outcomes(&eq, &config);
        for trip in outcomes.iter() {
            assert_eq!(trip.trip_cost, rat(40));
        }
        assert_eq!(outcomes.by_order(1).queue_delay, rat(0));
        assert_eq!(outcomes.by_order(101).queue_delay, rat(0));
        // Arrivals run -80..=20 at unit spacing.
        for (idx, trip) in outcomes.iter_ordered().enumerate() {
            assert_eq!(config.time_of(trip.arrival), rat(-80 + idx as i128));
        }
    }

    #[test]
    fn departure_gaps_reproduce_fluid_rates() {
        let config = benchmark_config();
        let eq = equilibrium_solution(&config).unwrap();
        let fluid = fluid_correspondence(&config);
        for pair in eq.departures_by_order.windows(2) {
            let gap = config.time_of(pair[1]) - config.time_of(pair[0]);
            let rate = config.user_size() / gap;
            assert!(rate == fluid.early_rate || rate == fluid.late_rate);
        }
        assert_eq!(fluid.early_rate, rat(2));
        assert_eq!(fluid.late_rate, ratio(1, 3));
    }

    #[test]
    fn single_user_equilibrium_sits_at_the_desired_arrival() {
        let config =
            GameConfig::new(1, rat(1), rat(1), ratio(1, 2), rat(2), ratio(1, 10), rat(10))
                .unwrap();
        let eq = equilibrium_solution(&config).unwrap();
        assert_eq!(eq.first_departure, TimeTick(0));
        assert_eq!(eq.equilibrium_cost, rat(0));
        assert_eq!(eq.departures_by_order, vec![TimeTick(0)]);
        let profile = eq.profile(&config);
        assert!(verify_epsilon_nash(&profile, &rat(0), &config).holds());
        let (gain, witness) = max_unilateral_improvement(&profile, &config);
        assert_eq!(gain, rat(0));
        assert!(witness.is_none());
    }

    #[test]
    fn inadmissible_grid_is_reported() {
        let config =
            GameConfig::new(2, rat(1), rat(1), ratio(1, 2), rat(2), rat(1), rat(10)).unwrap();
        let err = equilibrium_solution(&config).unwrap_err();
        let EquilibriumError::InadmissibleGrid(violations) = err;
        assert!(violations.iter().any(|v| v.condition == "rho/beta"));
    }

    #[test]
    fn scanner_matches_full_recomputation_on_small_profiles() {
        let config =
            GameConfig::new(4, rat(1), rat(1), ratio(1, 2), rat(2), ratio(1, 10), rat(20))
                .unwrap();
        let profile = TimeProfile::new(
            vec![TimeTick(-30), TimeTick(-25), TimeTick(-28), TimeTick(4)],
            &config,
        )
        .unwrap();
        for user in 1..=4 {
            let scanner = DeviationScanner::new(&profile, user, &config);
            for tick in config.min_tick()..=config.max_tick() {
                if profile.is_occupied(TimeTick(tick)) {
                    continue;
                }
                assert_eq!(
                    scanner.cost_at(tick),
                    deviation_cost_by_recompute(&profile, user, TimeTick(tick), &config),
                    "user {user} tick {tick}"
                );
            }
        }
    }

    #[test]
    fn equilibrium_is_epsilon_nash_but_not_nash() {
        let config = benchmark_config();
        let eq = equilibrium_solution(&config).unwrap();
        let profile = eq.profile(&config);
        assert!(verify_epsilon_nash(&profile, &eq.epsilon, &config).holds());
        // With epsilon = 0 a queued user improves by delaying departure
        // without changing arrival.
        match verify_epsilon_nash(&profile, &rat(0), &config) {
            NashVerdict::Violated(witness) => {
                assert!(witness.improvement > rat(0));
                assert!(witness.improvement < rat(3));
            }
            NashVerdict::Holds => panic!("pure Nash should not hold"),
        }
        let (gain, witness) = max_unilateral_improvement(&profile, &config);
        assert!(gain > rat(0));
        assert!(gain < rat(3));
        assert!(witness.is_some());
    }

    #[test]
    fn scaling_preserves_rush_hour_and_shrinks_epsilon() {
        // Q = m(P-1) = 100 fixed while m halves.
        let halved = GameConfig::new(
            201,
            ratio(1, 2),
            rat(1),
            ratio(1, 2),
            rat(2),
            ratio(1, 100),
            rat(100),
        )
        .unwrap();
        let eq = equilibrium_solution(&halved).unwrap();
        assert_eq!(halved.time_of(eq.first_departure), rat(-80));
        assert_eq!(eq.equilibrium_cost, rat(40));
        assert_eq!(eq.epsilon, ratio(3, 2));
        let fluid = fluid_correspondence(&halved);
        assert_eq!(fluid.total_mass, rat(100));
        assert_eq!(fluid.fluid_cost, rat(40));
        assert_eq!(fluid.fluid_first_departure, rat(-80));
    }
}
