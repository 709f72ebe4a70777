//! Independent oracles and constructive convergence machinery.
//!
//! Three layers of evidence that the game is weakly acyclic under forecasted
//! better responses:
//!
//! * [`brute_force_arrivals`] re-derives every arrival as an explicit
//!   O(P^2) maximum over predecessors, independently of the fast recursion.
//! * [`build_ordered_path`] constructs an explicit better-response path from
//!   any profile to the closed-form equilibrium: phase A walks the first
//!   departure onto the rush-hour start, phase B fixes users onto their
//!   equilibrium departures in order. Every emitted step is validated as a
//!   strict forecast improvement by a single mover.
//! * [`exhaustive_weak_acyclicity`] enumerates the whole (symmetry-reduced)
//!   profile space of a tiny instance and checks by reverse reachability
//!   that every profile reaches the equilibrium and that the equilibrium is
//!   the unique sink.

use std::collections::HashMap;

use thiserror::Error;

use crate::equilibrium::{equilibrium_solution, EquilibriumError, EquilibriumSolution};
use crate::forecast::ForecastContext;
use crate::model::{
    compute_arrivals, GameConfig, Outcomes, TimeProfile, TimeTick, TripOutcome, UserId,
};
use crate::rational::Cost;

/// Arrival oracle: for each user in departure order, the arrival is the
/// maximum over all predecessors of `their departure + (rank distance) *
/// headway`, capped below by the user's own departure. Deliberately avoids
/// the single-pass recursion.
pub fn brute_force_arrivals(profile: &TimeProfile, config: &GameConfig) -> Outcomes {
    let users_by_order = profile.users_by_order();
    let headway = config.headway_ticks();
    let departures: Vec<i64> = users_by_order
        .iter()
        .map(|u| profile.departure(*u).0)
        .collect();
    let mut trips: Vec<Option<TripOutcome>> = vec![None; profile.num_users()];
    for (k, user) in users_by_order.iter().enumerate() {
        let mut arrival = departures[k];
        for (j, dep_j) in departures.iter().enumerate().take(k) {
            arrival = arrival.max(dep_j + ((k - j) as i64) * headway);
        }
        let arrival = TimeTick(arrival);
        let departure = TimeTick(departures[k]);
        let queue_delay = config.time_of(arrival) - config.time_of(departure);
        let schedule_delay = config.schedule_delay(arrival);
        let trip_cost = queue_delay + schedule_delay;
        trips[*user - 1] = Some(TripOutcome {
            user: *user,
            order: k + 1,
            departure,
            arrival,
            queue_delay,
            schedule_delay,
            trip_cost,
        });
    }
    Outcomes::from_parts(
        trips.into_iter().map(|t| t.unwrap()).collect(),
        users_by_order,
    )
}

/// One better response along a path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathStep {
    pub day: usize,
    pub user: UserId,
    pub from: TimeTick,
    pub to: TimeTick,
    /// The mover's trip cost before the move.
    pub cost_before: Cost,
    /// Forecast of the destination tick before the move.
    pub forecast: Cost,
}

/// An explicit better-response path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BetterResponsePath {
    pub start: TimeProfile,
    pub steps: Vec<PathStep>,
    pub end: TimeProfile,
}

impl BetterResponsePath {
    /// Plain-text rendering, one step per line:
    /// `day<TAB>user<TAB>from<TAB>to<TAB>cost_before<TAB>forecast`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("day\tuser\tfrom_tick\tto_tick\tcost_before\tforecast\n");
        for step in &self.steps {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                step.day, step.user, step.from.0, step.to.0, step.cost_before, step.forecast
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error("no improving witness tick found at step {step} (phase {phase}); state: {detail}")]
    WitnessNotFound {
        step: usize,
        phase: &'static str,
        detail: String,
    },
    #[error("step {step}: move of user {user} to {to} is not a strict improvement ({forecast} >= {cost})")]
    NotImproving {
        step: usize,
        user: UserId,
        to: TimeTick,
        forecast: String,
        cost: String,
    },
    #[error("path construction exceeded {0} steps; aborting (implementation bug)")]
    IterationCap(usize),
}

/// Violations a replayed path can exhibit.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathViolation {
    #[error("step {step}: user {user} does not depart at {from}")]
    WrongOrigin {
        step: usize,
        user: UserId,
        from: TimeTick,
    },
    #[error("step {step}: destination {to} is occupied")]
    DestinationOccupied { step: usize, to: TimeTick },
    #[error("step {step}: forecast {forecast} does not improve on cost {cost}")]
    NotImproving {
        step: usize,
        forecast: String,
        cost: String,
    },
    #[error("step {step}: user {user} moved although ranks 1..={prefix} are already at their equilibrium departures")]
    FixedPrefixMoved {
        step: usize,
        user: UserId,
        prefix: usize,
    },
    #[error("step {step}: move to {to} does not stay later than the fixed prefix end {prefix_end}")]
    Overtaking {
        step: usize,
        to: TimeTick,
        prefix_end: TimeTick,
    },
    #[error("path ends at a profile different from the recorded end profile")]
    WrongEndProfile,
}

/// Longest leading run of ranks already sitting at their equilibrium
/// departures.
fn equilibrium_prefix(profile: &TimeProfile, solution: &EquilibriumSolution) -> usize {
    let mut order: Vec<i64> = profile.departures().iter().map(|t| t.0).collect();
    order.sort_unstable();
    order
        .iter()
        .zip(solution.departures_by_order.iter())
        .take_while(|(got, want)| **got == want.0)
        .count()
}

/// Replays a path, re-deriving every forecast, and confirms one mover per
/// step with strict improvement. With `ordered`, additionally checks that no
/// equilibrated-prefix user ever moves and no move lands at or before the
/// prefix end.
pub fn validate_path(
    path: &BetterResponsePath,
    config: &GameConfig,
    ordered: bool,
) -> Result<(), PathViolation> {
    let solution = if ordered {
        equilibrium_solution(config).ok()
    } else {
        None
    };
    let mut profile = path.start.clone();
    for (idx, step) in path.steps.iter().enumerate() {
        let step_no = idx + 1;
        if profile.departure(step.user) != step.from {
            return Err(PathViolation::WrongOrigin {
                step: step_no,
                user: step.user,
                from: step.from,
            });
        }
        if profile.is_occupied(step.to) {
            return Err(PathViolation::DestinationOccupied {
                step: step_no,
                to: step.to,
            });
        }
        if let Some(solution) = &solution {
            let prefix = equilibrium_prefix(&profile, solution);
            if prefix > 0 {
                let prefix_end = solution.departures_by_order[prefix - 1];
                if step.from.0 <= prefix_end.0 {
                    return Err(PathViolation::FixedPrefixMoved {
                        step: step_no,
                        user: step.user,
                        prefix,
                    });
                }
                if step.to.0 <= prefix_end.0 {
                    return Err(PathViolation::Overtaking {
                        step: step_no,
                        to: step.to,
                        prefix_end,
                    });
                }
            }
        }
        let outcomes = compute_arrivals(&profile, config);
        let ctx = ForecastContext::from_outcomes(&outcomes, config);
        let forecast = ctx
            .forecast(step.to)
            .map_err(|_| PathViolation::DestinationOccupied {
                step: step_no,
                to: step.to,
            })?;
        let cost = &outcomes.user(step.user).trip_cost;
        if forecast >= *cost {
            return Err(PathViolation::NotImproving {
                step: step_no,
                forecast: forecast.to_string(),
                cost: cost.to_string(),
            });
        }
        profile
            .move_user(step.user, step.to, config)
            .map_err(|_| PathViolation::DestinationOccupied {
                step: step_no,
                to: step.to,
            })?;
    }
    if profile != path.end {
        return Err(PathViolation::WrongEndProfile);
    }
    Ok(())
}

struct PathBuilder<'a> {
    config: &'a GameConfig,
    solution: EquilibriumSolution,
    profile: TimeProfile,
    steps: Vec<PathStep>,
    cap: usize,
}

impl<'a> PathBuilder<'a> {
    fn push_move(&mut self, user: UserId, to: TimeTick) -> Result<(), PathError> {
        let step_no = self.steps.len() + 1;
        if step_no > self.cap {
            return Err(PathError::IterationCap(self.cap));
        }
        let outcomes = compute_arrivals(&self.profile, self.config);
        let ctx = ForecastContext::from_outcomes(&outcomes, self.config);
        let cost = outcomes.user(user).trip_cost;
        let forecast = ctx.forecast(to).map_err(|_| PathError::NotImproving {
            step: step_no,
            user,
            to,
            forecast: "<occupied>".into(),
            cost: cost.to_string(),
        })?;
        if forecast >= cost {
            return Err(PathError::NotImproving {
                step: step_no,
                user,
                to,
                forecast: forecast.to_string(),
                cost: cost.to_string(),
            });
        }
        let from = self.profile.departure(user);
        self.profile
            .move_user(user, to, self.config)
            .expect("destination verified unoccupied");
        self.steps.push(PathStep {
            day: step_no,
            user,
            from,
            to,
            cost_before: cost,
            forecast,
        });
        Ok(())
    }

    /// First on-grid tick strictly inside a dissipated-queue window that also
    /// lies inside the rush hour, or `None`. Such a tick is always unoccupied
    /// and forecasts its bare schedule delay.
    fn free_flow_tick_in_rush(&self, outcomes: &Outcomes) -> Option<TimeTick> {
        let config = self.config;
        let headway = config.headway_ticks();
        let t_minus = self.solution.first_departure.0;
        let t_plus = self.solution.last_departure.0;
        let n = outcomes.num_users();
        // Window before the first departure.
        let first_dep = outcomes.by_order(1).departure.0;
        if t_minus < first_dep {
            return Some(TimeTick(t_minus));
        }
        for k in 1..=n {
            let window_start = outcomes.by_order(k).arrival.0 + headway;
            let window_end = if k < n {
                outcomes.by_order(k + 1).arrival.0 // exclusive
            } else {
                config.max_tick() + 1
            };
            let lo = window_start.max(t_minus);
            let hi = (window_end - 1).min(t_plus);
            if lo <= hi {
                return Some(TimeTick(lo));
            }
        }
        None
    }

    /// Phase A: drive the first departure onto the rush-hour start.
    fn adjust_first_departure(&mut self) -> Result<(), PathError> {
        let t_minus = self.solution.first_departure;
        let t_plus = self.solution.last_departure;
        loop {
            let outcomes = compute_arrivals(&self.profile, self.config);
            let first = outcomes.by_order(1);
            if first.departure == t_minus {
                return Ok(());
            }
            if first.departure.0 > t_minus.0 {
                // Everyone departs after the rush-hour start, so it is free
                // and forecasts the equilibrium cost; the last user's cost
                // strictly exceeds it.
                let last_user = outcomes.by_order(outcomes.num_users()).user;
                self.push_move(last_user, t_minus)?;
                continue;
            }
            // First departure too early: the first user's pure schedule cost
            // already exceeds the equilibrium cost, so any free tick inside
            // the rush hour (or the rush-hour end when the rush is packed)
            // strictly improves.
            let first_user = first.user;
            let packed_end =
                first.departure.0 + (outcomes.num_users() as i64 - 1) * self.config.headway_ticks();
            let last_arrival = outcomes.by_order(outcomes.num_users()).arrival.0;
            let target = if last_arrival == packed_end {
                t_plus
            } else {
                self.free_flow_tick_in_rush(&outcomes)
                    .ok_or_else(|| PathError::WitnessNotFound {
                        step: self.steps.len() + 1,
                        phase: "adjust-first-departure",
                        detail: format!(
                            "no free-flow tick in the rush hour; first departure {}, last arrival {}",
                            first.departure.0, last_arrival
                        ),
                    })?
            };
            self.push_move(first_user, target)?;
        }
    }

    /// Phase B: with the first departure at the rush-hour start, fix users
    /// onto their equilibrium departures in ascending order.
    fn fix_users_in_order(&mut self) -> Result<(), PathError> {
        let num_users = self.config.num_users();
        let t_plus = self.solution.last_departure;
        loop {
            let outcomes = compute_arrivals(&self.profile, self.config);
            let prefix = equilibrium_prefix(&self.profile, &self.solution);
            if prefix == num_users {
                return Ok(());
            }
            let next_rank = prefix + 1;
            let target = self.solution.departures_by_order[next_rank - 1];
            let holder = outcomes.by_order(next_rank);
            debug_assert!(holder.departure != target);
            if holder.departure.0 > target.0 {
                // The slot is free below the current holder: the last user
                // (whose cost is at least the equilibrium cost) takes it.
                let mover = if next_rank == num_users {
                    holder.user
                } else {
                    outcomes.by_order(num_users).user
                };
                self.push_move(mover, target)?;
                continue;
            }
            // The next user departs too early; walk them rightward.
            let mover = holder.user;
            let last = outcomes.by_order(num_users);
            // The rush-hour end is the default escape: when only the last
            // slot is open, or when every arrival still precedes it, that
            // tick is free and forecasts the equilibrium cost.
            let escape = if next_rank == num_users || last.arrival.0 < t_plus.0 {
                t_plus
            } else if last.arrival.0 > t_plus.0 {
                self.free_flow_tick_in_rush(&outcomes)
                    .ok_or_else(|| PathError::WitnessNotFound {
                        step: self.steps.len() + 1,
                        phase: "fix-users",
                        detail: format!(
                            "no free-flow escape tick; rank {next_rank} at {}",
                            holder.departure.0
                        ),
                    })?
            } else if last.departure.0 != last.arrival.0 {
                // Last arrival sits exactly on the rush-hour end with queue:
                // that tick itself is free and forecasts the equilibrium cost.
                t_plus
            } else {
                // Fully packed ending exactly at the rush-hour end: slide in
                // just before the last departure, or the nearest unoccupied
                // improving tick below it.
                self.nearest_improving_below(&outcomes, last.departure, holder)?
            };
            self.push_move(mover, escape)?;
        }
    }

    /// Nearest unoccupied tick strictly below `upper` whose forecast strictly
    /// improves on the holder's cost. The proof's witness is `upper - 1`;
    /// neighbours may be occupied, in which case the closest improving free
    /// tick substitutes for it.
    fn nearest_improving_below(
        &self,
        outcomes: &Outcomes,
        upper: TimeTick,
        holder: &TripOutcome,
    ) -> Result<TimeTick, PathError> {
        let ctx = ForecastContext::from_outcomes(outcomes, self.config);
        let mut tick = upper.0 - 1;
        while tick > holder.departure.0 {
            let candidate = TimeTick(tick);
            if !self.profile.is_occupied(candidate) {
                if let Ok(forecast) = ctx.forecast(candidate) {
                    if forecast < holder.trip_cost {
                        return Ok(candidate);
                    }
                }
            }
            tick -= 1;
        }
        Err(PathError::WitnessNotFound {
            step: self.steps.len() + 1,
            phase: "fix-users/slide-below",
            detail: format!(
                "no improving tick below {} for the user at {}",
                upper.0, holder.departure.0
            ),
        })
    }
}

/// Constructs an explicit better-response path from `initial` to the
/// closed-form equilibrium, validating every step as it is emitted.
pub fn build_ordered_path(
    config: &GameConfig,
    initial: &TimeProfile,
) -> Result<BetterResponsePath, PathError> {
    let solution = equilibrium_solution(config)?;
    let span = (config.max_tick() - config.min_tick() + 1) as usize;
    let mut builder = PathBuilder {
        config,
        solution,
        profile: initial.clone(),
        steps: Vec::new(),
        cap: span * config.num_users() * 4 + 64,
    };
    builder.adjust_first_departure()?;
    builder.fix_users_in_order()?;
    Ok(BetterResponsePath {
        start: initial.clone(),
        steps: builder.steps,
        end: builder.profile,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error("profile space holds {estimate} nodes, over the budget of {budget}")]
    BudgetExceeded { estimate: u128, budget: u64 },
}

/// Better-response graph over every profile of a tiny instance, reduced by
/// the user-relabelling symmetry (nodes are sorted departure-tick sets).
#[derive(Debug)]
pub struct ProfileGraph {
    /// Sorted departure ticks per node.
    pub nodes: Vec<Vec<i64>>,
    /// Directed better-response edges as node indices.
    pub edges: Vec<(usize, usize)>,
    /// Index of the equilibrium node.
    pub equilibrium: usize,
}

impl ProfileGraph {
    /// Plain-text edge list: one `from -> to` pair of comma-separated tick
    /// lists per line.
    pub fn edge_list_text(&self) -> String {
        let fmt = |ticks: &[i64]| {
            ticks
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut out = String::new();
        for (from, to) in &self.edges {
            out.push_str(&format!(
                "{} -> {}\n",
                fmt(&self.nodes[*from]),
                fmt(&self.nodes[*to])
            ));
        }
        out
    }
}

/// Exhaustive analysis result.
#[derive(Debug)]
pub struct AcyclicityReport {
    pub graph: ProfileGraph,
    pub node_count: usize,
    pub edge_count: usize,
    /// Every profile has a better-response path to the equilibrium and the
    /// equilibrium itself has none.
    pub is_weakly_acyclic: bool,
    pub equilibrium_is_sink: bool,
    /// Sorted tick sets of all sinks (out-degree zero nodes).
    pub sinks: Vec<Vec<i64>>,
    /// Nodes with no path to the equilibrium.
    pub unreachable: Vec<Vec<i64>>,
    /// Always true: users are homogeneous, so profiles are enumerated as
    /// departure-tick sets.
    pub symmetry_reduced: bool,
}

fn binomial(n: u128, k: u128) -> Option<u128> {
    let mut result: u128 = 1;
    for i in 0..k {
        result = result.checked_mul(n - i)?;
        result /= i + 1;
    }
    Some(result)
}

/// Builds the full better-response graph of a tiny instance and verifies
/// weak acyclicity by reverse reachability from the equilibrium node.
pub fn exhaustive_weak_acyclicity(
    config: &GameConfig,
    node_budget: u64,
) -> Result<AcyclicityReport, GraphError> {
    let solution = equilibrium_solution(config)?;
    let ticks: Vec<i64> = (config.min_tick()..=config.max_tick()).collect();
    let num_users = config.num_users();
    let estimate = binomial(ticks.len() as u128, num_users as u128).unwrap_or(u128::MAX);
    if estimate > node_budget as u128 {
        return Err(GraphError::BudgetExceeded {
            estimate,
            budget: node_budget,
        });
    }

    // Enumerate sorted tick sets in lexicographic order.
    let mut nodes: Vec<Vec<i64>> = Vec::with_capacity(estimate as usize);
    let mut combo: Vec<usize> = (0..num_users).collect();
    'enumerate: loop {
        nodes.push(combo.iter().map(|i| ticks[*i]).collect());
        let mut i = num_users;
        while i > 0 {
            i -= 1;
            if combo[i] < i + ticks.len() - num_users {
                combo[i] += 1;
                for j in i + 1..num_users {
                    combo[j] = combo[j - 1] + 1;
                }
                continue 'enumerate;
            }
        }
        break;
    }
    let index: HashMap<Vec<i64>, usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i))
        .collect();

    let mut eq_ticks: Vec<i64> = solution.departures_by_order.iter().map(|t| t.0).collect();
    eq_ticks.sort_unstable();
    let equilibrium = *index
        .get(&eq_ticks)
        .expect("equilibrium departures lie on in-range ticks");

    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut out_degree = vec![0usize; nodes.len()];
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (from, node) in nodes.iter().enumerate() {
        let profile = TimeProfile::new(node.iter().map(|t| TimeTick(*t)).collect(), config)
            .expect("enumerated ticks are distinct and in range");
        let outcomes = compute_arrivals(&profile, config);
        let ctx = ForecastContext::from_outcomes(&outcomes, config);
        for pos in 0..node.len() {
            // Position pos in the sorted set is the user at rank pos+1.
            let cost = &outcomes.by_order(pos + 1).trip_cost;
            for to_tick in &ticks {
                if node.binary_search(to_tick).is_ok() {
                    continue;
                }
                if ctx
                    .forecast(TimeTick(*to_tick))
                    .map(|f| f < *cost)
                    .unwrap_or(false)
                {
                    let mut target = node.clone();
                    target[pos] = *to_tick;
                    target.sort_unstable();
                    let to = index[&target];
                    edges.push((from, to));
                    out_degree[from] += 1;
                    reverse[to].push(from);
                }
            }
        }
    }

    // Reverse BFS from the equilibrium.
    let mut reaches = vec![false; nodes.len()];
    let mut stack = vec![equilibrium];
    reaches[equilibrium] = true;
    while let Some(node) = stack.pop() {
        for prev in &reverse[node] {
            if !reaches[*prev] {
                reaches[*prev] = true;
                stack.push(*prev);
            }
        }
    }

    let sinks: Vec<Vec<i64>> = nodes
        .iter()
        .enumerate()
        .filter(|(i, _)| out_degree[*i] == 0)
        .map(|(_, n)| n.clone())
        .collect();
    let unreachable: Vec<Vec<i64>> = nodes
        .iter()
        .enumerate()
        .filter(|(i, _)| !reaches[*i])
        .map(|(_, n)| n.clone())
        .collect();
    let equilibrium_is_sink = out_degree[equilibrium] == 0;
    let edge_count = edges.len();
    let node_count = nodes.len();
    Ok(AcyclicityReport {
        is_weakly_acyclic: unreachable.is_empty() && equilibrium_is_sink,
        equilibrium_is_sink,
        sinks,
        unreachable,
        symmetry_reduced: true,
        node_count,
        edge_count,
        graph: ProfileGraph {
            nodes,
            edges,
            equilibrium,
        },
    })
}
