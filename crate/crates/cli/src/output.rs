//! CSV and report writers.
//!
//! Every quantity appears twice: an exact column (`p/q` reduced fraction)
//! and a decimal column rounded to [`DECIMAL_PLACES`] digits, half away from
//! zero. The decimal is always derived from the exact value, never computed
//! separately. Snapshot rows are ordered by departure rank.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use dtc_core::dynamics::Trajectory;
use dtc_core::equilibrium::{EquilibriumSolution, FluidCorrespondence};
use dtc_core::model::{compute_arrivals, GameConfig, TimeProfile};
use dtc_core::rational::{decimal_string, exact_string, Rational};

pub const DECIMAL_PLACES: u32 = 6;

fn pair(value: &Rational) -> (String, String) {
    (exact_string(value), decimal_string(value, DECIMAL_PLACES))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .with_context(|| format!("creating directory {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub const SNAPSHOT_HEADER: &str = "user,order,departure_exact,departure,arrival_exact,arrival,\
queue_delay_exact,queue_delay,schedule_delay_exact,schedule_delay,trip_cost_exact,trip_cost";

/// Per-user rows of a profile, ordered by departure rank.
pub fn snapshot_csv(profile: &TimeProfile, config: &GameConfig) -> String {
    let outcomes = compute_arrivals(profile, config);
    let mut out = String::from(SNAPSHOT_HEADER);
    out.push('\n');
    for trip in outcomes.iter_ordered() {
        let (dep_e, dep_d) = pair(&config.time_of(trip.departure));
        let (arr_e, arr_d) = pair(&config.time_of(trip.arrival));
        let (q_e, q_d) = pair(&trip.queue_delay);
        let (s_e, s_d) = pair(&trip.schedule_delay);
        let (c_e, c_d) = pair(&trip.trip_cost);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            trip.user, trip.order, dep_e, dep_d, arr_e, arr_d, q_e, q_d, s_e, s_d, c_e, c_d
        ));
    }
    out
}

/// Key/exact/decimal summary of the closed-form solution and its fluid
/// counterpart.
pub fn summary_csv(
    solution: &EquilibriumSolution,
    fluid: &FluidCorrespondence,
    config: &GameConfig,
) -> String {
    let mut out = String::from("key,exact,decimal\n");
    let rows: [(&str, Rational); 9] = [
        ("t_minus", config.time_of(solution.first_departure)),
        ("t_plus", config.time_of(solution.last_departure)),
        ("rho", solution.equilibrium_cost),
        ("epsilon", solution.epsilon),
        ("early_rate", fluid.early_rate),
        ("late_rate", fluid.late_rate),
        ("fluid_mass", fluid.total_mass),
        ("fluid_cost", fluid.fluid_cost),
        ("fluid_first_departure", fluid.fluid_first_departure),
    ];
    for (key, value) in &rows {
        let (e, d) = pair(value);
        out.push_str(&format!("{key},{e},{d}\n"));
    }
    out.push_str(&format!(
        "critical_order,{},{}\n",
        solution.critical_order, solution.critical_order
    ));
    out
}

/// Day rows: rmse is the only floating-point column and renders an exact
/// `0` precisely when every cost equals the equilibrium cost.
pub fn trajectory_csv(trajectory: &Trajectory, config: &GameConfig) -> String {
    let mut out = String::from(
        "day,rmse,first_departure_exact,first_departure,fixed_prefix,event,\
lower_bound,upper_bound\n",
    );
    for record in &trajectory.records {
        let rmse = if record.rmse == 0.0 {
            "0".to_string()
        } else {
            format!("{:.9}", record.rmse)
        };
        let (first_e, first_d) = pair(&config.time_of(record.first_departure));
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            record.day,
            rmse,
            first_e,
            first_d,
            record.fixed_prefix,
            record.event.as_str(),
            decimal_string(&config.time_of(record.lower_bound), DECIMAL_PLACES),
            decimal_string(&config.time_of(record.upper_bound), DECIMAL_PLACES),
        ));
    }
    out
}
