//! `dtc` — reproducible experiments on the departure-time-choice bottleneck
//! game.
//!
//! Subcommands: `equilibrium` (closed-form solution), `run` (day-to-day
//! dynamics), `verify` (exhaustive epsilon-Nash check of a profile file),
//! `sweep` (concurrent seed/parameter sweeps), `acyclicity` (exhaustive
//! better-response graph analysis of tiny instances).
//!
//! Exit codes: 0 success/holds/converged; 1 usage or parse failure;
//! 2 verification failed or run not converged; 3 internal invariant breach.

mod output;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dtc_core::dynamics::{run_with_rng, DayEvent, DynamicsKind, RunSettings};
use dtc_core::equilibrium::{
    equilibrium_solution, fluid_correspondence, max_unilateral_improvement, verify_epsilon_nash,
    NashVerdict,
};
use dtc_core::experiment::{
    build_initial_profile, parse_experiment_text, parse_profile_text, ExperimentSpec,
    InitialProfileSpec,
};
use dtc_core::model::{profile_from_departures, validate_grid, GameConfig};
use dtc_core::rational::{exact_string, parse_rational, Rational};
use dtc_core::verification::{exhaustive_weak_acyclicity, GraphError};

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_FAILED: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(name = "dtc", version, about = "Departure-time-choice bottleneck game engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunOverrides {
    /// RNG seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Dynamics kind: naive | fixation.
    #[arg(long)]
    dynamics: Option<String>,
    /// Initial profile: equilibrium | special | uniform | file:PATH.
    #[arg(long)]
    initial: Option<String>,
    /// Day budget.
    #[arg(long)]
    max_days: Option<u64>,
    /// Comma-separated days to snapshot.
    #[arg(long)]
    snapshot_days: Option<String>,
    /// Fixation days without prefix growth before bounds adjust.
    #[arg(long)]
    stuck_threshold: Option<u64>,
    /// Random candidates per selected user per day.
    #[arg(long)]
    max_candidates: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the closed-form equilibrium profile and its constants.
    Equilibrium {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run day-to-day dynamics and write the trajectory and snapshots.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: RunOverrides,
    },
    /// Exhaustively check a profile file for epsilon-Nash equilibrium.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Profile CSV (bare `user,departure` or any snapshot/equilibrium
        /// output).
        #[arg(long)]
        profile: PathBuf,
        /// Tolerance as a rational; defaults to m(1+gamma)/mu.
        #[arg(long)]
        epsilon: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the same experiment across seeds (and optionally an m/P grid),
    /// concurrently, and aggregate the results.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seeds, e.g. `1,2,3`.
        #[arg(long, default_value = "0")]
        seeds: String,
        /// Comma-separated user sizes; must pair with --p-list.
        #[arg(long)]
        m_list: Option<String>,
        /// Comma-separated user counts; must pair with --m-list.
        #[arg(long)]
        p_list: Option<String>,
        #[command(flatten)]
        overrides: RunOverrides,
    },
    /// Enumerate the full better-response graph of a tiny instance and
    /// certify weak acyclicity.
    Acyclicity {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Refuse instances whose profile space exceeds this many nodes.
        #[arg(long, default_value_t = 1_000_000)]
        node_budget: u64,
        /// Also write the full edge list.
        #[arg(long)]
        emit_edges: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Equilibrium { config, out } => cmd_equilibrium(&config, &out),
        Command::Run {
            config,
            out,
            overrides,
        } => cmd_run(&config, &out, &overrides),
        Command::Verify {
            config,
            profile,
            epsilon,
            out,
        } => cmd_verify(&config, &profile, epsilon.as_deref(), out.as_deref()),
        Command::Sweep {
            config,
            out,
            seeds,
            m_list,
            p_list,
            overrides,
        } => cmd_sweep(
            &config,
            &out,
            &seeds,
            m_list.as_deref(),
            p_list.as_deref(),
            &overrides,
        ),
        Command::Acyclicity {
            config,
            out,
            node_budget,
            emit_edges,
        } => cmd_acyclicity(&config, &out, node_budget, emit_edges),
    };
    match code {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}

fn load_spec(path: &Path) -> Result<ExperimentSpec, u8> {
    let text = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(err) => {
            eprintln!("error: cannot read {}: {err}", path.display());
            return Err(EXIT_USAGE);
        }
    };
    parse_experiment_text(&text).map_err(|err| {
        eprintln!("error: {}: {err}", path.display());
        EXIT_USAGE
    })
}

/// Admissibility gate shared by the commands that need the closed form.
fn require_admissible(config: &GameConfig) -> Result<(), u8> {
    validate_grid(config).map_err(|violations| {
        eprintln!("error: grid step is inadmissible:");
        for violation in violations {
            eprintln!("  - {violation}");
        }
        EXIT_USAGE
    })
}

fn apply_overrides(spec: &mut ExperimentSpec, overrides: &RunOverrides) -> Result<(), u8> {
    if let Some(seed) = overrides.seed {
        spec.seed = seed;
    }
    if let Some(kind) = &overrides.dynamics {
        spec.dynamics = match kind.as_str() {
            "naive" => DynamicsKind::Naive,
            "fixation" => DynamicsKind::Fixation,
            other => {
                eprintln!("error: --dynamics expects naive|fixation, got `{other}`");
                return Err(EXIT_USAGE);
            }
        };
    }
    if let Some(initial) = &overrides.initial {
        spec.initial = InitialProfileSpec::parse(initial).ok_or_else(|| {
            eprintln!("error: --initial expects equilibrium|special|uniform|file:PATH");
            EXIT_USAGE
        })?;
    }
    if let Some(days) = overrides.max_days {
        spec.max_days = days;
    }
    if let Some(threshold) = overrides.stuck_threshold {
        spec.stuck_threshold = threshold;
    }
    if let Some(candidates) = overrides.max_candidates {
        spec.max_candidates = candidates;
    }
    if let Some(days) = &overrides.snapshot_days {
        let mut parsed = BTreeSet::new();
        for part in days.split(',') {
            let day: u64 = part.trim().parse().map_err(|_| {
                eprintln!("error: --snapshot-days expects comma-separated integers");
                EXIT_USAGE
            })?;
            parsed.insert(day);
        }
        spec.snapshot_days = parsed;
    }
    Ok(())
}

fn write_or_internal(path: &Path, contents: &str) -> Result<(), u8> {
    output::write_file(path, contents).map_err(|err| {
        eprintln!("error: {err:#}");
        EXIT_INTERNAL
    })
}

fn cmd_equilibrium(config_path: &Path, out: &Path) -> anyhow::Result<u8> {
    let spec = match load_spec(config_path) {
        Ok(spec) => spec,
        Err(code) => return Ok(code),
    };
    if let Err(code) = require_admissible(&spec.game) {
        return Ok(code);
    }
    let solution = match equilibrium_solution(&spec.game) {
        Ok(solution) => solution,
        Err(err) => {
            eprintln!("error: {err}");
            return Ok(EXIT_USAGE);
        }
    };
    let fluid = fluid_correspondence(&spec.game);
    let profile = solution.profile(&spec.game);
    if let Err(code) = write_or_internal(
        &out.join("equilibrium.csv"),
        &output::snapshot_csv(&profile, &spec.game),
    ) {
        return Ok(code);
    }
    if let Err(code) = write_or_internal(
        &out.join("summary.csv"),
        &output::summary_csv(&solution, &fluid, &spec.game),
    ) {
        return Ok(code);
    }
    if let Err(code) = write_or_internal(&out.join("config.resolved"), &spec.to_config_text()) {
        return Ok(code);
    }
    println!(
        "equilibrium: rho={} epsilon={} t_minus={} t_plus={} critical_order={}",
        exact_string(&solution.equilibrium_cost),
        exact_string(&solution.epsilon),
        exact_string(&spec.game.time_of(solution.first_departure)),
        exact_string(&spec.game.time_of(solution.last_departure)),
        solution.critical_order,
    );
    Ok(EXIT_OK)
}

fn execute_run(spec: &ExperimentSpec, out: &Path) -> anyhow::Result<u8> {
    if let Err(code) = require_admissible(&spec.game) {
        return Ok(code);
    }
    let solution = equilibrium_solution(&spec.game).expect("grid admissibility checked");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let initial = match build_initial_profile(
        &spec.initial,
        &spec.game,
        &solution.departures_by_order,
        &mut rng,
    ) {
        Ok(profile) => profile,
        Err(err) => {
            eprintln!("error: {err}");
            return Ok(EXIT_USAGE);
        }
    };
    let mut settings = RunSettings::new(spec.dynamics, spec.seed, spec.max_days);
    settings.stuck_threshold = spec.stuck_threshold;
    settings.max_candidates = spec.max_candidates;
    settings.initial_bounds = spec.initial_bounds_ticks();
    settings.snapshot_days = spec.snapshot_days.clone();
    let trajectory = match run_with_rng(&spec.game, &initial, &settings, rng) {
        Ok(trajectory) => trajectory,
        Err(err) => {
            eprintln!("error: {err}");
            return Ok(EXIT_USAGE);
        }
    };

    if let Err(code) = write_or_internal(&out.join("config.resolved"), &spec.to_config_text()) {
        return Ok(code);
    }
    if let Err(code) = write_or_internal(
        &out.join("trajectory.csv"),
        &output::trajectory_csv(&trajectory, &spec.game),
    ) {
        return Ok(code);
    }
    for (day, profile) in &trajectory.snapshots {
        let path = out.join(format!("snapshot_day_{day}.csv"));
        if let Err(code) = write_or_internal(&path, &output::snapshot_csv(profile, &spec.game)) {
            return Ok(code);
        }
    }
    if let Err(code) = write_or_internal(
        &out.join("snapshot_final.csv"),
        &output::snapshot_csv(&trajectory.final_profile, &spec.game),
    ) {
        return Ok(code);
    }
    if !trajectory.anomalies.is_empty() {
        if let Err(code) =
            write_or_internal(&out.join("anomalies.log"), &trajectory.anomalies.join("\n"))
        {
            return Ok(code);
        }
    }
    let bound_updates = trajectory
        .records
        .iter()
        .filter(|r| r.event == DayEvent::BoundUpdate)
        .count();
    println!(
        "run: days={} converged={} bound_updates={} final_rmse={}",
        trajectory.final_day,
        trajectory.converged,
        bound_updates,
        trajectory.records.last().map(|r| r.rmse).unwrap_or(0.0),
    );
    Ok(if trajectory.converged {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}

fn cmd_run(config_path: &Path, out: &Path, overrides: &RunOverrides) -> anyhow::Result<u8> {
    let mut spec = match load_spec(config_path) {
        Ok(spec) => spec,
        Err(code) => return Ok(code),
    };
    if let Err(code) = apply_overrides(&mut spec, overrides) {
        return Ok(code);
    }
    execute_run(&spec, out)
}

fn cmd_verify(
    config_path: &Path,
    profile_path: &Path,
    epsilon: Option<&str>,
    out: Option<&Path>,
) -> anyhow::Result<u8> {
    let spec = match load_spec(config_path) {
        Ok(spec) => spec,
        Err(code) => return Ok(code),
    };
    let epsilon: Rational = match epsilon {
        Some(text) => match parse_rational(text) {
            Ok(value) => value,
            Err(err) => {
                eprintln!("error: --epsilon: {err}");
                return Ok(EXIT_USAGE);
            }
        },
        None => spec.game.epsilon(),
    };
    let text = match std::fs::read_to_string(profile_path) {
        Ok(text) => text,
        Err(err) => {
            eprintln!("error: cannot read {}: {err}", profile_path.display());
            return Ok(EXIT_USAGE);
        }
    };
    let entries = match parse_profile_text(&text) {
        Ok(entries) => entries,
        Err(err) => {
            eprintln!("error: {}: {err}", profile_path.display());
            return Ok(EXIT_USAGE);
        }
    };
    let profile = match profile_from_departures(&entries, &spec.game) {
        Ok(profile) => profile,
        Err(err) => {
            eprintln!("error: {}: {err}", profile_path.display());
            return Ok(EXIT_USAGE);
        }
    };

    let verdict = verify_epsilon_nash(&profile, &epsilon, &spec.game);
    let (max_gain, witness) = max_unilateral_improvement(&profile, &spec.game);
    let mut report = String::new();
    report.push_str(&format!("epsilon: {}\n", exact_string(&epsilon)));
    report.push_str(&format!("max_improvement: {}\n", exact_string(&max_gain)));
    if let Some(w) = &witness {
        report.push_str(&format!(
            "max_improvement_witness: user={} from={} to={}\n",
            w.user,
            exact_string(&spec.game.time_of(w.from)),
            exact_string(&spec.game.time_of(w.to)),
        ));
    }
    let code = match &verdict {
        NashVerdict::Holds => {
            report.push_str("verdict: holds\n");
            EXIT_OK
        }
        NashVerdict::Violated(w) => {
            report.push_str(&format!(
                "verdict: violated user={} from={} to={} improvement={}\n",
                w.user,
                exact_string(&spec.game.time_of(w.from)),
                exact_string(&spec.game.time_of(w.to)),
                exact_string(&w.improvement),
            ));
            EXIT_FAILED
        }
    };
    print!("{report}");
    if let Some(out) = out {
        if let Err(code) = write_or_internal(&out.join("verdict.txt"), &report) {
            return Ok(code);
        }
        if let Err(code) = write_or_internal(&out.join("config.resolved"), &spec.to_config_text())
        {
            return Ok(code);
        }
    }
    Ok(code)
}

fn parse_list(text: &str, what: &str) -> Result<Vec<String>, u8> {
    let items: Vec<String> = text
        .split(',')
        .map(|p| p.trim().to_string())
        .filter(|p| !p.is_empty())
        .collect();
    if items.is_empty() {
        eprintln!("error: {what} is empty");
        return Err(EXIT_USAGE);
    }
    Ok(items)
}

fn cmd_sweep(
    config_path: &Path,
    out: &Path,
    seeds: &str,
    m_list: Option<&str>,
    p_list: Option<&str>,
    overrides: &RunOverrides,
) -> anyhow::Result<u8> {
    let mut base = match load_spec(config_path) {
        Ok(spec) => spec,
        Err(code) => return Ok(code),
    };
    if let Err(code) = apply_overrides(&mut base, overrides) {
        return Ok(code);
    }
    let seeds: Vec<u64> = match parse_list(seeds, "--seeds") {
        Ok(items) => {
            let mut parsed = Vec::new();
            for item in items {
                match item.parse() {
                    Ok(seed) => parsed.push(seed),
                    Err(_) => {
                        eprintln!("error: bad seed `{item}`");
                        return Ok(EXIT_USAGE);
                    }
                }
            }
            parsed
        }
        Err(code) => return Ok(code),
    };

    // Parameter grid: zipped (m, P) cells, or the base game alone.
    let mut games: Vec<(String, GameConfig)> = Vec::new();
    match (m_list, p_list) {
        (None, None) => games.push(("base".to_string(), base.game.clone())),
        (Some(ms), Some(ps)) => {
            let ms = match parse_list(ms, "--m-list") {
                Ok(v) => v,
                Err(code) => return Ok(code),
            };
            let ps = match parse_list(ps, "--p-list") {
                Ok(v) => v,
                Err(code) => return Ok(code),
            };
            if ms.len() != ps.len() {
                eprintln!("error: --m-list and --p-list must have equal lengths");
                return Ok(EXIT_USAGE);
            }
            for (m_text, p_text) in ms.iter().zip(ps.iter()) {
                let m = match parse_rational(m_text) {
                    Ok(m) => m,
                    Err(err) => {
                        eprintln!("error: --m-list: {err}");
                        return Ok(EXIT_USAGE);
                    }
                };
                let p: usize = match p_text.parse() {
                    Ok(p) => p,
                    Err(_) => {
                        eprintln!("error: bad user count `{p_text}`");
                        return Ok(EXIT_USAGE);
                    }
                };
                let game = match GameConfig::new(
                    p,
                    m,
                    *base.game.capacity(),
                    *base.game.early_penalty(),
                    *base.game.late_penalty(),
                    *base.game.grid_step(),
                    *base.game.horizon(),
                ) {
                    Ok(game) => game,
                    Err(err) => {
                        eprintln!("error: cell m={m_text} P={p_text}: {err}");
                        return Ok(EXIT_USAGE);
                    }
                };
                games.push((format!("m_{}_P_{}", m_text.replace('/', "-"), p_text), game));
            }
        }
        _ => {
            eprintln!("error: --m-list and --p-list must be given together");
            return Ok(EXIT_USAGE);
        }
    }

    struct CellResult {
        label: String,
        seed: u64,
        row: String,
        ok: bool,
    }

    let mut handles = Vec::new();
    for (label, game) in &games {
        for seed in &seeds {
            let mut spec = base.clone();
            spec.game = game.clone();
            spec.seed = *seed;
            let label = label.clone();
            let seed = *seed;
            let cell_dir = out.join(format!("cell_{label}_seed_{seed}"));
            handles.push(std::thread::spawn(move || {
                let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                    execute_run(&spec, &cell_dir)
                }));
                let rho = exact_string(&spec.game.equilibrium_cost());
                let m = exact_string(spec.game.user_size());
                let p = spec.game.num_users();
                match result {
                    Ok(Ok(code)) => {
                        // Re-read the trajectory verdict from the exit code.
                        let converged = code == EXIT_OK;
                        CellResult {
                            row: format!(
                                "{label},{m},{p},{seed},{},{rho}",
                                if converged { "converged" } else { "not-converged" }
                            ),
                            ok: converged,
                            label,
                            seed,
                        }
                    }
                    Ok(Err(err)) => CellResult {
                        row: format!("{label},{m},{p},{seed},error: {err},{rho}"),
                        ok: false,
                        label,
                        seed,
                    },
                    Err(_) => CellResult {
                        row: format!("{label},{m},{p},{seed},panic,{rho}"),
                        ok: false,
                        label,
                        seed,
                    },
                }
            }));
        }
    }
    let mut results: Vec<CellResult> = Vec::new();
    for handle in handles {
        match handle.join() {
            Ok(result) => results.push(result),
            Err(_) => {
                eprintln!("error: sweep worker panicked");
                return Ok(EXIT_INTERNAL);
            }
        }
    }
    results.sort_by(|a, b| (&a.label, a.seed).cmp(&(&b.label, b.seed)));
    let mut csv = String::from("cell,user_size,num_users,seed,status,rho\n");
    let mut all_ok = true;
    for result in &results {
        csv.push_str(&result.row);
        csv.push('\n');
        all_ok &= result.ok;
    }
    if let Err(code) = write_or_internal(&out.join("sweep.csv"), &csv) {
        return Ok(code);
    }
    if let Err(code) = write_or_internal(&out.join("config.resolved"), &base.to_config_text()) {
        return Ok(code);
    }
    println!(
        "sweep: {} cells, {} converged",
        results.len(),
        results.iter().filter(|r| r.ok).count()
    );
    Ok(if all_ok { EXIT_OK } else { EXIT_FAILED })
}

fn cmd_acyclicity(
    config_path: &Path,
    out: &Path,
    node_budget: u64,
    emit_edges: bool,
) -> anyhow::Result<u8> {
    let spec = match load_spec(config_path) {
        Ok(spec) => spec,
        Err(code) => return Ok(code),
    };
    if let Err(code) = require_admissible(&spec.game) {
        return Ok(code);
    }
    let report = match exhaustive_weak_acyclicity(&spec.game, node_budget) {
        Ok(report) => report,
        Err(GraphError::BudgetExceeded { estimate, budget }) => {
            eprintln!("error: profile space holds {estimate} nodes, over the budget of {budget}");
            return Ok(EXIT_USAGE);
        }
        Err(err) => {
            eprintln!("error: {err}");
            return Ok(EXIT_USAGE);
        }
    };
    let fmt_node = |node: &[i64]| {
        node.iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    let mut text = String::new();
    text.push_str(&format!("nodes: {}\n", report.node_count));
    text.push_str(&format!("edges: {}\n", report.edge_count));
    text.push_str(&format!("symmetry_reduced: {}\n", report.symmetry_reduced));
    text.push_str(&format!(
        "equilibrium_node: {}\n",
        fmt_node(&report.graph.nodes[report.graph.equilibrium])
    ));
    text.push_str(&format!(
        "equilibrium_is_sink: {}\n",
        report.equilibrium_is_sink
    ));
    text.push_str(&format!("is_weakly_acyclic: {}\n", report.is_weakly_acyclic));
    text.push_str(&format!("sinks: {}\n", report.sinks.len()));
    for sink in &report.sinks {
        text.push_str(&format!("sink: {}\n", fmt_node(sink)));
    }
    text.push_str(&format!("unreachable: {}\n", report.unreachable.len()));
    for node in report.unreachable.iter().take(32) {
        text.push_str(&format!("unreachable_node: {}\n", fmt_node(node)));
    }
    if let Err(code) = write_or_internal(&out.join("acyclicity.txt"), &text) {
        return Ok(code);
    }
    if emit_edges {
        if let Err(code) = write_or_internal(&out.join("edges.txt"), &report.graph.edge_list_text())
        {
            return Ok(code);
        }
    }
    if let Err(code) = write_or_internal(&out.join("config.resolved"), &spec.to_config_text()) {
        return Ok(code);
    }
    print!("{text}");
    Ok(if report.is_weakly_acyclic {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}
