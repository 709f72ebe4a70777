//! Experiment files: flat key-value configs and profile CSVs.
//!
//! The config format is one `key = value` per line, `#` comments, rationals
//! as `p/q`, integers, or exact decimals. A config fully determines a run
//! and is echoed into every output directory for provenance.
//!
//! Profile files are CSV with a `user,departure` header (snapshot files with
//! more columns are accepted: `user` plus `departure_exact`/`departure` are
//! picked out by name). Both parsers are total: any byte input yields a
//! value or a line-numbered error, never a panic.

use std::collections::BTreeSet;

use rand::Rng;
use thiserror::Error;

use crate::dynamics::DynamicsKind;
use crate::model::{GameConfig, ProfileError, TimeProfile, TimeTick, UserId};
use crate::rational::{exact_string, parse_rational, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            line,
            message: message.into(),
        }
    }
}

/// How the day-zero profile is generated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitialProfileSpec {
    /// The closed-form equilibrium itself.
    Equilibrium,
    /// First user at the rush-hour start, the rest uniform between there and
    /// the horizon end.
    Special,
    /// All users uniform over the whole horizon.
    Uniform,
    /// Explicit profile file.
    File(String),
}

impl InitialProfileSpec {
    pub fn parse(value: &str) -> Option<InitialProfileSpec> {
        match value {
            "equilibrium" => Some(InitialProfileSpec::Equilibrium),
            "special" => Some(InitialProfileSpec::Special),
            "uniform" => Some(InitialProfileSpec::Uniform),
            other => other
                .strip_prefix("file:")
                .map(|path| InitialProfileSpec::File(path.to_string())),
        }
    }
}

impl std::fmt::Display for InitialProfileSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitialProfileSpec::Equilibrium => write!(f, "equilibrium"),
            InitialProfileSpec::Special => write!(f, "special"),
            InitialProfileSpec::Uniform => write!(f, "uniform"),
            InitialProfileSpec::File(path) => write!(f, "file:{path}"),
        }
    }
}

/// A fully resolved experiment: game constants plus run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub game: GameConfig,
    pub dynamics: DynamicsKind,
    pub seed: u64,
    pub initial: InitialProfileSpec,
    pub max_days: u64,
    pub stuck_threshold: u64,
    pub max_candidates: usize,
    pub snapshot_days: BTreeSet<u64>,
    /// Initial bounds on the first departure, as times; defaults to the full
    /// horizon when absent.
    pub lower_bound: Option<Rational>,
    pub upper_bound: Option<Rational>,
}

impl ExperimentSpec {
    pub fn initial_bounds_ticks(&self) -> Option<(TimeTick, TimeTick)> {
        match (&self.lower_bound, &self.upper_bound) {
            (None, None) => None,
            (lower, upper) => {
                let lo = lower
                    .as_ref()
                    .and_then(|t| self.game.tick_of_time(t))
                    .unwrap_or(TimeTick(self.game.min_tick()));
                let hi = upper
                    .as_ref()
                    .and_then(|t| self.game.tick_of_time(t))
                    .unwrap_or(TimeTick(self.game.max_tick()));
                Some((lo, hi))
            }
        }
    }

    /// Round-trippable rendering; written next to every output.
    pub fn to_config_text(&self) -> String {
        let game = &self.game;
        let mut out = String::new();
        out.push_str("# game\n");
        out.push_str(&format!("num_users = {}\n", game.num_users()));
        out.push_str(&format!("user_size = {}\n", exact_string(game.user_size())));
        out.push_str(&format!("capacity = {}\n", exact_string(game.capacity())));
        out.push_str(&format!(
            "early_penalty = {}\n",
            exact_string(game.early_penalty())
        ));
        out.push_str(&format!(
            "late_penalty = {}\n",
            exact_string(game.late_penalty())
        ));
        out.push_str(&format!("grid_step = {}\n", exact_string(game.grid_step())));
        out.push_str(&format!("horizon = {}\n", exact_string(game.horizon())));
        out.push_str("# dynamics\n");
        out.push_str(&format!("dynamics = {}\n", self.dynamics));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("initial = {}\n", self.initial));
        out.push_str(&format!("max_days = {}\n", self.max_days));
        out.push_str(&format!("stuck_threshold = {}\n", self.stuck_threshold));
        out.push_str(&format!("max_candidates = {}\n", self.max_candidates));
        if !self.snapshot_days.is_empty() {
            let days: Vec<String> = self.snapshot_days.iter().map(|d| d.to_string()).collect();
            out.push_str(&format!("snapshot_days = {}\n", days.join(",")));
        }
        if let Some(lower) = &self.lower_bound {
            out.push_str(&format!("lower_bound = {}\n", exact_string(lower)));
        }
        if let Some(upper) = &self.upper_bound {
            out.push_str(&format!("upper_bound = {}\n", exact_string(upper)));
        }
        out
    }
}

const GAME_KEYS: [&str; 7] = [
    "num_users",
    "user_size",
    "capacity",
    "early_penalty",
    "late_penalty",
    "grid_step",
    "horizon",
];

/// Parses the flat key-value config format into a resolved experiment.
pub fn parse_experiment_text(text: &str) -> Result<ExperimentSpec, ParseError> {
    let mut seen: Vec<(String, String, usize)> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ParseError::new(line_no, format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(ParseError::new(line_no, "empty key or value"));
        }
        if seen.iter().any(|(k, _, _)| *k == key) {
            return Err(ParseError::new(line_no, format!("duplicate key `{key}`")));
        }
        seen.push((key, value, line_no));
    }

    let find = |key: &str| seen.iter().find(|(k, _, _)| k == key);
    let rational = |key: &str| -> Result<Option<(Rational, usize)>, ParseError> {
        match find(key) {
            Some((_, value, line)) => {
                let parsed = parse_rational(value)
                    .map_err(|e| ParseError::new(*line, format!("{key}: {e}")))?;
                Ok(Some((parsed, *line)))
            }
            None => Ok(None),
        }
    };
    let required_rational = |key: &str| -> Result<(Rational, usize), ParseError> {
        rational(key)?.ok_or_else(|| ParseError::new(0, format!("missing required key `{key}`")))
    };
    let unsigned = |key: &str, default: u64| -> Result<u64, ParseError> {
        match find(key) {
            Some((_, value, line)) => value
                .parse::<u64>()
                .map_err(|_| ParseError::new(*line, format!("{key}: expected a non-negative integer"))),
            None => Ok(default),
        }
    };

    for (key, _, line) in &seen {
        let known = GAME_KEYS.contains(&key.as_str())
            || [
                "dynamics",
                "seed",
                "initial",
                "max_days",
                "stuck_threshold",
                "max_candidates",
                "snapshot_days",
                "lower_bound",
                "upper_bound",
            ]
            .contains(&key.as_str());
        if !known {
            return Err(ParseError::new(*line, format!("unknown key `{key}`")));
        }
    }

    let (num_users_value, num_users_line) = match find("num_users") {
        Some((_, v, l)) => (v.clone(), *l),
        None => return Err(ParseError::new(0, "missing required key `num_users`")),
    };
    let num_users: usize = num_users_value
        .parse()
        .map_err(|_| ParseError::new(num_users_line, "num_users: expected a positive integer"))?;

    let (user_size, _) = required_rational("user_size")?;
    let (capacity, _) = required_rational("capacity")?;
    let (early_penalty, _) = required_rational("early_penalty")?;
    let (late_penalty, _) = required_rational("late_penalty")?;
    let (grid_step, _) = required_rational("grid_step")?;
    let (horizon, horizon_line) = required_rational("horizon")?;

    let game = GameConfig::new(
        num_users,
        user_size,
        capacity,
        early_penalty,
        late_penalty,
        grid_step,
        horizon,
    )
    .map_err(|e| ParseError::new(horizon_line, e.to_string()))?;

    let dynamics = match find("dynamics") {
        Some((_, value, line)) => match value.as_str() {
            "naive" => DynamicsKind::Naive,
            "fixation" => DynamicsKind::Fixation,
            other => {
                return Err(ParseError::new(
                    *line,
                    format!("dynamics: expected `naive` or `fixation`, got `{other}`"),
                ))
            }
        },
        None => DynamicsKind::Fixation,
    };
    let initial = match find("initial") {
        Some((_, value, line)) => InitialProfileSpec::parse(value).ok_or_else(|| {
            ParseError::new(
                *line,
                "initial: expected equilibrium | special | uniform | file:PATH",
            )
        })?,
        None => InitialProfileSpec::Uniform,
    };
    let snapshot_days = match find("snapshot_days") {
        Some((_, value, line)) => {
            let mut days = BTreeSet::new();
            for part in value.split(',') {
                let day: u64 = part.trim().parse().map_err(|_| {
                    ParseError::new(*line, format!("snapshot_days: bad entry `{part}`"))
                })?;
                days.insert(day);
            }
            days
        }
        // Special-regime runs mirror the reference snapshot days by default.
        None if initial == InitialProfileSpec::Special => BTreeSet::from([1, 500, 900]),
        None => BTreeSet::new(),
    };

    Ok(ExperimentSpec {
        seed: unsigned("seed", 0)?,
        max_days: unsigned("max_days", 1_000_000)?,
        stuck_threshold: unsigned("stuck_threshold", 10_000)?,
        max_candidates: unsigned("max_candidates", 100)? as usize,
        lower_bound: rational("lower_bound")?.map(|(v, _)| v),
        upper_bound: rational("upper_bound")?.map(|(v, _)| v),
        game,
        dynamics,
        initial,
        snapshot_days,
    })
}

/// Parses a profile file into `(user, departure time)` pairs.
///
/// Accepts bare `user,departure` rows or any CSV with a header naming a
/// `user` column and a `departure_exact` (preferred) or `departure` column,
/// so snapshot and equilibrium outputs feed straight back in.
pub fn parse_profile_text(text: &str) -> Result<Vec<(UserId, Rational)>, ParseError> {
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        rows.push((
            idx + 1,
            line.split(',').map(|f| f.trim().to_string()).collect(),
        ));
    }
    if rows.is_empty() {
        return Err(ParseError::new(0, "empty profile file"));
    }

    // Header detection: a first row whose fields are not all numeric.
    let (user_col, departure_col, data_start) = {
        let (line_no, first) = &rows[0];
        let numeric = first
            .iter()
            .all(|f| !f.is_empty() && parse_rational(f).is_ok());
        if numeric {
            if first.len() < 2 {
                return Err(ParseError::new(
                    *line_no,
                    "expected at least two columns: user, departure",
                ));
            }
            (0, 1, 0)
        } else {
            let user_col = first.iter().position(|f| f == "user").ok_or_else(|| {
                ParseError::new(*line_no, "header has no `user` column")
            })?;
            let departure_col = first
                .iter()
                .position(|f| f == "departure_exact")
                .or_else(|| first.iter().position(|f| f == "departure"))
                .ok_or_else(|| {
                    ParseError::new(
                        *line_no,
                        "header has no `departure_exact` or `departure` column",
                    )
                })?;
            (user_col, departure_col, 1)
        }
    };

    let mut entries = Vec::with_capacity(rows.len() - data_start);
    for (line_no, fields) in rows.into_iter().skip(data_start) {
        let need = user_col.max(departure_col) + 1;
        if fields.len() < need {
            return Err(ParseError::new(
                line_no,
                format!("expected at least {need} columns, got {}", fields.len()),
            ));
        }
        let user: UserId = fields[user_col]
            .parse()
            .map_err(|_| ParseError::new(line_no, format!("bad user id `{}`", fields[user_col])))?;
        let departure = parse_rational(&fields[departure_col])
            .map_err(|e| ParseError::new(line_no, format!("bad departure: {e}")))?;
        entries.push((user, departure));
    }
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InitialProfileError {
    #[error("initial profile: {0}")]
    Profile(#[from] ProfileError),
    #[error("profile file {path}: {error}")]
    File { path: String, error: String },
    #[error("horizon too crowded: {users} users for {ticks} ticks in the draw range")]
    Crowded { users: usize, ticks: i64 },
}

/// Builds the day-zero profile. Uniform draws snap to the nearest unoccupied
/// tick (later tick preferred on ties) so collisions cannot occur.
pub fn build_initial_profile<R: Rng + ?Sized>(
    spec: &InitialProfileSpec,
    config: &GameConfig,
    equilibrium_departures: &[TimeTick],
    rng: &mut R,
) -> Result<TimeProfile, InitialProfileError> {
    match spec {
        InitialProfileSpec::Equilibrium => Ok(TimeProfile::new(
            equilibrium_departures.to_vec(),
            config,
        )?),
        InitialProfileSpec::Special => {
            let t_minus = equilibrium_departures[0];
            let mut departures = vec![t_minus];
            draw_uniform_into(&mut departures, config, t_minus.0, config.max_tick(), rng)?;
            Ok(TimeProfile::new(departures, config)?)
        }
        InitialProfileSpec::Uniform => {
            let mut departures = Vec::new();
            draw_uniform_into(
                &mut departures,
                config,
                config.min_tick(),
                config.max_tick(),
                rng,
            )?;
            Ok(TimeProfile::new(departures, config)?)
        }
        InitialProfileSpec::File(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| InitialProfileError::File {
                path: path.clone(),
                error: e.to_string(),
            })?;
            let entries = parse_profile_text(&text).map_err(|e| InitialProfileError::File {
                path: path.clone(),
                error: e.to_string(),
            })?;
            crate::model::profile_from_departures(&entries, config)
                .map_err(InitialProfileError::Profile)
        }
    }
}

fn draw_uniform_into<R: Rng + ?Sized>(
    departures: &mut Vec<TimeTick>,
    config: &GameConfig,
    lo: i64,
    hi: i64,
    rng: &mut R,
) -> Result<(), InitialProfileError> {
    let needed = config.num_users() - departures.len();
    let width = hi - lo + 1;
    if (width as i128) < (config.num_users() as i128) {
        return Err(InitialProfileError::Crowded {
            users: config.num_users(),
            ticks: width,
        });
    }
    let mut occupied: BTreeSet<i64> = departures.iter().map(|t| t.0).collect();
    for _ in 0..needed {
        let draw = rng.random_range(lo..=hi);
        let tick = nearest_free(draw, &occupied, lo, hi).expect("range has free ticks");
        occupied.insert(tick);
        departures.push(TimeTick(tick));
    }
    Ok(())
}

/// Nearest free tick to `draw` inside `[lo, hi]`; prefers the later tick on
/// distance ties.
fn nearest_free(draw: i64, occupied: &BTreeSet<i64>, lo: i64, hi: i64) -> Option<i64> {
    if !occupied.contains(&draw) {
        return Some(draw);
    }
    for distance in 1..=(hi - lo) {
        let later = draw + distance;
        if later <= hi && !occupied.contains(&later) {
            return Some(later);
        }
        let earlier = draw - distance;
        if earlier >= lo && !occupied.contains(&earlier) {
            return Some(earlier);
        }
    }
    None
}
