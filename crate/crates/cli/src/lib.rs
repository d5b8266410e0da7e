//! Command-line front end: argument parsing, scenario loading and the CSV and
//! JSON artifacts written by each subcommand.

use std::ffi::OsString;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand as ClapSubcommand};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use marsdrop_core::atmosphere::AtmosphereError;
use marsdrop_core::edl::mission_preset;
use marsdrop_core::par;
use marsdrop_core::rotor_aero::{vrs_map, VrsGrid};
use marsdrop_core::sim::scenario::expand;
use marsdrop_core::sim::{
    apply_override, detect_event, run_until, scenario_preset, MissionConfig, ScenarioError, SimError, Stage, Trigger,
    TriggerKind,
};
use marsdrop_core::trajectory::{LogRow, Phase, RunStatus, TrajectoryLog};
use marsdrop_core::Execution;

/// Environment variable supplying the default output directory.
pub const OUT_ENV: &str = "MARSDROP_OUT";

/// Scenario presets run by `compare`, in table column order. The last one
/// is replaced by the requested scenario when one is given.
pub const COMPARE_PRESETS: [&str; 3] = ["pathfinder", "insight", "mad"];

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INCOMPLETE: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("`{0}` needs a scenario: pass --preset or --config")]
    MissingSource(&'static str),
    #[error("--preset and --config are mutually exclusive")]
    ConflictingSources,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Csv { .. } | CliError::Json { .. } => EXIT_IO,
            CliError::Scenario(ScenarioError::Io { .. }) => EXIT_IO,
            CliError::Scenario(ScenarioError::Atmosphere(AtmosphereError::Io { .. })) => EXIT_IO,
            CliError::Sim(SimError::NonFinite(_)) => EXIT_INCOMPLETE,
            _ => EXIT_CONFIG,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Entry,
    Chute,
    Deploy,
    Vrsmap,
    Compare,
}

impl Subcommand {
    pub fn as_str(self) -> &'static str {
        match self {
            Subcommand::Entry => "entry",
            Subcommand::Chute => "chute",
            Subcommand::Deploy => "deploy",
            Subcommand::Vrsmap => "vrsmap",
            Subcommand::Compare => "compare",
        }
    }

    /// Map and comparison runs fall back to the MAD scenario.
    fn default_preset(self) -> Option<&'static str> {
        matches!(self, Subcommand::Vrsmap | Subcommand::Compare).then_some("mad")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRequest {
    pub subcommand: Subcommand,
    pub config_path: Option<PathBuf>,
    pub preset: Option<String>,
    /// From `--out` or the environment; `None` defers to the scenario file.
    pub output_dir: Option<PathBuf>,
    pub overrides: Vec<String>,
}

#[derive(Debug, Parser)]
#[command(
    name = "marsdrop",
    version,
    about = "Mid-air deployment simulator for a Mars coaxial helicopter"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, ClapSubcommand)]
enum Command {
    /// Hypersonic entry down to the chute deploy trigger.
    Entry(Source),
    /// Entry plus canopy descent to the release altitude.
    Chute(Source),
    /// Full run through release and braking to hover.
    Deploy(Source),
    /// Inflow and VRS regime map over normalized rotor-frame speeds.
    Vrsmap(Source),
    /// Entry and canopy comparison across mission presets.
    Compare(Source),
}

#[derive(Debug, Args)]
struct Source {
    /// Built-in scenario (mad, mad_edl, pathfinder, insight).
    #[arg(long)]
    preset: Option<String>,
    /// Scenario JSON file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = OUT_ENV)]
    out: Option<PathBuf>,
    /// Dotted-path override applied after loading, e.g. `rotor.f=0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

/// Parse command-line arguments (including the program name) into a
/// validated request. Help and version requests come back as `Usage` with
/// the rendered text.
pub fn parse_args<I, T>(argv: I) -> Result<RunRequest, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.render().to_string()))?;
    let (subcommand, src) = match cli.command {
        Command::Entry(s) => (Subcommand::Entry, s),
        Command::Chute(s) => (Subcommand::Chute, s),
        Command::Deploy(s) => (Subcommand::Deploy, s),
        Command::Vrsmap(s) => (Subcommand::Vrsmap, s),
        Command::Compare(s) => (Subcommand::Compare, s),
    };
    if src.preset.is_some() && src.config.is_some() {
        return Err(CliError::ConflictingSources);
    }
    if src.preset.is_none() && src.config.is_none() && subcommand.default_preset().is_none() {
        return Err(CliError::MissingSource(subcommand.as_str()));
    }
    for o in &src.overrides {
        apply_override(&mut json!({}), o)?;
    }
    Ok(RunRequest {
        subcommand,
        config_path: src.config,
        preset: src.preset,
        output_dir: src.out,
        overrides: src.overrides,
    })
}

/// Load the scenario named by the request and apply its overrides.
pub fn load_config(req: &RunRequest) -> Result<MissionConfig, CliError> {
    let (doc, base_dir) = match (&req.config_path, &req.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            let doc: Value = serde_json::from_str(&text).map_err(ScenarioError::from)?;
            let base = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
            (expand(doc)?, base)
        }
        (None, Some(name)) => (scenario_preset(name)?, PathBuf::from(".")),
        (None, None) => {
            let name = req
                .subcommand
                .default_preset()
                .ok_or(CliError::MissingSource(req.subcommand.as_str()))?;
            (scenario_preset(name)?, PathBuf::from("."))
        }
    };
    let mut doc = doc;
    for o in &req.overrides {
        apply_override(&mut doc, o)?;
    }
    Ok(MissionConfig::from_value(doc, &base_dir)?)
}

/// Figures of merit for one run. Every value can be recomputed from the
/// rows in `trajectory.csv`; `None` when the run never reached the point
/// the value refers to.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub status: RunStatus,
    pub note: Option<String>,
    /// Altitude where Mach 2 is crossed during entry, m.
    pub mach2_altitude_m: Option<f64>,
    /// Speed at the end of canopy descent, m/s.
    pub terminal_velocity_ms: Option<f64>,
    pub release_altitude_m: Option<f64>,
    pub release_speed_ms: Option<f64>,
    pub altitude_loss_to_hover_m: Option<f64>,
    pub hover_elevation_m: Option<f64>,
    pub hover_time_s: Option<f64>,
    pub peak_severity: Option<f64>,
}

fn mach2_altitude(rows: &[LogRow]) -> Option<f64> {
    let entry: Vec<LogRow> = rows.iter().filter(|r| r.phase == Phase::Entry).copied().collect();
    let t = detect_event(
        &entry,
        Trigger {
            kind: TriggerKind::Mach,
            threshold: 2.0,
        },
    )
    .ok()?;
    let w = entry.windows(2).find(|w| w[0].t <= t && t <= w[1].t)?;
    let s = (t - w[0].t) / (w[1].t - w[0].t);
    Some(w[0].altitude + s * (w[1].altitude - w[0].altitude))
}

pub fn summarize(log: &TrajectoryLog) -> Summary {
    let rows = &log.rows;
    let release = log.find_event("release").and_then(|e| rows.iter().find(|r| r.t >= e.t));
    let hover = rows.iter().find(|r| r.phase == Phase::Hover);
    let terminal = rows
        .iter()
        .rev()
        .find(|r| matches!(r.phase, Phase::Chute | Phase::Extended))
        .map(LogRow::speed);
    let peak = rows
        .iter()
        .map(|r| r.severity)
        .filter(|s| s.is_finite())
        .reduce(f64::max);
    Summary {
        status: log.status,
        note: log.note.clone(),
        mach2_altitude_m: mach2_altitude(rows),
        terminal_velocity_ms: terminal,
        release_altitude_m: release.map(|r| r.altitude),
        release_speed_ms: release.map(LogRow::speed),
        altitude_loss_to_hover_m: release.zip(hover).map(|(r, h)| r.altitude - h.altitude),
        hover_elevation_m: hover.map(|h| h.altitude),
        hover_time_s: hover.map(|h| h.t),
        peak_severity: peak,
    }
}

/// Fixed 17-significant-digit formatting; NaN becomes an empty cell.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.16e}")
    }
}

pub const TRAJECTORY_HEADER: [&str; 19] = [
    "t_s",
    "phase",
    "altitude_m",
    "vel_x_ms",
    "vel_y_ms",
    "vel_z_ms",
    "speed_ms",
    "mach",
    "alpha_deg",
    "omega_rads",
    "ct_sigma",
    "q_aero_nm",
    "q_motor_nm",
    "v_i_ms",
    "v_h_ms",
    "vz_bar",
    "vx_bar",
    "regime",
    "severity",
];

fn trajectory_record(r: &LogRow) -> Vec<String> {
    let mut rec = vec![fmt_float(r.t), r.phase.as_str().to_string()];
    let nums = [
        r.altitude,
        r.velocity.x,
        r.velocity.y,
        r.velocity.z,
        r.speed(),
        r.mach,
        r.alpha_deg,
        r.omega,
        r.ct_sigma,
        r.q_aero,
        r.q_motor,
        r.v_i,
        r.v_h,
        r.vz_bar,
        r.vx_bar,
    ];
    rec.extend(nums.iter().map(|&x| fmt_float(x)));
    rec.push(r.regime.map_or(String::new(), |g| g.as_str().to_string()));
    rec.push(fmt_float(r.severity));
    rec
}

fn write_csv<R: AsRef<[u8]>>(
    path: &Path,
    header: &[&str],
    records: impl IntoIterator<Item = Vec<R>>,
) -> Result<(), CliError> {
    let wrap = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    w.write_record(header).map_err(wrap)?;
    for rec in records {
        w.write_record(&rec).map_err(wrap)?;
    }
    w.flush().map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Write `trajectory.csv`, `events.json` and `summary.json` into `dir`.
pub fn emit_outputs(log: &TrajectoryLog, dir: &Path) -> Result<Summary, CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_csv(
        &dir.join("trajectory.csv"),
        &TRAJECTORY_HEADER,
        log.rows.iter().map(trajectory_record),
    )?;
    write_json(&dir.join("events.json"), &log.events)?;
    let summary = summarize(log);
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

pub fn write_vrsmap(cfg: &MissionConfig, dir: &Path, exec: Execution) -> Result<usize, CliError> {
    let vehicle = cfg.require_vehicle()?;
    let points = vrs_map(&VrsGrid::default(), &vehicle.rotor, exec);
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let records = points.iter().map(|p| {
        vec![
            fmt_float(p.vx_bar),
            fmt_float(p.vz_bar),
            fmt_float(p.vi_over_vh),
            p.class.regime.as_str().to_string(),
            fmt_float(p.class.severity),
        ]
    });
    write_csv(
        &dir.join("vrsmap.csv"),
        &["vx_bar", "vz_bar_descent_positive", "vi_over_vh", "regime", "severity"],
        records,
    )?;
    Ok(points.len())
}

/// One column of the mission comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub mission: String,
    pub entry_velocity_kms: f64,
    pub flight_path_angle_deg: f64,
    pub entry_mass_kg: f64,
    pub heatshield_mass_kg: f64,
    pub backshell_chute_mass_kg: f64,
    pub landed_mass_kg: f64,
    pub mach2_altitude_m: Option<f64>,
    pub terminal_velocity_ms: Option<f64>,
    pub status: RunStatus,
}

pub const COMPARE_HEADER: [&str; 10] = [
    "mission",
    "entry_velocity_kms",
    "flight_path_angle_deg",
    "entry_mass_kg",
    "heatshield_mass_kg",
    "backshell_chute_mass_kg",
    "landed_mass_kg",
    "mach2_altitude_m",
    "terminal_velocity_ms",
    "status",
];

fn compare_row(label: &str, cfg: &MissionConfig) -> Result<CompareRow, CliError> {
    let entry = cfg
        .entry
        .as_ref()
        .ok_or_else(|| SimError::InvalidConfig(format!("`{label}` has no entry settings")))?;
    let log = run_until(cfg, Stage::Chute)?;
    let s = summarize(&log);
    let masses = cfg.mission.map(mission_preset);
    let pick = |f: fn(&marsdrop_core::edl::MissionPreset) -> f64| masses.as_ref().map_or(f64::NAN, f);
    Ok(CompareRow {
        mission: cfg.mission.map_or_else(|| label.to_string(), |m| m.to_string()),
        entry_velocity_kms: entry.entry_velocity / 1000.0,
        flight_path_angle_deg: entry.flight_path_angle_deg,
        entry_mass_kg: entry.entry_mass,
        heatshield_mass_kg: pick(|m| m.heatshield_mass),
        backshell_chute_mass_kg: pick(|m| m.backshell_chute_mass),
        landed_mass_kg: pick(|m| m.landed_mass),
        mach2_altitude_m: s.mach2_altitude_m,
        terminal_velocity_ms: s.terminal_velocity_ms,
        status: log.status,
    })
}

/// Run the comparison presets, with `last` standing in for the MAD column,
/// fanned out with `exec`.
pub fn compare(last: &MissionConfig, exec: Execution) -> Result<Vec<CompareRow>, CliError> {
    let mut configs = Vec::new();
    for name in &COMPARE_PRESETS[..COMPARE_PRESETS.len() - 1] {
        configs.push((name.to_string(), MissionConfig::preset(name)?));
    }
    configs.push(("scenario".to_string(), last.clone()));
    par::map(exec, &configs, |(label, cfg)| compare_row(label, cfg))
        .into_iter()
        .collect()
}

pub fn write_compare(rows: &[CompareRow], dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let opt = |x: Option<f64>| fmt_float(x.unwrap_or(f64::NAN));
    let records = rows.iter().map(|r| {
        vec![
            r.mission.clone(),
            fmt_float(r.entry_velocity_kms),
            fmt_float(r.flight_path_angle_deg),
            fmt_float(r.entry_mass_kg),
            fmt_float(r.heatshield_mass_kg),
            fmt_float(r.backshell_chute_mass_kg),
            fmt_float(r.landed_mass_kg),
            opt(r.mach2_altitude_m),
            opt(r.terminal_velocity_ms),
            serde_json::to_value(r.status)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
        ]
    });
    write_csv(&dir.join("compare.csv"), &COMPARE_HEADER, records)
}

/// Output directory: `--out` or the environment, then the scenario's
/// `output.dir`, then the working directory.
pub fn output_dir(req: &RunRequest, cfg: &MissionConfig) -> PathBuf {
    req.output_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Execute a parsed request. Returns the process exit code.
pub fn execute(req: &RunRequest) -> Result<i32, CliError> {
    let cfg = load_config(req)?;
    let dir = output_dir(req, &cfg);
    let stage = match req.subcommand {
        Subcommand::Entry => Stage::Entry,
        Subcommand::Chute => Stage::Chute,
        Subcommand::Deploy => Stage::Hover,
        Subcommand::Vrsmap => {
            write_vrsmap(&cfg, &dir, Execution::Parallel)?;
            return Ok(EXIT_OK);
        }
        Subcommand::Compare => {
            let rows = compare(&cfg, Execution::Parallel)?;
            write_compare(&rows, &dir)?;
            let all_done = rows.iter().all(|r| r.status == RunStatus::Complete);
            return Ok(if all_done { EXIT_OK } else { EXIT_INCOMPLETE });
        }
    };
    let log = run_until(&cfg, stage)?;
    let summary = emit_outputs(&log, &dir)?;
    Ok(if summary.status == RunStatus::Complete {
        EXIT_OK
    } else {
        EXIT_INCOMPLETE
    })
}

/// Parse, run and report. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let req = match Cli::try_parse_from(&argv) {
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return EXIT_OK;
        }
        _ => parse_args(&argv),
    };
    match req.and_then(|r| execute(&r)) {
        Ok(code) => {
            if code == EXIT_INCOMPLETE {
                eprintln!("marsdrop: run did not complete, see summary.json");
            }
            code
        }
        Err(e) => {
            eprintln!("marsdrop: {e}");
            e.exit_code()
        }
    }
}
