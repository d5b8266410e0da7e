//! Scenario documents: JSON parsing, named presets and `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::atmosphere::{
    AtmosphereError, AtmosphereModel, DEFAULT_SCALE_HEIGHT, DEFAULT_SURFACE_DENSITY, DEFAULT_TEMPERATURE,
};
use crate::edl::{mission_preset, ChuteConfig, EdlError, EntryConfig, MissionName};
use crate::vehicle::{preset, PresetName, VehicleConfig, VehicleError};

use super::{ControlGains, GuidanceMode, IntegratorConfig, ReleaseConfig, SimError};

const TOP_LEVEL: [&str; 8] = [
    "vehicle",
    "atmosphere",
    "phases",
    "release",
    "control",
    "guidance",
    "integrator",
    "output",
];

pub const SCENARIO_PRESETS: [&str; 4] = ["mad", "mad_edl", "pathfinder", "insight"];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario preset `{0}`")]
    UnknownPreset(String),
    #[error("malformed override `{0}`: expected key=value")]
    MalformedOverride(String),
    #[error("override `{key}` crosses non-object value at `{at}`")]
    OverridePath { key: String, at: String },
    #[error("scenario document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Atmosphere(#[from] AtmosphereError),
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
    #[error(transparent)]
    Edl(#[from] EdlError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPhase {
    Entry,
    #[default]
    Release,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionConfig {
    pub vehicle: Option<VehicleConfig>,
    pub atmosphere: AtmosphereModel,
    pub entry: Option<EntryConfig>,
    pub chute: Option<ChuteConfig>,
    /// Mission whose entry and chute settings were used, if any.
    pub mission: Option<MissionName>,
    pub start: StartPhase,
    /// Rotor spin-up time while attached to the backshell, s.
    pub spin_up_time: f64,
    pub release: ReleaseConfig,
    pub control: ControlGains,
    pub guidance: GuidanceMode,
    pub integrator: IntegratorConfig,
    pub output_dir: Option<PathBuf>,
}

impl MissionConfig {
    pub fn require_vehicle(&self) -> Result<&VehicleConfig, SimError> {
        self.vehicle
            .as_ref()
            .ok_or_else(|| SimError::InvalidConfig("this run needs a `vehicle`".into()))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        let i = &self.integrator;
        for (name, dt) in [
            ("dt_entry", i.dt_entry),
            ("dt_chute", i.dt_chute),
            ("dt_released", i.dt_released),
        ] {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("integrator.{name} must be positive, got {dt}"));
            }
        }
        if !(i.t_max > 0.0) {
            return bad(format!("integrator.t_max must be positive, got {}", i.t_max));
        }
        let (lo, hi) = self.atmosphere.span();
        let h = self.release.altitude;
        if !(h >= lo && h <= hi) {
            return bad(format!("release altitude {h} m outside atmosphere span [{lo}, {hi}]"));
        }
        if !(self.release.initial_speed >= 0.0) {
            return bad(format!(
                "release.initial_speed must be non-negative, got {}",
                self.release.initial_speed
            ));
        }
        if !(self.spin_up_time >= 0.0) {
            return bad(format!(
                "phases.spin_up_time must be non-negative, got {}",
                self.spin_up_time
            ));
        }
        if let GuidanceMode::Planned { margin } = self.guidance {
            if !(margin >= 0.0) {
                return bad(format!("guidance.margin must be non-negative, got {margin}"));
            }
        }
        if let Some(v) = &self.vehicle {
            v.validate().map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }

    /// Parse a fully expanded scenario document. Relative CSV paths are
    /// resolved against `base_dir`.
    pub fn from_value(doc: Value, base_dir: &Path) -> Result<Self, ScenarioError> {
        let doc = expand(doc)?;
        let raw: Document = serde_json::from_value(doc)?;
        raw.resolve(base_dir)
    }

    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, ScenarioError> {
        Self::from_value(serde_json::from_str(text)?, base_dir)
    }

    pub fn preset(name: &str) -> Result<Self, ScenarioError> {
        Self::from_value(scenario_preset(name)?, Path::new("."))
    }
}

/// Named scenario document before overrides.
pub fn scenario_preset(name: &str) -> Result<Value, ScenarioError> {
    let exponential = json!({
        "exponential": {
            "surface_density": DEFAULT_SURFACE_DENSITY,
            "scale_height": DEFAULT_SCALE_HEIGHT,
            "temperature": DEFAULT_TEMPERATURE
        }
    });
    let release = json!({ "altitude": 6000.0, "initial_alpha_deg": 90.0, "initial_speed": 30.0 });
    let doc = match name {
        "mad" | "mad_edl" => json!({
            "vehicle": { "preset": "mad" },
            "atmosphere": exponential,
            "phases": {
                "mission": "mad",
                "start": if name == "mad" { "release" } else { "entry" },
                "spin_up_time": 5.0
            },
            "release": release,
            "guidance": { "mode": "fixed", "alpha_deg": 90.0 }
        }),
        "pathfinder" | "insight" => json!({
            "atmosphere": exponential,
            "phases": { "mission": name, "start": "entry" },
            "release": release
        }),
        other => return Err(ScenarioError::UnknownPreset(other.to_string())),
    };
    expand(doc)
}

/// Replace `vehicle.preset` and `phases.mission` shorthands by the full
/// settings they stand for. Explicit keys next to a shorthand win.
pub fn expand(mut doc: Value) -> Result<Value, ScenarioError> {
    let root = doc
        .as_object_mut()
        .ok_or_else(|| ScenarioError::Invalid("scenario document must be a JSON object".into()))?;
    if let Some(Value::Object(vehicle)) = root.get_mut("vehicle") {
        if let Some(name) = vehicle.remove("preset") {
            let name: PresetName = name
                .as_str()
                .ok_or_else(|| ScenarioError::Invalid("vehicle.preset must be a string".into()))?
                .parse()?;
            let full = serde_json::to_value(preset(name))?;
            merge_missing(vehicle, full);
        }
    }
    if let Some(Value::Object(phases)) = root.get_mut("phases") {
        if let Some(Value::String(name)) = phases.get("mission") {
            let m = mission_preset(name.parse()?);
            if !phases.contains_key("entry") {
                phases.insert("entry".into(), serde_json::to_value(&m.entry)?);
            }
            if !phases.contains_key("chute") {
                phases.insert("chute".into(), serde_json::to_value(&m.chute)?);
            }
        }
    }
    Ok(doc)
}

fn merge_missing(target: &mut Map<String, Value>, full: Value) {
    if let Value::Object(full) = full {
        for (k, v) in full {
            match (target.get_mut(&k), v) {
                (Some(Value::Object(t)), v @ Value::Object(_)) => merge_missing(t, v),
                (Some(_), _) => {}
                (None, v) => {
                    target.insert(k, v);
                }
            }
        }
    }
}

/// Apply one `key=value` override on a dotted path. The value is read as
/// JSON when it parses, otherwise as a string. A path whose first segment is
/// not a top-level key but names a vehicle field is taken relative to
/// `vehicle`.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), ScenarioError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ScenarioError::MalformedOverride(assignment.to_string()))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(ScenarioError::MalformedOverride(assignment.to_string()));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut path: Vec<&str> = key.split('.').collect();
    let first = path[0];
    if !TOP_LEVEL.contains(&first) && doc.get("vehicle").and_then(|v| v.get(first)).is_some() {
        path.insert(0, "vehicle");
    }
    let mut node = doc;
    for (i, seg) in path.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| ScenarioError::OverridePath {
            key: key.to_string(),
            at: path[..i].join("."),
        })?;
        if i + 1 == path.len() {
            obj.insert(seg.to_string(), value);
            return Ok(());
        }
        node = obj.entry(seg.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    vehicle: Option<VehicleConfig>,
    atmosphere: Option<AtmosphereDoc>,
    #[serde(default)]
    phases: PhasesDoc,
    release: Option<ReleaseDoc>,
    #[serde(default)]
    control: ControlDoc,
    guidance: Option<GuidanceDoc>,
    #[serde(default)]
    integrator: IntegratorDoc,
    #[serde(default)]
    output: OutputDoc,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum AtmosphereDoc {
    Exponential {
        surface_density: f64,
        scale_height: f64,
        temperature: f64,
    },
    Csv(PathBuf),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhasesDoc {
    mission: Option<MissionName>,
    entry: Option<EntryConfig>,
    chute: Option<ChuteConfig>,
    spin_up_time: Option<f64>,
    start: Option<StartPhase>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReleaseDoc {
    altitude: f64,
    #[serde(default = "ninety")]
    initial_alpha_deg: f64,
    #[serde(default)]
    initial_speed: f64,
}

fn ninety() -> f64 {
    90.0
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlDoc {
    pi_kp: Option<f64>,
    pi_ki: Option<f64>,
    pd_kp: Option<f64>,
    pd_kd: Option<f64>,
    speed_gain: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum GuidanceKind {
    Fixed,
    Planned,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GuidanceDoc {
    mode: GuidanceKind,
    alpha_deg: Option<f64>,
    margin: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntegratorDoc {
    dt_entry: Option<f64>,
    dt_chute: Option<f64>,
    dt_released: Option<f64>,
    t_max: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputDoc {
    dir: Option<PathBuf>,
}

impl Document {
    fn resolve(self, base_dir: &Path) -> Result<MissionConfig, ScenarioError> {
        let atmosphere = match self.atmosphere {
            None => AtmosphereModel::default(),
            Some(AtmosphereDoc::Exponential {
                surface_density,
                scale_height,
                temperature,
            }) => AtmosphereModel::builtin_exponential(surface_density, scale_height, temperature)?,
            Some(AtmosphereDoc::Csv(path)) => {
                let path = if path.is_relative() { base_dir.join(path) } else { path };
                AtmosphereModel::load_profile_file(&path)?
            }
        };
        if let Some(v) = &self.vehicle {
            v.validate()?;
        }
        let release = self
            .release
            .map(|r| ReleaseConfig {
                altitude: r.altitude,
                initial_alpha_deg: r.initial_alpha_deg,
                initial_speed: r.initial_speed,
            })
            .unwrap_or(ReleaseConfig {
                altitude: 6000.0,
                initial_alpha_deg: 90.0,
                initial_speed: 30.0,
            });
        let defaults = self
            .vehicle
            .as_ref()
            .map(ControlGains::defaults_for)
            .unwrap_or_else(|| ControlGains::defaults_for(&preset(PresetName::Mad)));
        let c = self.control;
        let control = ControlGains {
            pi_kp: c.pi_kp.unwrap_or(defaults.pi_kp),
            pi_ki: c.pi_ki.unwrap_or(defaults.pi_ki),
            pd_kp: c.pd_kp.unwrap_or(defaults.pd_kp),
            pd_kd: c.pd_kd.unwrap_or(defaults.pd_kd),
            speed_gain: c.speed_gain.unwrap_or(defaults.speed_gain),
        };
        let guidance = match self.guidance {
            None => GuidanceMode::Fixed { alpha_deg: 90.0 },
            Some(GuidanceDoc {
                mode: GuidanceKind::Fixed,
                alpha_deg,
                ..
            }) => GuidanceMode::Fixed {
                alpha_deg: alpha_deg.unwrap_or(90.0),
            },
            Some(GuidanceDoc {
                mode: GuidanceKind::Planned,
                margin,
                ..
            }) => GuidanceMode::Planned {
                margin: margin.unwrap_or(0.0),
            },
        };
        let d = IntegratorConfig::default();
        let i = self.integrator;
        let integrator = IntegratorConfig {
            dt_entry: i.dt_entry.unwrap_or(d.dt_entry),
            dt_chute: i.dt_chute.unwrap_or(d.dt_chute),
            dt_released: i.dt_released.unwrap_or(d.dt_released),
            t_max: i.t_max.unwrap_or(d.t_max),
        };
        let p = self.phases;
        let start = p.start.unwrap_or(if p.entry.is_some() {
            StartPhase::Entry
        } else {
            StartPhase::Release
        });
        let cfg = MissionConfig {
            vehicle: self.vehicle,
            atmosphere,
            entry: p.entry,
            chute: p.chute,
            mission: p.mission,
            start,
            spin_up_time: p.spin_up_time.unwrap_or(5.0),
            release,
            control,
            guidance,
            integrator,
            output_dir: self.output.dir,
        };
        cfg.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for name in SCENARIO_PRESETS {
            let cfg = MissionConfig::preset(name).unwrap();
            assert!(cfg.entry.is_some(), "{name}");
        }
        let mad = MissionConfig::preset("mad").unwrap();
        assert_eq!(mad.start, StartPhase::Release);
        assert_eq!(mad.release.altitude, 6000.0);
        assert_eq!(mad.vehicle.unwrap().gross_mass, 4.141);
        assert!(MissionConfig::preset("pathfinder").unwrap().vehicle.is_none());
        assert!(matches!(
            MissionConfig::preset("viking"),
            Err(ScenarioError::UnknownPreset(_))
        ));
    }

    #[test]
    fn override_reaches_vehicle_fields() {
        let mut doc = scenario_preset("mad").unwrap();
        apply_override(&mut doc, "rotor.f=0").unwrap();
        apply_override(&mut doc, "release.initial_speed=12.5").unwrap();
        apply_override(&mut doc, "guidance.mode=planned").unwrap();
        let cfg = MissionConfig::from_value(doc, Path::new(".")).unwrap();
        assert_eq!(cfg.vehicle.unwrap().rotor.vrs_instability_factor, 0.0);
        assert_eq!(cfg.release.initial_speed, 12.5);
        assert_eq!(cfg.guidance, GuidanceMode::Planned { margin: 0.0 });
    }

    #[test]
    fn malformed_overrides() {
        let mut doc = scenario_preset("mad").unwrap();
        assert!(matches!(
            apply_override(&mut doc, "rotor.f"),
            Err(ScenarioError::MalformedOverride(_))
        ));
        assert!(matches!(
            apply_override(&mut doc, "=3"),
            Err(ScenarioError::MalformedOverride(_))
        ));
        assert!(matches!(
            apply_override(&mut doc, "release.altitude.x=3"),
            Err(ScenarioError::OverridePath { .. })
        ));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = MissionConfig::from_json(r#"{"release": {"altitude": 6000, "bogus": 1}}"#, Path::new("."));
        assert!(matches!(err, Err(ScenarioError::Json(_))));
    }

    #[test]
    fn inline_atmosphere_and_defaults() {
        let cfg = MissionConfig::from_json(
            r#"{
                "vehicle": {"preset": "ingenuity"},
                "atmosphere": {"exponential": {"surface_density": 0.02, "scale_height": 10000, "temperature": 200}},
                "release": {"altitude": 3000, "initial_speed": 10},
                "integrator": {"dt_released": 0.002}
            }"#,
            Path::new("."),
        )
        .unwrap();
        assert_eq!(cfg.atmosphere.density(0.0), 0.02);
        assert_eq!(cfg.integrator.dt_released, 0.002);
        assert_eq!(cfg.integrator.dt_chute, 0.01);
        assert_eq!(cfg.start, StartPhase::Release);
        assert_eq!(cfg.guidance, GuidanceMode::Fixed { alpha_deg: 90.0 });
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let mut doc = scenario_preset("mad").unwrap();
        apply_override(&mut doc, "integrator.dt_released=0").unwrap();
        assert!(matches!(
            MissionConfig::from_value(doc, Path::new(".")),
            Err(ScenarioError::Invalid(_))
        ));
    }
}
