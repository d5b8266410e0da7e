//! Entry, parachute descent and backshell separation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atmosphere::AtmosphereModel;
use crate::trajectory::{LogRow, Phase, RunStatus, TrajectoryLog, Trigger, TriggerKind};
use crate::vehicle::{VehicleConfig, MARS_GRAVITY};

/// m³/s²
pub const MARS_MU: f64 = 4.282_837e13;
/// Mean radius, m. Altitudes are measured from this sphere.
pub const MARS_RADIUS: f64 = 3_389_500.0;

#[derive(Debug, Error, PartialEq)]
pub enum EdlError {
    #[error("invalid EDL parameter {name} = {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("unknown mission preset `{0}`")]
    UnknownMission(String),
}

fn positive(name: &'static str, value: f64) -> Result<(), EdlError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(EdlError::InvalidParam { name, value })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryConfig {
    pub entry_mass: f64,
    /// Planet-relative, m/s.
    pub entry_velocity: f64,
    /// Negative below the local horizon.
    pub flight_path_angle_deg: f64,
    pub aeroshell_diameter: f64,
    pub hypersonic_cd: f64,
    pub entry_altitude: f64,
    /// Integration stops here if the trigger never fires.
    #[serde(default = "default_ground")]
    pub ground_altitude: f64,
}

fn default_ground() -> f64 {
    -8000.0
}

impl EntryConfig {
    pub fn reference_area(&self) -> f64 {
        PI * self.aeroshell_diameter.powi(2) / 4.0
    }

    pub fn ballistic_coefficient(&self) -> f64 {
        self.entry_mass / (self.hypersonic_cd * self.reference_area())
    }

    pub fn validate(&self) -> Result<(), EdlError> {
        positive("entry_mass", self.entry_mass)?;
        positive("entry_velocity", self.entry_velocity)?;
        positive("aeroshell_diameter", self.aeroshell_diameter)?;
        positive("hypersonic_cd", self.hypersonic_cd)?;
        let fpa = self.flight_path_angle_deg;
        if !(fpa > -90.0 && fpa < 0.0) {
            return Err(EdlError::InvalidParam {
                name: "flight_path_angle_deg",
                value: fpa,
            });
        }
        if !(self.entry_altitude > self.ground_altitude) {
            return Err(EdlError::InvalidParam {
                name: "entry_altitude",
                value: self.entry_altitude,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChuteConfig {
    pub nominal_diameter: f64,
    pub drag_coefficient: f64,
    pub suspended_mass: f64,
    pub deploy_mach_max: f64,
    pub deploy_altitude_min: f64,
}

impl ChuteConfig {
    /// Nominal area S0.
    pub fn nominal_area(&self) -> f64 {
        PI * self.nominal_diameter.powi(2) / 4.0
    }

    pub fn validate(&self) -> Result<(), EdlError> {
        positive("nominal_diameter", self.nominal_diameter)?;
        positive("drag_coefficient", self.drag_coefficient)?;
        positive("suspended_mass", self.suspended_mass)?;
        positive("deploy_mach_max", self.deploy_mach_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationModel {
    pub beta_backshell: f64,
    pub beta_vehicle: f64,
}

impl SeparationModel {
    /// Backshell and chute share the chute drag area; the vehicle falls in
    /// autorotation.
    pub fn from_parts(chute: &ChuteConfig, backshell_chute_mass: f64, vehicle: &VehicleConfig) -> Self {
        Self {
            beta_backshell: backshell_chute_mass / (chute.drag_coefficient * chute.nominal_area()),
            beta_vehicle: vehicle.autorotation_ballistic_coefficient(),
        }
    }
}

fn planar(v: Vector2<f64>) -> Vector3<f64> {
    Vector3::new(v.x, 0.0, v.y)
}

#[derive(Debug, Clone, Copy)]
struct EntryState {
    r: Vector2<f64>,
    v: Vector2<f64>,
}

impl EntryState {
    fn altitude(&self) -> f64 {
        self.r.norm() - MARS_RADIUS
    }

    /// Horizontal and radial velocity in the local frame.
    fn local_velocity(&self) -> Vector2<f64> {
        let up = self.r.normalize();
        let east = Vector2::new(up.y, -up.x);
        Vector2::new(self.v.dot(&east), self.v.dot(&up))
    }
}

fn entry_derivative(s: &EntryState, cfg: &EntryConfig, atm: &AtmosphereModel) -> (Vector2<f64>, Vector2<f64>) {
    let r = s.r.norm();
    let rho = atm.density(r - MARS_RADIUS);
    let speed = s.v.norm();
    let drag = -0.5 * rho * speed * s.v * cfg.hypersonic_cd * cfg.reference_area() / cfg.entry_mass;
    let gravity = -MARS_MU / (r * r * r) * s.r;
    (s.v, gravity + drag)
}

fn entry_rk4(s: &EntryState, dt: f64, cfg: &EntryConfig, atm: &AtmosphereModel) -> EntryState {
    let f = |st: &EntryState| entry_derivative(st, cfg, atm);
    let add = |st: &EntryState, k: &(Vector2<f64>, Vector2<f64>), h: f64| EntryState {
        r: st.r + k.0 * h,
        v: st.v + k.1 * h,
    };
    let k1 = f(s);
    let k2 = f(&add(s, &k1, dt / 2.0));
    let k3 = f(&add(s, &k2, dt / 2.0));
    let k4 = f(&add(s, &k3, dt));
    EntryState {
        r: s.r + (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0) * dt / 6.0,
        v: s.v + (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1) * dt / 6.0,
    }
}

/// Specific mechanical energy (J/kg) of an entry row, for diagnostics.
pub fn specific_energy(row: &LogRow) -> f64 {
    0.5 * row.velocity.norm_squared() - MARS_MU / (MARS_RADIUS + row.altitude)
}

/// Planar point-mass entry with drag and inverse-square gravity, no lift.
///
/// Stops at the first sample with Mach at or below the chute trigger. The
/// `chute_deploy` event time is interpolated. Reaching the ground first, or
/// triggering below `deploy_altitude_min`, marks the log failed.
pub fn simulate_entry(
    cfg: &EntryConfig,
    chute: &ChuteConfig,
    atm: &AtmosphereModel,
    dt: f64,
) -> Result<TrajectoryLog, EdlError> {
    cfg.validate()?;
    chute.validate()?;
    positive("dt", dt)?;
    let fpa = cfg.flight_path_angle_deg.to_radians();
    let mut state = EntryState {
        r: Vector2::new(0.0, MARS_RADIUS + cfg.entry_altitude),
        v: cfg.entry_velocity * Vector2::new(fpa.cos(), fpa.sin()),
    };
    let mut log = TrajectoryLog::default();
    let row_of = |t: f64, s: &EntryState| {
        let h = s.altitude();
        let amb = atm.ambient_at(h);
        LogRow::kinematic(
            t,
            Phase::Entry,
            h,
            planar(s.local_velocity()),
            s.v.norm() / amb.sound_speed,
        )
    };
    let mut t = 0.0;
    let mut step = 0u64;
    log.push(row_of(t, &state));
    loop {
        state = entry_rk4(&state, dt, cfg, atm);
        step += 1;
        t = step as f64 * dt;
        let row = row_of(t, &state);
        log.push(row);
        if row.mach <= chute.deploy_mach_max {
            let trigger = Trigger {
                kind: TriggerKind::Mach,
                threshold: chute.deploy_mach_max,
            };
            let n = log.rows.len();
            if let Ok(te) = crate::trajectory::detect_event(&log.rows[n - 2..], trigger) {
                log.event(te, "chute_deploy");
            }
            if row.altitude < chute.deploy_altitude_min {
                log.status = RunStatus::Failed;
                log.note = Some(format!("chute trigger below minimum altitude at {:.1} m", row.altitude));
            } else {
                log.status = RunStatus::Complete;
            }
            return Ok(log);
        }
        if row.altitude <= cfg.ground_altitude || !row.altitude.is_finite() {
            log.status = RunStatus::Failed;
            log.note = Some("ground reached before the chute trigger".into());
            return Ok(log);
        }
    }
}

/// Closed-form vertical terminal velocity under the canopy.
pub fn chute_terminal_velocity(chute: &ChuteConfig, rho: f64) -> f64 {
    (2.0 * chute.suspended_mass * MARS_GRAVITY / (rho * chute.drag_coefficient * chute.nominal_area())).sqrt()
}

/// Downward acceleration of the suspended system at descent speed `v`.
pub fn chute_acceleration(chute: &ChuteConfig, rho: f64, v: f64) -> f64 {
    MARS_GRAVITY - rho * v * v.abs() * chute.drag_coefficient * chute.nominal_area() / (2.0 * chute.suspended_mass)
}

/// One RK4 step of the vertical canopy descent. Returns (altitude, descent speed).
pub fn chute_step(chute: &ChuteConfig, atm: &AtmosphereModel, altitude: f64, speed: f64, dt: f64) -> (f64, f64) {
    let f = |h: f64, v: f64| (-v, chute_acceleration(chute, atm.density(h), v));
    let k1 = f(altitude, speed);
    let k2 = f(altitude + k1.0 * dt / 2.0, speed + k1.1 * dt / 2.0);
    let k3 = f(altitude + k2.0 * dt / 2.0, speed + k2.1 * dt / 2.0);
    let k4 = f(altitude + k3.0 * dt, speed + k3.1 * dt);
    (
        altitude + (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0) * dt / 6.0,
        speed + (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1) * dt / 6.0,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChuteStart {
    pub t: f64,
    pub altitude: f64,
    /// Descent speed, positive down.
    pub speed: f64,
}

/// Vertical descent under the canopy from `start` down to `stop_altitude`.
/// The crossing is logged as a `release` event.
pub fn simulate_chute_descent(
    chute: &ChuteConfig,
    atm: &AtmosphereModel,
    start: ChuteStart,
    stop_altitude: f64,
    dt: f64,
) -> Result<TrajectoryLog, EdlError> {
    chute.validate()?;
    positive("dt", dt)?;
    let mut log = TrajectoryLog::default();
    let row_of = |t: f64, h: f64, v: f64| {
        LogRow::kinematic(
            t,
            Phase::Chute,
            h,
            Vector3::new(0.0, 0.0, -v),
            v.abs() / atm.ambient_at(h).sound_speed,
        )
    };
    let (mut h, mut v) = (start.altitude, start.speed);
    log.push(row_of(start.t, h, v));
    let mut step = 0u64;
    while h > stop_altitude {
        (h, v) = chute_step(chute, atm, h, v, dt);
        step += 1;
        log.push(row_of(start.t + step as f64 * dt, h, v));
        if !h.is_finite() || !v.is_finite() || v <= 0.0 {
            log.status = RunStatus::Failed;
            log.note = Some("canopy descent stalled".into());
            return Ok(log);
        }
    }
    if let Ok(te) = crate::trajectory::detect_event(
        &log.rows,
        Trigger {
            kind: TriggerKind::Altitude,
            threshold: stop_altitude,
        },
    ) {
        log.event(te, "release");
    }
    log.status = RunStatus::Complete;
    Ok(log)
}

/// Vertical gap (backshell minus vehicle altitude) after `t` seconds for two
/// bodies released together at descent speed `v0` in uniform density.
pub fn separation_clearance(sep: &SeparationModel, v0: f64, rho: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    // [z_b, v_b, z_v, v_v], descent-positive
    let accel = |v: f64, beta: f64| MARS_GRAVITY - rho * v * v.abs() / (2.0 * beta);
    let f = |s: [f64; 4]| {
        [
            s[1],
            accel(s[1], sep.beta_backshell),
            s[3],
            accel(s[3], sep.beta_vehicle),
        ]
    };
    let n = (t / 0.01).ceil().max(1.0) as usize;
    let h = t / n as f64;
    let mut s = [0.0, v0, 0.0, v0];
    let axpy = |s: [f64; 4], k: [f64; 4], a: f64| std::array::from_fn::<f64, 4, _>(|i| s[i] + a * k[i]);
    for _ in 0..n {
        let k1 = f(s);
        let k2 = f(axpy(s, k1, h / 2.0));
        let k3 = f(axpy(s, k2, h / 2.0));
        let k4 = f(axpy(s, k3, h));
        s = std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    s[2] - s[0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissionName {
    Pathfinder,
    Insight,
    Mad,
}

impl MissionName {
    pub const ALL: [MissionName; 3] = [MissionName::Pathfinder, MissionName::Insight, MissionName::Mad];
}

impl FromStr for MissionName {
    type Err = EdlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pathfinder" => Ok(MissionName::Pathfinder),
            "insight" => Ok(MissionName::Insight),
            "mad" => Ok(MissionName::Mad),
            other => Err(EdlError::UnknownMission(other.to_string())),
        }
    }
}

impl fmt::Display for MissionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MissionName::Pathfinder => "pathfinder",
            MissionName::Insight => "insight",
            MissionName::Mad => "mad",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionPreset {
    pub name: MissionName,
    pub entry: EntryConfig,
    pub chute: ChuteConfig,
    pub heatshield_mass: f64,
    pub backshell_chute_mass: f64,
    pub landed_mass: f64,
}

/// Viking-heritage DGB canopy used by every preset.
pub fn default_chute(suspended_mass: f64) -> ChuteConfig {
    ChuteConfig {
        nominal_diameter: 14.0,
        drag_coefficient: 0.62,
        suspended_mass,
        deploy_mach_max: 2.0,
        deploy_altitude_min: 0.0,
    }
}

/// 70-deg sphere-cone shell of 2.65 m.
pub fn default_entry(entry_mass: f64, entry_velocity: f64, flight_path_angle_deg: f64) -> EntryConfig {
    EntryConfig {
        entry_mass,
        entry_velocity,
        flight_path_angle_deg,
        aeroshell_diameter: 2.65,
        hypersonic_cd: 1.7,
        entry_altitude: 125_000.0,
        ground_altitude: default_ground(),
    }
}

pub fn mission_preset(name: MissionName) -> MissionPreset {
    let (entry_mass, v, fpa, heatshield, backshell, landed) = match name {
        MissionName::Pathfinder => (586.7, 7260.0, -14.1, 70.0, 145.0, 370.0),
        MissionName::Insight => (625.0, 6300.0, -12.0, 74.4, 115.6, 384.0),
        MissionName::Mad => (256.0, 7300.0, -12.0, 70.0, 145.0, 4.141),
    };
    MissionPreset {
        name,
        entry: default_entry(entry_mass, v, fpa),
        chute: default_chute(backshell + landed),
        heatshield_mass: heatshield,
        backshell_chute_mass: backshell,
        landed_mass: landed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::{preset, PresetName};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn mad() -> MissionPreset {
        mission_preset(MissionName::Mad)
    }

    fn mach2_altitude(entry: &EntryConfig) -> f64 {
        let p = mad();
        let log = simulate_entry(entry, &p.chute, &AtmosphereModel::default(), 0.05).unwrap();
        assert_eq!(log.status, RunStatus::Complete);
        let te = log.find_event("chute_deploy").unwrap().t;
        let w = log.rows.windows(2).find(|w| w[0].t <= te && te <= w[1].t).unwrap();
        w[0].altitude + (w[1].altitude - w[0].altitude) * (te - w[0].t) / (w[1].t - w[0].t)
    }

    #[test]
    fn mad_preset_masses() {
        let p = mad();
        assert_relative_eq!(p.chute.suspended_mass, 149.141, epsilon = 1e-9);
        assert_relative_eq!(p.entry.ballistic_coefficient(), 27.30, epsilon = 0.01);
        let pf = default_entry(586.7, 7300.0, -12.0);
        assert_relative_eq!(pf.ballistic_coefficient(), 62.57, epsilon = 0.01);
    }

    #[test]
    fn mad_reaches_mach_two_high_and_heavier_lower() {
        let h_mad = mach2_altitude(&mad().entry);
        assert!(h_mad > 15_000.0, "{h_mad}");
        let mut heavy = mad().entry;
        heavy.entry_mass = 586.7;
        let h_heavy = mach2_altitude(&heavy);
        assert!(h_heavy < h_mad, "{h_heavy} vs {h_mad}");
    }

    #[test]
    fn entry_energy_never_increases() {
        let p = mad();
        let log = simulate_entry(&p.entry, &p.chute, &AtmosphereModel::default(), 0.05).unwrap();
        for w in log.rows.windows(2) {
            let (e0, e1) = (specific_energy(&w[0]), specific_energy(&w[1]));
            assert!(e1 <= e0 + 1e-6 * e0.abs(), "{e0} -> {e1}");
        }
    }

    #[test]
    fn vacuum_entry_conserves_energy() {
        let atm = AtmosphereModel::builtin_exponential(1e-300, 11_100.0, 210.0).unwrap();
        let mut entry = mad().entry;
        entry.ground_altitude = 100_000.0;
        let log = simulate_entry(&entry, &mad().chute, &atm, 0.05).unwrap();
        assert_eq!(log.status, RunStatus::Failed);
        let first = log.rows.first().unwrap();
        let last = log.rows.last().unwrap();
        let r0 = MARS_RADIUS + first.altitude;
        let r1 = MARS_RADIUS + last.altitude;
        let v_expected = (first.speed().powi(2) + 2.0 * MARS_MU * (1.0 / r1 - 1.0 / r0)).sqrt();
        assert_relative_eq!(last.speed(), v_expected, max_relative = 1e-9);
    }

    #[test]
    fn entry_rejects_bad_fpa() {
        let mut e = mad().entry;
        e.flight_path_angle_deg = 5.0;
        assert!(simulate_entry(&e, &mad().chute, &AtmosphereModel::default(), 0.05).is_err());
    }

    #[test]
    fn terminal_velocity_examples() {
        let mut chute = default_chute(149.1);
        assert_relative_eq!(chute_terminal_velocity(&chute, 0.0130), 29.9, epsilon = 0.05);
        let v = chute_terminal_velocity(&chute, 0.01);
        assert_relative_eq!(chute_terminal_velocity(&chute, 0.04), v / 2.0, max_relative = 1e-12);
        chute.suspended_mass = 440.0;
        assert_relative_eq!(chute_terminal_velocity(&chute, 0.0158), 46.5, epsilon = 0.05);
    }

    #[test]
    fn equilibrium_speed_has_no_acceleration() {
        let chute = mad().chute;
        let vt = chute_terminal_velocity(&chute, 0.0092);
        assert!(chute_acceleration(&chute, 0.0092, vt).abs() < 1e-6 * MARS_GRAVITY);
    }

    #[test]
    fn chute_descent_settles_to_terminal_velocity() {
        let chute = mad().chute;
        let rho = 0.0092;
        let atm = AtmosphereModel::builtin_exponential(rho, 1e12, 210.0).unwrap();
        let start = ChuteStart {
            t: 0.0,
            altitude: 9000.0,
            speed: 300.0,
        };
        let log = simulate_chute_descent(&chute, &atm, start, 6000.0, 0.01).unwrap();
        let last = log.rows.last().unwrap();
        let vt = chute_terminal_velocity(&chute, rho);
        assert!((last.speed() - vt).abs() / vt < 1e-3);
        let te = log.find_event("release").unwrap().t;
        assert!(te <= last.t && te > last.t - 0.01);
    }

    #[test]
    fn heavier_payload_falls_faster() {
        let atm = AtmosphereModel::default();
        let start = ChuteStart {
            t: 0.0,
            altitude: 12_000.0,
            speed: 200.0,
        };
        let light = simulate_chute_descent(&default_chute(149.1), &atm, start, 6000.0, 0.01).unwrap();
        let heavy = simulate_chute_descent(&default_chute(515.0), &atm, start, 6000.0, 0.01).unwrap();
        assert!(heavy.rows.last().unwrap().speed() > light.rows.last().unwrap().speed());
    }

    #[test]
    fn separation_betas_and_gap() {
        let p = mad();
        let sep = SeparationModel::from_parts(&p.chute, p.backshell_chute_mass, &preset(PresetName::Mad));
        assert_relative_eq!(sep.beta_backshell, 1.519, epsilon = 1e-3);
        assert_relative_eq!(sep.beta_vehicle, 3.24, epsilon = 0.01);

        let quoted = SeparationModel {
            beta_backshell: 1.56,
            beta_vehicle: 3.24,
        };
        let mut prev = 0.0;
        for i in 1..=50 {
            let gap = separation_clearance(&quoted, 30.0, 0.01, i as f64 * 0.2);
            assert!(gap > prev, "t={} gap={gap}", i as f64 * 0.2);
            prev = gap;
        }
    }

    #[test]
    fn separation_degenerate_cases() {
        let same = SeparationModel {
            beta_backshell: 2.0,
            beta_vehicle: 2.0,
        };
        assert_eq!(separation_clearance(&same, 30.0, 0.01, 5.0), 0.0);
        let sep = SeparationModel {
            beta_backshell: 1.56,
            beta_vehicle: 3.24,
        };
        assert_eq!(separation_clearance(&sep, 30.0, 0.0, 5.0), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn mach_altitude_falls_with_mass(m in 150.0f64..400.0, dm in 20.0f64..200.0) {
            let mut a = mad().entry;
            a.entry_mass = m;
            let mut b = a.clone();
            b.entry_mass = m + dm;
            prop_assert!(mach2_altitude(&b) < mach2_altitude(&a));
        }

        #[test]
        fn terminal_velocity_inverse_sqrt(rho in 1e-3f64..0.05, k in 1.1f64..10.0) {
            let c = mad().chute;
            let r = chute_terminal_velocity(&c, rho) / chute_terminal_velocity(&c, k * rho);
            prop_assert!((r - k.sqrt()).abs() < 1e-12 * k.sqrt());
        }
    }
}
