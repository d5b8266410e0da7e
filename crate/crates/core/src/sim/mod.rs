//! Phase state machine for end-to-end mission runs.

mod dynamics;
pub mod scenario;

pub use dynamics::{step, wrench_at};
pub use scenario::{apply_override, scenario_preset, MissionConfig, ScenarioError, StartPhase};

use nalgebra::Vector3;
use thiserror::Error;

use crate::atmosphere::AtmosphereModel;
use crate::control::{
    alpha_of, desired_axis, plan_alpha_schedule, AlphaSchedule, GuidanceError, PdAttitudeController,
    PiTorqueController, PlannerSettings,
};
use crate::edl::{self, chute_step, ChuteConfig, EdlError};
use crate::rotor_aero::vrs_classify;
use crate::trajectory::{LogRow, Phase, RunStatus, TrajectoryLog};
use crate::vehicle::{BodyState, RotorCommand, VehicleConfig, MARS_GRAVITY};

pub use crate::trajectory::{detect_event, Event, NoCrossing, Trigger, TriggerKind};

/// |V| below which the vehicle counts as hovering, m/s.
pub const HOVER_SPEED: f64 = 0.5;
/// How long the hover speed must be held, s.
pub const HOVER_HOLD: f64 = 1.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid mission configuration: {0}")]
    InvalidConfig(String),
    #[error("state became non-finite: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Edl(#[from] EdlError),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
}

/// How far a run goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    /// Entry until the chute trigger.
    Entry,
    /// Entry and canopy descent down to the release altitude.
    Chute,
    /// Through release and powered braking to hover.
    Hover,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GuidanceMode {
    Fixed { alpha_deg: f64 },
    Planned { margin: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlGains {
    pub pi_kp: f64,
    pub pi_ki: f64,
    pub pd_kp: f64,
    pub pd_kd: f64,
    /// Velocity feedback gain of the hover-capture law, 1/s.
    pub speed_gain: f64,
}

impl ControlGains {
    pub fn defaults_for(vehicle: &VehicleConfig) -> Self {
        let (pi_kp, pi_ki) = PiTorqueController::default_gains(vehicle);
        let pd = PdAttitudeController::default_for(vehicle, 90.0);
        Self {
            pi_kp,
            pi_ki,
            pd_kp: pd.kp,
            pd_kd: pd.kd,
            speed_gain: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReleaseConfig {
    pub altitude: f64,
    pub initial_alpha_deg: f64,
    /// Descent speed when the run starts at release, m/s.
    pub initial_speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt_entry: f64,
    pub dt_chute: f64,
    pub dt_released: f64,
    pub t_max: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt_entry: 0.05,
            dt_chute: 0.01,
            dt_released: 1e-3,
            t_max: 3000.0,
        }
    }
}

impl IntegratorConfig {
    pub fn halved(&self) -> Self {
        Self {
            dt_entry: self.dt_entry / 2.0,
            dt_chute: self.dt_chute / 2.0,
            dt_released: self.dt_released / 2.0,
            t_max: self.t_max,
        }
    }
}

/// Weight-based hover induced velocity at density `rho`.
pub fn weight_hover_inflow(vehicle: &VehicleConfig, rho: f64) -> f64 {
    (vehicle.weight() / (2.0 * rho * vehicle.rotor.disk_area())).sqrt()
}

pub fn run_scenario(cfg: &MissionConfig) -> Result<TrajectoryLog, SimError> {
    run_until(cfg, Stage::Hover)
}

pub fn run_until(cfg: &MissionConfig, stage: Stage) -> Result<TrajectoryLog, SimError> {
    cfg.validate()?;
    let from_entry = stage < Stage::Hover || cfg.start == StartPhase::Entry;
    if !from_entry {
        let vehicle = cfg.require_vehicle()?;
        let state = release_state(
            vehicle,
            &cfg.release,
            cfg.release.initial_speed,
            vehicle.rotor.omega_nominal(),
        );
        let mut log = TrajectoryLog::default();
        log.event(0.0, "release");
        fly_released(cfg, vehicle, state, 0.0, &mut log)?;
        return Ok(log);
    }

    let (entry, chute) = match (&cfg.entry, &cfg.chute) {
        (Some(e), Some(c)) => (e, c),
        _ => {
            return Err(SimError::InvalidConfig(
                "entry and chute phases need both `entry` and `chute` settings".into(),
            ))
        }
    };
    let mut log = edl::simulate_entry(entry, chute, &cfg.atmosphere, cfg.integrator.dt_entry)?;
    if log.status != RunStatus::Complete || stage == Stage::Entry {
        return Ok(log);
    }
    log.status = RunStatus::Incomplete;
    let last = *log.rows.last().expect("entry log has rows");
    let vehicle = if stage == Stage::Hover {
        Some(cfg.require_vehicle()?)
    } else {
        None
    };
    let released = descend_on_chute(cfg, chute, vehicle, &last, &mut log)?;
    match (released, vehicle) {
        (Some((t, h, v, omega)), Some(vehicle)) if stage == Stage::Hover => {
            let state = release_state(vehicle, &cfg.release, v, omega);
            let mut state = state;
            state.position.z = h;
            fly_released(cfg, vehicle, state, t, &mut log)?;
        }
        (Some(_), _) => log.status = RunStatus::Complete,
        (None, _) => {}
    }
    Ok(log)
}

fn release_state(vehicle: &VehicleConfig, release: &ReleaseConfig, speed: f64, omega: f64) -> BodyState {
    let velocity = Vector3::new(0.0, 0.0, -speed);
    BodyState {
        position: Vector3::new(0.0, 0.0, release.altitude),
        velocity,
        rotor_axis: desired_axis(&velocity, release.initial_alpha_deg),
        angular_rate: Vector3::zeros(),
        omega: omega.clamp(0.0, vehicle.rotor.omega_max),
    }
}

/// Canopy descent from the end of entry to the release altitude. With a
/// vehicle the rotors are spun up while still attached. Returns the release
/// point (t, altitude, speed, rotor speed) without logging it.
fn descend_on_chute(
    cfg: &MissionConfig,
    chute: &ChuteConfig,
    vehicle: Option<&VehicleConfig>,
    start: &LogRow,
    log: &mut TrajectoryLog,
) -> Result<Option<(f64, f64, f64, f64)>, SimError> {
    let dt = cfg.integrator.dt_chute;
    let atm = &cfg.atmosphere;
    let release_alt = cfg.release.altitude;
    let t0 = start.t;
    let (mut h, mut v) = (start.altitude, start.speed());
    let mut t_extended: Option<f64> = None;
    let mut step_no = 0u64;
    let omega_nominal = vehicle.map_or(0.0, |veh| veh.rotor.omega_nominal());
    let spin_up = cfg.spin_up_time;
    let omega_at = |t: f64, t_ext: Option<f64>| match t_ext {
        Some(te) if spin_up > 0.0 => omega_nominal * ((t - te) / spin_up).min(1.0),
        Some(_) => omega_nominal,
        None => f64::NAN,
    };
    loop {
        if h <= release_alt {
            break;
        }
        let (h1, v1) = chute_step(chute, atm, h, v, dt);
        step_no += 1;
        let t = t0 + step_no as f64 * dt;
        (h, v) = (h1, v1);
        if !h.is_finite() || !v.is_finite() || v <= 0.0 {
            log.status = RunStatus::Failed;
            log.note = Some("canopy descent stalled".into());
            return Ok(None);
        }
        if t > cfg.integrator.t_max {
            log.note = Some("time limit reached under the canopy".into());
            return Ok(None);
        }
        if h <= release_alt {
            log.event(t, "release");
            let omega = if vehicle.is_some() {
                omega_at(t, t_extended.or(Some(t)))
            } else {
                f64::NAN
            };
            if vehicle.is_none() {
                log.push(chute_row(t, Phase::Chute, h, v, atm, f64::NAN));
            }
            return Ok(Some((t, h, v, omega)));
        }
        let phase = if vehicle.is_some() && (t_extended.is_some() || h - release_alt <= v * spin_up) {
            if t_extended.is_none() {
                t_extended = Some(t);
                log.event(t, "extended");
            }
            Phase::Extended
        } else {
            Phase::Chute
        };
        log.push(chute_row(t, phase, h, v, atm, omega_at(t, t_extended)));
    }
    Ok(None)
}

fn chute_row(t: f64, phase: Phase, h: f64, v: f64, atm: &AtmosphereModel, omega: f64) -> LogRow {
    let mut row = LogRow::kinematic(
        t,
        phase,
        h,
        Vector3::new(0.0, 0.0, -v),
        v / atm.ambient_at(h).sound_speed,
    );
    row.omega = omega;
    row
}

/// Everything the released-phase loop needs besides the state.
struct Autopilot {
    pi: PiTorqueController,
    pd: PdAttitudeController,
    speed_gain: f64,
    schedule: Option<AlphaSchedule>,
    fixed_alpha: f64,
    capture_ratio: f64,
    captured: bool,
}

impl Autopilot {
    fn new(cfg: &MissionConfig, vehicle: &VehicleConfig, state: &BodyState) -> Result<Self, SimError> {
        let g = &cfg.control;
        let rho = cfg.atmosphere.density(state.altitude());
        let (schedule, fixed_alpha, capture_ratio) = match cfg.guidance {
            GuidanceMode::Fixed { alpha_deg } => (None, alpha_deg, 1.0),
            GuidanceMode::Planned { margin } => {
                let v_h = weight_hover_inflow(vehicle, rho);
                let s = plan_alpha_schedule(state.velocity.norm(), v_h, margin, &vehicle.rotor)?;
                (Some(s), 90.0, PlannerSettings::default().stop_ratio)
            }
        };
        Ok(Self {
            pi: PiTorqueController::new(
                g.pi_kp,
                g.pi_ki,
                vehicle.rotor.omega_nominal(),
                vehicle.rotor.torque_max,
            ),
            pd: PdAttitudeController {
                kp: g.pd_kp,
                kd: g.pd_kd,
                alpha_cmd: fixed_alpha,
            },
            speed_gain: g.speed_gain,
            schedule,
            fixed_alpha,
            capture_ratio,
            captured: false,
        })
    }

    /// Thrust level and attitude target for the current state. Braking runs
    /// at maximum C_T/σ holding the guidance α; below the capture speed a
    /// velocity-feedback law steers the thrust vector toward hover.
    fn command(&mut self, state: &BodyState, vehicle: &VehicleConfig, atm: &AtmosphereModel) -> (f64, Vector3<f64>) {
        let ambient = atm.ambient_at(state.altitude());
        let rho = ambient.density;
        let v_flow = state.velocity - ambient.wind;
        let v_h = weight_hover_inflow(vehicle, rho);
        let speed = v_flow.norm();
        if !self.captured && speed < self.capture_ratio * v_h {
            self.captured = true;
        }
        let rotor = &vehicle.rotor;
        if !self.captured {
            let alpha = match &self.schedule {
                Some(s) => s.alpha_at(speed / v_h),
                None => self.fixed_alpha,
            };
            self.pd.alpha_cmd = alpha;
            return (rotor.ct_sigma_max, desired_axis(&v_flow, alpha));
        }
        let gravity = Vector3::new(0.0, 0.0, -MARS_GRAVITY);
        let force = vehicle.gross_mass * (-self.speed_gain * state.velocity - gravity);
        let tip = state.omega * rotor.radius;
        let per_ct = rotor.solidity * rho * rotor.disk_area() * tip * tip;
        let along = force.dot(&state.rotor_axis).max(0.0);
        let ct = if per_ct > 0.0 {
            along / per_ct
        } else {
            rotor.ct_sigma_max
        };
        let target = force.try_normalize(1e-12).unwrap_or_else(Vector3::z);
        self.pd.alpha_cmd = alpha_of(&v_flow, &target);
        (ct.min(rotor.ct_sigma_max), target)
    }
}

fn fly_released(
    cfg: &MissionConfig,
    vehicle: &VehicleConfig,
    mut state: BodyState,
    t0: f64,
    log: &mut TrajectoryLog,
) -> Result<(), SimError> {
    let dt = cfg.integrator.dt_released;
    let atm = &cfg.atmosphere;
    let mut pilot = Autopilot::new(cfg, vehicle, &state)?;
    let mut slow_since: Option<f64> = None;
    let mut step_no = 0u64;
    loop {
        let t = t0 + step_no as f64 * dt;
        let (ct, target) = pilot.command(&state, vehicle, atm);
        let mut cmd = RotorCommand {
            ct_sigma: ct,
            motor_torque: 0.0,
            attitude_torque: pilot.pd.axis_torque(&state.rotor_axis, &target, &state.angular_rate),
        };
        let w = wrench_at(&state, &cmd, vehicle, atm);
        cmd.motor_torque = pilot.pi.step(state.omega, w.q_aero, dt);

        let ambient = atm.ambient_at(state.altitude());
        let v_flow = state.velocity - ambient.wind;
        let (vx_bar, vz_bar, class) = if w.v_h > 0.0 {
            let vx_bar = w.flow.vx / w.v_h;
            let vz_bar = -w.flow.vz / w.v_h;
            (vx_bar, vz_bar, Some(vrs_classify(vx_bar, vz_bar, &vehicle.rotor)))
        } else {
            (f64::NAN, f64::NAN, None)
        };
        let speed = state.velocity.norm();
        let hovering = match slow_since {
            Some(since) if speed < HOVER_SPEED => t - since >= HOVER_HOLD - 1e-9,
            _ => false,
        };
        if speed < HOVER_SPEED {
            slow_since.get_or_insert(t);
        } else {
            slow_since = None;
        }
        log.push(LogRow {
            t,
            phase: if hovering { Phase::Hover } else { Phase::Released },
            altitude: state.altitude(),
            velocity: state.velocity,
            mach: v_flow.norm() / ambient.sound_speed,
            alpha_deg: alpha_of(&v_flow, &state.rotor_axis),
            omega: state.omega,
            ct_sigma: w.ct_sigma,
            q_aero: w.q_aero,
            q_motor: cmd.motor_torque,
            v_i: w.flow.v_i,
            v_h: w.v_h,
            vz_bar,
            vx_bar,
            regime: class.map(|c| c.regime),
            severity: class.map_or(f64::NAN, |c| c.severity),
        });
        if hovering {
            log.event(t, "hover");
            log.status = RunStatus::Complete;
            return Ok(());
        }
        if t >= cfg.integrator.t_max {
            log.status = RunStatus::Incomplete;
            log.note = Some(format!("no hover within t_max = {} s", cfg.integrator.t_max));
            return Ok(());
        }
        state = step(&state, &cmd, dt, vehicle, atm).map_err(|e| match e {
            SimError::NonFinite(s) => SimError::NonFinite(format!("t = {t}: {s}")),
            other => other,
        })?;
        step_no += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mad() -> MissionConfig {
        MissionConfig::preset("mad").unwrap()
    }

    fn fingerprint(log: &TrajectoryLog) -> String {
        format!("{:?}{:?}", log.rows, log.events)
    }

    #[test]
    fn identical_configs_give_identical_logs() {
        let cfg = mad();
        assert_eq!(
            fingerprint(&run_scenario(&cfg).unwrap()),
            fingerprint(&run_scenario(&cfg).unwrap())
        );
    }

    #[test]
    fn release_from_rest_hovers_at_once() {
        let mut cfg = mad();
        cfg.release.initial_speed = 0.0;
        let log = run_scenario(&cfg).unwrap();
        assert_eq!(log.status, RunStatus::Complete);
        let hover = log.rows.last().unwrap();
        assert_eq!(hover.phase, Phase::Hover);
        assert!((hover.t - HOVER_HOLD).abs() < 1e-9);
        assert!(6000.0 - hover.altitude < 10.0);
    }

    #[test]
    fn time_limit_marks_run_incomplete() {
        let mut cfg = mad();
        cfg.integrator.t_max = 2.0;
        let log = run_scenario(&cfg).unwrap();
        assert_eq!(log.status, RunStatus::Incomplete);
        assert!(log.note.is_some());
        assert!(log.find_event("hover").is_none());
    }

    #[test]
    fn full_mission_phases_in_order_once_each() {
        let cfg = MissionConfig::preset("mad_edl").unwrap();
        let log = run_scenario(&cfg).unwrap();
        assert_eq!(log.status, RunStatus::Complete);
        let mut seen: Vec<Phase> = Vec::new();
        for r in &log.rows {
            if seen.last() != Some(&r.phase) {
                assert!(!seen.contains(&r.phase), "{:?} re-entered", r.phase);
                seen.push(r.phase);
            }
        }
        assert_eq!(
            seen,
            [
                Phase::Entry,
                Phase::Chute,
                Phase::Extended,
                Phase::Released,
                Phase::Hover
            ]
        );
        for w in log.rows.windows(2) {
            assert!(w[1].t > w[0].t);
        }
        let names: Vec<&str> = log.events.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ["chute_deploy", "extended", "release", "hover"]);
    }

    #[test]
    fn rotors_reach_speed_before_release() {
        let cfg = MissionConfig::preset("mad_edl").unwrap();
        let log = run_scenario(&cfg).unwrap();
        let first = log.phase_rows(Phase::Released).next().unwrap();
        let nominal = cfg.vehicle.as_ref().unwrap().rotor.omega_nominal();
        assert!((first.omega - nominal).abs() < 1e-9 * nominal);
        let ext: Vec<_> = log.phase_rows(Phase::Extended).collect();
        assert!(ext.windows(2).all(|w| w[1].omega >= w[0].omega));
        assert!(ext[0].omega < 0.01 * nominal);
    }

    #[test]
    fn release_trigger_on_chute_descent() {
        let cfg = MissionConfig::preset("mad_edl").unwrap();
        let log = run_until(&cfg, Stage::Chute).unwrap();
        assert_eq!(log.status, RunStatus::Complete);
        let t = detect_event(
            &log.rows,
            Trigger {
                kind: TriggerKind::Altitude,
                threshold: 6000.0,
            },
        )
        .unwrap();
        let release = log.find_event("release").unwrap().t;
        assert!((release - t).abs() <= cfg.integrator.dt_chute);
    }

    #[test]
    fn entry_only_stops_at_trigger() {
        let cfg = MissionConfig::preset("mad_edl").unwrap();
        let log = run_until(&cfg, Stage::Entry).unwrap();
        assert!(log.rows.iter().all(|r| r.phase == Phase::Entry));
        assert!(log.rows.last().unwrap().mach <= 2.0);
    }

    #[test]
    fn vehicle_needed_for_deployment() {
        let mut cfg = MissionConfig::preset("pathfinder").unwrap();
        assert!(run_until(&cfg, Stage::Chute).is_ok());
        cfg.start = StartPhase::Release;
        assert!(matches!(run_scenario(&cfg), Err(SimError::InvalidConfig(_))));
    }
}
