//! Vehicle configurations, rigid-body state and force/torque assembly.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atmosphere::Ambient;
use crate::rotor_aero::{self, RotorError, RotorFlowState, RotorParams};

/// Mars surface gravity, m/s², used at every altitude.
pub const MARS_GRAVITY: f64 = 3.71;

#[derive(Debug, Error)]
pub enum VehicleError {
    #[error("unknown vehicle preset {0:?} (expected ingenuity, advanced_mh or mad)")]
    UnknownPreset(String),
    #[error("invalid vehicle parameter {0}: {1}")]
    InvalidParam(&'static str, f64),
    #[error("inertia tensor must be symmetric positive definite")]
    BadInertia,
    #[error(transparent)]
    Rotor(#[from] RotorError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleConfig {
    /// kg
    pub gross_mass: f64,
    pub rotor: RotorParams,
    /// Fuselage (base) drag coefficient.
    pub fuselage_cd: f64,
    /// Side of the cube-shaped base, m.
    pub base_side: f64,
    /// Inertia about the centre of mass, body axes with z along the rotor shaft.
    pub inertia: Matrix3<f64>,
    /// Drag coefficient of the autorotating rotor disk, referenced to the disk area.
    pub autorotation_cd: f64,
}

impl VehicleConfig {
    pub fn base_area(&self) -> f64 {
        self.base_side * self.base_side
    }

    pub fn weight(&self) -> f64 {
        self.gross_mass * MARS_GRAVITY
    }

    /// Ballistic coefficient of the helicopter in autorotation, kg/m².
    pub fn autorotation_ballistic_coefficient(&self) -> f64 {
        self.gross_mass / (self.autorotation_cd * self.rotor.disk_area())
    }

    /// Rotor pair polar inertia seen by the rotor-speed dynamics.
    pub fn rotor_polar_inertia(&self) -> f64 {
        2.0 * self.rotor.polar_inertia_per_rotor()
    }

    /// Uniform solid cube of side `side` and mass `mass`.
    pub fn cube_inertia(mass: f64, side: f64) -> Matrix3<f64> {
        Matrix3::from_diagonal_element(mass * side * side / 6.0)
    }

    /// Transverse and axial moments. The attitude model only tracks the
    /// rotor axis, so the body is treated as axisymmetric about it.
    pub fn axisymmetric_inertia(&self) -> (f64, f64) {
        (
            0.5 * (self.inertia[(0, 0)] + self.inertia[(1, 1)]),
            self.inertia[(2, 2)],
        )
    }

    pub fn validate(&self) -> Result<(), VehicleError> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(VehicleError::InvalidParam(name, v))
            }
        };
        positive("gross_mass", self.gross_mass)?;
        positive("base_side", self.base_side)?;
        positive("autorotation_cd", self.autorotation_cd)?;
        if !(self.fuselage_cd >= 0.0) {
            return Err(VehicleError::InvalidParam("fuselage_cd", self.fuselage_cd));
        }
        let i = &self.inertia;
        if (i - i.transpose()).abs().max() > 1e-12 * i.abs().max()
            || i.symmetric_eigenvalues().iter().any(|&e| e <= 0.0)
        {
            return Err(VehicleError::BadInertia);
        }
        self.rotor.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    Ingenuity,
    AdvancedMh,
    Mad,
}

impl FromStr for PresetName {
    type Err = VehicleError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ingenuity" => Ok(Self::Ingenuity),
            "advanced_mh" => Ok(Self::AdvancedMh),
            "mad" => Ok(Self::Mad),
            other => Err(VehicleError::UnknownPreset(other.to_string())),
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ingenuity => "ingenuity",
            Self::AdvancedMh => "advanced_mh",
            Self::Mad => "mad",
        })
    }
}

/// Helicopter designs. The simulation constants (profile drag, stall, VRS
/// factors, fuselage) are shared; geometry, mass and rotor speed differ.
pub fn preset(name: PresetName) -> VehicleConfig {
    // (mass, solidity, blades, rpm, ct design, ct max, omega_max)
    let (gross_mass, solidity, blades_per_rotor, rotor_speed_rpm, ct_sigma_design, ct_sigma_max, omega_max) = match name
    {
        PresetName::Ingenuity => (1.8, 0.148, 2, 2575.0, 0.1, 0.135, 270.0),
        PresetName::AdvancedMh => (4.6, 0.248, 4, 2943.0, 0.115, 0.135, 309.0),
        PresetName::Mad => (4.141, 0.404, 4, 2882.0, 0.095, 0.161, 302.0),
    };
    let base_side = 0.14;
    VehicleConfig {
        gross_mass,
        rotor: RotorParams {
            radius: 0.605,
            solidity,
            mean_profile_drag: 0.03,
            stall_ct_sigma: 0.20,
            stall_exponent: 20.0,
            vrs_instability_factor: 1.0,
            induced_loss_factor: 1.1,
            omega_max,
            torque_max: 4.41,
            collective_max_deg: 21.0,
            ct_sigma_design,
            ct_sigma_max,
            rotor_speed_rpm,
            blades_per_rotor,
            blade_mass: 0.070,
        },
        fuselage_cd: 0.8,
        base_side,
        inertia: VehicleConfig::cube_inertia(gross_mass, base_side),
        autorotation_cd: 1.11,
    }
}

/// Rigid-body state of the helicopter. Positions are in a local frame with
/// x east, y north, z up referenced to MOLA zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyState {
    pub position: Vector3<f64>,
    /// Ground-relative velocity, m/s.
    pub velocity: Vector3<f64>,
    /// Unit thrust direction.
    pub rotor_axis: Vector3<f64>,
    /// Airframe angular rate, world axes, rad/s.
    pub angular_rate: Vector3<f64>,
    /// Rotor speed, rad/s.
    pub omega: f64,
}

impl BodyState {
    pub fn altitude(&self) -> f64 {
        self.position.z
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.rotor_axis.iter().all(|v| v.is_finite())
            && self.angular_rate.iter().all(|v| v.is_finite())
            && self.omega.is_finite()
    }
}

/// Rotor-pair commands held over one integration step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RotorCommand {
    pub ct_sigma: f64,
    /// Motor torque, two-rotor total, N·m.
    pub motor_torque: f64,
    pub attitude_torque: Vector3<f64>,
}

/// `D = -1/2 C_D rho A_base |V| V`
pub fn fuselage_drag(v_rel: &Vector3<f64>, rho: f64, config: &VehicleConfig) -> Vector3<f64> {
    let speed = v_rel.norm();
    if speed == 0.0 {
        return Vector3::zeros();
    }
    -0.5 * config.fuselage_cd * rho * config.base_area() * speed * v_rel
}

/// Split a flow-relative velocity into in-plane and climb-positive axial parts.
pub fn rotor_frame_components(v_flow: &Vector3<f64>, axis: &Vector3<f64>) -> (f64, f64) {
    let vz = v_flow.dot(axis);
    let vx = (v_flow - axis * vz).norm();
    (vx, vz)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
    pub flow: RotorFlowState,
    /// Thrust, N.
    pub thrust: f64,
    /// Aerodynamic rotor torque, N·m.
    pub q_aero: f64,
    /// Hover induced velocity for the current thrust.
    pub v_h: f64,
    /// C_T/σ actually applied.
    pub ct_sigma: f64,
    pub saturated: bool,
}

/// Total force and torque with gravity pointing along -z.
pub fn total_wrench(state: &BodyState, cmd: &RotorCommand, ambient: &Ambient, config: &VehicleConfig) -> Wrench {
    total_wrench_in_frame(state, cmd, ambient, config, &Vector3::new(0.0, 0.0, -MARS_GRAVITY))
}

/// Total force and torque for an arbitrary gravity vector.
pub fn total_wrench_in_frame(
    state: &BodyState,
    cmd: &RotorCommand,
    ambient: &Ambient,
    config: &VehicleConfig,
    gravity: &Vector3<f64>,
) -> Wrench {
    let rotor = &config.rotor;
    let axis = state.rotor_axis;
    let rho = ambient.density;
    let v_flow = state.velocity - ambient.wind;

    let t = rotor_aero::thrust(cmd.ct_sigma, rotor, rho, state.omega);
    let v_h = if rho > 0.0 {
        (t.thrust / (2.0 * rho * rotor.disk_area())).sqrt()
    } else {
        0.0
    };
    let (vx, vz) = rotor_frame_components(&v_flow, &axis);
    let v_i = rotor_aero::induced_velocity(vx, vz, v_h, rotor);
    let flow = RotorFlowState::new(vx, vz, state.omega, v_i, rotor.radius);
    let q_aero = if state.omega > 0.0 {
        rotor_aero::torque(t.ct_sigma, &flow, rotor, rho)
    } else {
        0.0
    };

    let force = axis * t.thrust + fuselage_drag(&v_flow, rho, config) + gravity * config.gross_mass;
    let torque = cmd.attitude_torque + axis * (cmd.motor_torque - q_aero);
    Wrench {
        force,
        torque,
        flow,
        thrust: t.thrust,
        q_aero,
        v_h,
        ct_sigma: t.ct_sigma,
        saturated: t.saturated,
    }
}
