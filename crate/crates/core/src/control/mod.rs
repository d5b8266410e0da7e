//! Rotor-speed and attitude loops, plus the angle-of-attack planner.

mod guidance;

pub use guidance::{
    alpha_of, desired_axis, plan_alpha_schedule, plan_alpha_schedule_with, simulate_constant_alpha, AlphaSchedule,
    CandidateOutcome, GuidanceError, PlannerSettings,
};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::vehicle::VehicleConfig;

/// Time constant of the rotor-speed loop used for default gains, s.
pub const PI_TIME_CONSTANT: f64 = 0.2;
/// Integral time of the rotor-speed loop, s.
pub const PI_INTEGRAL_TIME: f64 = 1.0;
/// Natural frequency of the attitude loop used for default gains, rad/s.
pub const PD_NATURAL_FREQUENCY: f64 = 3.0;

/// Motor torque controller holding rotor speed, with aerodynamic torque
/// feedforward.
#[derive(Debug, Clone, PartialEq)]
pub struct PiTorqueController {
    pub kp: f64,
    pub ki: f64,
    pub integral_state: f64,
    pub omega_cmd: f64,
    pub tau_max: f64,
}

impl PiTorqueController {
    pub fn new(kp: f64, ki: f64, omega_cmd: f64, tau_max: f64) -> Self {
        Self {
            kp,
            ki,
            integral_state: 0.0,
            omega_cmd,
            tau_max,
        }
    }

    /// Gains for a 0.2 s rotor-speed time constant on the rotor pair.
    pub fn default_gains(vehicle: &VehicleConfig) -> (f64, f64) {
        let kp = vehicle.rotor_polar_inertia() / PI_TIME_CONSTANT;
        (kp, kp / PI_INTEGRAL_TIME)
    }

    /// Largest integral magnitude the controller will ever hold.
    pub fn integral_cap(&self) -> f64 {
        if self.ki > 0.0 {
            self.tau_max / self.ki
        } else {
            0.0
        }
    }

    pub fn step(&mut self, omega_meas: f64, q_aero: f64, dt: f64) -> f64 {
        let e = self.omega_cmd - omega_meas;
        let cap = self.integral_cap();
        let candidate = (self.integral_state + e * dt).clamp(-cap, cap);
        let raw = q_aero + self.kp * e + self.ki * candidate;
        let out = raw.clamp(-self.tau_max, self.tau_max);
        // Conditional integration: freeze the integral while the output is
        // pinned and the error would push it further into the rail.
        let winding = out != raw && (raw - out).signum() == e.signum();
        if !winding {
            self.integral_state = candidate;
        }
        out
    }
}

pub fn pi_step(ctrl: &mut PiTorqueController, omega_meas: f64, q_aero: f64, dt: f64) -> f64 {
    ctrl.step(omega_meas, q_aero, dt)
}

/// Attitude controller acting on the rotor axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdAttitudeController {
    pub kp: f64,
    pub kd: f64,
    /// Angle of attack command, deg.
    pub alpha_cmd: f64,
}

impl PdAttitudeController {
    /// Critically damped at 3 rad/s about a transverse axis.
    pub fn default_for(vehicle: &VehicleConfig, alpha_cmd: f64) -> Self {
        let (transverse, _) = vehicle.axisymmetric_inertia();
        let w = PD_NATURAL_FREQUENCY;
        Self {
            kp: transverse * w * w,
            kd: 2.0 * transverse * w,
            alpha_cmd,
        }
    }

    /// Torque about `axis` (the direction that increases α) for scalar
    /// angle (deg) and rate (rad/s) measurements.
    pub fn step(&self, alpha_meas: f64, alpha_rate: f64, axis: &Vector3<f64>) -> Vector3<f64> {
        let err = (self.alpha_cmd - alpha_meas).to_radians();
        axis * (self.kp * err - self.kd * alpha_rate)
    }

    /// Three-axis form: drive `rotor_axis` onto `target_axis`, damping the
    /// angular rate transverse to the rotor axis.
    pub fn axis_torque(
        &self,
        rotor_axis: &Vector3<f64>,
        target_axis: &Vector3<f64>,
        angular_rate: &Vector3<f64>,
    ) -> Vector3<f64> {
        let cross = rotor_axis.cross(target_axis);
        let angle = cross.norm().atan2(rotor_axis.dot(target_axis));
        let proportional = if cross.norm() > 1e-15 {
            cross.normalize() * (self.kp * angle)
        } else {
            Vector3::zeros()
        };
        let transverse_rate = angular_rate - rotor_axis * angular_rate.dot(rotor_axis);
        proportional - transverse_rate * self.kd
    }
}

pub fn pd_step(ctrl: &PdAttitudeController, alpha_meas: f64, alpha_rate: f64, axis: &Vector3<f64>) -> Vector3<f64> {
    ctrl.step(alpha_meas, alpha_rate, axis)
}
