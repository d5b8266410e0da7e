//! Fixed-step RK4 over the rigid body and rotor speed.

use nalgebra::{Matrix3, Vector3};

use crate::atmosphere::AtmosphereModel;
use crate::vehicle::{total_wrench, BodyState, RotorCommand, VehicleConfig, Wrench};

use super::SimError;

#[derive(Debug, Clone, Copy)]
struct Rates {
    position: Vector3<f64>,
    velocity: Vector3<f64>,
    rotor_axis: Vector3<f64>,
    angular_rate: Vector3<f64>,
    omega: f64,
}

fn advance(s: &BodyState, d: &Rates, h: f64) -> BodyState {
    BodyState {
        position: s.position + d.position * h,
        velocity: s.velocity + d.velocity * h,
        rotor_axis: s.rotor_axis + d.rotor_axis * h,
        angular_rate: s.angular_rate + d.angular_rate * h,
        omega: s.omega + d.omega * h,
    }
}

/// Wrench at a state, using the ambient air at its altitude.
pub fn wrench_at(state: &BodyState, cmd: &RotorCommand, vehicle: &VehicleConfig, atm: &AtmosphereModel) -> Wrench {
    let ambient = atm.ambient_at(state.altitude());
    total_wrench(state, cmd, &ambient, vehicle)
}

fn rates(s: &BodyState, cmd: &RotorCommand, vehicle: &VehicleConfig, atm: &AtmosphereModel) -> Rates {
    let w = wrench_at(s, cmd, vehicle, atm);
    let n = s.rotor_axis;
    let (i_t, i_a) = vehicle.axisymmetric_inertia();
    let nn = n * n.transpose();
    let eye = Matrix3::identity();
    let inertia = eye * i_t + nn * (i_a - i_t);
    let inverse = (eye - nn) / i_t + nn / i_a;
    let gyro = s.angular_rate.cross(&(inertia * s.angular_rate));
    Rates {
        position: s.velocity,
        velocity: w.force / vehicle.gross_mass,
        rotor_axis: s.angular_rate.cross(&n),
        angular_rate: inverse * (w.torque - gyro),
        omega: (cmd.motor_torque - w.q_aero) / vehicle.rotor_polar_inertia(),
    }
}

/// Advance the state by `dt` with the command held constant. The rotor axis
/// is renormalized and rotor speed clamped to `[0, omega_max]` afterwards.
pub fn step(
    state: &BodyState,
    cmd: &RotorCommand,
    dt: f64,
    vehicle: &VehicleConfig,
    atm: &AtmosphereModel,
) -> Result<BodyState, SimError> {
    if !(dt > 0.0) {
        return Err(SimError::InvalidConfig(format!("time step must be positive, got {dt}")));
    }
    let f = |s: &BodyState| rates(s, cmd, vehicle, atm);
    let k1 = f(state);
    let k2 = f(&advance(state, &k1, dt / 2.0));
    let k3 = f(&advance(state, &k2, dt / 2.0));
    let k4 = f(&advance(state, &k3, dt));
    let combine =
        |a: Vector3<f64>, b: Vector3<f64>, c: Vector3<f64>, d: Vector3<f64>| (a + 2.0 * b + 2.0 * c + d) / 6.0;
    let sum = Rates {
        position: combine(k1.position, k2.position, k3.position, k4.position),
        velocity: combine(k1.velocity, k2.velocity, k3.velocity, k4.velocity),
        rotor_axis: combine(k1.rotor_axis, k2.rotor_axis, k3.rotor_axis, k4.rotor_axis),
        angular_rate: combine(k1.angular_rate, k2.angular_rate, k3.angular_rate, k4.angular_rate),
        omega: (k1.omega + 2.0 * k2.omega + 2.0 * k3.omega + k4.omega) / 6.0,
    };
    let mut next = advance(state, &sum, dt);
    next.rotor_axis = next.rotor_axis.normalize();
    next.omega = next.omega.clamp(0.0, vehicle.rotor.omega_max);
    if !next.is_finite() {
        return Err(SimError::NonFinite(format!("{next:?}")));
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::{preset, PresetName, MARS_GRAVITY};
    use approx::assert_relative_eq;

    fn at_rest(omega: f64) -> BodyState {
        BodyState {
            position: Vector3::new(0.0, 0.0, 6000.0),
            velocity: Vector3::zeros(),
            rotor_axis: Vector3::z(),
            angular_rate: Vector3::zeros(),
            omega,
        }
    }

    #[test]
    fn free_fall_one_second() {
        let mut v = preset(PresetName::Mad);
        v.fuselage_cd = 0.0;
        let atm = AtmosphereModel::default();
        let mut s = at_rest(0.0);
        for _ in 0..1000 {
            s = step(&s, &RotorCommand::default(), 1e-3, &v, &atm).unwrap();
        }
        assert!((s.velocity.z + MARS_GRAVITY).abs() < 1e-9, "{}", s.velocity.z);
        assert_eq!(s.velocity.x, 0.0);
    }

    /// Trim found by solving T = W and Q_M = Q at the starting point.
    fn trim(v: &VehicleConfig, atm: &AtmosphereModel, s: &BodyState) -> RotorCommand {
        let rho = atm.density(s.altitude());
        let r = &v.rotor;
        let tip = s.omega * r.radius;
        let ct_sigma = v.weight() / (r.solidity * rho * r.disk_area() * tip * tip);
        let mut cmd = RotorCommand {
            ct_sigma,
            ..RotorCommand::default()
        };
        cmd.motor_torque = wrench_at(s, &cmd, v, atm).q_aero;
        cmd
    }

    #[test]
    fn hover_trim_holds_position() {
        let v = preset(PresetName::Mad);
        let atm = AtmosphereModel::default();
        let mut s = at_rest(v.rotor.omega_nominal());
        let cmd = trim(&v, &atm, &s);
        let start = s.position;
        for _ in 0..10_000 {
            s = step(&s, &cmd, 1e-3, &v, &atm).unwrap();
        }
        assert!((s.position - start).norm() < 1e-3, "{}", (s.position - start).norm());
    }

    fn manoeuvre(dt: f64) -> BodyState {
        let v = preset(PresetName::Mad);
        let atm = AtmosphereModel::default();
        let mut s = BodyState {
            position: Vector3::new(0.0, 0.0, 6000.0),
            velocity: Vector3::new(2.0, 0.0, -30.0),
            rotor_axis: Vector3::new(0.1, 0.0, 1.0).normalize(),
            angular_rate: Vector3::new(0.0, 0.2, 0.0),
            omega: 290.0,
        };
        let mut cmd = RotorCommand {
            ct_sigma: 0.14,
            motor_torque: 0.0,
            attitude_torque: Vector3::new(0.0, -0.002, 0.0),
        };
        // torque balance at the start keeps the rotor off its speed limits
        cmd.motor_torque = wrench_at(&s, &cmd, &v, &atm).q_aero;
        let n = (10.0 / dt).round() as usize;
        for _ in 0..n {
            s = step(&s, &cmd, dt, &v, &atm).unwrap();
        }
        s
    }

    #[test]
    fn halving_dt_converges() {
        let a = manoeuvre(1e-3);
        let b = manoeuvre(5e-4);
        let rel = |x: Vector3<f64>, y: Vector3<f64>| (x - y).norm() / y.norm();
        assert!(rel(a.position, b.position) < 1e-6);
        assert!(rel(a.velocity, b.velocity) < 1e-6, "{}", rel(a.velocity, b.velocity));
        assert_relative_eq!(a.omega, b.omega, max_relative = 1e-6);
    }

    #[test]
    fn rotor_speed_is_clamped() {
        let v = preset(PresetName::Mad);
        let atm = AtmosphereModel::default();
        let cmd = RotorCommand {
            motor_torque: 4.41,
            ..RotorCommand::default()
        };
        let mut s = at_rest(v.rotor.omega_max - 0.01);
        s = step(&s, &cmd, 0.1, &v, &atm).unwrap();
        assert_eq!(s.omega, v.rotor.omega_max);
        let cmd = RotorCommand {
            motor_torque: -4.41,
            ..RotorCommand::default()
        };
        s = step(&at_rest(0.001), &cmd, 0.1, &v, &atm).unwrap();
        assert_eq!(s.omega, 0.0);
    }

    #[test]
    fn non_finite_state_is_an_error() {
        let v = preset(PresetName::Mad);
        let atm = AtmosphereModel::default();
        let mut s = at_rest(100.0);
        s.velocity.x = f64::NAN;
        assert!(matches!(
            step(&s, &RotorCommand::default(), 1e-3, &v, &atm),
            Err(SimError::NonFinite(_))
        ));
    }
}
