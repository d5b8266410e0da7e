//! Constant angle-of-attack guidance that keeps the braking trajectory out of
//! the vortex-ring region.

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use crate::par::{self, Execution};
use crate::rotor_aero::{vrs_excess, RotorParams, VRS_PEAK_EXCESS, VRS_THRESHOLD};

#[derive(Debug, Error, PartialEq)]
pub enum GuidanceError {
    #[error("invalid planner input {name} = {value}")]
    InvalidInput { name: &'static str, value: f64 },
}

/// Rotor axis giving angle of attack `alpha_deg` to the flow-relative
/// velocity `v`. The axis stays in the vertical plane containing `v`,
/// leaning toward local up; 90° points it straight into the oncoming flow.
pub fn desired_axis(v: &Vector3<f64>, alpha_deg: f64) -> Vector3<f64> {
    let speed = v.norm();
    if speed < 1e-9 {
        return Vector3::z();
    }
    let v_hat = v / speed;
    let perp = |d: Vector3<f64>| d - v_hat * d.dot(&v_hat);
    let mut p = perp(Vector3::z());
    if p.norm() < 1e-9 {
        p = perp(Vector3::x());
    }
    let a = alpha_deg.to_radians();
    (-v_hat * a.sin() + p.normalize() * a.cos()).normalize()
}

/// Angle of attack (deg) between flow-relative velocity and the disk plane.
pub fn alpha_of(v: &Vector3<f64>, axis: &Vector3<f64>) -> f64 {
    let speed = v.norm();
    if speed < 1e-9 {
        return 90.0;
    }
    (-v.dot(axis) / speed).clamp(-1.0, 1.0).asin().to_degrees()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerSettings {
    /// Step in units of `v_h / g`.
    pub dt: f64,
    /// Candidate ends once |V| / v_h falls below this.
    pub stop_ratio: f64,
    /// Candidate is abandoned after this long, units of `v_h / g`.
    pub max_time: f64,
    pub alpha_step_deg: f64,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            stop_ratio: 0.05,
            max_time: 40.0,
            alpha_step_deg: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateOutcome {
    pub alpha_deg: f64,
    /// m
    pub altitude_loss: f64,
    pub peak_severity: f64,
    /// Stayed under the inflated threshold at every step.
    pub safe: bool,
    /// Reached the stop speed within the time limit.
    pub stopped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSchedule {
    /// (|V| / v_h trigger, α in deg); triggers strictly decreasing.
    pub entries: Vec<(f64, f64)>,
    /// m
    pub predicted_altitude_loss: f64,
    /// No candidate stayed clear of the VRS region.
    pub flagged: bool,
    pub peak_severity: f64,
    /// The α = 90° candidate, for comparison.
    pub nominal: CandidateOutcome,
}

impl AlphaSchedule {
    /// α to command at speed ratio `ratio`: the entry with the smallest
    /// trigger not below `ratio`, or the first entry above all triggers.
    pub fn alpha_at(&self, ratio: f64) -> f64 {
        self.entries
            .iter()
            .rev()
            .find(|(trigger, _)| *trigger >= ratio)
            .or(self.entries.first())
            .map_or(90.0, |e| e.1)
    }

    pub fn alpha(&self) -> f64 {
        self.entries.first().map_or(90.0, |e| e.1)
    }
}

/// Thrust-to-weight ratio at maximum C_T/σ and nominal rotor speed, with
/// `v_h` the weight-based hover induced velocity.
fn max_thrust_to_weight(params: &RotorParams, v_h: f64) -> f64 {
    let tip = params.omega_nominal() * params.radius;
    params.ct_sigma_max * params.solidity * tip * tip / (2.0 * v_h * v_h)
}

/// Normalized point-mass braking run at constant α relative to velocity.
///
/// Speeds are in units of the weight-based `v_h`, time in `v_h / g`. The
/// rotor sees `v_h * sqrt(tw)` as its own hover inflow since it runs at
/// full thrust.
pub fn simulate_constant_alpha(
    alpha_deg: f64,
    v0_ratio: f64,
    tw: f64,
    threshold: f64,
    f: f64,
    v_h: f64,
    settings: &PlannerSettings,
) -> CandidateOutcome {
    let vh_rotor = tw.sqrt();
    let axis_of = |v: &Vector2<f64>| {
        let n = desired_axis(&Vector3::new(v.x, 0.0, v.y), alpha_deg);
        Vector2::new(n.x, n.z)
    };
    let accel = |v: &Vector2<f64>| axis_of(v) * tw - Vector2::new(0.0, 1.0);
    let excess_of = |v: &Vector2<f64>| {
        let n = axis_of(v);
        let axial = v.dot(&n);
        let inplane = (v - n * axial).norm();
        vrs_excess(inplane / vh_rotor, -axial / vh_rotor, f)
    };

    let mut v = Vector2::new(0.0, -v0_ratio);
    let mut z = 0.0f64;
    let mut z_min = 0.0f64;
    let mut peak = excess_of(&v);
    let mut t = 0.0;
    let h = settings.dt;
    let mut stopped = v.norm() < settings.stop_ratio;
    while !stopped && t < settings.max_time {
        let k1 = accel(&v);
        let k2 = accel(&(v + k1 * (h / 2.0)));
        let k3 = accel(&(v + k2 * (h / 2.0)));
        let k4 = accel(&(v + k3 * h));
        let v_next = v + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0);
        z += 0.5 * (v.y + v_next.y) * h;
        v = v_next;
        t += h;
        z_min = z_min.min(z);
        peak = peak.max(excess_of(&v));
        stopped = v.norm() < settings.stop_ratio;
    }
    CandidateOutcome {
        alpha_deg,
        altitude_loss: -z_min * v_h * v_h / crate::vehicle::MARS_GRAVITY,
        peak_severity: peak / VRS_PEAK_EXCESS,
        safe: peak <= threshold,
        stopped,
    }
}

pub fn plan_alpha_schedule(
    v0: f64,
    v_h: f64,
    margin: f64,
    params: &RotorParams,
) -> Result<AlphaSchedule, GuidanceError> {
    plan_alpha_schedule_with(
        v0,
        v_h,
        margin,
        params,
        &PlannerSettings::default(),
        Execution::default(),
    )
}

/// Sweep α from 90° down and return the largest candidate that stops and
/// stays outside the VRS region inflated by `margin`.
pub fn plan_alpha_schedule_with(
    v0: f64,
    v_h: f64,
    margin: f64,
    params: &RotorParams,
    settings: &PlannerSettings,
    exec: Execution,
) -> Result<AlphaSchedule, GuidanceError> {
    let check = |ok: bool, name, value| {
        if ok && f64::is_finite(value) {
            Ok(())
        } else {
            Err(GuidanceError::InvalidInput { name, value })
        }
    };
    check(v0 >= 0.0, "v0", v0)?;
    check(v_h > 0.0, "v_h", v_h)?;
    check(margin >= 0.0, "margin", margin)?;
    check(settings.alpha_step_deg > 0.0, "alpha_step_deg", settings.alpha_step_deg)?;

    let tw = max_thrust_to_weight(params, v_h);
    check(tw > 1.0, "thrust_to_weight", tw)?;
    let threshold = VRS_THRESHOLD * (1.0 - margin).max(0.0);
    let ratio = v0 / v_h;
    let n = (90.0 / settings.alpha_step_deg).floor() as usize;
    let alphas: Vec<f64> = (0..=n).map(|i| 90.0 - i as f64 * settings.alpha_step_deg).collect();
    let f = params.vrs_instability_factor;
    let outcomes = par::map(exec, &alphas, |&a| {
        simulate_constant_alpha(a, ratio, tw, threshold, f, v_h, settings)
    });
    let nominal = outcomes[0];
    let chosen = outcomes.iter().find(|o| o.safe && o.stopped);
    let (pick, flagged) = match chosen {
        Some(o) => (*o, false),
        None => {
            let least = outcomes
                .iter()
                .filter(|o| o.stopped)
                .min_by(|a, b| a.peak_severity.total_cmp(&b.peak_severity))
                .copied()
                .unwrap_or(nominal);
            (least, true)
        }
    };
    Ok(AlphaSchedule {
        entries: vec![(ratio, pick.alpha_deg)],
        predicted_altitude_loss: pick.altitude_loss,
        flagged,
        peak_severity: pick.peak_severity,
        nominal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::{preset, PresetName};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn mad() -> RotorParams {
        preset(PresetName::Mad).rotor
    }

    #[test]
    fn axis_geometry() {
        let down = Vector3::new(0.0, 0.0, -30.0);
        assert_relative_eq!(desired_axis(&down, 90.0), Vector3::z(), epsilon = 1e-15);
        assert_relative_eq!(alpha_of(&down, &Vector3::z()), 90.0, epsilon = 1e-12);
        for a in [0.0, 15.0, 45.0, 89.0] {
            let v = Vector3::new(3.0, 0.0, -20.0);
            assert_relative_eq!(alpha_of(&v, &desired_axis(&v, a)), a, epsilon = 1e-9);
        }
    }

    #[test]
    fn thrust_to_weight_at_reference_inflow() {
        assert_relative_eq!(max_thrust_to_weight(&mad(), 25.84), 1.624, epsilon = 2e-3);
    }

    #[test]
    fn at_rest_is_already_hover() {
        let s = plan_alpha_schedule(0.0, 25.84, 0.0, &mad()).unwrap();
        assert_eq!(s.alpha(), 90.0);
        assert_eq!(s.predicted_altitude_loss, 0.0);
        assert!(!s.flagged);
    }

    #[test]
    fn mad_release_needs_a_lower_alpha() {
        let s = plan_alpha_schedule(1.16 * 25.84, 25.84, 0.0, &mad()).unwrap();
        assert!(!s.nominal.safe, "nominal severity {}", s.nominal.peak_severity);
        assert!(!s.flagged);
        assert!(s.alpha() < 90.0);
        assert!(s.predicted_altitude_loss > s.nominal.altitude_loss);
    }

    #[test]
    fn returned_alpha_replays_safe() {
        let p = mad();
        let v_h = 25.84;
        let settings = PlannerSettings::default();
        let s = plan_alpha_schedule_with(30.0, v_h, 0.1, &p, &settings, Execution::Sequential).unwrap();
        let tw = max_thrust_to_weight(&p, v_h);
        let threshold = VRS_THRESHOLD * 0.9;
        let replay = simulate_constant_alpha(s.alpha(), 30.0 / v_h, tw, threshold, 1.0, v_h, &settings);
        assert!(replay.safe && replay.peak_severity * VRS_PEAK_EXCESS <= threshold);
        assert_eq!(replay.altitude_loss, s.predicted_altitude_loss);
    }

    #[test]
    fn sequential_and_parallel_sweeps_agree() {
        let p = mad();
        let st = PlannerSettings::default();
        let a = plan_alpha_schedule_with(30.0, 25.84, 0.0, &p, &st, Execution::Sequential).unwrap();
        let b = plan_alpha_schedule_with(30.0, 25.84, 0.0, &p, &st, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn schedule_lookup() {
        let s = AlphaSchedule {
            entries: vec![(2.0, 40.0), (1.0, 60.0)],
            predicted_altitude_loss: 0.0,
            flagged: false,
            peak_severity: 0.0,
            nominal: CandidateOutcome {
                alpha_deg: 90.0,
                altitude_loss: 0.0,
                peak_severity: 0.0,
                safe: true,
                stopped: true,
            },
        };
        assert_eq!(s.alpha_at(3.0), 40.0);
        assert_eq!(s.alpha_at(1.5), 40.0);
        assert_eq!(s.alpha_at(0.5), 60.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(plan_alpha_schedule(-1.0, 25.0, 0.0, &mad()).is_err());
        assert!(plan_alpha_schedule(1.0, 0.0, 0.0, &mad()).is_err());
        assert!(plan_alpha_schedule(1.0, 25.0, -0.1, &mad()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn safe_alpha_non_increasing_in_margin(m1 in 0.0f64..0.5, dm in 0.0f64..0.4, v0 in 20.0f64..34.0) {
            let p = mad();
            let st = PlannerSettings { alpha_step_deg: 2.0, ..PlannerSettings::default() };
            let a = plan_alpha_schedule_with(v0, 25.84, m1, &p, &st, Execution::Parallel).unwrap();
            let b = plan_alpha_schedule_with(v0, 25.84, m1 + dm, &p, &st, Execution::Parallel).unwrap();
            if !a.flagged && !b.flagged {
                prop_assert!(b.alpha() <= a.alpha());
            }
        }
    }
}
