//! Time-indexed trajectory records and event detection.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rotor_aero::Regime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Entry,
    Chute,
    /// Rotorcraft extended below the backshell while the rotors spin up.
    Extended,
    Released,
    Hover,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Entry => "entry",
            Phase::Chute => "chute",
            Phase::Extended => "extended",
            Phase::Released => "released",
            Phase::Hover => "hover",
        }
    }
}

/// One logged sample. Quantities that do not apply to a phase are NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub phase: Phase,
    /// m MOLA
    pub altitude: f64,
    /// East, north, up; planet-relative, m/s.
    pub velocity: Vector3<f64>,
    pub mach: f64,
    /// Angle of attack of the rotor disk, deg.
    pub alpha_deg: f64,
    pub omega: f64,
    pub ct_sigma: f64,
    pub q_aero: f64,
    pub q_motor: f64,
    pub v_i: f64,
    pub v_h: f64,
    /// Descent-positive axial speed over `v_h`.
    pub vz_bar: f64,
    pub vx_bar: f64,
    pub regime: Option<Regime>,
    pub severity: f64,
}

impl LogRow {
    /// A row carrying only kinematics; rotor fields are NaN.
    pub fn kinematic(t: f64, phase: Phase, altitude: f64, velocity: Vector3<f64>, mach: f64) -> Self {
        Self {
            t,
            phase,
            altitude,
            velocity,
            mach,
            alpha_deg: f64::NAN,
            omega: f64::NAN,
            ct_sigma: f64::NAN,
            q_aero: f64::NAN,
            q_motor: f64::NAN,
            v_i: f64::NAN,
            v_h: f64::NAN,
            vz_bar: f64::NAN,
            vx_bar: f64::NAN,
            regime: None,
            severity: f64::NAN,
        }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Incomplete,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub rows: Vec<LogRow>,
    pub events: Vec<Event>,
    pub status: RunStatus,
    /// Human-readable reason when the run is not complete.
    pub note: Option<String>,
}

impl Default for TrajectoryLog {
    fn default() -> Self {
        Self {
            rows: Vec::new(),
            events: Vec::new(),
            status: RunStatus::Incomplete,
            note: None,
        }
    }
}

impl TrajectoryLog {
    pub fn push(&mut self, row: LogRow) {
        debug_assert!(self.rows.last().is_none_or(|last| row.t > last.t));
        self.rows.push(row);
    }

    pub fn event(&mut self, t: f64, name: impl Into<String>) {
        self.events.push(Event { t, name: name.into() });
    }

    pub fn find_event(&self, name: &str) -> Option<&Event> {
        self.events.iter().find(|e| e.name == name)
    }

    pub fn phase_rows(&self, phase: Phase) -> impl Iterator<Item = &LogRow> {
        self.rows.iter().filter(move |r| r.phase == phase)
    }

    /// Append another log, keeping time strictly increasing.
    pub fn extend(&mut self, other: TrajectoryLog) {
        for row in other.rows {
            if self.rows.last().is_none_or(|last| row.t > last.t) {
                self.rows.push(row);
            }
        }
        self.events.extend(other.events);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    Mach,
    Altitude,
    Speed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trigger {
    pub kind: TriggerKind,
    pub threshold: f64,
}

#[derive(Debug, Error, PartialEq)]
#[error("{kind:?} never crosses {threshold} in the logged span")]
pub struct NoCrossing {
    pub kind: TriggerKind,
    pub threshold: f64,
}

impl Trigger {
    pub fn value(&self, row: &LogRow) -> f64 {
        match self.kind {
            TriggerKind::Mach => row.mach,
            TriggerKind::Altitude => row.altitude,
            TriggerKind::Speed => row.speed(),
        }
    }
}

/// First crossing of `trigger.threshold`, linearly interpolated between the
/// bracketing rows.
pub fn detect_event(rows: &[LogRow], trigger: Trigger) -> Result<f64, NoCrossing> {
    let thr = trigger.threshold;
    rows.windows(2)
        .find_map(|w| {
            let (a, b) = (trigger.value(&w[0]) - thr, trigger.value(&w[1]) - thr);
            if a == 0.0 {
                Some(w[0].t)
            } else if a * b <= 0.0 && a.is_finite() && b.is_finite() {
                Some(w[0].t + (w[1].t - w[0].t) * a / (a - b))
            } else {
                None
            }
        })
        .ok_or(NoCrossing {
            kind: trigger.kind,
            threshold: thr,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn descending(n: usize, dt: f64) -> Vec<LogRow> {
        (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                LogRow::kinematic(t, Phase::Chute, 6100.0 - 30.0 * t, Vector3::new(0.0, 0.0, -30.0), 0.13)
            })
            .collect()
    }

    #[test]
    fn altitude_crossing_within_a_step() {
        let dt = 0.01;
        let rows = descending(1000, dt);
        let t = detect_event(
            &rows,
            Trigger {
                kind: TriggerKind::Altitude,
                threshold: 6000.0,
            },
        )
        .unwrap();
        assert!((t - 100.0 / 30.0).abs() < dt);
    }

    #[test]
    fn out_of_range_threshold_is_an_error() {
        let rows = descending(100, 0.01);
        let err = detect_event(
            &rows,
            Trigger {
                kind: TriggerKind::Altitude,
                threshold: 100.0,
            },
        );
        assert!(err.is_err());
        assert!(detect_event(
            &rows,
            Trigger {
                kind: TriggerKind::Speed,
                threshold: 10.0
            }
        )
        .is_err());
    }
}
