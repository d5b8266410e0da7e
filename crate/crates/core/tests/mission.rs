use std::io::Write;

use marsdrop_core::atmosphere::AtmosphereModel;
use marsdrop_core::edl::{chute_terminal_velocity, mission_preset, MissionName};
use marsdrop_core::sim::{apply_override, run_scenario, run_until, scenario_preset, MissionConfig, Stage};
use marsdrop_core::trajectory::{Phase, RunStatus};
use proptest::prelude::*;

fn mad() -> MissionConfig {
    MissionConfig::preset("mad").unwrap()
}

#[test]
fn mad_release_reaches_hover_within_bounds() {
    let cfg = mad();
    let log = run_scenario(&cfg).unwrap();
    assert_eq!(log.status, RunStatus::Complete);
    let hover = log.rows.iter().find(|r| r.phase == Phase::Hover).unwrap();
    let loss = cfg.release.altitude - hover.altitude;
    assert!((200.0..300.0).contains(&loss), "loss {loss}");
    let names: Vec<_> = log.events.iter().map(|e| e.name.as_str()).collect();
    assert_eq!(names, ["release", "hover"]);
}

#[test]
fn motor_power_stays_within_actuator_envelope() {
    let cfg = mad();
    let v = cfg.vehicle.clone().unwrap();
    let log = run_scenario(&cfg).unwrap();
    let limit = v.rotor.torque_max * v.rotor.omega_max;
    for r in log.rows.iter().filter(|r| r.q_motor.is_finite()) {
        assert!(r.q_motor.abs() <= v.rotor.torque_max);
        assert!(r.q_motor * r.omega <= limit);
        assert!(r.omega <= v.rotor.omega_max);
    }
}

#[test]
fn fixed_attitude_braking_never_speeds_up_the_descent() {
    let log = run_scenario(&mad()).unwrap();
    let released: Vec<_> = log.phase_rows(Phase::Released).collect();
    assert!(released.len() > 100);
    // descent rate only shrinks while the rotor pushes straight up at full thrust
    let mut prev = f64::INFINITY;
    for r in released.iter().take_while(|r| r.velocity.z < -1.0) {
        assert!(-r.velocity.z <= prev + 1e-9);
        prev = -r.velocity.z;
    }
}

#[test]
fn full_edl_run_visits_every_phase() {
    let cfg = MissionConfig::preset("mad_edl").unwrap();
    let log = run_scenario(&cfg).unwrap();
    assert_eq!(log.status, RunStatus::Complete);
    let deploy = log.find_event("chute_deploy").unwrap();
    let release = log.find_event("release").unwrap();
    assert!(deploy.t < release.t);
    // release happens close to the canopy terminal velocity
    let row = log.rows.iter().find(|r| r.t >= release.t).unwrap();
    let rho = AtmosphereModel::default().density(row.altitude);
    let vt = chute_terminal_velocity(&mission_preset(MissionName::Mad).chute, rho);
    assert!((row.speed() / vt - 1.0).abs() < 0.05, "{} vs {vt}", row.speed());
}

#[test]
fn heritage_missions_run_entry_and_chute() {
    for name in ["pathfinder", "insight"] {
        let cfg = MissionConfig::preset(name).unwrap();
        let log = run_until(&cfg, Stage::Chute).unwrap();
        assert!(log.find_event("chute_deploy").is_some(), "{name}");
        assert!(run_scenario(&cfg).is_err(), "{name} has no helicopter");
    }
}

#[test]
fn csv_atmosphere_matching_the_exponential_gives_the_same_hover() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("profile.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "# generated\naltitude_m,density_kgm3,temperature_K").unwrap();
    let atm = AtmosphereModel::default();
    for h in (5000..=7000).step_by(5) {
        writeln!(f, "{h},{},210", atm.density(h as f64)).unwrap();
    }
    drop(f);
    let mut doc = scenario_preset("mad").unwrap();
    apply_override(&mut doc, "atmosphere={\"csv\":\"profile.csv\"}").unwrap();
    let cfg = MissionConfig::from_value(doc, dir.path()).unwrap();
    let a = run_scenario(&cfg).unwrap();
    let b = run_scenario(&mad()).unwrap();
    let alt = |l: &marsdrop_core::trajectory::TrajectoryLog| {
        l.rows.iter().find(|r| r.phase == Phase::Hover).unwrap().altitude
    };
    assert!((alt(&a) - alt(&b)).abs() < 0.5, "{} vs {}", alt(&a), alt(&b));
}

#[test]
fn overrides_reach_the_vehicle() {
    let mut doc = scenario_preset("mad").unwrap();
    apply_override(&mut doc, "gross_mass=5.0").unwrap();
    apply_override(&mut doc, "release.altitude=5000").unwrap();
    let cfg = MissionConfig::from_value(doc, std::path::Path::new(".")).unwrap();
    assert_eq!(cfg.vehicle.unwrap().gross_mass, 5.0);
    assert_eq!(cfg.release.altitude, 5000.0);
}

#[test]
fn missing_csv_is_reported() {
    let mut doc = scenario_preset("mad").unwrap();
    apply_override(&mut doc, "atmosphere.csv=nowhere.csv").unwrap();
    doc["atmosphere"].as_object_mut().unwrap().remove("exponential");
    assert!(MissionConfig::from_value(doc, std::path::Path::new("/nonexistent")).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// Heavier helicopters lose at least as much height before hovering.
    #[test]
    fn heavier_vehicle_loses_more_height(extra in 0.2f64..0.8) {
        let loss = |mass: f64| {
            let mut doc = scenario_preset("mad").unwrap();
            apply_override(&mut doc, &format!("gross_mass={mass}")).unwrap();
            let cfg = MissionConfig::from_value(doc, std::path::Path::new(".")).unwrap();
            let log = run_scenario(&cfg).unwrap();
            let h = log.rows.iter().find(|r| r.phase == Phase::Hover).unwrap().altitude;
            cfg.release.altitude - h
        };
        prop_assert!(loss(4.141 + extra) > loss(4.141));
    }
}
