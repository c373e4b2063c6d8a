use hopper_core::behavior::{BehaviorKind, Terrain};
use hopper_core::config::Config;
use hopper_core::dynamics::{
    linear_momentum, mechanical_energy, step_in_place, ActuatorParams, BaseParams, ContactParams, HopperModel,
    Torques,
};
use hopper_core::material::SegmentedLeg;
use hopper_core::sim::{detect_phase_events, simulate_for};
use hopper_core::stability::{max_stable_dt, OscillatorTrial, ProbeConfig};
use nalgebra::Vector3;

fn lumped_model(mass: f64, stiffness: f64, anchored: bool) -> HopperModel {
    let cfg = Config::default_config();
    HopperModel {
        leg: SegmentedLeg::from_lumped(&[(mass, stiffness, 0.0, 1.0)]).unwrap(),
        base: BaseParams { mass: 10.0, inertia: [0.5, 0.5, 0.5] },
        actuator: ActuatorParams { damping: 0.0, ..cfg.model.actuator },
        gravity: 0.0,
        contact: ContactParams { enabled: false, ..cfg.model.contact },
        terrain: Terrain::flat(),
        anchored,
    }
}

#[test]
fn oscillator_period() {
    let model = lumped_model(1.0, 100.0, true);
    let mut state = model.initial_state(1.0);
    state.deflection[0] = 0.01;
    let dt = 1e-5;
    // Upward zero crossings of the deflection.
    let mut crossings = Vec::new();
    let mut prev = state.deflection[0];
    let mut t = 0.0;
    while crossings.len() < 11 {
        step_in_place(&model, &mut state, Torques::ZERO, dt).unwrap();
        t += dt;
        let d = state.deflection[0];
        if prev < 0.0 && d >= 0.0 {
            crossings.push(t - dt * d / (d - prev));
        }
        prev = d;
    }
    let period = (crossings[10] - crossings[0]) / 10.0;
    let oracle = 2.0 * std::f64::consts::PI / 10.0;
    assert!((period / oracle - 1.0).abs() < 0.01, "period {period}");
}

fn oscillator_dt_max(mass: f64, stiffness: f64) -> f64 {
    let model = lumped_model(mass, stiffness, true);
    let trial = OscillatorTrial { model: &model, initial_deflection: 1e-3, duration: 20.0 };
    let cfg = ProbeConfig { ladder_top: 1.0, ladder_bottom: 1e-4, precision: 0.01, ..ProbeConfig::default() };
    max_stable_dt(&trial, &cfg).unwrap().dt_max
}

#[test]
fn symplectic_stability_bound() {
    let dt = oscillator_dt_max(1.0, 100.0);
    assert!((dt / 0.2 - 1.0).abs() < 0.05, "dt_max {dt}");
    let stiff = oscillator_dt_max(1.0, 400.0);
    assert!((dt / stiff / 2.0 - 1.0).abs() < 0.05, "ratio {}", dt / stiff);
}

#[test]
fn ballistic_flight_conserves_energy() {
    let cfg = Config::default_config();
    let ss = cfg.mono_design("SS").unwrap();
    let mut model = cfg.model(&ss, Terrain::flat()).unwrap();
    model.leg = hopper_core::material::build_leg(
        &ss.materials,
        hopper_core::material::LegGeometry { radius: cfg.model.leg_radius, total_length: cfg.model.leg_length },
        0.0,
    )
    .unwrap();
    model.actuator.damping = 0.0;
    let mut state = model.initial_state(10.0);
    state.velocity = Vector3::new(0.5, -0.2, 4.43);
    let (dt, v0, z0) = (1e-4, state.velocity, state.position.z);
    let e0 = mechanical_energy(&model, &state);
    let steps = (2.0 * 4.43 / 9.81 / dt) as usize;
    for _ in 0..steps {
        step_in_place(&model, &mut state, Torques::ZERO, dt).unwrap();
    }
    let e1 = mechanical_energy(&model, &state);
    assert!(((e1 - e0) / e0).abs() < 1e-3, "drift {}", (e1 - e0) / e0);
    let t = steps as f64 * dt;
    let closed_form = z0 + v0.z * t - 0.5 * 9.81 * t * t;
    assert!((state.position.z - closed_form).abs() < 1e-3);
}

#[test]
fn momentum_without_gravity_or_contact() {
    let cfg = Config::default_config();
    let design = cfg.design("PVC-Ti-SS").unwrap();
    let mut model = cfg.model(&design, Terrain::flat()).unwrap();
    model.gravity = 0.0;
    model.contact.enabled = false;
    let mut state = model.initial_state(1.0);
    state.velocity = Vector3::new(0.3, 0.1, -0.2);
    state.orientation_rate = Vector3::new(0.5, -0.4, 0.2);
    state.leg_rates.x = 1.0;
    state.deflection[1] = 1e-5;
    let p0 = linear_momentum(&model, &state);
    for _ in 0..20_000 {
        step_in_place(&model, &mut state, Torques::ZERO, 1e-4).unwrap();
    }
    let p1 = linear_momentum(&model, &state);
    assert!((p1 - p0).norm() < 1e-9 * (1.0 + p0.norm()), "{p0} -> {p1}");
}

#[test]
fn equilibrium_is_a_fixed_point() {
    let model = lumped_model(1.0, 100.0, false);
    let mut state = model.initial_state(5.0);
    let before = state.clone();
    for _ in 0..1000 {
        step_in_place(&model, &mut state, Torques::ZERO, 1e-3).unwrap();
    }
    state.t = before.t;
    assert_eq!(state, before);
}

#[test]
fn closed_loop_runs_are_deterministic_and_phases_alternate() {
    let cfg = Config::default_config();
    let behavior = cfg.behaviors.spec(BehaviorKind::Circular);
    let model = cfg.model(&cfg.mono_design("Al").unwrap(), behavior.terrain()).unwrap();
    let sim = cfg.sim_config(2e-4);
    let a = simulate_for(&model, &cfg.controller, &behavior, &sim, 12.0).unwrap();
    let b = simulate_for(&model, &cfg.controller, &behavior, &sim, 12.0).unwrap();
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.trace.write_csv(&mut ca, 1).unwrap();
    b.trace.write_csv(&mut cb, 1).unwrap();
    assert!(ca == cb);

    let events = detect_phase_events(&a.trace).unwrap();
    assert!(events.touchdowns.len() >= 15);
    let diff = events.touchdowns.len() as i64 - events.liftoffs.len() as i64;
    assert!(diff.abs() <= 1);
    for (td, lo) in events.touchdowns.iter().zip(&events.liftoffs) {
        assert!(lo > td, "liftoff {lo} before touchdown {td}");
    }
    for w in events.touchdowns.windows(2).zip(&events.liftoffs) {
        assert!(*w.1 < w.0[1]);
    }
}
