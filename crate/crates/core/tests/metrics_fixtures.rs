use std::f64::consts::PI;

use hopper_core::behavior::{BehaviorKind, BehaviorSpec};
use hopper_core::dynamics::Phase;
use hopper_core::metrics::{aggregate, evaluate, hop_height, jerk, power, segment_cycles, tracking_error, HopCycle};
use hopper_core::sim::{SimTrace, TraceSample};

const H: f64 = 1e-3;

fn sample(t: f64) -> TraceSample {
    TraceSample {
        t,
        position: [0.0; 3],
        velocity: [0.0; 3],
        orientation: [0.0; 3],
        orientation_rate: [0.0; 3],
        leg_angles: [0.0; 2],
        leg_rates: [0.0; 2],
        extension: 0.25,
        extension_rate: 0.0,
        torques: [0.0; 3],
        force: [0.0; 3],
        phase: Phase::Flight,
        ground_z: 0.0,
    }
}

fn trace(duration: f64, f: impl Fn(&mut TraceSample)) -> SimTrace {
    let n = (duration / H).round() as usize;
    let mut tr = SimTrace::new(H);
    for i in 0..=n {
        let mut s = sample(i as f64 * H);
        f(&mut s);
        tr.samples.push(s);
    }
    tr
}

fn whole(tr: &SimTrace, from: f64, to: f64) -> HopCycle {
    let (start, end) = ((from / H).round() as usize, (to / H).round() as usize);
    HopCycle { index: 0, t0: tr.samples[start].t, tf: tr.samples[end].t, start, end }
}

fn static_behavior() -> BehaviorSpec {
    BehaviorSpec { kind: BehaviorKind::Static, speed: 0.0, grade: 0.0, radius: 0.5, duration: 60.0, transient: 20.0 }
}

#[test]
fn tracking_error_of_constant_offset() {
    let tr = trace(2.0, |s| s.position = [0.3, 0.4, 1.0]);
    assert_eq!(tracking_error(&tr, &whole(&tr, 0.0, 2.0), &static_behavior()), 0.5);
    let rotated = trace(2.0, |s| {
        let (sn, cs) = (s.t * 3.0).sin_cos();
        s.position = [0.3 * cs - 0.4 * sn, 0.3 * sn + 0.4 * cs, 1.0];
    });
    let e = tracking_error(&rotated, &whole(&rotated, 0.0, 2.0), &static_behavior());
    assert!((e - 0.5).abs() < 1e-12);
}

#[test]
fn tracking_error_is_zero_on_the_reference() {
    let circle = BehaviorSpec { kind: BehaviorKind::Circular, speed: 0.3, ..static_behavior() };
    let tr = trace(5.0, |s| {
        let (x, _) = circle.reference_unchecked(s.t);
        s.position = [x.x, x.y, 1.0];
    });
    assert!(tracking_error(&tr, &whole(&tr, 0.0, 5.0), &circle) < 1e-15);
}

#[test]
fn jerk_of_a_parabola_vanishes() {
    let tr = trace(3.0, |s| s.position[2] = 5.0 + 2.0 * s.t - 4.9 * s.t * s.t);
    let j = jerk(&tr, &whole(&tr, 0.5, 2.5), 50.0).unwrap();
    assert!(j < 1e-3, "jerk {j}");
}

#[test]
fn jerk_of_a_sine() {
    let w: f64 = 5.0;
    let period = 2.0 * PI / w;
    let tr = trace(4.0 * period, |s| s.position[2] = (w * s.t).sin());
    let j = jerk(&tr, &whole(&tr, period, 3.0 * period), 50.0).unwrap();
    let oracle = 2.0 * w.powi(3) / PI;
    assert!((j / oracle - 1.0).abs() < 0.02, "jerk {j} vs {oracle}");
}

#[test]
fn power_of_constant_input() {
    let tr = trace(1.0, |s| {
        s.torques = [1.0, 0.0, 0.0];
        s.leg_rates = [2.0, 0.0];
    });
    assert!((power(&tr, &whole(&tr, 0.0, 1.0)) - 2.0).abs() < 1e-12);
    let idle = trace(1.0, |_| {});
    assert_eq!(power(&idle, &whole(&idle, 0.0, 1.0)), 0.0);
}

#[test]
fn power_is_insensitive_to_decimation_on_smooth_signals() {
    let tr = trace(4.0, |s| {
        s.torques = [3.0 * (2.0 * s.t).sin(), 1.0, 20.0 * (s.t).cos().abs()];
        s.leg_rates = [(1.3 * s.t).cos(), 0.2 * s.t];
        s.extension_rate = 0.5 * (0.7 * s.t).sin();
    });
    let fine = power(&tr, &whole(&tr, 0.0, 4.0));
    let coarse_trace = tr.decimate(2);
    let n = coarse_trace.len() - 1;
    let coarse = power(&coarse_trace, &HopCycle { index: 0, t0: 0.0, tf: 4.0, start: 0, end: n });
    assert!((coarse / fine - 1.0).abs() < 0.01);
}

#[test]
fn hop_height_of_a_ballistic_cycle() {
    let v: f64 = 4.43;
    let g = 9.81;
    let flight = 2.0 * v / g;
    let tr = trace(flight, |s| s.position[2] = (v * s.t - 0.5 * g * s.t * s.t).max(0.0));
    let h = hop_height(&tr, &whole(&tr, 0.0, flight));
    assert!((h - v * v / (2.0 * g)).abs() < 1e-5);
    assert!((h - 1.0).abs() < 1e-3);
    let rising = trace(1.0, |s| s.position[2] = s.t);
    assert_eq!(hop_height(&rising, &whole(&rising, 0.0, 0.5)), rising.samples[499].position[2]);
}

/// Touchdown every second from 1 s, stance lasting 0.2 s.
fn pulses(s: &mut TraceSample) {
    let frac = s.t - s.t.floor();
    s.phase = if s.t >= 1.0 && frac < 0.2 - 1e-9 { Phase::Stance } else { Phase::Flight };
    s.position[2] = 1.0 + 0.5 * (2.0 * PI * s.t).cos();
}

#[test]
fn cycles_tile_the_trimmed_trace() {
    let tr = trace(30.0, pulses);
    let cycles = segment_cycles(&tr, 20.0).unwrap();
    assert_eq!(cycles.len(), 10);
    assert_eq!(cycles[0].t0, 20.0);
    for w in cycles.windows(2) {
        assert_eq!(w[0].end, w[1].start);
    }
    let covered: usize = cycles.iter().map(|c| c.samples()).sum();
    assert_eq!(covered, cycles.last().unwrap().end - cycles[0].start);
    assert!(segment_cycles(&tr, 40.0).is_err());
}

#[test]
fn touchdowns_at_whole_seconds() {
    let tr = trace(23.5, pulses);
    let cycles = segment_cycles(&tr, 20.5).unwrap();
    assert_eq!(cycles.len(), 2);
    assert_eq!((cycles[0].t0, cycles[0].tf), (21.0, 22.0));
    assert_eq!((cycles[1].t0, cycles[1].tf), (22.0, 23.0));
}

#[test]
fn report_is_idempotent() {
    let tr = trace(30.0, pulses);
    let cycles = evaluate(&tr, &static_behavior(), 20.0, 50.0).unwrap();
    let a = aggregate(&cycles, 50.0, "fp").unwrap();
    let b = aggregate(&a.per_cycle(), 50.0, "fp").unwrap();
    assert_eq!(a, b);
    for c in &a.cycles {
        let m = c.metrics;
        assert!(m.power >= 0.0 && m.tracking_error >= 0.0 && m.jerk >= 0.0);
    }
}
