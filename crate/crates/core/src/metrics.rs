//! Per-hop-cycle performance metrics and their aggregation.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::behavior::BehaviorSpec;
use crate::dynamics::Phase;
use crate::error::MetricsError;
use crate::sim::SimTrace;

/// Low-pass cutoff applied to `p_z` before differentiating for jerk, Hz.
pub const DEFAULT_JERK_CUTOFF_HZ: f64 = 50.0;
pub const MIN_JERK_SAMPLES: usize = 7;

/// Touchdown-to-touchdown interval `[start, end)` in sample indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopCycle {
    pub index: usize,
    pub t0: f64,
    pub tf: f64,
    pub start: usize,
    pub end: usize,
}

impl HopCycle {
    pub fn samples(&self) -> usize {
        self.end - self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopCycleMetrics {
    pub power: f64,
    pub tracking_error: f64,
    pub jerk: f64,
    pub hop_height: f64,
}

/// Split the trace into cycles starting at the first touchdown at or after
/// `cutoff`.
pub fn segment_cycles(trace: &SimTrace, cutoff: f64) -> Result<Vec<HopCycle>, MetricsError> {
    let s = &trace.samples;
    let touchdowns: Vec<usize> = (1..s.len())
        .filter(|&i| s[i - 1].phase == Phase::Flight && s[i].phase == Phase::Stance && s[i].t >= cutoff)
        .collect();
    if touchdowns.len() < 2 {
        return Err(MetricsError::NoCycles { cutoff });
    }
    Ok(touchdowns
        .windows(2)
        .enumerate()
        .map(|(index, w)| HopCycle { index, t0: s[w[0]].t, tf: s[w[1]].t, start: w[0], end: w[1] })
        .collect())
}

/// Mean over the cycle of `‖(τ₁θ̇x, τ₂θ̇y, τ₃l̇s)‖`.
pub fn power(trace: &SimTrace, cycle: &HopCycle) -> f64 {
    mean(trace.samples[cycle.start..cycle.end].iter().map(|s| {
        let p = [
            s.torques[0] * s.leg_rates[0],
            s.torques[1] * s.leg_rates[1],
            s.torques[2] * s.extension_rate,
        ];
        (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
    }))
}

/// Mean planar distance between the base and the behavior reference.
pub fn tracking_error(trace: &SimTrace, cycle: &HopCycle, behavior: &BehaviorSpec) -> f64 {
    mean(trace.samples[cycle.start..cycle.end].iter().map(|s| {
        let (xd, _) = behavior.reference_unchecked(s.t);
        ((s.position[0] - xd.x).powi(2) + (s.position[1] - xd.y).powi(2)).sqrt()
    }))
}

/// Highest base height above the terrain in the cycle.
pub fn hop_height(trace: &SimTrace, cycle: &HopCycle) -> f64 {
    trace.samples[cycle.start..cycle.end]
        .iter()
        .map(|s| s.position[2] - s.ground_z)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Mean `|d³p_z/dt³|` over the cycle. `p_z` is low-pass filtered (zero
/// phase) on a window padded by up to `0.1 s` on each side, then
/// differentiated with the five-point central stencil.
pub fn jerk(trace: &SimTrace, cycle: &HopCycle, cutoff_hz: f64) -> Result<f64, MetricsError> {
    let n = cycle.samples();
    if n < MIN_JERK_SAMPLES {
        return Err(MetricsError::CycleTooShort { index: cycle.index, samples: n });
    }
    let h = trace.sample_period;
    let pad = ((0.1 / h).ceil() as usize).max(2);
    let lo = cycle.start.saturating_sub(pad);
    let hi = (cycle.end + pad).min(trace.len());
    let raw: Vec<f64> = trace.samples[lo..hi].iter().map(|s| s.position[2]).collect();
    let z = lowpass_filtfilt(&raw, 1.0 / h, cutoff_hz);
    let first = (cycle.start - lo).max(2);
    let last = (cycle.end - lo).min(z.len() - 2);
    let h3 = 2.0 * h * h * h;
    Ok(mean((first..last).map(|i| ((z[i + 2] - 2.0 * z[i + 1] + 2.0 * z[i - 1] - z[i - 2]) / h3).abs())))
}

/// All four metrics for every cycle after `cutoff`.
pub fn evaluate(
    trace: &SimTrace,
    behavior: &BehaviorSpec,
    cutoff: f64,
    jerk_cutoff_hz: f64,
) -> Result<Vec<(HopCycle, HopCycleMetrics)>, MetricsError> {
    segment_cycles(trace, cutoff)?
        .into_iter()
        .map(|c| {
            let m = HopCycleMetrics {
                power: power(trace, &c),
                tracking_error: tracking_error(trace, &c, behavior),
                jerk: jerk(trace, &c, jerk_cutoff_hz)?,
                hop_height: hop_height(trace, &c),
            };
            Ok((c, m))
        })
        .collect()
}

/// Second-order Butterworth low-pass run forward and backward. Edges are
/// extended by odd reflection and the filter state starts at steady state.
/// Cutoffs at or above Nyquist leave the signal unchanged.
pub fn lowpass_filtfilt(x: &[f64], sample_rate: f64, cutoff_hz: f64) -> Vec<f64> {
    if x.len() < 2 || !(cutoff_hz < sample_rate / 2.0) {
        return x.to_vec();
    }
    let k = (std::f64::consts::PI * cutoff_hz / sample_rate).tan();
    let norm = 1.0 / (1.0 + std::f64::consts::SQRT_2 * k + k * k);
    let b0 = k * k * norm;
    let b = [b0, 2.0 * b0, b0];
    let a = [2.0 * (k * k - 1.0) * norm, (1.0 - std::f64::consts::SQRT_2 * k + k * k) * norm];

    let pad = ((3.0 * sample_rate / cutoff_hz).ceil() as usize).clamp(6, x.len() - 1);
    let n = x.len();
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    let biquad = |sig: &mut [f64]| {
        let x0 = sig[0];
        let (mut z1, mut z2) = ((1.0 - b[0]) * x0, (b[2] - a[1]) * x0);
        for v in sig.iter_mut() {
            let input = *v;
            let y = b[0] * input + z1;
            z1 = b[1] * input - a[0] * y + z2;
            z2 = b[2] * input - a[1] * y;
            *v = y;
        }
    };
    biquad(&mut ext);
    ext.reverse();
    biquad(&mut ext);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Distribution summary of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    /// Quartiles use linear interpolation between order statistics at
    /// position `(n − 1)·q`.
    pub fn of(values: &[f64]) -> Result<Self, MetricsError> {
        if values.is_empty() {
            return Err(MetricsError::EmptyInput);
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let m = sorted.iter().sum::<f64>() / n;
        let var = if sorted.len() > 1 {
            sorted.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Ok(Self {
            mean: m,
            std: var.sqrt(),
            median: quantile(&sorted, 0.5),
            q1: quantile(&sorted, 0.25),
            q3: quantile(&sorted, 0.75),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
        })
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummaries {
    pub power: Summary,
    pub tracking_error: Summary,
    pub jerk: Summary,
    pub hop_height: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: HopCycle,
    pub metrics: HopCycleMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cycles: Vec<CycleRecord>,
    pub summary: MetricSummaries,
    pub jerk_cutoff_hz: f64,
    pub fingerprint: String,
}

/// Summaries over the per-cycle list.
pub fn aggregate(
    cycles: &[(HopCycle, HopCycleMetrics)],
    jerk_cutoff_hz: f64,
    fingerprint: &str,
) -> Result<MetricsReport, MetricsError> {
    if cycles.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let column = |f: fn(&HopCycleMetrics) -> f64| -> Vec<f64> { cycles.iter().map(|(_, m)| f(m)).collect() };
    Ok(MetricsReport {
        cycles: cycles.iter().map(|&(cycle, metrics)| CycleRecord { cycle, metrics }).collect(),
        summary: MetricSummaries {
            power: Summary::of(&column(|m| m.power))?,
            tracking_error: Summary::of(&column(|m| m.tracking_error))?,
            jerk: Summary::of(&column(|m| m.jerk))?,
            hop_height: Summary::of(&column(|m| m.hop_height))?,
        },
        jerk_cutoff_hz,
        fingerprint: fingerprint.to_string(),
    })
}

impl MetricsReport {
    pub fn per_cycle(&self) -> Vec<(HopCycle, HopCycleMetrics)> {
        self.cycles.iter().map(|r| (r.cycle, r.metrics)).collect()
    }

    pub fn column(&self, f: fn(&HopCycleMetrics) -> f64) -> Vec<f64> {
        self.cycles.iter().map(|r| f(&r.metrics)).collect()
    }

    pub const CSV_HEADER: &'static str =
        "cycle_index,t0_s,tf_s,power_w,tracking_error_m,jerk_m_s3,hop_height_m,config_fingerprint";

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.cycles {
            let m = &r.metrics;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.cycle.index, r.cycle.t0, r.cycle.tf, m.power, m.tracking_error, m.jerk, m.hop_height, self.fingerprint
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::TraceSample;

    pub(crate) fn synthetic(h: f64, n: usize, f: impl Fn(f64) -> (f64, Phase)) -> SimTrace {
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 * h;
                let (z, phase) = f(t);
                TraceSample {
                    t,
                    position: [0.0, 0.0, z],
                    velocity: [0.0; 3],
                    orientation: [0.0; 3],
                    orientation_rate: [0.0; 3],
                    leg_angles: [0.0; 2],
                    leg_rates: [0.0; 2],
                    extension: 0.0,
                    extension_rate: 0.0,
                    torques: [0.0; 3],
                    force: [0.0; 3],
                    phase,
                    ground_z: 0.0,
                }
            })
            .collect();
        SimTrace { sample_period: h, samples }
    }

    fn pulses(t: f64) -> Phase {
        // touchdowns at 21, 22, 23 s
        if t >= 21.0 && (t - t.floor()) < 0.2 && t < 23.5 {
            Phase::Stance
        } else {
            Phase::Flight
        }
    }

    #[test]
    fn segmentation_fixture() {
        let trace = synthetic(0.01, 2500, |t| (1.0, pulses(t)));
        let cycles = segment_cycles(&trace, 20.0).unwrap();
        assert_eq!(cycles.len(), 2);
        assert!((cycles[0].t0 - 21.0).abs() < 1e-9 && (cycles[0].tf - 22.0).abs() < 1e-9);
        assert!((cycles[1].t0 - 22.0).abs() < 1e-9 && (cycles[1].tf - 23.0).abs() < 1e-9);
        assert_eq!(cycles[0].end, cycles[1].start);
        assert!(matches!(segment_cycles(&trace, 30.0), Err(MetricsError::NoCycles { .. })));
    }

    #[test]
    fn filter_preserves_slow_signals() {
        let x: Vec<f64> = (0..2000).map(|i| (i as f64 * 1e-3 * 5.0).sin()).collect();
        let y = lowpass_filtfilt(&x, 1000.0, 50.0);
        for i in 100..1900 {
            assert!((x[i] - y[i]).abs() < 1e-6);
        }
        let flat = lowpass_filtfilt(&[2.0; 50], 1000.0, 50.0);
        assert!(flat.iter().all(|v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn summary_examples() {
        let s = Summary::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.mean, s.median, s.min, s.max), (2.5, 2.5, 1.0, 4.0));
        assert_eq!((s.q1, s.q3), (1.75, 3.25));
        let one = Summary::of(&[7.0]).unwrap();
        assert_eq!((one.mean, one.median), (7.0, 7.0));
        assert!(Summary::of(&[]).is_err());
    }
}
