//! Maximum stable timestep search and density/modulus stability grids.

use log::warn;
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::behavior::BehaviorSpec;
use crate::controller::ControllerGains;
use crate::dynamics::{step_in_place, HopperModel, Torques};
use crate::error::{SimError, StabilityError};
use crate::sim::{simulate_for, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// Largest timestep tried, s.
    pub ladder_top: f64,
    /// Smallest timestep tried, s.
    pub ladder_bottom: f64,
    /// Ratio between consecutive rungs.
    pub ladder_factor: f64,
    /// Relative width of the final stable/unstable bracket.
    pub precision: f64,
    /// Simulated duration of one trial, s.
    pub trial_duration: f64,
    /// Apex heights at or above this multiple of the desired hop height
    /// count as divergence.
    pub apex_limit_factor: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            ladder_top: 5e-3,
            ladder_bottom: 1e-5,
            ladder_factor: 10f64.sqrt(),
            precision: 0.05,
            trial_duration: 10.0,
            apex_limit_factor: 10.0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<(), StabilityError> {
        if !(self.ladder_bottom > 0.0 && self.ladder_top > self.ladder_bottom) {
            return Err(StabilityError::InvalidProbe("ladder must satisfy 0 < bottom < top".into()));
        }
        if !(self.ladder_factor > 1.0 && self.precision > 0.0 && self.trial_duration > 0.0) {
            return Err(StabilityError::InvalidProbe(
                "ladder factor must exceed 1; precision and trial duration must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Geometric ladder from the top down, strictly decreasing, ending at
    /// the last rung not below `ladder_bottom`.
    pub fn ladder(&self) -> Vec<f64> {
        let mut rungs = Vec::new();
        let mut k = 0;
        loop {
            let dt = self.ladder_top / self.ladder_factor.powi(k);
            if dt < self.ladder_bottom * (1.0 - 1e-12) {
                break;
            }
            rungs.push(dt);
            k += 1;
        }
        rungs
    }
}

/// A standardized run that either completes or diverges at a given dt.
pub trait StabilityTrial {
    fn is_stable(&self, dt: f64) -> bool;
}

impl<F: Fn(f64) -> bool> StabilityTrial for F {
    fn is_stable(&self, dt: f64) -> bool {
        self(dt)
    }
}

/// Static hopping with the nominal controller.
pub struct HoppingTrial<'a> {
    pub model: &'a HopperModel,
    pub gains: &'a ControllerGains,
    pub behavior: BehaviorSpec,
    pub sim: SimConfig,
    pub duration: f64,
    pub apex_limit: f64,
}

impl StabilityTrial for HoppingTrial<'_> {
    fn is_stable(&self, dt: f64) -> bool {
        let sim = SimConfig { dt, sample_period: dt.max(1e-3), ..self.sim };
        match simulate_for(self.model, self.gains, &self.behavior, &sim, self.duration) {
            Ok(out) => {
                out.final_state.is_finite()
                    && out
                        .trace
                        .samples
                        .iter()
                        .all(|s| s.position[2] - s.ground_z < self.apex_limit)
            }
            // A fall ends the trial early but is a control outcome, not a
            // numerical one.
            Err(SimError::Fallen(_)) => true,
            Err(_) => false,
        }
    }
}

/// Free oscillation of an anchored spring chain from a small initial
/// deflection of its first element.
pub struct OscillatorTrial<'a> {
    pub model: &'a HopperModel,
    pub initial_deflection: f64,
    pub duration: f64,
}

impl StabilityTrial for OscillatorTrial<'_> {
    fn is_stable(&self, dt: f64) -> bool {
        let mut state = self.model.initial_state(1.0);
        if let Some(d) = state.deflection.first_mut() {
            *d = self.initial_deflection;
        }
        let steps = (self.duration / dt).ceil() as u64;
        for _ in 0..steps {
            if step_in_place(self.model, &mut state, Torques::ZERO, dt).is_err() {
                return false;
            }
        }
        state.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub dt: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    /// Largest timestep found stable, s.
    pub dt_max: f64,
    /// The ladder top itself was stable, so `dt_max` is only a lower bound.
    pub censored: bool,
    /// Every trial run, in order.
    pub verdicts: Vec<Verdict>,
    /// Timesteps below a stable one that nonetheless failed.
    pub anomalies: Vec<f64>,
}

/// Walk the ladder down to the first stable rung, confirm the rung below it,
/// then bisect geometrically between it and the unstable rung above.
pub fn max_stable_dt<T: StabilityTrial + ?Sized>(
    trial: &T,
    cfg: &ProbeConfig,
) -> Result<ProbeResult, StabilityError> {
    cfg.validate()?;
    let ladder = cfg.ladder();
    let mut verdicts = Vec::new();
    let run = |dt: f64, verdicts: &mut Vec<Verdict>| {
        let stable = trial.is_stable(dt);
        verdicts.push(Verdict { dt, stable });
        stable
    };

    let mut first_stable = None;
    for (i, &dt) in ladder.iter().enumerate() {
        if run(dt, &mut verdicts) {
            first_stable = Some(i);
            break;
        }
    }
    let Some(i) = first_stable else {
        return Err(StabilityError::AllUnstable { smallest: *ladder.last().unwrap_or(&cfg.ladder_bottom) });
    };

    let mut anomalies = Vec::new();
    if let Some(&below) = ladder.get(i + 1) {
        if !run(below, &mut verdicts) {
            warn!("non-monotone stability: dt={} stable but dt={} failed", ladder[i], below);
            anomalies.push(below);
        }
    }

    if i == 0 {
        return Ok(ProbeResult { dt_max: ladder[0], censored: true, verdicts, anomalies });
    }
    let (mut stable, mut unstable) = (ladder[i], ladder[i - 1]);
    while unstable / stable > 1.0 + cfg.precision {
        let mid = (stable * unstable).sqrt();
        if run(mid, &mut verdicts) {
            stable = mid;
        } else {
            unstable = mid;
        }
    }
    Ok(ProbeResult { dt_max: stable, censored: false, verdicts, anomalies })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "density_min_kg_m3")]
    pub density_min: f64,
    #[serde(rename = "density_max_kg_m3")]
    pub density_max: f64,
    #[serde(rename = "modulus_min_pa")]
    pub modulus_min: f64,
    #[serde(rename = "modulus_max_pa")]
    pub modulus_max: f64,
    pub resolution: usize,
}

impl GridConfig {
    pub fn density_axis(&self) -> Vec<f64> {
        log_space(self.density_min, self.density_max, self.resolution)
    }

    pub fn modulus_axis(&self) -> Vec<f64> {
        log_space(self.modulus_min, self.modulus_max, self.resolution)
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    /// Stable at the top of the ladder.
    Censored,
    /// Unstable on every rung; `dt_max` is NaN.
    AllUnstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub density: f64,
    pub modulus: f64,
    pub dt_max: f64,
    pub status: CellStatus,
    pub anomalies: usize,
}

impl GridCell {
    pub fn from_probe(density: f64, modulus: f64, probe: Result<ProbeResult, StabilityError>) -> Self {
        match probe {
            Ok(p) => GridCell {
                density,
                modulus,
                dt_max: p.dt_max,
                status: if p.censored { CellStatus::Censored } else { CellStatus::Ok },
                anomalies: p.anomalies.len(),
            },
            Err(_) => GridCell { density, modulus, dt_max: f64::NAN, status: CellStatus::AllUnstable, anomalies: 0 },
        }
    }
}

/// Cells in row-major order: density index outer, modulus index inner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityGrid {
    pub densities: Vec<f64>,
    pub moduli: Vec<f64>,
    pub cells: Vec<GridCell>,
}

impl StabilityGrid {
    pub fn cell(&self, density_index: usize, modulus_index: usize) -> &GridCell {
        &self.cells[density_index * self.moduli.len() + modulus_index]
    }
}

/// Evaluate `probe` on every `(density, modulus)` pair. Cells run in
/// parallel on the current rayon pool; the result order is fixed.
pub fn sweep_grid<F>(densities: &[f64], moduli: &[f64], probe: F) -> StabilityGrid
where
    F: Fn(f64, f64) -> Result<ProbeResult, StabilityError> + Sync,
{
    let pairs: Vec<(f64, f64)> =
        densities.iter().flat_map(|&d| moduli.iter().map(move |&e| (d, e))).collect();
    let cells = pairs
        .par_iter()
        .map(|&(d, e)| GridCell::from_probe(d, e, probe(d, e)))
        .collect();
    StabilityGrid { densities: densities.to_vec(), moduli: moduli.to_vec(), cells }
}

/// Least-squares fit `ln dt = c₀ + c_ρ·ln ρ + c_E·ln E`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub intercept: f64,
    pub density_coef: f64,
    pub modulus_coef: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Fit over cells with status `Ok`; `None` if fewer than four qualify or
/// the design is singular.
pub fn loglog_fit(cells: &[GridCell]) -> Option<LogLogFit> {
    let pts: Vec<(f64, f64, f64)> = cells
        .iter()
        .filter(|c| c.status == CellStatus::Ok && c.dt_max > 0.0)
        .map(|c| (c.density.ln(), c.modulus.ln(), c.dt_max.ln()))
        .collect();
    if pts.len() < 4 {
        return None;
    }
    let mut xtx = Matrix3::zeros();
    let mut xty = Vector3::zeros();
    for &(a, b, y) in &pts {
        let x = Vector3::new(1.0, a, b);
        xtx += x * x.transpose();
        xty += x * y;
    }
    let c = xtx.cholesky()?.solve(&xty);
    let mean = pts.iter().map(|p| p.2).sum::<f64>() / pts.len() as f64;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for &(a, b, y) in &pts {
        let fit = c[0] + c[1] * a + c[2] * b;
        ss_res += (y - fit).powi(2);
        ss_tot += (y - mean).powi(2);
    }
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Some(LogLogFit { intercept: c[0], density_coef: c[1], modulus_coef: c[2], r_squared, points: pts.len() })
}
