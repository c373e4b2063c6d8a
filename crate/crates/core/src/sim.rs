//! Closed-loop simulation runs and their sampled traces.

use std::io::{self, Write};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::behavior::BehaviorSpec;
use crate::controller::{controller_step, ControllerGains, ControllerState};
use crate::dynamics::{contact_force, step_in_place, HopperModel, HopperState, Phase, Torques};
use crate::error::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Integration step, s.
    pub dt: f64,
    /// Requested trace sample period, s. Rounded to a whole number of steps.
    pub sample_period: f64,
    /// Initial base height above the terrain, m.
    pub initial_height: f64,
    /// Initial base velocity, m/s. A small lateral component keeps the
    /// position loop exercised in static hopping.
    pub initial_velocity: [f64; 3],
    /// Base roll or pitch beyond which the run counts as a fall, rad.
    pub max_tilt: f64,
    /// Base height above the terrain below which the run counts as a fall, m.
    pub min_height: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            sample_period: 1e-3,
            initial_height: 1.0,
            initial_velocity: [0.2, -0.1, 0.0],
            max_tilt: 1.0,
            min_height: 0.1,
        }
    }
}

impl SimConfig {
    /// Integration steps per trace sample.
    pub fn decimation(&self) -> usize {
        ((self.sample_period / self.dt).round() as usize).max(1)
    }
}

/// One trace row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub orientation: [f64; 3],
    pub orientation_rate: [f64; 3],
    pub leg_angles: [f64; 2],
    pub leg_rates: [f64; 2],
    pub extension: f64,
    pub extension_rate: f64,
    /// Applied `(τ₁, τ₂, τ₃)`.
    pub torques: [f64; 3],
    /// Ground reaction force, world frame.
    pub force: [f64; 3],
    pub phase: Phase,
    /// Terrain height under the base.
    pub ground_z: f64,
}

impl TraceSample {
    pub fn new(state: &HopperState, torques: Torques, force: Vector3<f64>, phase: Phase, ground_z: f64) -> Self {
        Self {
            t: state.t,
            position: state.position.into(),
            velocity: state.velocity.into(),
            orientation: state.orientation.into(),
            orientation_rate: state.orientation_rate.into(),
            leg_angles: state.leg_angles.into(),
            leg_rates: state.leg_rates.into(),
            extension: state.extension,
            extension_rate: state.extension_rate,
            torques: torques.as_array(),
            force: force.into(),
            phase,
            ground_z,
        }
    }
}

/// Uniformly sampled run record.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub sample_period: f64,
    pub samples: Vec<TraceSample>,
}

impl SimTrace {
    pub fn new(sample_period: f64) -> Self {
        Self { sample_period, samples: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Keep every `factor`-th sample.
    pub fn decimate(&self, factor: usize) -> SimTrace {
        let factor = factor.max(1);
        SimTrace {
            sample_period: self.sample_period * factor as f64,
            samples: self.samples.iter().step_by(factor).copied().collect(),
        }
    }

    /// Write every `stride`-th sample as CSV.
    pub fn write_csv<W: Write>(&self, mut out: W, stride: usize) -> io::Result<()> {
        writeln!(
            out,
            "t,p_x,p_y,p_z,phi_x,phi_y,phi_z,theta_x,theta_y,l_s,\
             v_x,v_y,v_z,dphi_x,dphi_y,dphi_z,dtheta_x,dtheta_y,dl_s,\
             tau_1,tau_2,tau_3,f_z,phase"
        )?;
        for s in self.samples.iter().step_by(stride.max(1)) {
            let row = [
                s.t,
                s.position[0],
                s.position[1],
                s.position[2],
                s.orientation[0],
                s.orientation[1],
                s.orientation[2],
                s.leg_angles[0],
                s.leg_angles[1],
                s.extension,
                s.velocity[0],
                s.velocity[1],
                s.velocity[2],
                s.orientation_rate[0],
                s.orientation_rate[1],
                s.orientation_rate[2],
                s.leg_rates[0],
                s.leg_rates[1],
                s.extension_rate,
                s.torques[0],
                s.torques[1],
                s.torques[2],
                s.force[2],
            ];
            for v in row {
                write!(out, "{v},")?;
            }
            writeln!(out, "{}", s.phase.as_str())?;
        }
        Ok(())
    }
}

/// Touchdown, liftoff and apex times of a trace.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseEvents {
    pub touchdowns: Vec<f64>,
    pub liftoffs: Vec<f64>,
    pub apexes: Vec<f64>,
}

/// Flight→stance and stance→flight transitions, and `ṗ_z` sign changes from
/// positive to non-positive during flight. Event times are those of the
/// first sample in the new regime.
pub fn detect_phase_events(trace: &SimTrace) -> Result<PhaseEvents, SimError> {
    let first = trace.samples.first().ok_or(SimError::EmptyTrace)?;
    let mut events = PhaseEvents::default();
    let mut prev = first;
    for s in &trace.samples[1..] {
        match (prev.phase, s.phase) {
            (Phase::Flight, Phase::Stance) => events.touchdowns.push(s.t),
            (Phase::Stance, Phase::Flight) => events.liftoffs.push(s.t),
            (Phase::Flight, Phase::Flight) if prev.velocity[2] > 0.0 && s.velocity[2] <= 0.0 => {
                events.apexes.push(s.t)
            }
            _ => {}
        }
        prev = s;
    }
    Ok(events)
}

/// Result of a closed-loop run.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub trace: SimTrace,
    pub final_state: HopperState,
    pub controller: ControllerState,
    pub steps: u64,
}

/// Initial state standing over the behavior's starting reference point.
pub fn initial_state(model: &HopperModel, behavior: &BehaviorSpec, config: &SimConfig) -> HopperState {
    let (start, _) = behavior.reference_unchecked(0.0);
    let ground = model.terrain.height(start.x, start.y);
    let mut state = model.initial_state(ground + config.initial_height);
    state.position.x = start.x;
    state.position.y = start.y;
    state.velocity = Vector3::from(config.initial_velocity);
    state
}

/// Run the closed loop for the behavior's full duration.
pub fn simulate(
    model: &HopperModel,
    gains: &ControllerGains,
    behavior: &BehaviorSpec,
    config: &SimConfig,
) -> Result<SimOutcome, SimError> {
    simulate_for(model, gains, behavior, config, behavior.duration)
}

/// Run the closed loop for `duration` seconds.
pub fn simulate_for(
    model: &HopperModel,
    gains: &ControllerGains,
    behavior: &BehaviorSpec,
    config: &SimConfig,
    duration: f64,
) -> Result<SimOutcome, SimError> {
    model.validate()?;
    if !(config.dt > 0.0 && config.dt.is_finite()) {
        return Err(SimError::InvalidTimestep(config.dt));
    }
    gains.validate().map_err(SimError::InvalidModel)?;
    let mut state = initial_state(model, behavior, config);
    let mut ctrl = ControllerState::new(gains);
    let decimation = config.decimation();
    let total = (duration / config.dt).round() as u64;
    let mut trace = SimTrace::new(config.dt * decimation as f64);
    trace.samples.reserve(total as usize / decimation + 1);
    let mut tau = Torques::ZERO;

    for k in 0..=total {
        // Time from the step counter avoids drift from repeated addition.
        state.t = k as f64 * config.dt;
        if state.t >= ctrl.next_update {
            tau = controller_step(model, gains, &mut ctrl, &state, behavior);
            ctrl.output = tau;
            ctrl.next_update = (ctrl.next_update + gains.control_period).max(state.t);
        }
        let ground = model.terrain.height(state.position.x, state.position.y);
        if k as usize % decimation == 0 {
            let contact = contact_force(model, &state);
            trace.samples.push(TraceSample::new(&state, tau, contact.force, contact.phase, ground));
        }
        if state.orientation.x.abs() > config.max_tilt
            || state.orientation.y.abs() > config.max_tilt
            || state.position.z - ground < config.min_height
        {
            return Err(SimError::Fallen(state.t));
        }
        if k == total {
            break;
        }
        step_in_place(model, &mut state, tau, config.dt)?;
    }
    Ok(SimOutcome { trace, final_state: state, controller: ctrl, steps: total })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64, vz: f64, phase: Phase) -> TraceSample {
        TraceSample {
            t,
            position: [0.0; 3],
            velocity: [0.0, 0.0, vz],
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
    }

    #[test]
    fn events_of_pure_flight() {
        let trace = SimTrace {
            sample_period: 0.1,
            samples: (0..20).map(|i| sample(i as f64 * 0.1, 1.0 - i as f64 * 0.1, Phase::Flight)).collect(),
        };
        let ev = detect_phase_events(&trace).unwrap();
        assert!(ev.touchdowns.is_empty() && ev.liftoffs.is_empty());
        assert_eq!(ev.apexes.len(), 1);
        assert!((ev.apexes[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn events_of_square_pulse() {
        let samples = (0..30)
            .map(|i| {
                let phase = if (10..20).contains(&i) { Phase::Stance } else { Phase::Flight };
                sample(i as f64 * 0.01, -1.0, phase)
            })
            .collect();
        let ev = detect_phase_events(&SimTrace { sample_period: 0.01, samples }).unwrap();
        assert_eq!(ev.touchdowns.len(), 1);
        assert_eq!(ev.liftoffs.len(), 1);
        assert!(ev.touchdowns[0] < ev.liftoffs[0]);
        assert!(detect_phase_events(&SimTrace::new(0.01)).is_err());
    }
}
