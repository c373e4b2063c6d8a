//! Three-part hopping controller: flight foot placement, stance attitude
//! control and hop-height regulation.
//!
//! Hip angle sign convention matches [`crate::dynamics::leg_direction`]: the
//! foot sits at `ℓ·(−sin θy, cos θy·sin θx, −cos θy·cos θx)` in the body frame.

use log::debug;
use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::behavior::BehaviorSpec;
use crate::dynamics::{contact_force, leg_length, HopperModel, HopperState, Phase, Torques};
use crate::error::ControlError;

/// Fraction of the leg length a saturated foot target is pulled back to.
pub const REACH_SATURATION: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerGains {
    /// Seed for the stance duration estimate `T_ST`, s.
    pub stance_time: f64,
    /// Foot-placement velocity gain `K₁`, s.
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    /// Velocity clamp `Ẋ_max`, m/s.
    pub max_speed: f64,
    pub kp_flight: f64,
    pub kd_flight: f64,
    pub kp_stance: f64,
    pub kd_stance: f64,
    /// Hop-height adaptation gain `K`, N/m.
    pub k_height: f64,
    /// Desired hop height, m.
    pub h_des: f64,
    /// Thrust `F₀` before the first adaptation, N.
    pub initial_thrust: f64,
    /// EMA weight of a new stance-duration measurement.
    pub stance_time_alpha: f64,
    /// Hops completed before `T_ST` starts adapting.
    pub stance_time_warmup: u32,
    /// Period at which the controller is evaluated, s.
    pub control_period: f64,
    pub limits: Limits,
}

/// Admissible input set `U`: a box on the three actuators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limits {
    pub max_hip_torque: f64,
    pub max_thrust: f64,
}

impl Limits {
    pub fn clamp(&self, tau: Torques) -> Torques {
        let h = self.max_hip_torque;
        Torques {
            hip_x: tau.hip_x.clamp(-h, h),
            hip_y: tau.hip_y.clamp(-h, h),
            thrust: tau.thrust.clamp(-self.max_thrust, self.max_thrust),
        }
    }

    pub fn contains(&self, tau: &Torques) -> bool {
        tau.hip_x.abs() <= self.max_hip_torque
            && tau.hip_y.abs() <= self.max_hip_torque
            && tau.thrust.abs() <= self.max_thrust
    }
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            stance_time: 0.17,
            k1: 0.04,
            k2: 0.8,
            k3: 0.5,
            max_speed: 1.5,
            kp_flight: 60.0,
            kd_flight: 4.0,
            kp_stance: 120.0,
            kd_stance: 10.0,
            k_height: 40.0,
            h_des: 1.0,
            initial_thrust: 0.0,
            stance_time_alpha: 0.3,
            stance_time_warmup: 3,
            control_period: 1e-3,
            limits: Limits { max_hip_torque: 200.0, max_thrust: 5000.0 },
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<(), String> {
        let gains = [
            self.stance_time,
            self.k1,
            self.k2,
            self.k3,
            self.max_speed,
            self.kp_flight,
            self.kd_flight,
            self.kp_stance,
            self.kd_stance,
            self.k_height,
            self.initial_thrust,
        ];
        if gains.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err("controller gains must be finite and non-negative".into());
        }
        if !(self.h_des > 0.0) {
            return Err("desired hop height must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.stance_time_alpha) {
            return Err("stance_time_alpha must lie in [0, 1]".into());
        }
        if !(self.control_period > 0.0) {
            return Err("control period must be positive".into());
        }
        if !(self.limits.max_hip_torque >= 0.0 && self.limits.max_thrust >= 0.0) {
            return Err("actuator limits must be non-negative".into());
        }
        Ok(())
    }
}

/// Memory carried between control steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    /// Hop thrust `F_i`, N.
    pub thrust: f64,
    /// Apex height of the last completed flight, m.
    pub h_prev: Option<f64>,
    pub desired_velocity_prev: Vector2<f64>,
    /// Current stance duration estimate, s.
    pub stance_time: f64,
    pub phase: Phase,
    /// `F_i` was already updated in the current stance.
    pub thrust_latched: bool,
    pub touchdown_time: Option<f64>,
    pub hops: u32,
    /// Highest terrain-relative base height seen in the current flight.
    pub flight_apex: f64,
    /// Last torques emitted and the time they were computed.
    pub output: Torques,
    pub next_update: f64,
    /// Foot targets that had to be saturated.
    pub saturations: u64,
}

impl ControllerState {
    pub fn new(gains: &ControllerGains) -> Self {
        Self {
            thrust: gains.initial_thrust,
            h_prev: None,
            desired_velocity_prev: Vector2::zeros(),
            stance_time: gains.stance_time,
            phase: Phase::Flight,
            thrust_latched: false,
            touchdown_time: None,
            hops: 0,
            flight_apex: f64::NEG_INFINITY,
            output: Torques::ZERO,
            next_update: 0.0,
            saturations: 0,
        }
    }
}

/// `Ẋ_des = clamp(−K₂·e + K₃·Ẋ_des_prev, ±Ẋ_max)` per component.
pub fn desired_velocity(
    gains: &ControllerGains,
    error: Vector2<f64>,
    previous: Vector2<f64>,
) -> Vector2<f64> {
    let raw = -error * gains.k2 + previous * gains.k3;
    raw.map(|c| c.clamp(-gains.max_speed, gains.max_speed))
}

/// Neutral point plus velocity-error correction.
pub fn foot_placement(
    gains: &ControllerGains,
    velocity: Vector2<f64>,
    desired: Vector2<f64>,
) -> Vector2<f64> {
    velocity * (gains.stance_time / 2.0) + (velocity - desired) * gains.k1
}

/// Hip angles placing the foot at body-frame horizontal offset `target` for
/// a leg of length `length`.
pub fn leg_inverse_kinematics(
    length: f64,
    target: Vector2<f64>,
) -> Result<(f64, f64), ControlError> {
    let distance = target.norm();
    if !(distance < length) {
        return Err(ControlError::Unreachable { distance, reach: length });
    }
    let theta_y = (-target.x / length).asin();
    let theta_x = (target.y / (length * theta_y.cos())).asin();
    Ok((theta_x, theta_y))
}

/// Body-frame foot position for hip angles `(θx, θy)`.
pub fn leg_forward_kinematics(length: f64, theta_x: f64, theta_y: f64) -> Vector3<f64> {
    crate::dynamics::leg_direction(&Vector2::new(theta_x, theta_y)) * length
}

/// `τ = −K_p·e(θ) − K_d·e(θ̇)` on both hips.
pub fn flight_pd(
    gains: &ControllerGains,
    angle_error: Vector2<f64>,
    rate_error: Vector2<f64>,
) -> (f64, f64) {
    let tau = -angle_error * gains.kp_flight - rate_error * gains.kd_flight;
    (tau.x, tau.y)
}

/// `τ = K_p·e(φ) + K_d·e(φ̇)` on both hips, with a level attitude reference.
pub fn stance_attitude_pd(
    gains: &ControllerGains,
    attitude_error: Vector2<f64>,
    rate_error: Vector2<f64>,
) -> (f64, f64) {
    let tau = attitude_error * gains.kp_stance + rate_error * gains.kd_stance;
    (tau.x, tau.y)
}

/// Thrust command. The first time both `F_z > 0` and `ṗ_z > 0` hold in a
/// stance, `F_i = F_{i−1} + K·(h_des − h_prev)`; the thrust is emitted for
/// as long as both hold.
pub fn hop_height_update(
    state: &mut ControllerState,
    gains: &ControllerGains,
    h_prev: Option<f64>,
    normal_force: f64,
    vertical_velocity: f64,
) -> f64 {
    if !(normal_force > 0.0 && vertical_velocity > 0.0) {
        return 0.0;
    }
    if !state.thrust_latched {
        if let Some(h) = h_prev {
            state.thrust = (state.thrust + gains.k_height * (gains.h_des - h)).max(0.0);
        }
        state.thrust_latched = true;
    }
    state.thrust
}

/// One evaluation of the full controller. Updates the phase bookkeeping and
/// returns the clamped input.
pub fn controller_step(
    model: &HopperModel,
    gains: &ControllerGains,
    ctrl: &mut ControllerState,
    state: &HopperState,
    behavior: &BehaviorSpec,
) -> Torques {
    let contact = contact_force(model, state);
    let ground = model.terrain.height(state.position.x, state.position.y);
    track_phase(gains, ctrl, state, contact.phase, state.position.z - ground);

    let tau = match contact.phase {
        Phase::Flight => {
            let (reference, _) = behavior.reference_unchecked(state.t);
            let xy = state.position.xy();
            let velocity = state.velocity.xy();
            let desired = desired_velocity(gains, xy - reference, ctrl.desired_velocity_prev);
            ctrl.desired_velocity_prev = desired;
            let placement = foot_placement(gains, velocity, desired);
            let length = leg_length(model, state);
            let (theta_x, theta_y) = foot_angles(ctrl, state, placement, length);
            let error = state.leg_angles - Vector2::new(theta_x, theta_y);
            let (tx, ty) = flight_pd(gains, error, state.leg_rates);
            Torques::new(tx, ty, 0.0)
        }
        Phase::Stance => {
            let attitude = state.orientation.xy();
            let rate = state.orientation_rate.xy();
            let (tx, ty) = stance_attitude_pd(gains, attitude, rate);
            let normal = contact.normal_force(&model.terrain);
            let h_prev = ctrl.h_prev;
            let thrust = hop_height_update(ctrl, gains, h_prev, normal, state.velocity.z);
            Torques::new(tx, ty, thrust)
        }
    };
    gains.limits.clamp(tau)
}

/// Hip angles for a world-frame horizontal foot offset, saturating targets
/// outside the leg's reach.
fn foot_angles(
    ctrl: &mut ControllerState,
    state: &HopperState,
    placement: Vector2<f64>,
    length: f64,
) -> (f64, f64) {
    let reach = REACH_SATURATION * length;
    let mut horizontal = placement;
    if horizontal.norm() > reach {
        ctrl.saturations += 1;
        debug!("t={:.3}: foot target {:.3} m saturated to {:.3} m", state.t, horizontal.norm(), reach);
        horizontal *= reach / horizontal.norm();
    }
    let down = (length * length - horizontal.norm_squared()).max(0.0).sqrt();
    let world = Vector3::new(horizontal.x, horizontal.y, -down);
    let body = state.rotation().transpose() * world;
    let mut target = body.xy();
    if target.norm() > reach {
        target *= reach / target.norm();
    }
    leg_inverse_kinematics(length, target).unwrap_or((0.0, 0.0))
}

fn track_phase(
    gains: &ControllerGains,
    ctrl: &mut ControllerState,
    state: &HopperState,
    phase: Phase,
    height: f64,
) {
    match (ctrl.phase, phase) {
        (Phase::Flight, Phase::Stance) => {
            if ctrl.flight_apex.is_finite() {
                ctrl.h_prev = Some(ctrl.flight_apex);
            }
            ctrl.touchdown_time = Some(state.t);
            ctrl.thrust_latched = false;
        }
        (Phase::Stance, Phase::Flight) => {
            if let Some(t0) = ctrl.touchdown_time {
                ctrl.hops += 1;
                if ctrl.hops > gains.stance_time_warmup {
                    let a = gains.stance_time_alpha;
                    ctrl.stance_time = (1.0 - a) * ctrl.stance_time + a * (state.t - t0);
                }
            }
            ctrl.flight_apex = f64::NEG_INFINITY;
        }
        _ => {}
    }
    if phase == Phase::Flight {
        ctrl.flight_apex = ctrl.flight_apex.max(height);
    }
    ctrl.phase = phase;
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gains() -> ControllerGains {
        ControllerGains::default()
    }

    #[test]
    fn desired_velocity_examples() {
        let g = gains();
        assert_eq!(desired_velocity(&g, Vector2::zeros(), Vector2::zeros()), Vector2::zeros());
        let g1 = ControllerGains { k2: 1.0, k3: 0.0, max_speed: 1.0, ..g };
        assert_eq!(desired_velocity(&g1, Vector2::new(-10.0, 0.0), Vector2::zeros()), Vector2::new(1.0, 0.0));
        let g2 = ControllerGains { k2: 0.5, k3: 0.5, max_speed: 5.0, ..g };
        let v = desired_velocity(&g2, Vector2::new(-1.0, 0.0), Vector2::new(0.4, 0.0));
        assert_relative_eq!(v.x, 0.7, epsilon = 1e-15);
        assert_eq!(v.y, 0.0);
        // symmetric clamp
        assert_eq!(desired_velocity(&g1, Vector2::new(10.0, -3.0), Vector2::zeros()), Vector2::new(-1.0, 1.0));
    }

    #[test]
    fn foot_placement_examples() {
        let g = ControllerGains { stance_time: 0.2, k1: 0.05, ..gains() };
        let one = Vector2::new(1.0, 0.0);
        assert_relative_eq!(foot_placement(&g, one, one).x, 0.1, epsilon = 1e-15);
        assert_eq!(foot_placement(&g, Vector2::zeros(), Vector2::zeros()), Vector2::zeros());
        let p = foot_placement(&g, one, Vector2::new(0.5, 0.0));
        assert_relative_eq!(p.x, 0.125, epsilon = 1e-15);
        // velocity deficit puts the foot behind the neutral point
        let slow = Vector2::new(0.5, 0.0);
        assert!(foot_placement(&g, slow, one).x < g.stance_time * slow.x / 2.0);
    }

    #[test]
    fn inverse_kinematics_examples() {
        let l = 0.75;
        assert_eq!(leg_inverse_kinematics(l, Vector2::zeros()).unwrap(), (0.0, 0.0));
        let (tx, ty) = leg_inverse_kinematics(l, Vector2::new(l * 0.1f64.sin(), 0.0)).unwrap();
        assert_eq!(tx, 0.0);
        assert_relative_eq!(ty, -0.1, epsilon = 1e-14);
        let (tx, ty) = leg_inverse_kinematics(l, Vector2::new(0.0, l * 0.1f64.sin())).unwrap();
        assert_relative_eq!(tx, 0.1, epsilon = 1e-14);
        assert_relative_eq!(ty, 0.0, epsilon = 1e-15);
        let p = Vector2::new(0.2, -0.31);
        let (tx, ty) = leg_inverse_kinematics(l, p).unwrap();
        let fk = leg_forward_kinematics(l, tx, ty);
        assert!((fk.xy() - p).norm() < 1e-9);
        assert!(fk.z < 0.0);
        assert!(matches!(
            leg_inverse_kinematics(l, Vector2::new(0.75, 0.0)),
            Err(ControlError::Unreachable { .. })
        ));
    }

    #[test]
    fn pd_laws() {
        let g = ControllerGains { kp_flight: 50.0, kp_stance: 100.0, ..gains() };
        assert_eq!(flight_pd(&g, Vector2::zeros(), Vector2::zeros()), (0.0, 0.0));
        let (t1, _) = flight_pd(&g, Vector2::new(0.1, 0.0), Vector2::zeros());
        assert_relative_eq!(t1, -5.0, epsilon = 1e-12);
        assert_eq!(stance_attitude_pd(&g, Vector2::zeros(), Vector2::zeros()), (0.0, 0.0));
        let (t1, _) = stance_attitude_pd(&g, Vector2::new(0.05, 0.0), Vector2::zeros());
        assert_relative_eq!(t1, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn hop_height_examples() {
        let g = ControllerGains { k_height: 10.0, h_des: 1.0, ..gains() };
        let mut s = ControllerState::new(&g);
        s.thrust = 100.0;
        assert_eq!(hop_height_update(&mut s, &g, Some(0.9), 0.0, 1.0), 0.0);
        assert_eq!(s.thrust, 100.0);
        let f = hop_height_update(&mut s, &g, Some(0.9), 50.0, 1.0);
        assert_relative_eq!(f, 101.0, epsilon = 1e-12);
        // at most one update per stance
        assert_relative_eq!(hop_height_update(&mut s, &g, Some(0.9), 50.0, 1.0), 101.0, epsilon = 1e-12);
        s.thrust_latched = false;
        assert_relative_eq!(hop_height_update(&mut s, &g, Some(1.0), 50.0, 1.0), 101.0, epsilon = 1e-12);
        s.thrust_latched = false;
        s.thrust = 0.5;
        assert_eq!(hop_height_update(&mut s, &g, Some(2.0), 50.0, 1.0), 0.0);
    }

    #[test]
    fn limits_clamp() {
        let l = Limits { max_hip_torque: 10.0, max_thrust: 100.0 };
        let t = l.clamp(Torques::new(-30.0, 5.0, 250.0));
        assert_eq!(t, Torques::new(-10.0, 5.0, 100.0));
        assert!(l.contains(&t));
    }
}
