//! Floating-base one-legged hopper with a segmented spring-chain leg.
//!
//! Generalized coordinates, in order:
//!
//! | index | coordinate | meaning |
//! |-------|------------|---------|
//! | 0..3  | `p`        | base (and hip) position in the world frame |
//! | 3..6  | `φ`        | base roll/pitch/yaw, `R = Rz(φz)·Ry(φy)·Rx(φx)` |
//! | 6, 7  | `θx, θy`   | hip angles about the body x and y axes |
//! | 8     | `l_s`      | prismatic actuator extension |
//! | 9..   | `δ_i`      | axial deflection of each elastic segment |
//!
//! The leg direction in the body frame is `u = Rx(θx)·Ry(θy)·(0, 0, −1)`, so a
//! positive `θx` swings the foot toward `+y_b` and a positive `θy` swings it
//! toward `−x_b` (both right-handed about their body axis).
//!
//! The leg is a chain of point masses on the leg axis: the actuator rod at
//! distance `l_s` from the hip, then one node per segment at the segment's
//! distal end. Equations of motion are assembled as `M(q)·q̈ = f(q, q̇)` from
//! the node Jacobians and advanced with semi-implicit Euler. Ground contact
//! is a penalty spring-damper with Coulomb-clipped viscous friction; its
//! stiffness and damping enter the velocity update linearly-implicitly, so
//! the explicit stability limit is set by the leg's internal springs.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::behavior::Terrain;
use crate::error::SimError;
use crate::material::SegmentedLeg;

pub const MAX_SEGMENTS: usize = 8;
pub const MAX_DOF: usize = 9 + MAX_SEGMENTS;
const MAX_NODES: usize = MAX_SEGMENTS + 1;

/// Fraction of a segment's rest length its deflection may reach before the
/// step is declared unstable.
pub const DEFLECTION_CAP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseParams {
    pub mass: f64,
    /// Principal moments of inertia about the base axes.
    pub inertia: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorParams {
    /// Mass of the actuator rod node.
    pub rod_mass: f64,
    /// Physical leg spring acting on `l_s`.
    pub spring_stiffness: f64,
    pub damping: f64,
    pub rest_extension: f64,
    pub min_extension: f64,
    pub max_extension: f64,
    /// Penalty stiffness and damping of the travel stops.
    pub stop_stiffness: f64,
    pub stop_damping: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactParams {
    pub enabled: bool,
    pub stiffness: f64,
    pub damping: f64,
    /// Coulomb coefficient μ.
    pub friction: f64,
    /// Viscous gain of the tangential force before Coulomb clipping.
    pub tangential_damping: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HopperModel {
    pub leg: SegmentedLeg,
    pub base: BaseParams,
    pub actuator: ActuatorParams,
    /// Gravitational acceleration magnitude, m/s², acting along −z.
    pub gravity: f64,
    pub contact: ContactParams,
    pub terrain: Terrain,
    /// Hold the base, hip joints and actuator fixed; only the leg's axial
    /// deflections move. Used for isolated spring-chain fixtures.
    pub anchored: bool,
}

impl HopperModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidModel(m.to_string()));
        if self.leg.is_empty() || self.leg.len() > MAX_SEGMENTS {
            return bad("leg must have between 1 and 8 segments");
        }
        if !(self.base.mass > 0.0) || self.base.inertia.iter().any(|&i| !(i > 0.0)) {
            return bad("base mass and inertia must be positive");
        }
        let a = &self.actuator;
        if !(a.rod_mass > 0.0 && a.spring_stiffness > 0.0 && a.damping >= 0.0) {
            return bad("actuator rod mass and spring stiffness must be positive");
        }
        if !(a.min_extension < a.max_extension) {
            return bad("actuator travel limits are inverted");
        }
        if !(self.gravity >= 0.0) {
            return bad("gravity must be non-negative");
        }
        let c = &self.contact;
        if !(c.stiffness > 0.0 && c.damping >= 0.0 && c.friction >= 0.0 && c.tangential_damping >= 0.0) {
            return bad("contact parameters must be non-negative with positive stiffness");
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        9 + self.leg.elastic_count()
    }

    pub fn total_mass(&self) -> f64 {
        self.base.mass + self.actuator.rod_mass + self.leg.total_mass()
    }

    /// Hip-to-foot length at rest extension and zero deflection.
    pub fn nominal_leg_length(&self) -> f64 {
        self.actuator.rest_extension + self.leg.rest_length()
    }

    /// State standing still with the leg vertical at rest length, the base at
    /// `height` above the origin.
    pub fn initial_state(&self, height: f64) -> HopperState {
        let n = self.leg.elastic_count();
        HopperState {
            t: 0.0,
            position: Vector3::new(0.0, 0.0, height),
            velocity: Vector3::zeros(),
            orientation: Vector3::zeros(),
            orientation_rate: Vector3::zeros(),
            leg_angles: Vector2::zeros(),
            leg_rates: Vector2::zeros(),
            extension: self.actuator.rest_extension,
            extension_rate: 0.0,
            deflection: vec![0.0; n],
            deflection_rate: vec![0.0; n],
        }
    }
}

/// Full configuration and velocity of the hopper.
#[derive(Debug, Clone, PartialEq)]
pub struct HopperState {
    pub t: f64,
    /// Base position `p`.
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Base orientation `φ` (roll, pitch, yaw).
    pub orientation: Vector3<f64>,
    pub orientation_rate: Vector3<f64>,
    /// `(θx, θy)`.
    pub leg_angles: Vector2<f64>,
    pub leg_rates: Vector2<f64>,
    /// Actuator extension `l_s`.
    pub extension: f64,
    pub extension_rate: f64,
    /// Axial deflection of each elastic segment, base to foot.
    pub deflection: Vec<f64>,
    pub deflection_rate: Vec<f64>,
}

impl HopperState {
    fn pack(&self, q: &mut [f64; MAX_DOF], v: &mut [f64; MAX_DOF]) {
        for i in 0..3 {
            q[i] = self.position[i];
            v[i] = self.velocity[i];
            q[3 + i] = self.orientation[i];
            v[3 + i] = self.orientation_rate[i];
        }
        q[6] = self.leg_angles[0];
        q[7] = self.leg_angles[1];
        v[6] = self.leg_rates[0];
        v[7] = self.leg_rates[1];
        q[8] = self.extension;
        v[8] = self.extension_rate;
        for (i, (d, r)) in self.deflection.iter().zip(&self.deflection_rate).enumerate() {
            q[9 + i] = *d;
            v[9 + i] = *r;
        }
    }

    fn unpack(&mut self, q: &[f64; MAX_DOF], v: &[f64; MAX_DOF]) {
        for i in 0..3 {
            self.position[i] = q[i];
            self.velocity[i] = v[i];
            self.orientation[i] = q[3 + i];
            self.orientation_rate[i] = v[3 + i];
        }
        self.leg_angles = Vector2::new(q[6], q[7]);
        self.leg_rates = Vector2::new(v[6], v[7]);
        self.extension = q[8];
        self.extension_rate = v[8];
        for i in 0..self.deflection.len() {
            self.deflection[i] = q[9 + i];
            self.deflection_rate[i] = v[9 + i];
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.velocity.iter()).all(|x| x.is_finite())
            && self.orientation.iter().chain(self.orientation_rate.iter()).all(|x| x.is_finite())
            && self.leg_angles.iter().chain(self.leg_rates.iter()).all(|x| x.is_finite())
            && self.extension.is_finite()
            && self.extension_rate.is_finite()
            && self.deflection.iter().chain(&self.deflection_rate).all(|x| x.is_finite())
    }

    /// Base rotation matrix `Rz(φz)·Ry(φy)·Rx(φx)`.
    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_zyx(&self.orientation)
    }
}

/// Actuation inputs `τ = (τ₁, τ₂, τ₃)`: hip torques about θx and θy, N·m,
/// and the actuator force along the leg, N (positive extends).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Torques {
    pub hip_x: f64,
    pub hip_y: f64,
    pub thrust: f64,
}

impl Torques {
    pub const ZERO: Torques = Torques { hip_x: 0.0, hip_y: 0.0, thrust: 0.0 };

    pub fn new(hip_x: f64, hip_y: f64, thrust: f64) -> Self {
        Self { hip_x, hip_y, thrust }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.hip_x, self.hip_y, self.thrust]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Flight,
    Stance,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Flight => "flight",
            Phase::Stance => "stance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactState {
    pub phase: Phase,
    /// Ground reaction force on the foot, world frame.
    pub force: Vector3<f64>,
    pub foot_position: Vector3<f64>,
    pub foot_velocity: Vector3<f64>,
    pub penetration: f64,
}

impl ContactState {
    /// Magnitude of the normal component of the reaction.
    pub fn normal_force(&self, terrain: &Terrain) -> f64 {
        self.force.dot(&terrain.normal()).max(0.0)
    }
}

pub fn rotation_zyx(phi: &Vector3<f64>) -> Matrix3<f64> {
    let (sx, cx) = phi[0].sin_cos();
    let (sy, cy) = phi[1].sin_cos();
    let (sz, cz) = phi[2].sin_cos();
    Matrix3::new(
        cz * cy,
        cz * sy * sx - sz * cx,
        cz * sy * cx + sz * sx,
        sz * cy,
        sz * sy * sx + cz * cx,
        sz * sy * cx - cz * sx,
        -sy,
        cy * sx,
        cy * cx,
    )
}

/// Map from ZYX Euler-angle rates to body-frame angular velocity.
fn euler_rate_map(phi: &Vector3<f64>) -> Matrix3<f64> {
    let (sx, cx) = phi[0].sin_cos();
    let (sy, cy) = phi[1].sin_cos();
    Matrix3::new(1.0, 0.0, -sy, 0.0, cx, sx * cy, 0.0, -sx, cx * cy)
}

/// Time derivative of [`euler_rate_map`] applied to `rate`, i.e. `Ė·φ̇`.
fn euler_rate_bias(phi: &Vector3<f64>, rate: &Vector3<f64>) -> Vector3<f64> {
    let (sx, cx) = phi[0].sin_cos();
    let (sy, cy) = phi[1].sin_cos();
    let (dx, dy, dz) = (rate[0], rate[1], rate[2]);
    Vector3::new(
        -cy * dy * dz,
        -sx * dx * dy + (cx * cy * dx - sx * sy * dy) * dz,
        -cx * dx * dy + (-sx * cy * dx - cx * sy * dy) * dz,
    )
}

/// Unit leg direction in the body frame.
pub fn leg_direction(angles: &Vector2<f64>) -> Vector3<f64> {
    let (sx, cx) = angles[0].sin_cos();
    let (sy, cy) = angles[1].sin_cos();
    Vector3::new(-sy, cy * sx, -cy * cx)
}

/// Partial derivatives of [`leg_direction`] and its second-order rate term.
fn leg_direction_derivatives(
    angles: &Vector2<f64>,
    rates: &Vector2<f64>,
) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let (sx, cx) = angles[0].sin_cos();
    let (sy, cy) = angles[1].sin_cos();
    let du_dx = Vector3::new(0.0, cy * cx, cy * sx);
    let du_dy = Vector3::new(-cy, -sy * sx, sy * cx);
    let d2_xx = Vector3::new(0.0, -cy * sx, cy * cx);
    let d2_xy = Vector3::new(0.0, -sy * cx, -sy * sx);
    let d2_yy = Vector3::new(sy, -cy * sx, cy * cx);
    let (a, b) = (rates[0], rates[1]);
    let second = d2_xx * (a * a) + d2_xy * (2.0 * a * b) + d2_yy * (b * b);
    (du_dx, du_dy, second)
}

/// Per-node kinematic quantities.
struct Node {
    mass: f64,
    /// Distance from hip along the leg axis.
    s: f64,
    s_rate: f64,
    /// Number of leading elastic coordinates this node depends on.
    elastic_upto: usize,
}

struct Kinematics {
    rot: Matrix3<f64>,
    euler: Matrix3<f64>,
    omega: Vector3<f64>,
    euler_bias: Vector3<f64>,
    u: Vector3<f64>,
    du_dx: Vector3<f64>,
    du_dy: Vector3<f64>,
    u_rate: Vector3<f64>,
    u_second: Vector3<f64>,
    nodes: [Node; MAX_NODES],
    node_count: usize,
}

impl Kinematics {
    fn new(model: &HopperModel, q: &[f64; MAX_DOF], v: &[f64; MAX_DOF]) -> Self {
        let phi = Vector3::new(q[3], q[4], q[5]);
        let phi_rate = Vector3::new(v[3], v[4], v[5]);
        let angles = Vector2::new(q[6], q[7]);
        let rates = Vector2::new(v[6], v[7]);
        let rot = rotation_zyx(&phi);
        let euler = euler_rate_map(&phi);
        let omega = euler * phi_rate;
        let euler_bias = euler_rate_bias(&phi, &phi_rate);
        let u = leg_direction(&angles);
        let (du_dx, du_dy, u_second) = leg_direction_derivatives(&angles, &rates);
        let u_rate = du_dx * rates[0] + du_dy * rates[1];

        let empty = || Node { mass: 0.0, s: 0.0, s_rate: 0.0, elastic_upto: 0 };
        let mut nodes: [Node; MAX_NODES] = std::array::from_fn(|_| empty());
        nodes[0] = Node {
            mass: model.actuator.rod_mass,
            s: q[8],
            s_rate: v[8],
            elastic_upto: 0,
        };
        let mut s = q[8];
        let mut s_rate = v[8];
        let mut elastic = 0;
        for (i, seg) in model.leg.segments().iter().enumerate() {
            s += seg.length();
            if !seg.is_rigid() {
                s += q[9 + elastic];
                s_rate += v[9 + elastic];
                elastic += 1;
            }
            nodes[i + 1] = Node { mass: seg.mass, s, s_rate, elastic_upto: elastic };
        }
        Self {
            rot,
            euler,
            omega,
            euler_bias,
            u,
            du_dx,
            du_dy,
            u_rate,
            u_second,
            nodes,
            node_count: model.leg.len() + 1,
        }
    }

    fn foot(&self) -> &Node {
        &self.nodes[self.node_count - 1]
    }

    /// World-frame offset of a node from the hip, and its velocity relative
    /// to the hip.
    fn node_offset(&self, node: &Node) -> (Vector3<f64>, Vector3<f64>) {
        let rel = self.omega.cross(&(self.u * node.s)) + self.u_rate * node.s + self.u * node.s_rate;
        (self.rot * (self.u * node.s), self.rot * rel)
    }

    /// Jacobian columns (world frame) of a node position w.r.t. `q`.
    fn jacobian(&self, node: &Node, dof: usize, out: &mut [Vector3<f64>; MAX_DOF]) {
        let su = self.u * node.s;
        for (i, col) in out.iter_mut().enumerate().take(dof) {
            *col = match i {
                0 => Vector3::x(),
                1 => Vector3::y(),
                2 => Vector3::z(),
                3..=5 => self.rot * self.euler.column(i - 3).cross(&su),
                6 => self.rot * (self.du_dx * node.s),
                7 => self.rot * (self.du_dy * node.s),
                8 => self.rot * self.u,
                _ if i - 9 < node.elastic_upto => self.rot * self.u,
                _ => Vector3::zeros(),
            };
        }
    }

    /// Velocity-product acceleration of a node (the part not multiplied by q̈).
    fn bias(&self, node: &Node) -> Vector3<f64> {
        let w = &self.omega;
        let su = self.u * node.s;
        let rel = w.cross(&su) + self.u_rate * node.s + self.u * node.s_rate;
        let local = w.cross(&rel)
            + self.euler_bias.cross(&su)
            + w.cross(&(self.u * node.s_rate + self.u_rate * node.s))
            + self.u_rate * (2.0 * node.s_rate)
            + self.u_second * node.s;
        self.rot * local
    }
}

/// Foot position and velocity in the world frame.
pub fn foot_kinematics(model: &HopperModel, state: &HopperState) -> (Vector3<f64>, Vector3<f64>) {
    let mut q = [0.0; MAX_DOF];
    let mut v = [0.0; MAX_DOF];
    state.pack(&mut q, &mut v);
    let kin = Kinematics::new(model, &q, &v);
    let (off, rel) = kin.node_offset(kin.foot());
    (state.position + off, state.velocity + rel)
}

/// Current hip-to-foot distance.
pub fn leg_length(model: &HopperModel, state: &HopperState) -> f64 {
    state.extension + model.leg.rest_length() + state.deflection.iter().sum::<f64>()
}

/// Penalty contact at the foot: normal spring-damper clipped at zero and a
/// viscous tangential force clipped to the Coulomb cone.
pub fn contact_force(model: &HopperModel, state: &HopperState) -> ContactState {
    let (foot, foot_vel) = foot_kinematics(model, state);
    contact_at(model, foot, foot_vel)
}

fn contact_at(model: &HopperModel, foot: Vector3<f64>, foot_vel: Vector3<f64>) -> ContactState {
    let c = &model.contact;
    let pen = if c.enabled { model.terrain.penetration(&foot) } else { f64::NEG_INFINITY };
    if !(pen > 0.0) {
        return ContactState {
            phase: Phase::Flight,
            force: Vector3::zeros(),
            foot_position: foot,
            foot_velocity: foot_vel,
            penetration: pen.max(-1e300).min(0.0),
        };
    }
    let n = model.terrain.normal();
    let pen_rate = -foot_vel.dot(&n);
    let normal = (c.stiffness * pen + c.damping * pen_rate).max(0.0);
    let v_t = foot_vel - n * foot_vel.dot(&n);
    let demand = v_t * (-c.tangential_damping);
    let limit = c.friction * normal;
    let tangential = clip_friction(demand, limit);
    ContactState {
        phase: Phase::Stance,
        force: n * normal + tangential,
        foot_position: foot,
        foot_velocity: foot_vel,
        penetration: pen,
    }
}

/// Scale a tangential demand back onto the friction cone of radius `limit`.
pub fn clip_friction(demand: Vector3<f64>, limit: f64) -> Vector3<f64> {
    let mag = demand.norm();
    if mag > limit && mag > 0.0 {
        demand * (limit / mag)
    } else {
        demand
    }
}

/// Total mechanical energy: kinetic plus gravitational (zero at `z = 0`)
/// plus elastic energy stored in the leg, actuator spring and stops.
/// Contact penetration energy is included when the foot is in the ground.
pub fn mechanical_energy(model: &HopperModel, state: &HopperState) -> f64 {
    let mut q = [0.0; MAX_DOF];
    let mut v = [0.0; MAX_DOF];
    state.pack(&mut q, &mut v);
    let kin = Kinematics::new(model, &q, &v);
    let g = model.gravity;
    let b = &model.base;
    let inertia = Vector3::from(b.inertia);
    let mut kinetic = 0.5 * b.mass * state.velocity.norm_squared()
        + 0.5 * kin.omega.component_mul(&inertia).dot(&kin.omega);
    let mut potential = b.mass * g * state.position.z;
    for node in &kin.nodes[..kin.node_count] {
        let (off, rel) = kin.node_offset(node);
        let vel = state.velocity + rel;
        kinetic += 0.5 * node.mass * vel.norm_squared();
        potential += node.mass * g * (state.position.z + off.z);
    }
    let a = &model.actuator;
    potential += 0.5 * a.spring_stiffness * (state.extension - a.rest_extension).powi(2);
    let over = (state.extension - a.max_extension).max(0.0) + (a.min_extension - state.extension).max(0.0);
    potential += 0.5 * a.stop_stiffness * over * over;
    let elastic = model.leg.segments().iter().filter(|s| !s.is_rigid());
    for (seg, d) in elastic.zip(&state.deflection) {
        potential += 0.5 * seg.stiffness * d * d;
    }
    let contact = contact_force(model, state);
    if contact.phase == Phase::Stance {
        potential += 0.5 * model.contact.stiffness * contact.penetration.powi(2);
    }
    kinetic + potential
}

/// Total linear momentum of base and leg nodes.
pub fn linear_momentum(model: &HopperModel, state: &HopperState) -> Vector3<f64> {
    let mut q = [0.0; MAX_DOF];
    let mut v = [0.0; MAX_DOF];
    state.pack(&mut q, &mut v);
    let kin = Kinematics::new(model, &q, &v);
    momentum(&kin, &state.velocity, model.base.mass)
}

/// Advance one semi-implicit Euler step of length `dt`.
pub fn step(
    model: &HopperModel,
    state: &HopperState,
    inputs: Torques,
    dt: f64,
) -> Result<HopperState, SimError> {
    let mut next = state.clone();
    step_in_place(model, &mut next, inputs, dt)?;
    Ok(next)
}

/// In-place variant of [`step`]; on error the state is left unspecified.
pub fn step_in_place(
    model: &HopperModel,
    state: &mut HopperState,
    inputs: Torques,
    dt: f64,
) -> Result<(), SimError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::InvalidTimestep(dt));
    }
    let n = model.dof();
    if state.deflection.len() != model.leg.elastic_count() {
        return Err(SimError::InvalidModel(
            "state deflection count does not match the leg".into(),
        ));
    }
    let mut q = [0.0; MAX_DOF];
    let mut v = [0.0; MAX_DOF];
    state.pack(&mut q, &mut v);

    let kin = Kinematics::new(model, &q, &v);
    let mut mass = [[0.0; MAX_DOF]; MAX_DOF];
    let mut force = [0.0; MAX_DOF];
    let gravity = Vector3::new(0.0, 0.0, -model.gravity);

    // Base translation and rotation.
    let b = &model.base;
    for i in 0..3 {
        mass[i][i] += b.mass;
        force[i] += b.mass * gravity[i];
    }
    let inertia = Matrix3::from_diagonal(&Vector3::from(b.inertia));
    let rot_mass = kin.euler.transpose() * inertia * kin.euler;
    let gyro = inertia * kin.euler_bias + kin.omega.cross(&(inertia * kin.omega));
    let rot_force = -(kin.euler.transpose() * gyro);
    for r in 0..3 {
        for c in 0..3 {
            mass[3 + r][3 + c] += rot_mass[(r, c)];
        }
        force[3 + r] += rot_force[r];
    }

    // Leg nodes.
    let mut jac = [Vector3::zeros(); MAX_DOF];
    for node in &kin.nodes[..kin.node_count] {
        kin.jacobian(node, n, &mut jac);
        let load = (gravity - kin.bias(node)) * node.mass;
        for r in 0..n {
            if jac[r] == Vector3::zeros() {
                continue;
            }
            force[r] += jac[r].dot(&load);
            for c in r..n {
                let m = node.mass * jac[r].dot(&jac[c]);
                mass[r][c] += m;
            }
        }
    }
    for r in 0..n {
        for c in 0..r {
            mass[r][c] = mass[c][r];
        }
    }

    // Joint-space forces.
    force[6] += inputs.hip_x;
    force[7] += inputs.hip_y;
    let a = &model.actuator;
    let mut axial = inputs.thrust - a.spring_stiffness * (q[8] - a.rest_extension) - a.damping * v[8];
    if q[8] > a.max_extension {
        axial -= a.stop_stiffness * (q[8] - a.max_extension) + a.stop_damping * v[8].max(0.0);
    } else if q[8] < a.min_extension {
        axial += a.stop_stiffness * (a.min_extension - q[8]) - a.stop_damping * v[8].min(0.0);
    }
    force[8] += axial;
    let elastic = model.leg.segments().iter().filter(|s| !s.is_rigid());
    for (e, seg) in elastic.enumerate() {
        force[9 + e] -= seg.stiffness * q[9 + e] + seg.damping * v[9 + e];
    }

    // Contact at the foot, linearly implicit in its stiffness and damping.
    let foot = kin.foot();
    let (off, rel) = kin.node_offset(foot);
    let contact = contact_at(model, state.position + off, state.velocity + rel);
    let first_free = if model.anchored { 9 } else { 0 };
    let nrm = model.terrain.normal();
    let mut stiff = Matrix3::zeros();
    let mut damp = Matrix3::zeros();
    let mut in_contact = contact.phase == Phase::Stance;
    let mut rhs = [0.0; MAX_DOF];
    if in_contact {
        kin.jacobian(foot, n, &mut jac);
        let c = &model.contact;
        if contact.force.dot(&nrm) > 0.0 {
            let nn = nrm * nrm.transpose();
            stiff += nn * c.stiffness;
            damp += nn * c.damping;
            let demand = (contact.foot_velocity - nrm * contact.foot_velocity.dot(&nrm)).norm()
                * c.tangential_damping;
            if demand <= c.friction * contact.force.dot(&nrm) {
                damp += (Matrix3::identity() - nn) * c.tangential_damping;
            }
        }
        // (M + h·JᵀCJ + h²·JᵀKJ)·Δv = h·(f − h·JᵀKJ·v)
        let mut lhs = mass;
        let mut f = force;
        let kjv = stiff * cartesian(&jac, &v, n);
        for r in 0..n {
            f[r] += jac[r].dot(&contact.force) - dt * jac[r].dot(&kjv);
            let cr = damp.transpose() * jac[r];
            let kr = stiff.transpose() * jac[r];
            for col in 0..n {
                lhs[r][col] += dt * cr.dot(&jac[col]) + dt * dt * kr.dot(&jac[col]);
            }
        }
        rhs = solve_free(&lhs, &f, n, first_free, dt, state.t)?;
        // The linearized force must stay compressive; otherwise the foot
        // separates during this step and the contact is dropped.
        let mut after = v;
        for i in 0..n {
            after[i] += rhs[i];
        }
        let realized =
            contact.force - damp * cartesian(&jac, &rhs, n) - stiff * cartesian(&jac, &after, n) * dt;
        if realized.dot(&nrm) < 0.0 {
            in_contact = false;
        }
    }
    if !in_contact {
        rhs = solve_free(&mass, &force, n, first_free, dt, state.t)?;
    }
    let dv = rhs;
    for i in 0..n {
        v[i] += dv[i];
    }
    for i in 3..n {
        q[i] += dt * v[i];
    }

    if !model.anchored {
        // Linear momentum balance: P⁺ = P + h·(m·g + F_contact), with the
        // contact force as realized by the implicit solve. Node offsets do
        // not depend on p, so the base velocity can be corrected before the
        // position update.
        let mut external = gravity * model.total_mass();
        if in_contact {
            external += contact.force - damp * cartesian(&jac, &dv, n) - stiff * cartesian(&jac, &v, n) * dt;
        }
        let target = momentum(&kin, &state.velocity, model.base.mass) + external * dt;
        let moved = Kinematics::new(model, &q, &v);
        let base_vel = Vector3::new(v[0], v[1], v[2]);
        let correction = (target - momentum(&moved, &base_vel, model.base.mass)) / model.total_mass();
        for i in 0..3 {
            v[i] += correction[i];
        }
    }
    for i in 0..3 {
        q[i] += dt * v[i];
    }

    state.unpack(&q, &v);
    state.t += dt;
    check_state(model, state)
}

/// Velocity increment `Δv` over the free coordinates, zero elsewhere.
fn solve_free(
    lhs: &[[f64; MAX_DOF]; MAX_DOF],
    force: &[f64; MAX_DOF],
    n: usize,
    first_free: usize,
    dt: f64,
    t: f64,
) -> Result<[f64; MAX_DOF], SimError> {
    let size = n - first_free;
    let mut sys = [[0.0; MAX_DOF]; MAX_DOF];
    let mut rhs = [0.0; MAX_DOF];
    for r in 0..size {
        for c in 0..size {
            sys[r][c] = lhs[first_free + r][first_free + c];
        }
        rhs[r] = dt * force[first_free + r];
    }
    if !cholesky_solve(&mut sys, &mut rhs, size) {
        return Err(SimError::NumericalInstability {
            time: t,
            reason: "mass matrix is not positive definite".into(),
        });
    }
    let mut dv = [0.0; MAX_DOF];
    dv[first_free..n].copy_from_slice(&rhs[..size]);
    Ok(dv)
}

fn cartesian(jac: &[Vector3<f64>; MAX_DOF], v: &[f64; MAX_DOF], n: usize) -> Vector3<f64> {
    let mut out = Vector3::zeros();
    for r in 0..n {
        out += jac[r] * v[r];
    }
    out
}

fn momentum(kin: &Kinematics, base_velocity: &Vector3<f64>, base_mass: f64) -> Vector3<f64> {
    let mut p = base_velocity * base_mass;
    for node in &kin.nodes[..kin.node_count] {
        let (_, rel) = kin.node_offset(node);
        p += (base_velocity + rel) * node.mass;
    }
    p
}

fn check_state(model: &HopperModel, state: &HopperState) -> Result<(), SimError> {
    if !state.is_finite() {
        return Err(SimError::NumericalInstability {
            time: state.t,
            reason: "non-finite state".into(),
        });
    }
    let elastic = model.leg.segments().iter().filter(|s| !s.is_rigid());
    for (i, (seg, d)) in elastic.zip(&state.deflection).enumerate() {
        if d.abs() > DEFLECTION_CAP * seg.length() {
            return Err(SimError::NumericalInstability {
                time: state.t,
                reason: format!("segment {i} deflection {d:.4} m exceeds cap"),
            });
        }
    }
    Ok(())
}

/// In-place Cholesky factorization and solve of the leading `n×n` block.
/// Returns false if the matrix is not positive definite.
fn cholesky_solve(a: &mut [[f64; MAX_DOF]; MAX_DOF], b: &mut [f64; MAX_DOF], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        a[j][j] = d;
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= a[i][k] * a[j][k];
            }
            a[i][j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i][k] * b[k];
        }
        b[i] = s / a[i][i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k][i] * b[k];
        }
        b[i] = s / a[i][i];
    }
    true
}
