//! Interactive bead-spring ring polymer.
//!
//! Beads have unit mass and interact through harmonic bonds between ring
//! neighbours and a harmonic bending term on every consecutive triple.
//! Participants pull on individual beads with clamped springs. Time
//! integration is BAOAB Langevin splitting; with zero friction and zero
//! temperature it reduces to velocity Verlet.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spatial::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("a ring needs at least 3 beads, got {0}")]
    TooFewBeads(usize),
    #[error("invalid {what}: {value}")]
    InvalidParameter { what: &'static str, value: f64 },
    #[error("state has {positions} positions and {velocities} velocities for a ring of {beads}")]
    SizeMismatch { positions: usize, velocities: usize, beads: usize },
    #[error("integration blew up at bead {bead} on step {step}")]
    Blowup { bead: usize, step: u64 },
}

/// Ring connectivity and force constants. Bead `i` is bonded to `i+1 mod n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingTopology {
    pub n_beads: usize,
    pub rest_length: f64,
    pub bond_stiffness: f64,
    pub angle_stiffness: f64,
    /// Equilibrium bend angle at each bead, radians.
    pub rest_angle: f64,
}

impl Default for RingTopology {
    fn default() -> Self {
        Self::with_beads(40)
    }
}

impl RingTopology {
    /// Default constants for `n` beads; the rest angle is the interior angle
    /// of the regular `n`-gon so the planar ring is an equilibrium.
    pub fn with_beads(n: usize) -> Self {
        let n_f = n.max(1) as f64;
        Self {
            n_beads: n,
            rest_length: 0.15,
            bond_stiffness: 500.0,
            angle_stiffness: 5.0,
            rest_angle: std::f64::consts::PI * (1.0 - 2.0 / n_f),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_beads < 3 {
            return Err(SimError::TooFewBeads(self.n_beads));
        }
        positive("rest length", self.rest_length)?;
        positive("bond stiffness", self.bond_stiffness)?;
        if !(self.angle_stiffness >= 0.0 && self.angle_stiffness.is_finite()) {
            return Err(SimError::InvalidParameter { what: "angle stiffness", value: self.angle_stiffness });
        }
        if !(self.rest_angle > 0.0 && self.rest_angle <= std::f64::consts::PI) {
            return Err(SimError::InvalidParameter { what: "rest angle", value: self.rest_angle });
        }
        Ok(())
    }

    pub fn bonds(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_beads).map(move |i| (i, (i + 1) % self.n_beads))
    }

    /// `(previous, vertex, next)` for every bead.
    pub fn angles(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let n = self.n_beads;
        (0..n).map(move |i| ((i + n - 1) % n, i, (i + 1) % n))
    }

    /// Conservative largest stable velocity-Verlet step, `2 / omega_max`,
    /// with `omega_max^2` bounded by the bond and bending curvatures.
    pub fn stability_bound(&self) -> f64 {
        let r0 = self.rest_length;
        let omega_sq = 4.0 * self.bond_stiffness + 16.0 * self.angle_stiffness / (r0 * r0);
        2.0 / omega_sq.sqrt()
    }
}

fn positive(what: &'static str, value: f64) -> Result<(), SimError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(SimError::InvalidParameter { what, value })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub time: f64,
    /// Number of integration steps taken; keys the thermostat noise.
    pub step_count: u64,
    /// Render scale; simulation coordinates are multiplied by it when shown
    /// or picked, never modified by it.
    pub scale: f64,
}

impl SimState {
    pub fn n_beads(&self) -> usize {
        self.positions.len()
    }

    /// Bead position in the shared world frame.
    pub fn world_position(&self, bead: usize) -> Vec3 {
        self.positions[bead] * self.scale
    }

    pub fn world_positions(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.positions.iter().map(move |&p| p * self.scale)
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.velocities.iter().map(|v| v.norm_squared()).sum::<f64>()
    }

    fn check_size(&self, topo: &RingTopology) -> Result<(), SimError> {
        if self.positions.len() != topo.n_beads || self.velocities.len() != topo.n_beads {
            return Err(SimError::SizeMismatch {
                positions: self.positions.len(),
                velocities: self.velocities.len(),
                beads: topo.n_beads,
            });
        }
        Ok(())
    }
}

/// A participant's pinch pulling one bead toward an anchor point
/// (simulation coordinates).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionForce {
    pub owner: u32,
    pub target_bead: usize,
    pub anchor: Vec3,
    pub stiffness: f64,
    pub max_force: f64,
}

impl InteractionForce {
    fn force_on(&self, bead: Vec3) -> Vec3 {
        ((self.anchor - bead) * self.stiffness).clamp_length(self.max_force)
    }

    /// Potential whose negative gradient is the clamped spring force:
    /// quadratic inside the clamp radius, linear outside.
    fn energy(&self, bead: Vec3) -> f64 {
        let d = (self.anchor - bead).norm();
        let k = self.stiffness;
        if k * d <= self.max_force {
            0.5 * k * d * d
        } else {
            self.max_force * d - self.max_force * self.max_force / (2.0 * k)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorParams {
    pub dt: f64,
    /// Langevin friction, 1/s.
    pub friction: f64,
    /// Thermal energy kT; zero disables the thermostat noise.
    pub temperature: f64,
    pub seed: u64,
}

impl Default for IntegratorParams {
    fn default() -> Self {
        Self { dt: 0.002, friction: 5.0, temperature: 0.1, seed: 0 }
    }
}

impl IntegratorParams {
    pub fn validate(&self) -> Result<(), SimError> {
        positive("time step", self.dt)?;
        if !(self.friction >= 0.0 && self.friction.is_finite()) {
            return Err(SimError::InvalidParameter { what: "friction", value: self.friction });
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(SimError::InvalidParameter { what: "temperature", value: self.temperature });
        }
        Ok(())
    }
}

/// Regular polygon in the `y = 1` plane. The default radius makes every
/// chord exactly the rest length; `radius_hint` overrides it.
pub fn build_ring(topo: &RingTopology, radius_hint: Option<f64>) -> Result<SimState, SimError> {
    topo.validate()?;
    let n = topo.n_beads;
    let radius = match radius_hint {
        Some(r) => {
            positive("ring radius", r)?;
            r
        }
        None => topo.rest_length / (2.0 * (std::f64::consts::PI / n as f64).sin()),
    };
    let positions = (0..n)
        .map(|i| {
            let phi = std::f64::consts::TAU * i as f64 / n as f64;
            Vec3::new(radius * phi.cos(), 1.0, radius * phi.sin())
        })
        .collect();
    Ok(SimState { positions, velocities: vec![Vec3::ZERO; n], time: 0.0, step_count: 0, scale: 1.0 })
}

fn bond_vector(x: &[Vec3], i: usize, j: usize) -> Vec3 {
    x[j] - x[i]
}

/// Bend angle at `b` between `a` and `c`, with the gradients with respect to
/// the two outer beads.
fn angle_and_gradients(a: Vec3, b: Vec3, c: Vec3) -> (f64, Vec3, Vec3) {
    let u = a - b;
    let v = c - b;
    let (lu, lv) = (u.norm(), v.norm());
    let cos = (u.dot(v) / (lu * lv)).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let sin = (1.0 - cos * cos).sqrt().max(1e-12);
    let du = (v * (1.0 / (lu * lv)) - u * (cos / (lu * lu))) * (-1.0 / sin);
    let dv = (u * (1.0 / (lu * lv)) - v * (cos / (lv * lv))) * (-1.0 / sin);
    (theta, du, dv)
}

/// Internal plus interaction forces on every bead.
pub fn forces(state: &SimState, topo: &RingTopology, interactions: &[InteractionForce]) -> Vec<Vec3> {
    let x = &state.positions;
    let mut f = vec![Vec3::ZERO; x.len()];
    for (i, j) in topo.bonds() {
        let r = bond_vector(x, i, j);
        let len = r.norm();
        if len == 0.0 {
            continue;
        }
        let pull = r * (topo.bond_stiffness * (len - topo.rest_length) / len);
        f[i] += pull;
        f[j] -= pull;
    }
    if topo.angle_stiffness > 0.0 {
        for (a, b, c) in topo.angles() {
            let (theta, du, dv) = angle_and_gradients(x[a], x[b], x[c]);
            let dv_dtheta = topo.angle_stiffness * (theta - topo.rest_angle);
            let fa = du * -dv_dtheta;
            let fc = dv * -dv_dtheta;
            f[a] += fa;
            f[c] += fc;
            f[b] -= fa + fc;
        }
    }
    for it in interactions {
        if let Some(fb) = f.get_mut(it.target_bead) {
            *fb += it.force_on(x[it.target_bead]);
        }
    }
    f
}

/// Potential energy consistent with [`forces`].
pub fn potential_energy(state: &SimState, topo: &RingTopology, interactions: &[InteractionForce]) -> f64 {
    let x = &state.positions;
    let mut e = 0.0;
    for (i, j) in topo.bonds() {
        let stretch = bond_vector(x, i, j).norm() - topo.rest_length;
        e += 0.5 * topo.bond_stiffness * stretch * stretch;
    }
    for (a, b, c) in topo.angles() {
        let (theta, _, _) = angle_and_gradients(x[a], x[b], x[c]);
        let bend = theta - topo.rest_angle;
        e += 0.5 * topo.angle_stiffness * bend * bend;
    }
    for it in interactions {
        if let Some(&p) = x.get(it.target_bead) {
            e += it.energy(p);
        }
    }
    e
}

pub fn total_energy(state: &SimState, topo: &RingTopology, interactions: &[InteractionForce]) -> f64 {
    state.kinetic_energy() + potential_energy(state, topo, interactions)
}

fn thermal_kick(seed: u64, step: u64, bead: usize) -> Vec3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    rng.set_word_pos((bead as u128) << 20);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    Vec3::new(draw(), draw(), draw())
}

/// One BAOAB step: half kick, half drift, Ornstein-Uhlenbeck velocity
/// update, half drift, half kick.
pub fn step(
    state: &SimState,
    topo: &RingTopology,
    interactions: &[InteractionForce],
    ip: &IntegratorParams,
) -> Result<SimState, SimError> {
    state.check_size(topo)?;
    let dt = ip.dt;
    let half = 0.5 * dt;
    let mut next = state.clone();

    let f0 = forces(&next, topo, interactions);
    for (v, f) in next.velocities.iter_mut().zip(&f0) {
        *v += *f * half;
    }
    for (x, v) in next.positions.iter_mut().zip(&next.velocities) {
        *x += *v * half;
    }
    if ip.friction > 0.0 || ip.temperature > 0.0 {
        let c1 = (-ip.friction * dt).exp();
        let c2 = ((1.0 - c1 * c1) * ip.temperature).sqrt();
        for (bead, v) in next.velocities.iter_mut().enumerate() {
            let noise = if c2 > 0.0 { thermal_kick(ip.seed, state.step_count, bead) * c2 } else { Vec3::ZERO };
            *v = *v * c1 + noise;
        }
    }
    for (x, v) in next.positions.iter_mut().zip(&next.velocities) {
        *x += *v * half;
    }
    let f1 = forces(&next, topo, interactions);
    for (v, f) in next.velocities.iter_mut().zip(&f1) {
        *v += *f * half;
    }
    next.time += dt;
    next.step_count += 1;

    if let Some(bead) = next
        .positions
        .iter()
        .zip(&next.velocities)
        .position(|(x, v)| !(x.is_finite() && v.is_finite()))
    {
        return Err(SimError::Blowup { bead, step: state.step_count });
    }
    Ok(next)
}

/// Nearest bead (in scaled world coordinates) within `grab_radius` of
/// `point`; ties go to the lower index.
pub fn pick_bead(state: &SimState, point: Vec3, grab_radius: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in state.world_positions().enumerate() {
        let d = p.distance(point);
        if d > grab_radius {
            continue;
        }
        match best {
            Some((_, bd)) if d >= bd => {}
            _ => best = Some((i, d)),
        }
    }
    best.map(|(i, _)| i)
}

pub fn set_scale(state: &SimState, scale: f64) -> Result<SimState, SimError> {
    positive("scale", scale)?;
    Ok(SimState { scale, ..state.clone() })
}
