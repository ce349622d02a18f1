//! Symplectic Euler time stepping and rigging-point constraints.

use crate::elastics::{add_internal_forces, BodyState, Material};
use crate::linalg::Vec2;
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DT: f64 = 0.001;
pub const DEFAULT_FPS: f64 = 24.0;
pub const DEFAULT_FRAME_COUNT: usize = 48;
pub const DEFAULT_DAMPING: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid simulation parameter {field}: {message}")]
    InvalidParams {
        field: &'static str,
        message: String,
    },
    #[error("rig is {found}, expected {expected}")]
    WrongRigKind {
        expected: &'static str,
        found: &'static str,
    },
    #[error("invalid rig {field}: {message}")]
    InvalidRig {
        field: &'static str,
        message: String,
    },
    #[error("state became non-finite at vertex {vertex}")]
    NonFinite { vertex: usize },
    #[error("simulation became non-finite at frame {frame}, substep {substep} (body {body}, vertex {vertex}); reduce dt or stiffness")]
    NonFiniteState {
        frame: usize,
        substep: usize,
        body: usize,
        vertex: usize,
    },
    #[error("external force buffer has {got} entries, expected {expected}")]
    ForceLength { got: usize, expected: usize },
    #[error("simulation cancelled")]
    Cancelled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams<T> {
    /// Seconds per substep.
    pub dt: T,
    pub fps: T,
    pub frame_count: usize,
    /// Per-second velocity decay; velocities are scaled by max(0, 1 − damping·dt).
    pub damping: T,
    /// Pixels/s², applied as m_i·g on every vertex.
    pub gravity: Vec2<T>,
}

impl<T: Real> Default for SimParams<T> {
    fn default() -> Self {
        SimParams {
            dt: T::lit(DEFAULT_DT),
            fps: T::lit(DEFAULT_FPS),
            frame_count: DEFAULT_FRAME_COUNT,
            damping: T::lit(DEFAULT_DAMPING),
            gravity: Vec2::zero(),
        }
    }
}

impl<T: Real> SimParams<T> {
    /// round(1 / (fps·dt)).
    pub fn substeps_per_frame(&self) -> usize {
        (T::one() / (self.fps * self.dt)).round().to_f64_lossy() as usize
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |field: &'static str, message: String| {
            Err(DynamicsError::InvalidParams { field, message })
        };
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return bad("dt", format!("must be positive, got {}", self.dt));
        }
        if !(self.fps > T::zero()) || !self.fps.is_finite() {
            return bad("fps", format!("must be positive, got {}", self.fps));
        }
        if self.frame_count < 1 {
            return bad("frame_count", "must be at least 1".into());
        }
        if !(self.damping >= T::zero()) || !self.damping.is_finite() {
            return bad("damping", format!("must be non-negative, got {}", self.damping));
        }
        if !self.gravity.is_finite() {
            return bad("gravity", "must be finite".into());
        }
        if self.substeps_per_frame() < 1 {
            return bad("dt", format!(
                "{} is longer than a frame at {} fps",
                self.dt, self.fps
            ));
        }
        Ok(())
    }
}

/// How a rigged vertex moves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RigKind<T> {
    Fixed,
    /// x(t) = X + s·sin(f·t)·d.
    Wavy {
        amplitude: T,
        /// Radians per second.
        frequency: T,
        direction: Vec2<T>,
    },
    /// Keyframes `(time, offset)`; the vertex sits at X + offset(t), with
    /// piecewise-linear interpolation clamped at both ends.
    Trajectory { keyframes: Vec<(T, Vec2<T>)> },
}

impl<T> RigKind<T> {
    pub fn name(&self) -> &'static str {
        match self {
            RigKind::Fixed => "fixed",
            RigKind::Wavy { .. } => "wavy",
            RigKind::Trajectory { .. } => "trajectory",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigPoint<T> {
    pub vertex: usize,
    /// Rest anchor X_r.
    pub anchor: Vec2<T>,
    #[serde(flatten)]
    pub kind: RigKind<T>,
}

impl<T: Real> RigPoint<T> {
    pub fn fixed(vertex: usize, anchor: Vec2<T>) -> Self {
        RigPoint {
            vertex,
            anchor,
            kind: RigKind::Fixed,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |field: &'static str, message: String| {
            Err(DynamicsError::InvalidRig { field, message })
        };
        if !self.anchor.is_finite() {
            return bad("anchor", "must be finite".into());
        }
        match &self.kind {
            RigKind::Fixed => {}
            RigKind::Wavy {
                amplitude,
                frequency,
                direction,
            } => {
                if !(*amplitude >= T::zero()) || !amplitude.is_finite() {
                    return bad("amplitude", format!("must be non-negative, got {amplitude}"));
                }
                if !(*frequency > T::zero()) || !frequency.is_finite() {
                    return bad("frequency", format!("must be positive, got {frequency}"));
                }
                if !((direction.norm() - T::one()).abs() <= T::lit(1e-6)) {
                    return bad("direction", "must be a unit vector".into());
                }
            }
            RigKind::Trajectory { keyframes } => {
                if keyframes.is_empty() {
                    return bad("keyframes", "trajectory needs at least one keyframe".into());
                }
                if keyframes.iter().any(|(t, p)| !t.is_finite() || !p.is_finite()) {
                    return bad("keyframes", "must be finite".into());
                }
                if keyframes.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return bad("keyframes", "times must be strictly increasing".into());
                }
            }
        }
        Ok(())
    }

    /// Prescribed position at time `t`.
    pub fn position_at(&self, t: T) -> Vec2<T> {
        match &self.kind {
            RigKind::Fixed => self.anchor,
            RigKind::Wavy {
                amplitude,
                frequency,
                direction,
            } => self.anchor + *direction * (*amplitude * (*frequency * t).sin()),
            RigKind::Trajectory { keyframes } => self.anchor + interpolate(keyframes, t),
        }
    }
}

fn interpolate<T: Real>(keys: &[(T, Vec2<T>)], t: T) -> Vec2<T> {
    let first = keys[0];
    let last = keys[keys.len() - 1];
    if t <= first.0 {
        return first.1;
    }
    if t >= last.0 {
        return last.1;
    }
    let i = keys.partition_point(|k| k.0 <= t);
    let (t0, p0) = keys[i - 1];
    let (t1, p1) = keys[i];
    let s = (t - t0) / (t1 - t0);
    p0 + (p1 - p0) * s
}

/// x_r(t) = X_r + s·sin(f·t)·d_r.
pub fn wavy_rig_position<T: Real>(rig: &RigPoint<T>, t: T) -> Result<Vec2<T>, DynamicsError> {
    match rig.kind {
        RigKind::Wavy { .. } => Ok(rig.position_at(t)),
        ref other => Err(DynamicsError::WrongRigKind {
            expected: "wavy",
            found: other.name(),
        }),
    }
}

/// Projects rigged vertices onto their prescribed positions at `t_new` and
/// sets their velocity to the prescribed displacement over the interval.
pub fn apply_rigs<T: Real>(state: &mut BodyState<T>, rigs: &[RigPoint<T>], t_old: T, t_new: T) {
    let dt = t_new - t_old;
    for rig in rigs {
        let x_new = rig.position_at(t_new);
        let x_old = rig.position_at(t_old);
        state.positions[rig.vertex] = x_new;
        state.velocities[rig.vertex] = (x_new - x_old) / dt;
    }
}

/// One symplectic Euler step:
/// v ← v + dt·M⁻¹(f_int(x) + f_ext), x ← x + dt·v, v ← max(0, 1 − damping·dt)·v.
pub fn step<T: Real>(
    state: &mut BodyState<T>,
    f_ext: &[Vec2<T>],
    m: &Material<T>,
    dt: T,
    damping: T,
) -> Result<(), DynamicsError> {
    let n = state.vertex_count();
    if f_ext.len() != n {
        return Err(DynamicsError::ForceLength {
            got: f_ext.len(),
            expected: n,
        });
    }
    let mut force = f_ext.to_vec();
    add_internal_forces(state.mesh(), &state.positions, m, &mut force);
    integrate(state, &force, dt, damping)
}

fn integrate<T: Real>(
    state: &mut BodyState<T>,
    force: &[Vec2<T>],
    dt: T,
    damping: T,
) -> Result<(), DynamicsError> {
    let decay = (T::one() - damping * dt).max(T::zero());
    let masses = state.masses().to_vec();
    for i in 0..force.len() {
        let v = state.velocities[i] + force[i] * (dt / masses[i]);
        let x = state.positions[i] + v * dt;
        let v = v * decay;
        if !x.is_finite() || !v.is_finite() {
            return Err(DynamicsError::NonFinite { vertex: i });
        }
        state.positions[i] = x;
        state.velocities[i] = v;
    }
    Ok(())
}

/// Positions of every body at one output frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot<T> {
    pub frame: usize,
    /// Simulated time, frame · substeps · dt.
    pub time: T,
    pub positions: Vec<Vec<Vec2<T>>>,
}

/// Source of external forces, queried once per substep before integration.
pub trait ForceField<T: Real> {
    /// Adds forces acting over `[t, t + dt)` into `out[body][vertex]`.
    fn accumulate(&mut self, t: T, dt: T, bodies: &[BodyState<T>], out: &mut [Vec<Vec2<T>>]);
}

/// No external forces.
pub struct NoForces;

impl<T: Real> ForceField<T> for NoForces {
    fn accumulate(&mut self, _: T, _: T, _: &[BodyState<T>], _: &mut [Vec<Vec2<T>>]) {}
}

/// The same force on every vertex of every body.
pub struct ConstantForce<T>(pub Vec2<T>);

impl<T: Real> ForceField<T> for ConstantForce<T> {
    fn accumulate(&mut self, _: T, _: T, _: &[BodyState<T>], out: &mut [Vec<Vec2<T>>]) {
        for f in out.iter_mut().flatten() {
            *f += self.0;
        }
    }
}

/// Incremental multi-body simulation, advanced one output frame at a time.
pub struct Simulation<T> {
    bodies: Vec<BodyState<T>>,
    materials: Vec<Material<T>>,
    rigs: Vec<Vec<RigPoint<T>>>,
    params: SimParams<T>,
    substeps: usize,
    frame: usize,
    forces: Vec<Vec<Vec2<T>>>,
}

impl<T: Real> Simulation<T> {
    /// `rigs[b]` constrains vertices of body `b`. Rigs are applied once at
    /// t = 0 so the initial state already satisfies them.
    pub fn new(
        mut bodies: Vec<BodyState<T>>,
        materials: Vec<Material<T>>,
        rigs: Vec<Vec<RigPoint<T>>>,
        params: SimParams<T>,
    ) -> Result<Self, DynamicsError> {
        params.validate()?;
        if materials.len() != bodies.len() || rigs.len() != bodies.len() {
            return Err(DynamicsError::InvalidParams {
                field: "bodies",
                message: format!(
                    "{} bodies but {} materials and {} rig lists",
                    bodies.len(),
                    materials.len(),
                    rigs.len()
                ),
            });
        }
        for (b, body_rigs) in rigs.iter().enumerate() {
            for rig in body_rigs {
                rig.validate()?;
                if rig.vertex >= bodies[b].vertex_count() {
                    return Err(DynamicsError::InvalidRig {
                        field: "vertex",
                        message: format!(
                            "{} out of range for body {b} with {} vertices",
                            rig.vertex,
                            bodies[b].vertex_count()
                        ),
                    });
                }
            }
        }
        for (body, body_rigs) in bodies.iter_mut().zip(&rigs) {
            for rig in body_rigs {
                body.positions[rig.vertex] = rig.position_at(T::zero());
            }
        }
        let forces = bodies.iter().map(|b| vec![Vec2::zero(); b.vertex_count()]).collect();
        Ok(Simulation {
            substeps: params.substeps_per_frame(),
            bodies,
            materials,
            rigs,
            params,
            frame: 0,
            forces,
        })
    }

    pub fn bodies(&self) -> &[BodyState<T>] {
        &self.bodies
    }

    pub fn params(&self) -> &SimParams<T> {
        &self.params
    }

    pub fn frame(&self) -> usize {
        self.frame
    }

    pub fn substeps_per_frame(&self) -> usize {
        self.substeps
    }

    fn time_of(&self, global_step: usize) -> T {
        T::from_usize_lossy(global_step) * self.params.dt
    }

    pub fn snapshot(&self) -> Snapshot<T> {
        Snapshot {
            frame: self.frame,
            time: self.time_of(self.frame * self.substeps),
            positions: self.bodies.iter().map(|b| b.positions.clone()).collect(),
        }
    }

    /// Runs one frame's worth of substeps and returns the resulting snapshot.
    pub fn advance_frame(&mut self, field: &mut dyn ForceField<T>) -> Result<Snapshot<T>, DynamicsError> {
        let dt = self.params.dt;
        for sub in 0..self.substeps {
            let n = self.frame * self.substeps + sub;
            let (t_old, t_new) = (self.time_of(n), self.time_of(n + 1));
            for (f, body) in self.forces.iter_mut().zip(&self.bodies) {
                for (fi, &m) in f.iter_mut().zip(body.masses()) {
                    *fi = self.params.gravity * m;
                }
            }
            field.accumulate(t_old, dt, &self.bodies, &mut self.forces);
            for b in 0..self.bodies.len() {
                let body = &mut self.bodies[b];
                let f = &mut self.forces[b];
                add_internal_forces(body.mesh(), &body.positions, &self.materials[b], f);
                integrate(body, f, dt, self.params.damping).map_err(|e| match e {
                    DynamicsError::NonFinite { vertex } => DynamicsError::NonFiniteState {
                        frame: self.frame + 1,
                        substep: sub,
                        body: b,
                        vertex,
                    },
                    other => other,
                })?;
                apply_rigs(body, &self.rigs[b], t_old, t_new);
            }
        }
        self.frame += 1;
        Ok(self.snapshot())
    }
}

/// Runs `frame_count` frames; returns `frame_count + 1` snapshots, the first
/// being the (rig-projected) rest state.
pub fn simulate<T: Real>(
    bodies: Vec<BodyState<T>>,
    materials: Vec<Material<T>>,
    rigs: Vec<Vec<RigPoint<T>>>,
    params: SimParams<T>,
    field: &mut dyn ForceField<T>,
) -> Result<Vec<Snapshot<T>>, DynamicsError> {
    let mut sim = Simulation::new(bodies, materials, rigs, params)?;
    let mut out = Vec::with_capacity(params.frame_count + 1);
    out.push(sim.snapshot());
    for _ in 0..params.frame_count {
        out.push(sim.advance_frame(field)?);
    }
    Ok(out)
}
