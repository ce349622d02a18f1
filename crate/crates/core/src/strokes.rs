//! Energy strokes: polylines that emit flow particles, and the wind, repel
//! and attract kernels those particles apply to nearby mesh vertices.

use crate::dynamics::ForceField;
use crate::elastics::BodyState;
use crate::linalg::Vec2;
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

pub const DEFAULT_EMIT_RATE: f64 = 30.0;
pub const DEFAULT_PARTICLE_SPEED: f64 = 200.0;
pub const DEFAULT_RADIUS: f64 = 60.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrokeError {
    #[error("invalid stroke {field}: {message}")]
    Invalid {
        field: &'static str,
        message: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrokeKind {
    Wind,
    Repel,
    Attract,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyStroke<T> {
    pub kind: StrokeKind,
    pub path: Vec<Vec2<T>>,
    pub strength: T,
    /// Influence range r, pixels.
    pub radius: T,
    /// Pixels per second along the path.
    pub particle_speed: T,
    /// Particles per second.
    pub emit_rate: T,
    /// Emission happens for t in `[start, end)`; `None` means forever.
    pub active: (T, Option<T>),
}

impl<T: Real> EnergyStroke<T> {
    pub fn new(kind: StrokeKind, path: Vec<Vec2<T>>, strength: T) -> Self {
        EnergyStroke {
            kind,
            path,
            strength,
            radius: T::lit(DEFAULT_RADIUS),
            particle_speed: T::lit(DEFAULT_PARTICLE_SPEED),
            emit_rate: T::lit(DEFAULT_EMIT_RATE),
            active: (T::zero(), None),
        }
    }

    pub fn validate(&self) -> Result<(), StrokeError> {
        let bad = |field: &'static str, message: String| Err(StrokeError::Invalid { field, message });
        let min_points = if self.kind == StrokeKind::Wind { 2 } else { 1 };
        if self.path.len() < min_points {
            return bad("path", format!(
                "{:?} stroke needs at least {min_points} path points, got {}",
                self.kind,
                self.path.len()
            ));
        }
        if self.path.iter().any(|p| !p.is_finite()) {
            return bad("path", "points must be finite".into());
        }
        if self.kind == StrokeKind::Wind && !(self.length() > T::zero()) {
            return bad("path", "wind stroke path has zero length".into());
        }
        if !(self.strength >= T::zero()) || !self.strength.is_finite() {
            return bad("strength", format!("must be non-negative, got {}", self.strength));
        }
        if !(self.radius > T::zero()) || !self.radius.is_finite() {
            return bad("radius", format!("must be positive, got {}", self.radius));
        }
        if self.length() > T::zero()
            && (!(self.particle_speed > T::zero()) || !self.particle_speed.is_finite())
        {
            return bad("particle_speed", format!(
                "must be positive, got {}",
                self.particle_speed
            ));
        }
        if !(self.emit_rate >= T::zero()) || !self.emit_rate.is_finite() {
            return bad("emit_rate", format!("must be non-negative, got {}", self.emit_rate));
        }
        let (start, end) = self.active;
        if !start.is_finite() {
            return bad("start", "must be finite".into());
        }
        if let Some(end) = end {
            if !(start < end) {
                return bad("end", format!("active window [{start}, {end}) is empty"));
            }
        }
        Ok(())
    }

    pub fn length(&self) -> T {
        self.path
            .windows(2)
            .fold(T::zero(), |acc, w| acc + (w[1] - w[0]).norm())
    }

    pub fn is_active(&self, t: T) -> bool {
        t >= self.active.0 && self.active.1.is_none_or(|e| t < e)
    }

    /// Position and unit tangent at arc length `s`. The tangent is that of
    /// the segment containing `s`; at an interior vertex it is the outgoing
    /// segment's. Zero-length paths report direction (1, 0).
    pub fn locate(&self, s: T) -> (Vec2<T>, Vec2<T>) {
        let fallback = Vec2::new(T::one(), T::zero());
        let mut last = None;
        let mut acc = T::zero();
        for w in self.path.windows(2) {
            let seg = w[1] - w[0];
            let len = seg.norm();
            if !(len > T::zero()) {
                continue;
            }
            let d = seg / len;
            if s < acc + len {
                let u = (s - acc).max(T::zero());
                return (w[0] + d * u, d);
            }
            acc += len;
            last = Some((w[1], d));
        }
        last.unwrap_or((self.path[0], fallback))
    }

    pub fn force(&self, p: Vec2<T>, d: Vec2<T>, q: Vec2<T>) -> Vec2<T> {
        match self.kind {
            StrokeKind::Wind => wind_force(p, d, q, self.strength, self.radius),
            StrokeKind::Repel => repel_force(p, q, self.strength, self.radius),
            StrokeKind::Attract => attract_force(p, q, self.strength, self.radius),
        }
    }
}

/// f = s(1 − ‖p−q‖/r)·d inside the range, zero at and beyond r.
pub fn wind_force<T: Real>(p: Vec2<T>, d: Vec2<T>, q: Vec2<T>, s: T, r: T) -> Vec2<T> {
    let w = (p - q).norm() / r;
    if w < T::one() {
        d * (s * (T::one() - w))
    } else {
        Vec2::zero()
    }
}

/// f = s(q − p)/r inside the range, zero at and beyond r.
pub fn repel_force<T: Real>(p: Vec2<T>, q: Vec2<T>, s: T, r: T) -> Vec2<T> {
    let dq = q - p;
    if dq.norm() < r {
        dq * (s / r)
    } else {
        Vec2::zero()
    }
}

/// f = s(1 − ‖q−p‖/r)(p − q)/‖p − q‖ inside the range; zero at q = p and
/// at and beyond r.
pub fn attract_force<T: Real>(p: Vec2<T>, q: Vec2<T>, s: T, r: T) -> Vec2<T> {
    let dp = p - q;
    let dist = dp.norm();
    if dist > T::zero() && dist < r {
        dp * (s * (T::one() - dist / r) / dist)
    } else {
        Vec2::zero()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowParticle<T> {
    pub position: Vec2<T>,
    pub direction: Vec2<T>,
    pub arc: T,
    pub stroke: usize,
}

/// Per-stroke emitter state: the stroke's live particles and the fractional
/// emission carry.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Emitter<T> {
    pub particles: Vec<FlowParticle<T>>,
    pub carry: T,
}

/// Advances `emitter`'s particles by `dt`, drops those past the path end and
/// spawns new ones at the path start while the stroke is active at `t`.
///
/// A single-point stroke holds one stationary particle while active.
pub fn emit_and_advance<T: Real>(
    stroke: &EnergyStroke<T>,
    stroke_index: usize,
    emitter: &mut Emitter<T>,
    t: T,
    dt: T,
) {
    let length = stroke.length();
    let active = stroke.is_active(t);
    if !(length > T::zero()) {
        emitter.particles.clear();
        if active {
            let (p, d) = stroke.locate(T::zero());
            emitter.particles.push(FlowParticle {
                position: p,
                direction: d,
                arc: T::zero(),
                stroke: stroke_index,
            });
        }
        return;
    }
    let step = stroke.particle_speed * dt;
    emitter.particles.retain_mut(|q| {
        q.arc += step;
        if q.arc > length {
            return false;
        }
        let (p, d) = stroke.locate(q.arc);
        q.position = p;
        q.direction = d;
        true
    });
    if active {
        emitter.carry += stroke.emit_rate * dt;
        // Guard against 0.999… from repeated fractional accumulation.
        let n = (emitter.carry + T::lit(1e-9)).floor();
        emitter.carry = (emitter.carry - n).max(T::zero());
        let (p, d) = stroke.locate(T::zero());
        for _ in 0..n.to_f64_lossy() as usize {
            emitter.particles.push(FlowParticle {
                position: p,
                direction: d,
                arc: T::zero(),
                stroke: stroke_index,
            });
        }
    }
}

/// Uniform hash grid over points, for radius queries.
pub struct PointGrid {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl PointGrid {
    pub fn build<T: Real>(points: &[Vec2<T>], cell: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(*p, cell)).or_default().push(i);
        }
        PointGrid { cell, cells }
    }

    fn key<T: Real>(p: Vec2<T>, cell: f64) -> (i64, i64) {
        (
            (p.x.to_f64_lossy() / cell).floor() as i64,
            (p.y.to_f64_lossy() / cell).floor() as i64,
        )
    }

    /// Indices of points in cells overlapping the box `center ± r`, ascending.
    pub fn candidates<T: Real>(&self, center: Vec2<T>, r: f64) -> Vec<usize> {
        let c = center.cast::<f64>();
        let (x0, y0) = Self::key(Vec2::new(c.x - r, c.y - r), self.cell);
        let (x1, y1) = Self::key(Vec2::new(c.x + r, c.y + r), self.cell);
        let mut out = Vec::new();
        for gy in y0..=y1 {
            for gx in x0..=x1 {
                if let Some(v) = self.cells.get(&(gx, gy)) {
                    out.extend_from_slice(v);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Sums every particle's kernel force onto each vertex within its stroke's
/// radius, in particle order. Results are added into `out[body][vertex]`.
pub fn accumulate_external_forces<T: Real>(
    strokes: &[EnergyStroke<T>],
    particles: &[FlowParticle<T>],
    bodies: &[BodyState<T>],
    out: &mut [Vec<Vec2<T>>],
) {
    if particles.is_empty() {
        return;
    }
    let cell = strokes
        .iter()
        .map(|s| s.radius.to_f64_lossy())
        .fold(0.0, f64::max)
        .max(1.0);
    for (body, forces) in bodies.iter().zip(out.iter_mut()) {
        let grid = PointGrid::build(&body.positions, cell);
        for p in particles {
            let s = &strokes[p.stroke];
            for v in grid.candidates(p.position, s.radius.to_f64_lossy()) {
                let q = body.positions[v];
                if (q - p.position).norm() < s.radius {
                    forces[v] += s.force(p.position, p.direction, q);
                }
            }
        }
    }
}

/// Quadratic reference for [`accumulate_external_forces`].
pub fn accumulate_external_forces_brute<T: Real>(
    strokes: &[EnergyStroke<T>],
    particles: &[FlowParticle<T>],
    bodies: &[BodyState<T>],
    out: &mut [Vec<Vec2<T>>],
) {
    for (body, forces) in bodies.iter().zip(out.iter_mut()) {
        for p in particles {
            let s = &strokes[p.stroke];
            for (v, &q) in body.positions.iter().enumerate() {
                if (q - p.position).norm() < s.radius {
                    forces[v] += s.force(p.position, p.direction, q);
                }
            }
        }
    }
}

/// All strokes of a scene with their particle state; drives the simulation
/// as a [`ForceField`].
#[derive(Clone, Debug)]
pub struct StrokeField<T> {
    strokes: Vec<EnergyStroke<T>>,
    emitters: Vec<Emitter<T>>,
    particles: Vec<FlowParticle<T>>,
}

impl<T: Real> StrokeField<T> {
    pub fn new(strokes: Vec<EnergyStroke<T>>) -> Self {
        let emitters = vec![
            Emitter {
                particles: Vec::new(),
                carry: T::zero()
            };
            strokes.len()
        ];
        StrokeField {
            strokes,
            emitters,
            particles: Vec::new(),
        }
    }

    pub fn strokes(&self) -> &[EnergyStroke<T>] {
        &self.strokes
    }

    /// Live particles, grouped by stroke in stroke order.
    pub fn particles(&self) -> &[FlowParticle<T>] {
        &self.particles
    }

    pub fn advance(&mut self, t: T, dt: T) {
        self.particles.clear();
        for (i, (s, e)) in self.strokes.iter().zip(&mut self.emitters).enumerate() {
            emit_and_advance(s, i, e, t, dt);
            self.particles.extend_from_slice(&e.particles);
        }
    }
}

impl<T: Real> ForceField<T> for StrokeField<T> {
    fn accumulate(&mut self, t: T, dt: T, bodies: &[BodyState<T>], out: &mut [Vec<Vec2<T>>]) {
        self.advance(t, dt);
        accumulate_external_forces(&self.strokes, &self.particles, bodies, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64) -> Vec2<f64> {
        Vec2::new(x, y)
    }

    #[test]
    fn kernel_examples() {
        let d = v(1.0, 0.0);
        assert_eq!(wind_force(v(1.0, 1.0), d, v(1.0, 1.0), 2.0, 10.0), v(2.0, 0.0));
        assert_eq!(wind_force(v(0.0, 0.0), d, v(10.0, 0.0), 2.0, 10.0), v(0.0, 0.0));
        assert_eq!(wind_force(v(0.0, 0.0), d, v(0.0, 5.0), 2.0, 10.0), v(1.0, 0.0));

        assert_eq!(repel_force(v(3.0, 3.0), v(3.0, 3.0), 1.0, 4.0), v(0.0, 0.0));
        assert_eq!(repel_force(v(0.0, 0.0), v(2.0, 0.0), 1.0, 4.0), v(0.5, 0.0));
        assert_eq!(repel_force(v(0.0, 0.0), v(5.0, 0.0), 1.0, 4.0), v(0.0, 0.0));

        assert_eq!(attract_force(v(0.0, 0.0), v(10.0, 0.0), 2.0, 10.0), v(0.0, 0.0));
        assert_eq!(attract_force(v(2.0, 2.0), v(2.0, 2.0), 2.0, 10.0), v(0.0, 0.0));
        assert_eq!(attract_force(v(0.0, 0.0), v(5.0, 0.0), 2.0, 10.0), v(-1.0, 0.0));
    }

    fn straight(len: f64) -> EnergyStroke<f64> {
        EnergyStroke::new(StrokeKind::Wind, vec![v(0.0, 0.0), v(len, 0.0)], 1.0)
    }

    #[test]
    fn emission_rate_times_dt() {
        let mut s = straight(100.0);
        s.emit_rate = 10.0;
        let mut e = Emitter::default();
        emit_and_advance(&s, 0, &mut e, 0.0, 0.1);
        assert_eq!(e.particles.len(), 1);
        assert_eq!(e.particles[0].arc, 0.0);
        assert_eq!(e.particles[0].position, v(0.0, 0.0));
    }

    #[test]
    fn fractional_emission_accumulates() {
        let mut s = straight(1e6);
        s.emit_rate = 30.0;
        let mut e = Emitter::default();
        for k in 0..1000 {
            emit_and_advance(&s, 0, &mut e, k as f64 * 1e-3, 1e-3);
        }
        assert_eq!(e.particles.len(), 30);
    }

    #[test]
    fn expired_particles_are_removed() {
        let mut s = straight(100.0);
        s.particle_speed = 50.0;
        s.emit_rate = 0.0;
        let mut e = Emitter {
            particles: vec![FlowParticle {
                position: v(80.0, 0.0),
                direction: v(1.0, 0.0),
                arc: 80.0,
                stroke: 0,
            }],
            carry: 0.0,
        };
        emit_and_advance(&s, 0, &mut e, 0.0, 0.5);
        assert!(e.particles.is_empty());
    }

    #[test]
    fn direction_turns_at_corner() {
        let mut s = EnergyStroke::new(
            StrokeKind::Wind,
            vec![v(0.0, 0.0), v(10.0, 0.0), v(10.0, 10.0)],
            1.0,
        );
        s.particle_speed = 4.0;
        s.emit_rate = 0.0;
        let mut e = Emitter {
            particles: vec![FlowParticle {
                position: v(8.0, 0.0),
                direction: v(1.0, 0.0),
                arc: 8.0,
                stroke: 0,
            }],
            carry: 0.0,
        };
        emit_and_advance(&s, 0, &mut e, 0.0, 1.0);
        assert_eq!(e.particles[0].direction, v(0.0, 1.0));
        assert_eq!(e.particles[0].position, v(10.0, 2.0));
    }

    #[test]
    fn inactive_stroke_does_not_emit() {
        let mut s = straight(100.0);
        s.active = (1.0, Some(2.0));
        let mut e = Emitter::default();
        emit_and_advance(&s, 0, &mut e, 0.0, 0.5);
        assert!(e.particles.is_empty());
        emit_and_advance(&s, 0, &mut e, 1.0, 0.5);
        assert_eq!(e.particles.len(), 15);
    }

    #[test]
    fn point_stroke_holds_one_particle() {
        let s = EnergyStroke::new(StrokeKind::Attract, vec![v(5.0, 5.0)], 1.0);
        assert!(s.validate().is_ok());
        let mut e = Emitter::default();
        for k in 0..5 {
            emit_and_advance(&s, 0, &mut e, k as f64, 1.0);
            assert_eq!(e.particles.len(), 1);
            assert_eq!(e.particles[0].position, v(5.0, 5.0));
        }
    }

    #[test]
    fn validation() {
        assert!(straight(10.0).validate().is_ok());
        let mut s = straight(10.0);
        s.radius = -5.0;
        assert!(s.validate().is_err());
        let s = EnergyStroke::new(StrokeKind::Wind, vec![v(1.0, 1.0)], 1.0);
        assert!(s.validate().is_err());
        let mut s = straight(10.0);
        s.active = (2.0, Some(1.0));
        assert!(s.validate().is_err());
    }
}
