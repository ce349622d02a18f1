mod common;

use animflow::elastics::BodyState;
use animflow::strokes::{
    accumulate_external_forces, accumulate_external_forces_brute, attract_force, emit_and_advance, repel_force,
    wind_force, EnergyStroke, Emitter, FlowParticle, StrokeField, StrokeKind,
};
use animflow::Vec2;
use common::{jittered_grid, rng};
use proptest::prelude::*;
use rand::Rng;
use std::sync::Arc;

/// Scalar restatements of the three kernels, component by component.
#[allow(clippy::too_many_arguments)]
fn wind_oracle(px: f64, py: f64, dx: f64, dy: f64, qx: f64, qy: f64, s: f64, r: f64) -> (f64, f64) {
    let dist = ((px - qx).powi(2) + (py - qy).powi(2)).sqrt();
    if dist >= r {
        return (0.0, 0.0);
    }
    let k = s * (1.0 - dist / r);
    (k * dx, k * dy)
}

fn repel_oracle(px: f64, py: f64, qx: f64, qy: f64, s: f64, r: f64) -> (f64, f64) {
    let dist = ((px - qx).powi(2) + (py - qy).powi(2)).sqrt();
    if dist >= r {
        return (0.0, 0.0);
    }
    (s * (qx - px) / r, s * (qy - py) / r)
}

fn attract_oracle(px: f64, py: f64, qx: f64, qy: f64, s: f64, r: f64) -> (f64, f64) {
    let dist = ((px - qx).powi(2) + (py - qy).powi(2)).sqrt();
    if dist >= r || dist == 0.0 {
        return (0.0, 0.0);
    }
    let k = s * (1.0 - dist / r) / dist;
    (k * (px - qx), k * (py - qy))
}

#[test]
fn kernels_on_a_grid() {
    let p = Vec2::new(3.0, -2.0);
    let d = Vec2::new(0.8, 0.6);
    for i in 0..10 {
        for j in 0..10 {
            let s = 0.5 + 3.0 * j as f64;
            let r = 5.0 + 7.0 * i as f64;
            for k in 0..10 {
                // Distances from 0 to 1.5r, including r itself.
                let dist = r * 1.5 * k as f64 / 9.0;
                let dist = if k == 6 { r } else { dist };
                let ang = 0.7 * k as f64 + 0.3 * j as f64;
                // The boundary sample sits on an axis so ‖p − q‖ = r exactly.
                let q = if k == 6 {
                    p + Vec2::new(0.0, r)
                } else {
                    p + Vec2::new(ang.cos(), ang.sin()) * dist
                };
                let dist = (p - q).norm();
                let check = |got: Vec2<f64>, want: (f64, f64)| {
                    assert!((got.x - want.0).abs() < 1e-9 && (got.y - want.1).abs() < 1e-9);
                    if dist >= r {
                        assert!(got.x == 0.0 && got.y == 0.0);
                    }
                };
                check(wind_force(p, d, q, s, r), wind_oracle(p.x, p.y, d.x, d.y, q.x, q.y, s, r));
                check(repel_force(p, q, s, r), repel_oracle(p.x, p.y, q.x, q.y, s, r));
                check(attract_force(p, q, s, r), attract_oracle(p.x, p.y, q.x, q.y, s, r));
            }
        }
    }
}

#[test]
fn documented_kernel_values() {
    let o = Vec2::new(0.0, 0.0);
    assert_eq!(wind_force(o, Vec2::new(1.0, 0.0), Vec2::new(5.0, 0.0), 2.0, 10.0), Vec2::new(1.0, 0.0));
    assert_eq!(repel_force(o, Vec2::new(2.0, 0.0), 1.0, 4.0), Vec2::new(0.5, 0.0));
    assert_eq!(repel_force(o, Vec2::new(5.0, 0.0), 1.0, 4.0), Vec2::zero());
    assert_eq!(attract_force(o, Vec2::new(5.0, 0.0), 2.0, 10.0), Vec2::new(-1.0, 0.0));
    assert_eq!(attract_force(o, o, 2.0, 10.0), Vec2::zero());
}

#[test]
fn emission_and_expiry() {
    let mut s = EnergyStroke::new(StrokeKind::Wind, vec![Vec2::new(0.0, 0.0), Vec2::new(100.0, 0.0)], 1.0);
    s.emit_rate = 10.0;
    s.particle_speed = 50.0;
    let mut e = Emitter::default();
    emit_and_advance(&s, 0, &mut e, 0.0, 0.1);
    assert_eq!(e.particles.len(), 1);
    assert_eq!(e.particles[0].position, Vec2::new(0.0, 0.0));

    let mut e = Emitter {
        particles: vec![FlowParticle {
            position: Vec2::new(80.0, 0.0),
            direction: Vec2::new(1.0, 0.0),
            arc: 80.0,
            stroke: 0,
        }],
        carry: 0.0,
    };
    s.active = (10.0, None);
    emit_and_advance(&s, 0, &mut e, 0.0, 0.5);
    assert!(e.particles.is_empty());
}

#[test]
fn direction_turns_at_a_corner() {
    let mut s = EnergyStroke::new(
        StrokeKind::Wind,
        vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0), Vec2::new(10.0, 10.0)],
        1.0,
    );
    s.particle_speed = 10.0;
    s.active = (5.0, None);
    let mut e = Emitter {
        particles: vec![FlowParticle {
            position: Vec2::new(8.0, 0.0),
            direction: Vec2::new(1.0, 0.0),
            arc: 8.0,
            stroke: 0,
        }],
        carry: 0.0,
    };
    emit_and_advance(&s, 0, &mut e, 0.0, 0.5);
    let p = e.particles[0];
    assert_eq!(p.arc, 13.0);
    assert!((p.position - Vec2::new(10.0, 3.0)).norm() < 1e-12);
    assert!((p.direction - Vec2::new(0.0, 1.0)).norm() < 1e-12);
}

#[test]
fn fractional_emission_accumulates() {
    let mut s = EnergyStroke::new(StrokeKind::Wind, vec![Vec2::new(0.0, 0.0), Vec2::new(1e4, 0.0)], 1.0);
    s.emit_rate = 30.0;
    let mut e = Emitter::default();
    // 1000 steps of 1 ms: exactly 30 particles despite 0.03 per step.
    for k in 0..1000 {
        emit_and_advance(&s, 0, &mut e, k as f64 * 1e-3, 1e-3);
    }
    assert_eq!(e.particles.len(), 30);
}

fn random_bodies(seed: u64) -> Vec<BodyState<f64>> {
    let mut r = rng(seed);
    (0..2)
        .map(|b| {
            let mesh = Arc::new(jittered_grid(&mut r, 6, 5, 4.0, 0.2));
            let mut s = BodyState::at_rest(mesh, 1.0);
            for p in &mut s.positions {
                *p += Vec2::new(b as f64 * 7.0, 0.0);
            }
            s
        })
        .collect()
}

fn random_particles(seed: u64, strokes: usize, n: usize) -> Vec<FlowParticle<f64>> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let a: f64 = r.gen_range(0.0..6.3);
            FlowParticle {
                position: Vec2::new(r.gen_range(-5.0..35.0), r.gen_range(-5.0..25.0)),
                direction: Vec2::new(a.cos(), a.sin()),
                arc: 0.0,
                stroke: r.gen_range(0..strokes),
            }
        })
        .collect()
}

fn three_strokes(radius: [f64; 3]) -> Vec<EnergyStroke<f64>> {
    [StrokeKind::Wind, StrokeKind::Repel, StrokeKind::Attract]
        .iter()
        .zip(radius)
        .map(|(&k, r)| {
            let mut s = EnergyStroke::new(k, vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)], 3.0);
            s.radius = r;
            s
        })
        .collect()
}

fn zeros(bodies: &[BodyState<f64>]) -> Vec<Vec<Vec2<f64>>> {
    bodies.iter().map(|b| vec![Vec2::zero(); b.vertex_count()]).collect()
}

#[test]
fn no_particles_no_force() {
    let bodies = random_bodies(1);
    let mut out = zeros(&bodies);
    accumulate_external_forces(&three_strokes([5.0, 5.0, 5.0]), &[], &bodies, &mut out);
    assert!(out.iter().flatten().all(|f| *f == Vec2::zero()));
}

#[test]
fn single_wind_particle_on_a_vertex() {
    let bodies = random_bodies(2);
    let q = bodies[0].positions[7];
    let strokes = three_strokes([6.0, 6.0, 6.0]);
    let d = Vec2::new(0.0, 1.0);
    let p = FlowParticle { position: q, direction: d, arc: 0.0, stroke: 0 };
    let mut out = zeros(&bodies);
    accumulate_external_forces(&strokes, &[p], &bodies, &mut out);
    assert_eq!(out[0][7], d * 3.0);
    for (b, body) in bodies.iter().enumerate() {
        for (v, x) in body.positions.iter().enumerate() {
            let want = wind_force(q, d, *x, 3.0, 6.0);
            assert_eq!(out[b][v], want);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_equals_brute_force(seed in 0u64..10_000, n in 0usize..40, r0 in 0.5f64..15.0, r1 in 0.5f64..15.0, r2 in 0.5f64..15.0) {
        let bodies = random_bodies(seed);
        let strokes = three_strokes([r0, r1, r2]);
        let particles = random_particles(seed + 1, 3, n);
        let (mut a, mut b) = (zeros(&bodies), zeros(&bodies));
        accumulate_external_forces(&strokes, &particles, &bodies, &mut a);
        accumulate_external_forces_brute(&strokes, &particles, &bodies, &mut b);
        // Same summation order, so bit-identical.
        prop_assert_eq!(a, b);
    }

    #[test]
    fn superposition_and_scaling(seed in 0u64..10_000, c in 0.0f64..8.0) {
        let bodies = random_bodies(seed);
        let mut strokes = three_strokes([8.0, 8.0, 8.0]);
        let particles = random_particles(seed + 2, 3, 10);
        let mut once = zeros(&bodies);
        accumulate_external_forces(&strokes, &particles, &bodies, &mut once);
        let doubled: Vec<_> = particles.iter().flat_map(|p| [*p, *p]).collect();
        let mut twice = zeros(&bodies);
        accumulate_external_forces(&strokes, &doubled, &bodies, &mut twice);
        for (a, b) in once.iter().flatten().zip(twice.iter().flatten()) {
            prop_assert!((*a * 2.0 - *b).norm() < 1e-12 * (1.0 + a.norm()));
        }
        for s in &mut strokes {
            s.strength *= c;
        }
        let mut scaled = zeros(&bodies);
        accumulate_external_forces(&strokes, &particles, &bodies, &mut scaled);
        for (a, b) in once.iter().flatten().zip(scaled.iter().flatten()) {
            prop_assert!((*a * c - *b).norm() < 1e-12 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn kernels_are_parallel_and_compact(px in -50.0f64..50.0, py in -50.0f64..50.0, qx in -50.0f64..50.0, qy in -50.0f64..50.0,
                                        s in 0.0f64..10.0, r in 0.1f64..60.0, a in 0.0f64..6.3) {
        let (p, q, d) = (Vec2::new(px, py), Vec2::new(qx, qy), Vec2::new(a.cos(), a.sin()));
        let (w, rep, att) = (wind_force(p, d, q, s, r), repel_force(p, q, s, r), attract_force(p, q, s, r));
        if (p - q).norm() >= r {
            prop_assert!(w == Vec2::zero() && rep == Vec2::zero() && att == Vec2::zero());
        }
        prop_assert!(w.cross(d).abs() < 1e-9);
        prop_assert!(rep.cross(q - p).abs() < 1e-9 * (1.0 + (q - p).norm()));
        prop_assert!(att.cross(p - q).abs() < 1e-9 * (1.0 + (q - p).norm()));
        prop_assert!(att.dot(p - q) >= 0.0 && rep.dot(q - p) >= 0.0);
    }

    #[test]
    fn particles_stay_on_path(seed in 0u64..1000) {
        let mut r = rng(seed);
        let path: Vec<_> = (0..4).map(|i| Vec2::new(i as f64 * 20.0, r.gen_range(-10.0..10.0))).collect();
        let mut s = EnergyStroke::new(StrokeKind::Wind, path, 1.0);
        s.particle_speed = r.gen_range(10.0..300.0);
        s.emit_rate = r.gen_range(1.0..100.0);
        let mut field = StrokeField::new(vec![s.clone()]);
        for k in 0..300 {
            field.advance(k as f64 * 1e-3, 1e-3);
            for p in field.particles() {
                prop_assert!(p.arc >= 0.0 && p.arc <= s.length());
                prop_assert!((p.direction.norm() - 1.0).abs() < 1e-9);
                let (pos, _) = s.locate(p.arc);
                prop_assert_eq!(pos, p.position);
            }
        }
    }
}
