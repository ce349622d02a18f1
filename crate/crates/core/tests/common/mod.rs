#![allow(dead_code)]

use animflow::geometry::TriMesh;
use animflow::{Mat2, Vec2};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Jittered `nx × ny` vertex grid split into two triangles per cell.
pub fn jittered_grid(rng: &mut StdRng, nx: usize, ny: usize, h: f64, jitter: f64) -> TriMesh<f64> {
    let mut pos = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let dx = rng.gen_range(-jitter..=jitter) * h;
            let dy = rng.gen_range(-jitter..=jitter) * h;
            pos.push(Vec2::new(i as f64 * h + dx, j as f64 * h + dy));
        }
    }
    let mut tris = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let v = j * nx + i;
            tris.push([v, v + 1, v + nx + 1]);
            tris.push([v, v + nx + 1, v + nx]);
        }
    }
    let mut edges = Vec::new();
    for i in 0..nx - 1 {
        edges.push([i, i + 1]);
        edges.push([(ny - 1) * nx + i + 1, (ny - 1) * nx + i]);
    }
    for j in 0..ny - 1 {
        edges.push([j * nx + nx - 1, (j + 1) * nx + nx - 1]);
        edges.push([(j + 1) * nx, j * nx]);
    }
    TriMesh::new(pos, tris, edges).expect("jittered grid stays positively oriented")
}

/// Random mesh with at most 20 vertices.
pub fn random_mesh(rng: &mut StdRng) -> TriMesh<f64> {
    let nx = rng.gen_range(2..=5);
    let ny = rng.gen_range(2..=(20 / nx).min(5));
    let h = rng.gen_range(0.5..3.0);
    jittered_grid(rng, nx, ny, h, 0.2)
}

/// Positions displaced by up to `amount` (relative to 1) in each coordinate.
pub fn perturb(rng: &mut StdRng, x: &[Vec2<f64>], amount: f64) -> Vec<Vec2<f64>> {
    x.iter()
        .map(|p| {
            *p + Vec2::new(
                rng.gen_range(-amount..=amount),
                rng.gen_range(-amount..=amount),
            )
        })
        .collect()
}

/// Rotation factor of the SVD F = UΣVᵀ with the sign of the smaller singular
/// value flipped when det F < 0, so the result is a proper rotation.
pub fn svd_rotation(f: &Mat2<f64>) -> Mat2<f64> {
    let m = nalgebra::Matrix2::new(f.m00, f.m01, f.m10, f.m11);
    let svd = m.svd(true, true);
    let mut u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    if (u * v_t).determinant() < 0.0 {
        // Singular values come sorted descending; flip the smaller one.
        let s = &svd.singular_values;
        let k = if s[0] < s[1] { 0 } else { 1 };
        u.set_column(k, &(-u.column(k)));
    }
    let r = u * v_t;
    Mat2::new(r[(0, 0)], r[(0, 1)], r[(1, 0)], r[(1, 1)])
}

pub fn random_matrix(rng: &mut StdRng, scale: f64) -> Mat2<f64> {
    Mat2::new(
        rng.gen_range(-scale..scale),
        rng.gen_range(-scale..scale),
        rng.gen_range(-scale..scale),
        rng.gen_range(-scale..scale),
    )
}
