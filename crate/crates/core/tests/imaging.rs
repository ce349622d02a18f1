#![allow(clippy::needless_range_loop)]

mod common;

use animflow::flowfield::FlowField;
use animflow::imaging::{
    extract_sketch, flow_magnitude_weights, forward_warp, gaussian_blur, gaussian_kernel, ImageBuffer, ImagingError,
    WeightMap, DEFAULT_SKETCH_K, DEFAULT_SKETCH_PHI, DEFAULT_SKETCH_SIGMA, DEFAULT_SKETCH_THRESHOLD,
};
use common::rng;
use proptest::prelude::*;
use rand::Rng;

fn gray(w: usize, h: usize, mut f: impl FnMut(usize, usize) -> f32) -> ImageBuffer {
    let mut s = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            s.push(f(c, r));
        }
    }
    ImageBuffer::new(w, h, 1, s).unwrap()
}

fn uniform_flow(w: usize, h: usize, u: f32, v: f32) -> FlowField {
    FlowField::from_components(w, h, vec![u; w * h], vec![v; w * h])
}

fn weights(w: usize, h: usize, vals: Vec<f32>) -> WeightMap {
    WeightMap { width: w, height: h, w: vals }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

#[test]
fn step_edge_sketch_follows_analytic_dog() {
    let edge = 20usize;
    let img = gray(40, 8, |c, _| if c >= edge { 1.0 } else { 0.0 });
    let out = extract_sketch(&img);
    let (s, k) = (DEFAULT_SKETCH_SIGMA as f64, DEFAULT_SKETCH_K as f64);
    // Continuous DoG of a unit step at x = edge, sampled at pixel centers.
    let u: Vec<f64> = (0..40)
        .map(|c| {
            let x = c as f64 + 0.5 - edge as f64;
            std_normal_cdf(x / s) - std_normal_cdf(x / (k * s))
        })
        .collect();
    let peak = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (tau, phi) = (DEFAULT_SKETCH_THRESHOLD as f64, DEFAULT_SKETCH_PHI as f64);
    for c in 0..40 {
        let n = -u[c] / peak;
        let want = if n <= tau { 1.0 } else { 1.0 - (phi * (n - tau)).tanh() };
        let got = out.get(c, 4, 0) as f64;
        assert!((got - want).abs() < 0.1, "column {c}: {got} vs {want}");
        let dist = (c as f64 + 0.5 - edge as f64).abs();
        if dist > 3.0 * s {
            assert_eq!(got, 1.0, "column {c} should be white");
        }
    }
    // The line sits on the dark side of the edge.
    assert!(out.get(edge - 1, 4, 0) < 0.2);
    assert_eq!(out.get(edge, 4, 0), 1.0);
}

#[test]
fn flat_image_gives_blank_sketch() {
    let img = ImageBuffer::filled(16, 9, 3, 0.4);
    assert!(extract_sketch(&img).samples().iter().all(|&v| v == 1.0));
}

#[test]
fn impulse_blur_matches_direct_kernel() {
    let img = gray(15, 15, |c, r| if (c, r) == (7, 7) { 1.0 } else { 0.0 });
    let out = gaussian_blur(&img, 1.0);
    let g = |i: i32, j: i32| (-((i * i + j * j) as f64) / 2.0).exp();
    let total: f64 = (-3..=3).flat_map(|i| (-3..=3).map(move |j| g(i, j))).sum();
    for r in 0..15i32 {
        for c in 0..15i32 {
            let (i, j) = (c - 7, r - 7);
            let want = if i.abs() <= 3 && j.abs() <= 3 { g(i, j) / total } else { 0.0 };
            assert!((out.get(c as usize, r as usize, 0) as f64 - want).abs() < 1e-6);
        }
    }
    assert_eq!(gaussian_kernel(1.0).len(), 7);
}

#[test]
fn blur_identities() {
    let mut r = rng(3);
    let img = gray(12, 10, |_, _| r.gen_range(0.0..1.0));
    assert_eq!(gaussian_blur(&img, 0.0), img);
    let flat = ImageBuffer::filled(9, 7, 3, 0.625);
    for s in [0.5, 1.0, 2.5] {
        assert!(gaussian_blur(&flat, s).samples().iter().all(|&v| (v - 0.625).abs() < 1e-6));
    }
}

#[test]
fn blur_preserves_mean_with_constant_margin() {
    let mut r = rng(4);
    // Content surrounded by a constant margin wider than the kernel radius.
    let img = gray(40, 36, |c, r_| {
        if (8..32).contains(&c) && (8..28).contains(&r_) {
            r.gen_range(0.0..1.0)
        } else {
            0.3
        }
    });
    let mean = |i: &ImageBuffer| i.samples().iter().map(|&v| v as f64).sum::<f64>() / i.samples().len() as f64;
    let out = gaussian_blur(&img, 2.0);
    assert!((mean(&out) - mean(&img)).abs() < 1e-6);
}

#[test]
fn magnitude_weights() {
    let w = flow_magnitude_weights(&uniform_flow(4, 3, 3.0, 4.0));
    assert!(w.w.iter().all(|&x| x == 5.0));
    assert!(flow_magnitude_weights(&FlowField::zeros(3, 3)).w.iter().all(|&x| x == 0.0));
    let mut r = rng(5);
    let (u, v): (Vec<f32>, Vec<f32>) = (0..50).map(|_| (r.gen_range(-9.0..9.0), r.gen_range(-9.0..9.0))).unzip();
    let f = FlowField::from_components(10, 5, u.clone(), v.clone());
    for (i, &m) in flow_magnitude_weights(&f).w.iter().enumerate() {
        let want = ((u[i] as f64).powi(2) + (v[i] as f64).powi(2)).sqrt();
        assert!((m as f64 - want).abs() < 1e-6 * want.max(1.0));
    }
}

#[test]
fn zero_flow_is_identity() {
    let mut r = rng(6);
    let img = ImageBuffer::new(11, 7, 3, (0..231).map(|_| r.gen_range(0.0..1.0)).collect()).unwrap();
    let wts = weights(11, 7, (0..77).map(|_| r.gen_range(0.0..20.0)).collect());
    let out = forward_warp(&img, &FlowField::zeros(11, 7), &wts, 10.0, &[0.0, 0.0, 0.0]).unwrap();
    for (a, b) in out.samples().iter().zip(img.samples()) {
        assert!((a - b).abs() <= 1e-7);
    }
}

#[test]
fn integer_shift_matches_index_shift() {
    let mut r = rng(7);
    let (w, h) = (20, 9);
    let img = gray(w, h, |_, _| r.gen_range(0.0..1.0));
    let flow = uniform_flow(w, h, 5.0, 0.0);
    let out = forward_warp(&img, &flow, &flow_magnitude_weights(&flow), 10.0, &[0.25]).unwrap();
    for row in 0..h {
        for col in 0..w {
            let want = if col < 5 { 0.25 } else { img.get(col - 5, row, 0) };
            assert_eq!(out.get(col, row, 0), want);
        }
    }
}

#[test]
fn heavier_splat_dominates() {
    // Pixel 0 (value 0.9, weight 10) moves onto pixel 2 (value 0.1, weight 0).
    let img = gray(3, 1, |c, _| [0.9, 0.5, 0.1][c]);
    let flow = FlowField::from_components(3, 1, vec![2.0, 0.0, 0.0], vec![0.0; 3]);
    let wts = weights(3, 1, vec![10.0, 0.0, 0.0]);
    let out = forward_warp(&img, &flow, &wts, 10.0, &[1.0]).unwrap();
    let (a, b) = ((10.0f64 * 10.0).exp(), 1.0f64);
    let want = (a * 0.9 + b * 0.1) / (a + b);
    assert!((out.get(2, 0, 0) as f64 - want).abs() < 1e-6);
    assert!((out.get(2, 0, 0) - 0.9).abs() < 1e-3);
    assert_eq!(out.get(0, 0, 0), 1.0);
    assert_eq!(out.get(1, 0, 0), 0.5);
}

#[test]
fn raising_alpha_moves_toward_the_heavier_source() {
    let img = gray(3, 1, |c, _| [0.8, 0.5, 0.2][c]);
    let flow = FlowField::from_components(3, 1, vec![2.0, 0.0, 0.0], vec![0.0; 3]);
    let wts = weights(3, 1, vec![2.0, 0.0, 1.0]);
    let mut prev = 0.0f32;
    for k in 0..=20 {
        let v = forward_warp(&img, &flow, &wts, k as f32 * 0.5, &[1.0]).unwrap().get(2, 0, 0);
        assert!(v >= prev && v <= 0.8 + 1e-7);
        prev = v;
    }
    assert!(prev > 0.79);
}

#[test]
fn mismatched_dimensions_are_reported() {
    let img = ImageBuffer::filled(4, 4, 1, 0.5);
    let e = forward_warp(&img, &FlowField::zeros(5, 4), &weights(5, 4, vec![0.0; 20]), 10.0, &[1.0]);
    match e {
        Err(ImagingError::DimensionMismatch { a_w, a_h, b_w, b_h, .. }) => assert_eq!((a_w, a_h, b_w, b_h), (4, 4, 5, 4)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn eight_bit_png_round_trip() {
    let img = ImageBuffer::new(16, 16, 3, (0..768).map(|i| (i % 256) as f32 / 255.0).collect()).unwrap();
    let back = ImageBuffer::decode_png(&img.encode_png().unwrap()).unwrap();
    assert_eq!(back.to_bytes(), img.to_bytes());
    assert_eq!(back.channels(), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn warp_output_stays_in_range(seed in any::<u64>(), bg in 0.0f32..1.0, alpha in 0.0f32..20.0) {
        let mut r = rng(seed);
        let (w, h) = (9, 7);
        let img = gray(w, h, |_, _| r.gen_range(0.2..0.7));
        let u: Vec<f32> = (0..w * h).map(|_| r.gen_range(-4.0..4.0)).collect();
        let v: Vec<f32> = (0..w * h).map(|_| r.gen_range(-4.0..4.0)).collect();
        let flow = FlowField::from_components(w, h, u, v);
        let out = forward_warp(&img, &flow, &flow_magnitude_weights(&flow), alpha, &[bg]).unwrap();
        let lo = img.samples().iter().cloned().fold(bg, f32::min);
        let hi = img.samples().iter().cloned().fold(bg, f32::max);
        for &s in out.samples() {
            prop_assert!(s >= lo - 1e-7 && s <= hi + 1e-7);
        }
    }

    #[test]
    fn sketch_stays_in_unit_range(seed in any::<u64>()) {
        let mut r = rng(seed);
        let img = ImageBuffer::new(12, 10, 3, (0..360).map(|_| r.gen_range(0.0..1.0)).collect()).unwrap();
        let s = extract_sketch(&img);
        prop_assert_eq!(s.channels(), 1);
        prop_assert!(s.samples().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
