//! Sketch extraction, Gaussian blur and softmax forward warping.

use crate::flowfield::FlowField;
use image::{ColorType, ImageEncoder};
use std::path::Path;
use thiserror::Error;

pub const DEFAULT_SKETCH_SIGMA: f32 = 1.0;
pub const DEFAULT_SKETCH_K: f32 = 1.6;
pub const DEFAULT_SKETCH_THRESHOLD: f32 = 0.15;
/// Steepness of the soft threshold.
pub const DEFAULT_SKETCH_PHI: f32 = 10.0;
pub const DEFAULT_ALPHA: f32 = 10.0;

/// Targets whose accumulated splat weight stays below this get background.
const MIN_DENOMINATOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("dimension mismatch: {what} is {a_w}x{a_h} but {other} is {b_w}x{b_h}")]
    DimensionMismatch {
        what: &'static str,
        a_w: usize,
        a_h: usize,
        other: &'static str,
        b_w: usize,
        b_h: usize,
    },
    #[error("unsupported channel count {0}")]
    Channels(usize),
    #[error("invalid image: {0}")]
    Invalid(String),
    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    samples: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        samples: Vec<f32>,
    ) -> Result<Self, ImagingError> {
        if channels != 1 && channels != 3 {
            return Err(ImagingError::Channels(channels));
        }
        if width == 0 || height == 0 || samples.len() != width * height * channels {
            return Err(ImagingError::Invalid(format!(
                "{width}x{height}x{channels} image with {} samples",
                samples.len()
            )));
        }
        if samples.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(ImagingError::Invalid("samples must lie in [0, 1]".into()));
        }
        Ok(ImageBuffer {
            width,
            height,
            channels,
            samples,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        ImageBuffer::new(width, height, channels, vec![value; width * height * channels])
            .expect("valid fill")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn get(&self, col: usize, row: usize, ch: usize) -> f32 {
        self.samples[(row * self.width + col) * self.channels + ch]
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self, ImagingError> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
        let (channels, raw) = match img.color() {
            ColorType::L8 | ColorType::L16 | ColorType::La8 | ColorType::La16 => {
                (1, img.to_luma8().into_raw())
            }
            _ => (3, img.to_rgb8().into_raw()),
        };
        ImageBuffer::new(
            img.width() as usize,
            img.height() as usize,
            channels,
            raw.iter().map(|&b| b as f32 / 255.0).collect(),
        )
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self, ImagingError> {
        Self::decode_png(&std::fs::read(path)?)
    }

    /// 8-bit quantized samples, `round(255·v)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.samples
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, ImagingError> {
        let mut out = Vec::new();
        let color = if self.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::codecs::png::PngEncoder::new(&mut out).write_image(
            &self.to_bytes(),
            self.width as u32,
            self.height as u32,
            color,
        )?;
        Ok(out)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), ImagingError> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }

    /// Rec. 601 luminance.
    pub fn to_luma(&self) -> ImageBuffer {
        if self.channels == 1 {
            return self.clone();
        }
        let samples = self
            .samples
            .chunks_exact(3)
            .map(|c| (0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]).clamp(0.0, 1.0))
            .collect();
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 1,
            samples,
        }
    }

    /// Nearest-neighbour downscale so the longer side is at most `max_side`.
    pub fn downsample(&self, max_side: usize) -> ImageBuffer {
        let long = self.width.max(self.height);
        if long <= max_side {
            return self.clone();
        }
        let w = (self.width * max_side / long).max(1);
        let h = (self.height * max_side / long).max(1);
        let mut samples = Vec::with_capacity(w * h * self.channels);
        for r in 0..h {
            let sr = r * self.height / h;
            for c in 0..w {
                let sc = c * self.width / w;
                for ch in 0..self.channels {
                    samples.push(self.get(sc, sr, ch));
                }
            }
        }
        ImageBuffer {
            width: w,
            height: h,
            channels: self.channels,
            samples,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightMap {
    pub width: usize,
    pub height: usize,
    pub w: Vec<f32>,
}

/// Normalized 1D Gaussian taps for radius ceil(3σ).
pub fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let r = (3.0 * sigma).ceil() as i32;
    let two_s2 = 2.0 * (sigma as f64) * (sigma as f64);
    let taps: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / two_s2).exp()).collect();
    let sum: f64 = taps.iter().sum();
    taps.iter().map(|t| (t / sum) as f32).collect()
}

fn convolve_planes(
    src: &[f32],
    width: usize,
    height: usize,
    channels: usize,
    k: &[f32],
    horizontal: bool,
) -> Vec<f32> {
    let r = (k.len() / 2) as isize;
    let mut out = vec![0.0f32; src.len()];
    for row in 0..height {
        for col in 0..width {
            for ch in 0..channels {
                let mut acc = 0.0f32;
                for (j, &kv) in k.iter().enumerate() {
                    let off = j as isize - r;
                    let (c, rr) = if horizontal {
                        ((col as isize + off).clamp(0, width as isize - 1) as usize, row)
                    } else {
                        (col, (row as isize + off).clamp(0, height as isize - 1) as usize)
                    };
                    acc += kv * src[(rr * width + c) * channels + ch];
                }
                out[(row * width + col) * channels + ch] = acc;
            }
        }
    }
    out
}

fn blur_samples(src: &[f32], width: usize, height: usize, channels: usize, sigma: f32) -> Vec<f32> {
    if !(sigma > 0.0) {
        return src.to_vec();
    }
    let k = gaussian_kernel(sigma);
    let tmp = convolve_planes(src, width, height, channels, &k, true);
    convolve_planes(&tmp, width, height, channels, &k, false)
}

/// Separable Gaussian blur, clamp-to-edge; σ = 0 returns the input.
pub fn gaussian_blur(image: &ImageBuffer, sigma: f32) -> ImageBuffer {
    let mut samples = blur_samples(&image.samples, image.width, image.height, image.channels, sigma);
    for s in &mut samples {
        *s = s.clamp(0.0, 1.0);
    }
    ImageBuffer {
        samples,
        ..image.clone()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SketchParams {
    pub sigma: f32,
    pub k: f32,
    pub threshold: f32,
    pub phi: f32,
}

impl Default for SketchParams {
    fn default() -> Self {
        SketchParams {
            sigma: DEFAULT_SKETCH_SIGMA,
            k: DEFAULT_SKETCH_K,
            threshold: DEFAULT_SKETCH_THRESHOLD,
            phi: DEFAULT_SKETCH_PHI,
        }
    }
}

/// Difference-of-Gaussians line drawing: dark lines on white.
///
/// u = G_σ ∗ L − G_kσ ∗ L on the luminance L, scaled by max |u|. With
/// n = −u / max|u| (positive on the dark side of an edge) the output is 1
/// where n ≤ τ and 1 − tanh(φ(n − τ)) above. Flat images give all white.
pub fn extract_sketch_with(image: &ImageBuffer, p: &SketchParams) -> ImageBuffer {
    let luma = image.to_luma();
    let (w, h) = (luma.width, luma.height);
    let g1 = blur_samples(&luma.samples, w, h, 1, p.sigma);
    let g2 = blur_samples(&luma.samples, w, h, 1, p.sigma * p.k);
    let u: Vec<f32> = g1.iter().zip(&g2).map(|(a, b)| a - b).collect();
    let peak = u.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    let samples = if peak < 1e-6 {
        vec![1.0; w * h]
    } else {
        u.iter()
            .map(|&v| {
                let n = -v / peak;
                if n <= p.threshold {
                    1.0
                } else {
                    (1.0 - (p.phi * (n - p.threshold)).tanh()).clamp(0.0, 1.0)
                }
            })
            .collect()
    };
    ImageBuffer {
        width: w,
        height: h,
        channels: 1,
        samples,
    }
}

pub fn extract_sketch(image: &ImageBuffer) -> ImageBuffer {
    extract_sketch_with(image, &SketchParams::default())
}

/// w(p) = ‖F(p)‖₂.
pub fn flow_magnitude_weights(flow: &FlowField) -> WeightMap {
    WeightMap {
        width: flow.width(),
        height: flow.height(),
        w: flow
            .u()
            .iter()
            .zip(flow.v())
            .map(|(u, v)| (u * u + v * v).sqrt())
            .collect(),
    }
}

/// Softmax forward splatting.
///
/// Source pixel p lands at p + F(p) and spreads bilinear mass over the four
/// surrounding pixels with importance exp(α(w(p) − m_t)), where m_t is the
/// largest weight reaching target t. Shifting the exponent per target leaves
/// every target's normalized blend unchanged while keeping the largest term at
/// exp(0). Targets receiving less than 1e-8 total weight get `background`.
pub fn forward_warp(
    image: &ImageBuffer,
    flow: &FlowField,
    weights: &WeightMap,
    alpha: f32,
    background: &[f32],
) -> Result<ImageBuffer, ImagingError> {
    let (w, h, ch) = (image.width, image.height, image.channels);
    if flow.width() != w || flow.height() != h {
        return Err(ImagingError::DimensionMismatch {
            what: "image",
            a_w: w,
            a_h: h,
            other: "flow",
            b_w: flow.width(),
            b_h: flow.height(),
        });
    }
    if weights.width != w || weights.height != h {
        return Err(ImagingError::DimensionMismatch {
            what: "image",
            a_w: w,
            a_h: h,
            other: "weights",
            b_w: weights.width,
            b_h: weights.height,
        });
    }
    if background.len() != ch {
        return Err(ImagingError::Channels(background.len()));
    }
    let alpha = alpha as f64;

    // Each splat: (target index, bilinear mass, source index).
    let mut splats: Vec<(usize, f64, usize)> = Vec::with_capacity(4 * w * h);
    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            let tx = col as f64 + flow.u()[i] as f64;
            let ty = row as f64 + flow.v()[i] as f64;
            if !tx.is_finite() || !ty.is_finite() {
                continue;
            }
            let (x0, y0) = (tx.floor(), ty.floor());
            let (fx, fy) = (tx - x0, ty - y0);
            for (dx, dy, m) in [
                (0.0, 0.0, (1.0 - fx) * (1.0 - fy)),
                (1.0, 0.0, fx * (1.0 - fy)),
                (0.0, 1.0, (1.0 - fx) * fy),
                (1.0, 1.0, fx * fy),
            ] {
                let (x, y) = (x0 + dx, y0 + dy);
                if m > 0.0 && x >= 0.0 && y >= 0.0 && x < w as f64 && y < h as f64 {
                    splats.push((y as usize * w + x as usize, m, i));
                }
            }
        }
    }

    let mut peak = vec![f64::NEG_INFINITY; w * h];
    for &(t, _, s) in &splats {
        peak[t] = peak[t].max(weights.w[s] as f64);
    }
    let mut num = vec![0.0f64; w * h * ch];
    let mut den = vec![0.0f64; w * h];
    for &(t, m, s) in &splats {
        let z = m * (alpha * (weights.w[s] as f64 - peak[t])).exp();
        den[t] += z;
        for c in 0..ch {
            num[t * ch + c] += z * image.samples[s * ch + c] as f64;
        }
    }
    let mut samples = vec![0.0f32; w * h * ch];
    for t in 0..w * h {
        for c in 0..ch {
            samples[t * ch + c] = if den[t] < MIN_DENOMINATOR {
                background[c]
            } else {
                ((num[t * ch + c] / den[t]) as f32).clamp(0.0, 1.0)
            };
        }
    }
    Ok(ImageBuffer {
        width: w,
        height: h,
        channels: ch,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> ImageBuffer {
        let s = (0..w * h).map(|i| (i % 7) as f32 / 6.0).collect();
        ImageBuffer::new(w, h, 1, s).unwrap()
    }

    #[test]
    fn blur_identity_and_dc() {
        let img = ramp(9, 5);
        assert_eq!(gaussian_blur(&img, 0.0), img);
        let c = ImageBuffer::filled(8, 8, 3, 0.37);
        for s in gaussian_blur(&c, 2.3).samples() {
            assert!((s - 0.37).abs() < 1e-6);
        }
    }

    #[test]
    fn kernel_is_normalized() {
        let k = gaussian_kernel(1.0);
        assert_eq!(k.len(), 7);
        assert!((k.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_image_sketch_is_white() {
        let s = extract_sketch(&ImageBuffer::filled(16, 16, 3, 0.4));
        assert!(s.samples().iter().all(|&v| v == 1.0));
        assert_eq!(s.channels(), 1);
    }

    #[test]
    fn weights_are_magnitudes() {
        let f = FlowField::from_components(2, 1, vec![3.0, 0.0], vec![4.0, 0.0]);
        assert_eq!(flow_magnitude_weights(&f).w, vec![5.0, 0.0]);
    }

    #[test]
    fn zero_flow_is_identity() {
        let img = ramp(6, 4);
        let f = FlowField::zeros(6, 4);
        let out = forward_warp(&img, &f, &flow_magnitude_weights(&f), 10.0, &[1.0]).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn dimension_mismatch() {
        let img = ramp(6, 4);
        let f = FlowField::zeros(5, 4);
        let e = forward_warp(&img, &f, &flow_magnitude_weights(&f), 10.0, &[1.0]);
        assert!(matches!(e, Err(ImagingError::DimensionMismatch { .. })));
    }

    #[test]
    fn png_roundtrip_gray_and_rgb() {
        for ch in [1, 3] {
            let s = (0..4 * 3 * ch).map(|i| (i * 17 % 256) as f32 / 255.0).collect();
            let img = ImageBuffer::new(4, 3, ch, s).unwrap();
            let back = ImageBuffer::decode_png(&img.encode_png().unwrap()).unwrap();
            assert_eq!(back.channels(), ch);
            assert_eq!(back.to_bytes(), img.to_bytes());
        }
    }

    #[test]
    fn downsample_bounds_long_side() {
        let d = ramp(600, 300).downsample(256);
        assert_eq!((d.width(), d.height()), (256, 128));
    }
}
