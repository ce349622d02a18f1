//! Mask → contour → boundary samples → triangle mesh.
//!
//! Coordinates are pixels with the origin at the top-left image corner, x to
//! the right and y down. Pixel `(col, row)` covers `[col, col+1] × [row, row+1]`
//! and has its center at `(col + 0.5, row + 0.5)`. Orientation signs always use
//! [`orient2d`](crate::linalg::orient2d): a "positive" polygon or triangle turns
//! counter-clockwise when y points up, i.e. clockwise on screen.

mod contour;
mod mesher;

pub use contour::{extract_contours, sample_boundary};
pub use mesher::{triangulate, triangulate_with, MeshQuality};

use crate::linalg::{orient2d, polygon_signed_area, Mat2, Vec2};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Triangles with less area than this (pixels²) are rejected at build time.
pub const AREA_EPSILON: f64 = 1e-6;

pub const DEFAULT_SPACING: f64 = 12.0;
pub const DEFAULT_MAX_AREA: f64 = 300.0;
pub const DEFAULT_MIN_ANGLE: f64 = 20.0;
/// Largest minimum-angle bound accepted by the refiner.
pub const MAX_MIN_ANGLE: f64 = 28.0;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("mask has no foreground pixel")]
    EmptyMask,
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error("could not decode mask image: {0}")]
    Image(String),
    #[error("spacing {spacing} leaves fewer than 3 samples on a contour of perimeter {perimeter}")]
    SpacingTooCoarse { perimeter: f64, spacing: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate boundary: {0}")]
    DegenerateBoundary(String),
    #[error("refinement inserted more than {cap} Steiner points")]
    RefinementDiverged { cap: usize },
    #[error("triangle {index} has signed area {area} (minimum {AREA_EPSILON})")]
    DegenerateTriangle { index: usize, area: f64 },
    #[error("triangle {index} references vertex {vertex} of {count}")]
    BadIndex {
        index: usize,
        vertex: usize,
        count: usize,
    },
}

/// Binary occupancy grid, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidMask(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if bits.len() != width * height {
            return Err(GeometryError::InvalidMask(format!(
                "expected {} bits for {width}x{height}, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Mask {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self, GeometryError> {
        let mut bits = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                bits.push(f(col, row));
            }
        }
        Mask::new(width, height, bits)
    }

    /// Threshold 8-bit luminance: foreground iff value ≥ 128.
    pub fn from_luma8(width: usize, height: usize, luma: &[u8]) -> Result<Self, GeometryError> {
        Mask::new(width, height, luma.iter().map(|&v| v >= 128).collect())
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self, GeometryError> {
        let img = image::load_from_memory(bytes)
            .map_err(|e| GeometryError::Image(e.to_string()))?
            .to_luma8();
        let (w, h) = img.dimensions();
        Mask::from_luma8(w as usize, h as usize, img.as_raw())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self, GeometryError> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|e| GeometryError::Image(format!("{}: {e}", path.display())))?
            .to_luma8();
        let (w, h) = img.dimensions();
        Mask::from_luma8(w as usize, h as usize, img.as_raw())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Out-of-bounds reads are background.
    #[inline]
    pub fn get(&self, col: isize, row: isize) -> bool {
        if col < 0 || row < 0 || col as usize >= self.width || row as usize >= self.height {
            return false;
        }
        self.bits[row as usize * self.width + col as usize]
    }

    /// Whether the pixel containing point `p` is foreground.
    pub fn contains_point<T: Real>(&self, p: Vec2<T>) -> bool {
        let x = p.x.floor().to_f64_lossy();
        let y = p.y.floor().to_f64_lossy();
        if !x.is_finite() || !y.is_finite() {
            return false;
        }
        self.get(x as isize, y as isize)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// A closed, simple, positively oriented polygon in pixel coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Contour<T> {
    points: Vec<Vec2<T>>,
}

impl<T: Real> Contour<T> {
    /// Wraps a point list, reorienting it to positive signed area.
    pub fn new(mut points: Vec<Vec2<T>>) -> Result<Self, GeometryError> {
        if points.len() < 3 {
            return Err(GeometryError::DegenerateBoundary(format!(
                "contour needs at least 3 points, got {}",
                points.len()
            )));
        }
        let n = points.len();
        for i in 0..n {
            if points[i] == points[(i + 1) % n] {
                return Err(GeometryError::DegenerateBoundary(format!(
                    "consecutive points {i} and {} coincide",
                    (i + 1) % n
                )));
            }
        }
        if polygon_signed_area(&points) < T::zero() {
            points.reverse();
        }
        Ok(Contour { points })
    }

    pub fn points(&self) -> &[Vec2<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn perimeter(&self) -> T {
        let n = self.points.len();
        (0..n).fold(T::zero(), |acc, i| {
            acc + (self.points[(i + 1) % n] - self.points[i]).norm()
        })
    }

    pub fn area(&self) -> T {
        polygon_signed_area(&self.points)
    }
}

/// Rest-space triangle mesh of one body.
///
/// Invariants established by [`TriMesh::new`]: every triangle is positively
/// oriented with area ≥ [`AREA_EPSILON`], and `inv_rest_shape[i]` inverts the
/// rest edge matrix `[X₁−X₀, X₂−X₀]` of triangle `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh<T> {
    rest_positions: Vec<Vec2<T>>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<[usize; 2]>,
    rest_areas: Vec<T>,
    inv_rest_shape: Vec<Mat2<T>>,
}

impl<T: Real> TriMesh<T> {
    pub fn new(
        rest_positions: Vec<Vec2<T>>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<[usize; 2]>,
    ) -> Result<Self, GeometryError> {
        let count = rest_positions.len();
        let mut rest_areas = Vec::with_capacity(triangles.len());
        let mut inv_rest_shape = Vec::with_capacity(triangles.len());
        for (index, tri) in triangles.iter().enumerate() {
            if let Some(&vertex) = tri.iter().find(|&&v| v >= count) {
                return Err(GeometryError::BadIndex {
                    index,
                    vertex,
                    count,
                });
            }
            let [a, b, c] = tri.map(|v| rest_positions[v]);
            let area = orient2d(a, b, c) * T::half();
            if !(area >= T::lit(AREA_EPSILON)) {
                return Err(GeometryError::DegenerateTriangle {
                    index,
                    area: area.to_f64_lossy(),
                });
            }
            let dm = Mat2::from_cols(b - a, c - a);
            let inv = dm.inverse().ok_or(GeometryError::DegenerateTriangle {
                index,
                area: area.to_f64_lossy(),
            })?;
            rest_areas.push(area);
            inv_rest_shape.push(inv);
        }
        for e in &boundary_edges {
            if let Some(&vertex) = e.iter().find(|&&v| v >= count) {
                return Err(GeometryError::BadIndex {
                    index: usize::MAX,
                    vertex,
                    count,
                });
            }
        }
        Ok(TriMesh {
            rest_positions,
            triangles,
            boundary_edges,
            rest_areas,
            inv_rest_shape,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.rest_positions.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn rest_positions(&self) -> &[Vec2<T>] {
        &self.rest_positions
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    pub fn rest_areas(&self) -> &[T] {
        &self.rest_areas
    }

    pub fn inv_rest_shape(&self) -> &[Mat2<T>] {
        &self.inv_rest_shape
    }

    pub fn total_area(&self) -> T {
        self.rest_areas.iter().fold(T::zero(), |a, &b| a + b)
    }

    /// Smallest interior angle of triangle `t`, in degrees.
    pub fn min_angle_deg(&self, t: usize) -> T {
        let [a, b, c] = self.triangles[t].map(|v| self.rest_positions[v]);
        triangle_min_angle_deg(a, b, c)
    }

    pub fn centroid(&self, t: usize) -> Vec2<T> {
        let [a, b, c] = self.triangles[t].map(|v| self.rest_positions[v]);
        (a + b + c) / T::lit(3.0)
    }

    /// Index of the rest vertex nearest to `p` (lowest index on ties).
    pub fn nearest_vertex(&self, p: Vec2<T>) -> Option<usize> {
        let mut best: Option<(usize, T)> = None;
        for (i, &x) in self.rest_positions.iter().enumerate() {
            let d = (x - p).norm_squared();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn to_document(&self) -> MeshDocument {
        MeshDocument {
            vertices: self
                .rest_positions
                .iter()
                .map(|p| [p.x.to_f64_lossy(), p.y.to_f64_lossy()])
                .collect(),
            triangles: self.triangles.clone(),
            boundary_edges: self.boundary_edges.clone(),
        }
    }
}

/// Plain serializable form of a mesh, used for mesh JSON output and the
/// session service payloads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshDocument {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<[usize; 2]>,
}

pub(crate) fn triangle_min_angle_deg<T: Real>(a: Vec2<T>, b: Vec2<T>, c: Vec2<T>) -> T {
    let angle = |p: Vec2<T>, q: Vec2<T>, r: Vec2<T>| {
        let u = q - p;
        let v = r - p;
        u.cross(v).abs().atan2(u.dot(v))
    };
    let m = angle(a, b, c).min(angle(b, c, a)).min(angle(c, a, b));
    m.to_degrees()
}

/// Convenience: contours → samples → mesh for every component of `mask`.
pub fn mesh_mask<T: Real>(
    mask: &Mask,
    spacing: f64,
    quality: &MeshQuality,
) -> Result<Vec<TriMesh<T>>, GeometryError> {
    extract_contours::<T>(mask)?
        .iter()
        .map(|c| {
            let samples = sample_boundary(c, spacing)?;
            triangulate_with::<T>(&samples, quality)
        })
        .collect()
}
