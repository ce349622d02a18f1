//! Dense optical flow rasterized from mesh deformation, and Middlebury `.flo`
//! encoding.
//!
//! Pixel `(col, row)` has its center at `(col + 0.5, row + 0.5)` in the same
//! coordinates as the mesh.

use crate::geometry::TriMesh;
use crate::linalg::Vec2;
use crate::scalar::Real;
use rayon::prelude::*;
use std::io::{self, Read, Write};
use thiserror::Error;

/// Header tag: 202021.25 as a little-endian f32 is the bytes "PIEH".
pub const FLO_MAGIC: f32 = 202021.25;
pub const FLO_MAX_DIMENSION: i32 = 1 << 16;

/// Barycentric coordinates at or above this count as inside.
const INSIDE_TOLERANCE: f64 = -1e-9;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("not a .flo stream: magic {0} != 202021.25")]
    BadMagic(f32),
    #[error(".flo stream ended early")]
    TruncatedStream,
    #[error(".flo dimensions {width}x{height} out of range")]
    DimensionOverflow { width: i64, height: i64 },
    #[error("snapshot has {got} positions but mesh has {expected} vertices")]
    SnapshotMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f32>,
    v: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    /// Panics if the component lengths differ from `width * height`.
    pub fn from_components(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>) -> Self {
        assert_eq!(u.len(), width * height, "u length");
        assert_eq!(v.len(), width * height, "v length");
        FlowField { width, height, u, v }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    pub fn get(&self, col: usize, row: usize) -> (f32, f32) {
        let i = row * self.width + col;
        (self.u[i], self.v[i])
    }

    pub fn set(&mut self, col: usize, row: usize, d: (f32, f32)) {
        let i = row * self.width + col;
        self.u[i] = d.0;
        self.v[i] = d.1;
    }

    pub fn max_magnitude(&self) -> f32 {
        self.u
            .iter()
            .zip(&self.v)
            .map(|(u, v)| u.hypot(*v))
            .fold(0.0, f32::max)
    }

    /// Copies every pixel that `other` covers (per `covered`) over this field.
    pub fn overlay(&mut self, other: &FlowField, covered: &[bool]) {
        for (i, &c) in covered.iter().enumerate() {
            if c {
                self.u[i] = other.u[i];
                self.v[i] = other.v[i];
            }
        }
    }
}

fn pixel_center<T: Real>(col: usize, row: usize) -> Vec2<T> {
    Vec2::new(
        T::from_usize_lossy(col) + T::half(),
        T::from_usize_lossy(row) + T::half(),
    )
}

/// Barycentric weights of `p` in rest triangle `t`, or `None` if outside.
fn barycentric<T: Real>(mesh: &TriMesh<T>, t: usize, p: Vec2<T>) -> Option<[T; 3]> {
    let x0 = mesh.rest_positions()[mesh.triangles()[t][0]];
    let l = mesh.inv_rest_shape()[t].mul_vec(p - x0);
    let b = [T::one() - l.x - l.y, l.x, l.y];
    let tol = T::lit(INSIDE_TOLERANCE);
    b.iter().all(|&w| w >= tol).then_some(b)
}

fn displacement<T: Real>(mesh: &TriMesh<T>, x: &[Vec2<T>], t: usize, b: [T; 3]) -> (f32, f32) {
    let tri = mesh.triangles()[t];
    let rest = mesh.rest_positions();
    let mut d = Vec2::zero();
    for k in 0..3 {
        d += (x[tri[k]] - rest[tri[k]]) * b[k];
    }
    (d.x.to_f64_lossy() as f32, d.y.to_f64_lossy() as f32)
}

/// Per-row lists of triangles whose rest bounding box spans the row's pixel
/// centers, in ascending triangle order.
fn row_buckets<T: Real>(mesh: &TriMesh<T>, height: usize) -> Vec<Vec<usize>> {
    let mut rows = vec![Vec::new(); height];
    let pos = mesh.rest_positions();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let ys = tri.map(|v| pos[v].y.to_f64_lossy());
        let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // Pixel center y = row + 0.5; pad by one row against round-off.
        let r0 = ((lo - 0.5).floor() - 1.0).max(0.0) as usize;
        let r1 = ((hi - 0.5).ceil() + 1.0).min(height as f64 - 1.0);
        if r1 < 0.0 {
            continue;
        }
        for row in rows.iter_mut().take(r1 as usize + 1).skip(r0) {
            row.push(t);
        }
    }
    rows
}

/// Flow of one body plus the mask of pixels its rest mesh covers.
pub fn rasterize_flow_with_coverage<T: Real>(
    mesh: &TriMesh<T>,
    positions: &[Vec2<T>],
    width: usize,
    height: usize,
) -> Result<(FlowField, Vec<bool>), FlowError> {
    check_len(mesh, positions)?;
    let buckets = row_buckets(mesh, height);
    let rows: Vec<Vec<Option<(f32, f32)>>> = buckets
        .par_iter()
        .enumerate()
        .map(|(row, cands)| {
            (0..width)
                .map(|col| {
                    let p = pixel_center::<T>(col, row);
                    cands.iter().find_map(|&t| {
                        barycentric(mesh, t, p).map(|b| displacement(mesh, positions, t, b))
                    })
                })
                .collect()
        })
        .collect();
    Ok(assemble(width, height, rows))
}

fn assemble(width: usize, height: usize, rows: Vec<Vec<Option<(f32, f32)>>>) -> (FlowField, Vec<bool>) {
    let mut field = FlowField::zeros(width, height);
    let mut covered = vec![false; width * height];
    for (row, vals) in rows.into_iter().enumerate() {
        for (col, d) in vals.into_iter().enumerate() {
            if let Some(d) = d {
                field.set(col, row, d);
                covered[row * width + col] = true;
            }
        }
    }
    (field, covered)
}

fn check_len<T: Real>(mesh: &TriMesh<T>, positions: &[Vec2<T>]) -> Result<(), FlowError> {
    if positions.len() != mesh.vertex_count() {
        return Err(FlowError::SnapshotMismatch {
            got: positions.len(),
            expected: mesh.vertex_count(),
        });
    }
    Ok(())
}

/// d(X_p) = Σ b_k (x_k − X_k) for the lowest-index rest triangle containing
/// the pixel center X_p, zero elsewhere.
pub fn rasterize_flow<T: Real>(
    mesh: &TriMesh<T>,
    positions: &[Vec2<T>],
    width: usize,
    height: usize,
) -> Result<FlowField, FlowError> {
    rasterize_flow_with_coverage(mesh, positions, width, height).map(|(f, _)| f)
}

/// All-triangles scan, the reference for [`rasterize_flow`].
pub fn rasterize_flow_brute<T: Real>(
    mesh: &TriMesh<T>,
    positions: &[Vec2<T>],
    width: usize,
    height: usize,
) -> Result<FlowField, FlowError> {
    check_len(mesh, positions)?;
    let rows = (0..height)
        .map(|row| {
            (0..width)
                .map(|col| {
                    let p = pixel_center::<T>(col, row);
                    (0..mesh.triangle_count()).find_map(|t| {
                        barycentric(mesh, t, p).map(|b| displacement(mesh, positions, t, b))
                    })
                })
                .collect()
        })
        .collect();
    Ok(assemble(width, height, rows).0)
}

/// Rasterizes several bodies onto one canvas; later bodies overwrite earlier
/// ones where their rest meshes overlap. Returns the field and the number of
/// pixels claimed by more than one body.
pub fn rasterize_bodies<T: Real>(
    meshes: &[&TriMesh<T>],
    positions: &[Vec<Vec2<T>>],
    width: usize,
    height: usize,
) -> Result<(FlowField, usize), FlowError> {
    let mut field = FlowField::zeros(width, height);
    let mut claimed = vec![false; width * height];
    let mut overlap = 0;
    for (mesh, x) in meshes.iter().zip(positions) {
        let (f, cov) = rasterize_flow_with_coverage(mesh, x, width, height)?;
        for (c, &n) in claimed.iter_mut().zip(&cov) {
            if n {
                overlap += usize::from(*c);
                *c = true;
            }
        }
        field.overlay(&f, &cov);
    }
    Ok((field, overlap))
}

pub fn write_flo<W: Write>(field: &FlowField, mut out: W) -> Result<(), FlowError> {
    let mut buf = Vec::with_capacity(12 + 8 * field.u.len());
    buf.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    buf.extend_from_slice(&(field.width as i32).to_le_bytes());
    buf.extend_from_slice(&(field.height as i32).to_le_bytes());
    for (u, v) in field.u.iter().zip(&field.v) {
        buf.extend_from_slice(&u.to_le_bytes());
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn encode_flo(field: &FlowField) -> Vec<u8> {
    let mut buf = Vec::new();
    write_flo(field, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

fn read_exact_or_truncated<R: Read>(src: &mut R, buf: &mut [u8]) -> Result<(), FlowError> {
    src.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FlowError::TruncatedStream,
        _ => FlowError::Io(e),
    })
}

pub fn read_flo<R: Read>(mut src: R) -> Result<FlowField, FlowError> {
    let mut header = [0u8; 12];
    read_exact_or_truncated(&mut src, &mut header[..4])?;
    let magic = f32::from_le_bytes(header[0..4].try_into().unwrap());
    if magic != FLO_MAGIC {
        return Err(FlowError::BadMagic(magic));
    }
    read_exact_or_truncated(&mut src, &mut header[4..])?;
    let w = i32::from_le_bytes(header[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(header[8..12].try_into().unwrap());
    if w <= 0 || h <= 0 || w > FLO_MAX_DIMENSION || h > FLO_MAX_DIMENSION {
        return Err(FlowError::DimensionOverflow {
            width: w as i64,
            height: h as i64,
        });
    }
    let (width, height) = (w as usize, h as usize);
    let n = width * height;
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut row = vec![0u8; 8 * width];
    for _ in 0..height {
        read_exact_or_truncated(&mut src, &mut row)?;
        for px in row.chunks_exact(8) {
            u.push(f32::from_le_bytes(px[0..4].try_into().unwrap()));
            v.push(f32::from_le_bytes(px[4..8].try_into().unwrap()));
        }
    }
    Ok(FlowField { width, height, u, v })
}

pub fn load_flo(path: impl AsRef<std::path::Path>) -> Result<FlowField, FlowError> {
    read_flo(io::BufReader::new(std::fs::File::open(path)?))
}

pub fn save_flo(field: &FlowField, path: impl AsRef<std::path::Path>) -> Result<(), FlowError> {
    std::fs::write(path, encode_flo(field))?;
    Ok(())
}
