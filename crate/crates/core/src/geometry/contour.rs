//! Marching-squares boundary tracing and uniform arc-length resampling.
//!
//! Cells of the marching grid have pixel centers at their corners, so every
//! crossing lies at the midpoint of a pixel edge. Foreground is 4-connected:
//! saddle cells separate their two foreground corners. Under that rule each
//! 4-connected component yields exactly one outer loop plus one loop per hole,
//! and loops never share a crossing, so every traced loop is a simple polygon.

use super::{Contour, GeometryError, Mask};
use crate::linalg::{orient2d, polygon_signed_area, Vec2};
use crate::scalar::Real;

const NONE: usize = usize::MAX;

/// Cell corners in order top-left, top-right, bottom-right, bottom-left.
const CORNER_OFFSETS: [(isize, isize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

/// Edge `e` joins corner `e` and corner `(e + 1) % 4`.
/// top, right, bottom, left.
const EDGES: [(usize, usize); 4] = [(0, 1), (1, 2), (2, 3), (3, 0)];

struct Crossings {
    stride: usize,
}

impl Crossings {
    /// Stable id of the crossing on cell edge `e` of the cell whose top-left
    /// pixel is `(col, row)`; cells start at -1 to cover the image border.
    fn key(&self, col: isize, row: isize, e: usize) -> usize {
        // Horizontal pixel pairs (c, r)-(c+1, r) and vertical pairs (c, r)-(c, r+1),
        // both indexed by their first pixel shifted by one.
        let (c, r, vertical) = match e {
            0 => (col, row, false),
            1 => (col + 1, row, true),
            2 => (col, row + 1, false),
            _ => (col, row, true),
        };
        (((r + 1) as usize * self.stride + (c + 1) as usize) << 1) | vertical as usize
    }
}

fn crossing_point(col: isize, row: isize, e: usize) -> Vec2<f64> {
    let (a, b) = EDGES[e];
    let (ax, ay) = CORNER_OFFSETS[a];
    let (bx, by) = CORNER_OFFSETS[b];
    // Pixel (c, r) has its center at (c + 0.5, r + 0.5).
    Vec2::new(
        col as f64 + 0.5 + 0.5 * (ax + bx) as f64,
        row as f64 + 0.5 + 0.5 * (ay + by) as f64,
    )
}

fn corner_point(col: isize, row: isize, k: usize) -> Vec2<f64> {
    let (dx, dy) = CORNER_OFFSETS[k];
    Vec2::new(
        (col + dx) as f64 + 0.5,
        (row + dy) as f64 + 0.5,
    )
}

/// Trace the outer boundary of every 4-connected foreground component.
///
/// Holes are dropped. Contours come back positively oriented (see the module
/// docs of [`crate::geometry`]) with collinear runs pruned, ordered by the
/// raster position where tracing first met them.
pub fn extract_contours<T: Real>(mask: &Mask) -> Result<Vec<Contour<T>>, GeometryError> {
    if mask.count() == 0 {
        return Err(GeometryError::EmptyMask);
    }
    let w = mask.width() as isize;
    let h = mask.height() as isize;
    let keys = Crossings {
        stride: mask.width() + 2,
    };

    // Directed segments, from crossing key to crossing key.
    let mut seg_from: Vec<usize> = Vec::new();
    let mut seg_to: Vec<usize> = Vec::new();
    let mut point_of = std::collections::BTreeMap::new();
    let mut add_segment =
        |col: isize, row: isize, e1: usize, e2: usize, fg_corner: usize| {
            let p1 = crossing_point(col, row, e1);
            let p2 = crossing_point(col, row, e2);
            let c = corner_point(col, row, fg_corner);
            let (k1, k2) = (keys.key(col, row, e1), keys.key(col, row, e2));
            point_of.insert(k1, p1);
            point_of.insert(k2, p2);
            // Foreground on the positive side of every directed segment.
            if orient2d(p1, p2, c) > 0.0 {
                seg_from.push(k1);
                seg_to.push(k2);
            } else {
                seg_from.push(k2);
                seg_to.push(k1);
            }
        };

    for row in -1..h {
        for col in -1..w {
            let fg: [bool; 4] =
                std::array::from_fn(|k| mask.get(col + CORNER_OFFSETS[k].0, row + CORNER_OFFSETS[k].1));
            let crossed: Vec<usize> = (0..4).filter(|&e| fg[EDGES[e].0] != fg[EDGES[e].1]).collect();
            match crossed.len() {
                0 => {}
                2 => {
                    let fg_corner = (0..4).find(|&k| fg[k]).expect("crossing implies a foreground corner");
                    add_segment(col, row, crossed[0], crossed[1], fg_corner);
                }
                4 => {
                    // Saddle: cut each foreground corner off on its own.
                    for k in (0..4).filter(|&k| fg[k]) {
                        let e_in = (k + 3) % 4;
                        add_segment(col, row, e_in, k, k);
                    }
                }
                n => unreachable!("marching squares cell with {n} crossings"),
            }
        }
    }

    let max_key = seg_from.iter().chain(&seg_to).copied().max().unwrap_or(0);
    let mut next_seg = vec![NONE; max_key + 1];
    for (i, &k) in seg_from.iter().enumerate() {
        debug_assert_eq!(next_seg[k], NONE, "crossing used twice");
        next_seg[k] = i;
    }

    let mut visited = vec![false; seg_from.len()];
    let mut contours = Vec::new();
    for start in 0..seg_from.len() {
        if visited[start] {
            continue;
        }
        let mut loop_pts = Vec::new();
        let mut s = start;
        while !visited[s] {
            visited[s] = true;
            loop_pts.push(point_of[&seg_from[s]]);
            s = next_seg[seg_to[s]];
            assert_ne!(s, NONE, "open marching-squares chain");
        }
        let pruned = prune_collinear(loop_pts);
        // Outer loops have foreground on their positive side and so come out
        // with positive signed area; holes are negative.
        if pruned.len() >= 3 && polygon_signed_area(&pruned) > 0.0 {
            let pts = pruned
                .into_iter()
                .map(|p| Vec2::new(T::lit(p.x), T::lit(p.y)))
                .collect();
            contours.push(Contour::new(pts)?);
        }
    }
    Ok(contours)
}

fn prune_collinear(pts: Vec<Vec2<f64>>) -> Vec<Vec2<f64>> {
    let collinear = |a: Vec2<f64>, b: Vec2<f64>, c: Vec2<f64>| orient2d(a, b, c) == 0.0;
    let mut kept: Vec<Vec2<f64>> = Vec::with_capacity(pts.len());
    for p in pts {
        while kept.len() >= 2 && collinear(kept[kept.len() - 2], kept[kept.len() - 1], p) {
            kept.pop();
        }
        kept.push(p);
    }
    loop {
        let n = kept.len();
        if n < 3 {
            break;
        }
        if collinear(kept[n - 2], kept[n - 1], kept[0]) {
            kept.pop();
        } else if collinear(kept[n - 1], kept[0], kept[1]) {
            kept.remove(0);
        } else {
            break;
        }
    }
    kept
}

/// Resample a contour at `round(perimeter / spacing)` points with exactly
/// equal arc-length gaps, starting at the contour's first point.
pub fn sample_boundary<T: Real>(
    contour: &Contour<T>,
    spacing: f64,
) -> Result<Vec<Vec2<T>>, GeometryError> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(GeometryError::InvalidParameter(format!(
            "spacing must be positive and finite, got {spacing}"
        )));
    }
    let pts = contour.points();
    let n = pts.len();
    let mut cumulative = Vec::with_capacity(n + 1);
    let mut acc = 0.0f64;
    cumulative.push(0.0);
    for i in 0..n {
        acc += (pts[(i + 1) % n] - pts[i]).norm().to_f64_lossy();
        cumulative.push(acc);
    }
    let perimeter = acc;
    let count = (perimeter / spacing).round();
    if !(count >= 3.0) {
        return Err(GeometryError::SpacingTooCoarse { perimeter, spacing });
    }
    let count = count as usize;
    let gap = perimeter / count as f64;

    let mut out = Vec::with_capacity(count);
    let mut seg = 0usize;
    for k in 0..count {
        let s = gap * k as f64;
        while seg + 1 < n && cumulative[seg + 1] <= s {
            seg += 1;
        }
        let len = cumulative[seg + 1] - cumulative[seg];
        let t = if len > 0.0 { (s - cumulative[seg]) / len } else { 0.0 };
        let a = pts[seg];
        let b = pts[(seg + 1) % n];
        out.push(a + (b - a) * T::lit(t));
    }
    Ok(out)
}
