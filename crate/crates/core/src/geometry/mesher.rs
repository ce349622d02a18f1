//! Conforming Delaunay triangulation of a simple polygon with quality
//! refinement.
//!
//! The polygon is first ear-clipped, then Lawson flips turn it into the
//! constrained Delaunay triangulation of its boundary. Refinement follows
//! Ruppert: encroached boundary subsegments are split (midpoints, or
//! power-of-two shells around input vertices), and triangles that are too
//! large or too skinny get their circumcenter inserted unless that point would
//! encroach a subsegment. Only interior triangles are ever stored, so every
//! edge without a neighbour is a boundary subsegment.
//!
//! All arithmetic runs in `f64` regardless of the output scalar type, and no
//! hashing order or randomness influences the result.

use super::{triangle_min_angle_deg, GeometryError, TriMesh, MAX_MIN_ANGLE};
use crate::linalg::{orient2d, polygon_signed_area, Vec2};
use crate::scalar::Real;
use std::collections::{BTreeMap, HashMap, VecDeque};

const NONE: usize = usize::MAX;

/// Input corners sharper than this cannot be meshed to the requested angle
/// bound; triangles whose smallest angle sits in such a corner are exempt.
const SMALL_INPUT_ANGLE_DEG: f64 = 60.0;

/// Quality targets for [`triangulate_with`].
#[derive(Clone, Debug, PartialEq)]
pub struct MeshQuality {
    /// Upper bound on triangle area, pixels². `f64::INFINITY` disables it.
    pub max_area: f64,
    /// Lower bound on every triangle's smallest angle, degrees, in `[0, 28]`.
    pub min_angle: f64,
    /// Abort with [`GeometryError::RefinementDiverged`] past this many
    /// inserted points.
    pub max_steiner: usize,
}

impl Default for MeshQuality {
    fn default() -> Self {
        MeshQuality {
            max_area: super::DEFAULT_MAX_AREA,
            min_angle: super::DEFAULT_MIN_ANGLE,
            max_steiner: 200_000,
        }
    }
}

pub fn triangulate<T: Real>(
    boundary: &[Vec2<T>],
    max_area: f64,
    min_angle: f64,
) -> Result<TriMesh<T>, GeometryError> {
    triangulate_with(
        boundary,
        &MeshQuality {
            max_area,
            min_angle,
            ..MeshQuality::default()
        },
    )
}

pub fn triangulate_with<T: Real>(
    boundary: &[Vec2<T>],
    quality: &MeshQuality,
) -> Result<TriMesh<T>, GeometryError> {
    if !(quality.max_area > 0.0) {
        return Err(GeometryError::InvalidParameter(format!(
            "max_area must be positive, got {}",
            quality.max_area
        )));
    }
    if !(0.0..=MAX_MIN_ANGLE).contains(&quality.min_angle) {
        return Err(GeometryError::InvalidParameter(format!(
            "min_angle must lie in [0, {MAX_MIN_ANGLE}] degrees, got {}",
            quality.min_angle
        )));
    }
    let pts: Vec<Vec2<f64>> = boundary
        .iter()
        .map(|p| Vec2::new(p.x.to_f64_lossy(), p.y.to_f64_lossy()))
        .collect();
    validate_polygon(&pts)?;

    let mut m = Mesher::new(pts, quality.clone())?;
    m.make_delaunay();
    m.refine()?;
    m.check_quality()?;

    let positions = m.pts.iter().map(|p| p.cast::<T>()).collect();
    let boundary_edges = m
        .chains
        .iter()
        .flat_map(|c| c.windows(2).map(|w| [w[0], w[1]]))
        .collect();
    TriMesh::new(positions, m.tris, boundary_edges)
}

fn validate_polygon(pts: &[Vec2<f64>]) -> Result<(), GeometryError> {
    let n = pts.len();
    if n < 3 {
        return Err(GeometryError::DegenerateBoundary(format!(
            "need at least 3 boundary points, got {n}"
        )));
    }
    if pts.iter().any(|p| !p.is_finite()) {
        return Err(GeometryError::DegenerateBoundary(
            "non-finite boundary point".into(),
        ));
    }
    let mut sorted: Vec<(f64, f64)> = pts.iter().map(|p| (p.x, p.y)).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(GeometryError::DegenerateBoundary(
            "duplicate boundary point".into(),
        ));
    }
    if polygon_signed_area(pts).abs() < super::AREA_EPSILON {
        return Err(GeometryError::DegenerateBoundary(
            "boundary encloses no area (collinear input)".into(),
        ));
    }
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        let c = pts[(i + 2) % n];
        if orient2d(a, b, c) == 0.0 && (b - a).dot(c - b) < 0.0 {
            return Err(GeometryError::DegenerateBoundary(format!(
                "boundary folds back on itself at point {}",
                (i + 1) % n
            )));
        }
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_touch(a, b, pts[j], pts[(j + 1) % n]) {
                return Err(GeometryError::DegenerateBoundary(format!(
                    "boundary segments {i} and {j} intersect"
                )));
            }
        }
    }
    Ok(())
}

fn segments_touch(p1: Vec2<f64>, p2: Vec2<f64>, q1: Vec2<f64>, q2: Vec2<f64>) -> bool {
    let d1 = orient2d(q1, q2, p1);
    let d2 = orient2d(q1, q2, p2);
    let d3 = orient2d(p1, p2, q1);
    let d4 = orient2d(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: Vec2<f64>, b: Vec2<f64>, p: Vec2<f64>| {
        p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
    };
    (d1 == 0.0 && on(q1, q2, p1))
        || (d2 == 0.0 && on(q1, q2, p2))
        || (d3 == 0.0 && on(p1, p2, q1))
        || (d4 == 0.0 && on(p1, p2, q2))
}

/// Positive when `d` lies strictly inside the circumcircle of the positively
/// oriented triangle `abc`, beyond a relative round-off margin.
fn incircle(a: Vec2<f64>, b: Vec2<f64>, c: Vec2<f64>, d: Vec2<f64>) -> f64 {
    let (ad, bd, cd) = (a - d, b - d, c - d);
    let (al, bl, cl) = (ad.norm_squared(), bd.norm_squared(), cd.norm_squared());
    let det = al * bd.cross(cd) + bl * cd.cross(ad) + cl * ad.cross(bd);
    let perm = al * ((bd.x * cd.y).abs() + (cd.x * bd.y).abs())
        + bl * ((cd.x * ad.y).abs() + (ad.x * cd.y).abs())
        + cl * ((ad.x * bd.y).abs() + (bd.x * ad.y).abs());
    if det.abs() <= 1e-12 * perm {
        0.0
    } else {
        det
    }
}

fn circumcenter(a: Vec2<f64>, b: Vec2<f64>, c: Vec2<f64>) -> Vec2<f64> {
    let (ab, ac) = (b - a, c - a);
    let d = 2.0 * ab.cross(ac);
    let (l1, l2) = (ab.norm_squared(), ac.norm_squared());
    a + Vec2::new(ac.y * l1 - ab.y * l2, ab.x * l2 - ac.x * l1) / d
}

fn encroaches(a: Vec2<f64>, b: Vec2<f64>, p: Vec2<f64>) -> bool {
    let s = (a - p).dot(b - p);
    s < -1e-12 * (b - a).norm_squared()
}

enum Location {
    Inside(usize),
    OnEdge(usize, usize),
    /// Walk left the domain through boundary edge `k` of triangle `t`.
    Outside(usize, usize),
    OnVertex,
}

struct Mesher {
    pts: Vec<Vec2<f64>>,
    tris: Vec<[usize; 3]>,
    nbr: Vec<[usize; 3]>,
    input_count: usize,
    /// Interior angle (degrees) at each input vertex.
    corner_angle: Vec<f64>,
    /// Ordered vertex chain of every input segment `i → i+1`.
    chains: Vec<Vec<usize>>,
    /// Current boundary subsegments, keyed by sorted endpoints → chain.
    subsegs: BTreeMap<(usize, usize), usize>,
    /// Where each boundary edge currently lives, as `(triangle, slot)`.
    boundary_slot: HashMap<(usize, usize), (usize, usize)>,
    quality: MeshQuality,
    steiner: usize,
    touched: Vec<usize>,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl Mesher {
    fn new(pts: Vec<Vec2<f64>>, quality: MeshQuality) -> Result<Self, GeometryError> {
        let n = pts.len();
        let mut order: Vec<usize> = (0..n).collect();
        if polygon_signed_area(&pts) < 0.0 {
            order.reverse();
        }
        let mut corner_angle = vec![0.0; n];
        for i in 0..n {
            let v = order[i];
            let prev = pts[order[(i + n - 1) % n]] - pts[v];
            let next = pts[order[(i + 1) % n]] - pts[v];
            let mut theta = next.cross(prev).atan2(next.dot(prev));
            if theta <= 0.0 {
                theta += std::f64::consts::TAU;
            }
            corner_angle[v] = theta.to_degrees();
        }

        let tris = ear_clip(&pts, order)?;
        let chains: Vec<Vec<usize>> = (0..n).map(|i| vec![i, (i + 1) % n]).collect();
        let subsegs = (0..n).map(|i| (key(i, (i + 1) % n), i)).collect();

        let mut m = Mesher {
            pts,
            nbr: vec![[NONE; 3]; tris.len()],
            tris,
            input_count: n,
            corner_angle,
            chains,
            subsegs,
            boundary_slot: HashMap::new(),
            quality,
            steiner: 0,
            touched: Vec::new(),
        };
        m.build_adjacency();
        Ok(m)
    }

    fn build_adjacency(&mut self) {
        let mut directed: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for (t, tri) in self.tris.iter().enumerate() {
            for k in 0..3 {
                directed.insert((tri[(k + 1) % 3], tri[(k + 2) % 3]), (t, k));
            }
        }
        for t in 0..self.tris.len() {
            for k in 0..3 {
                let (a, b) = self.edge(t, k);
                match directed.get(&(b, a)) {
                    Some(&(u, _)) => self.nbr[t][k] = u,
                    None => {
                        self.boundary_slot.insert(key(a, b), (t, k));
                    }
                }
            }
        }
    }

    #[inline]
    fn edge(&self, t: usize, k: usize) -> (usize, usize) {
        let tri = self.tris[t];
        (tri[(k + 1) % 3], tri[(k + 2) % 3])
    }

    #[inline]
    fn p(&self, v: usize) -> Vec2<f64> {
        self.pts[v]
    }

    fn replace_nbr(&mut self, n: usize, old: usize, new: usize) {
        if n == NONE {
            return;
        }
        for k in 0..3 {
            if self.nbr[n][k] == old {
                self.nbr[n][k] = new;
                return;
            }
        }
        panic!("triangle {n} is not adjacent to {old}");
    }

    fn set_tri(&mut self, t: usize, tri: [usize; 3], nbr: [usize; 3]) {
        if t == self.tris.len() {
            self.tris.push(tri);
            self.nbr.push(nbr);
        } else {
            self.tris[t] = tri;
            self.nbr[t] = nbr;
        }
        self.touched.push(t);
    }

    fn new_tri_id(&self, offset: usize) -> usize {
        self.tris.len() + offset
    }

    /// Whether edge `k` of `t` fails the empty-circumcircle test.
    fn is_illegal(&self, t: usize, k: usize) -> bool {
        let u = self.nbr[t][k];
        if u == NONE {
            return false;
        }
        let tri = self.tris[t];
        let (a, b) = self.edge(t, k);
        let d = self.apex_across(u, a, b);
        incircle(self.p(tri[0]), self.p(tri[1]), self.p(tri[2]), self.p(d)) > 0.0
    }

    fn apex_across(&self, u: usize, a: usize, b: usize) -> usize {
        *self.tris[u]
            .iter()
            .find(|&&v| v != a && v != b)
            .expect("neighbour shares an edge")
    }

    /// Flip the edge opposite slot `k` of `t`. Afterwards `t = [v, a, d]` and
    /// `u = [v, d, b]` where `v` was the apex of `t`.
    fn flip(&mut self, t: usize, k: usize) -> (usize, usize) {
        let u = self.nbr[t][k];
        let v = self.tris[t][k];
        let (a, b) = self.edge(t, k);
        let n_ta = self.nbr[t][(k + 1) % 3];
        let n_tb = self.nbr[t][(k + 2) % 3];
        let j = (0..3)
            .find(|&j| self.tris[u][j] != a && self.tris[u][j] != b)
            .expect("apex");
        let d = self.tris[u][j];
        debug_assert_eq!(self.tris[u][(j + 1) % 3], b);
        let n_ua = self.nbr[u][(j + 2) % 3];
        let n_ub = self.nbr[u][(j + 1) % 3];
        self.set_tri(t, [v, a, d], [n_ub, u, n_tb]);
        self.set_tri(u, [v, d, b], [n_ua, n_ta, t]);
        self.replace_nbr(n_ub, u, t);
        self.replace_nbr(n_ta, t, u);
        (t, u)
    }

    /// Restore the Delaunay property around freshly inserted vertex `v`.
    fn legalize_around(&mut self, v: usize, start: &[usize]) {
        let mut stack: Vec<usize> = start.to_vec();
        while let Some(t) = stack.pop() {
            let k = match self.tris[t].iter().position(|&x| x == v) {
                Some(k) => k,
                None => continue,
            };
            if self.is_illegal(t, k) {
                let (t1, t2) = self.flip(t, k);
                stack.push(t1);
                stack.push(t2);
            }
        }
    }

    fn make_delaunay(&mut self) {
        let mut queue: VecDeque<(usize, usize)> = (0..self.tris.len())
            .flat_map(|t| (0..3).map(move |k| (t, k)))
            .collect();
        while let Some((t, k)) = queue.pop_front() {
            if self.is_illegal(t, k) {
                let (t1, t2) = self.flip(t, k);
                for s in [t1, t2] {
                    for kk in 0..3 {
                        queue.push_back((s, kk));
                    }
                }
            }
        }
        self.sync_touched(&mut VecDeque::new(), &mut VecDeque::new());
    }

    fn insert_point(&mut self, p: Vec2<f64>) -> usize {
        self.pts.push(p);
        self.pts.len() - 1
    }

    fn insert_in_triangle(&mut self, t: usize, p: Vec2<f64>) -> usize {
        let v = self.insert_point(p);
        let [a, b, c] = self.tris[t];
        let [na, nb, nc] = self.nbr[t];
        let t1 = self.new_tri_id(0);
        let t2 = self.new_tri_id(1);
        self.set_tri(t, [a, b, v], [t1, t2, nc]);
        self.set_tri(t1, [b, c, v], [t2, t, na]);
        self.set_tri(t2, [c, a, v], [t, t1, nb]);
        self.replace_nbr(na, t, t1);
        self.replace_nbr(nb, t, t2);
        self.legalize_around(v, &[t, t1, t2]);
        v
    }

    /// Split edge `k` of `t` at `p`. Works for interior and boundary edges.
    fn insert_on_edge(&mut self, t: usize, k: usize, p: Vec2<f64>) -> usize {
        let v = self.insert_point(p);
        let c = self.tris[t][k];
        let (a, b) = self.edge(t, k);
        let n_ca = self.nbr[t][(k + 2) % 3]; // across (c, a)
        let n_bc = self.nbr[t][(k + 1) % 3]; // across (b, c)
        let u = self.nbr[t][k];
        let t1 = self.new_tri_id(0);
        if u == NONE {
            self.set_tri(t, [c, a, v], [NONE, t1, n_ca]);
            self.set_tri(t1, [c, v, b], [NONE, n_bc, t]);
            self.replace_nbr(n_bc, t, t1);
            self.legalize_around(v, &[t, t1]);
            return v;
        }
        let j = (0..3)
            .find(|&j| self.tris[u][j] != a && self.tris[u][j] != b)
            .expect("apex");
        let d = self.tris[u][j];
        let n_db = self.nbr[u][(j + 2) % 3]; // opposite a in u: (d, b)
        let n_ad = self.nbr[u][(j + 1) % 3]; // opposite b in u: (a, d)
        let u1 = self.new_tri_id(1);
        self.set_tri(t, [c, a, v], [u1, t1, n_ca]);
        self.set_tri(t1, [c, v, b], [u, n_bc, t]);
        self.set_tri(u, [d, b, v], [t1, u1, n_db]);
        self.set_tri(u1, [d, v, a], [t, n_ad, u]);
        self.replace_nbr(n_bc, t, t1);
        self.replace_nbr(n_ad, u, u1);
        self.legalize_around(v, &[t, t1, u, u1]);
        v
    }

    fn locate(&self, start: usize, p: Vec2<f64>) -> Location {
        let mut t = start;
        let cap = 4 * self.tris.len() + 16;
        for _ in 0..cap {
            let mut moved = false;
            for k in 0..3 {
                let (a, b) = self.edge(t, k);
                let (pa, pb) = (self.p(a), self.p(b));
                let o = orient2d(pa, pb, p);
                let scale = (pb - pa).norm() * ((p - pa).norm() + (p - pb).norm());
                if o < -1e-12 * scale {
                    if self.nbr[t][k] == NONE {
                        return Location::Outside(t, k);
                    }
                    t = self.nbr[t][k];
                    moved = true;
                    break;
                }
            }
            if !moved {
                return self.classify_in(t, p);
            }
        }
        // Walk did not converge; fall back to an exhaustive scan.
        for t in 0..self.tris.len() {
            let tri = self.tris[t];
            if (0..3).all(|k| {
                orient2d(self.p(tri[(k + 1) % 3]), self.p(tri[(k + 2) % 3]), p) >= 0.0
            }) {
                return self.classify_in(t, p);
            }
        }
        Location::OnVertex
    }

    fn classify_in(&self, t: usize, p: Vec2<f64>) -> Location {
        let tri = self.tris[t];
        let size = (self.p(tri[1]) - self.p(tri[0])).norm()
            + (self.p(tri[2]) - self.p(tri[1])).norm()
            + (self.p(tri[0]) - self.p(tri[2])).norm();
        if tri.iter().any(|&v| (self.p(v) - p).norm() <= 1e-9 * size) {
            return Location::OnVertex;
        }
        for k in 0..3 {
            let (a, b) = self.edge(t, k);
            let (pa, pb) = (self.p(a), self.p(b));
            let o = orient2d(pa, pb, p);
            if o.abs() <= 1e-12 * (pb - pa).norm() * size {
                return Location::OnEdge(t, k);
            }
        }
        Location::Inside(t)
    }

    fn is_bad(&self, t: usize) -> bool {
        let [a, b, c] = self.tris[t].map(|v| self.p(v));
        let area = 0.5 * orient2d(a, b, c);
        if area > self.quality.max_area {
            return true;
        }
        if self.quality.min_angle <= 0.0 {
            return false;
        }
        let (v, angle) = self.min_angle_vertex(t);
        if angle >= self.quality.min_angle {
            return false;
        }
        !self.exempt_corner(v)
    }

    fn exempt_corner(&self, v: usize) -> bool {
        v < self.input_count && self.corner_angle[v] < SMALL_INPUT_ANGLE_DEG
    }

    fn min_angle_vertex(&self, t: usize) -> (usize, f64) {
        let tri = self.tris[t];
        let mut best = (tri[0], f64::MAX);
        for k in 0..3 {
            let p = self.p(tri[k]);
            let u = self.p(tri[(k + 1) % 3]) - p;
            let w = self.p(tri[(k + 2) % 3]) - p;
            let ang = u.cross(w).abs().atan2(u.dot(w)).to_degrees();
            if ang < best.1 {
                best = (tri[k], ang);
            }
        }
        best
    }

    /// Register boundary slots of every touched triangle and queue follow-up
    /// work for them.
    fn sync_touched(&mut self, segq: &mut VecDeque<(usize, usize)>, triq: &mut VecDeque<usize>) {
        let touched = std::mem::take(&mut self.touched);
        for &t in &touched {
            for k in 0..3 {
                if self.nbr[t][k] == NONE {
                    let (a, b) = self.edge(t, k);
                    self.boundary_slot.insert(key(a, b), (t, k));
                    if encroaches(self.p(a), self.p(b), self.p(self.tris[t][k])) {
                        segq.push_back(key(a, b));
                    }
                }
            }
            triq.push_back(t);
        }
    }

    fn split_point(&self, a: usize, b: usize) -> Vec2<f64> {
        let (pa, pb) = (self.p(a), self.p(b));
        let a_in = a < self.input_count;
        let b_in = b < self.input_count;
        if a_in == b_in {
            return (pa + pb) * 0.5;
        }
        let (origin, other) = if a_in { (pa, pb) } else { (pb, pa) };
        let len = (other - origin).norm();
        let shell = 2f64.powf((len * 0.5).log2().round());
        origin + (other - origin) * (shell / len)
    }

    fn split_subsegment(&mut self, ab: (usize, usize)) -> Result<(), GeometryError> {
        let chain = match self.subsegs.get(&ab) {
            Some(&c) => c,
            None => return Ok(()),
        };
        self.bump_steiner()?;
        let (t, k) = self.boundary_slot[&ab];
        debug_assert_eq!(key(self.edge(t, k).0, self.edge(t, k).1), ab);
        let p = self.split_point(ab.0, ab.1);
        let v = self.insert_on_edge(t, k, p);
        self.subsegs.remove(&ab);
        self.subsegs.insert(key(ab.0, v), chain);
        self.subsegs.insert(key(v, ab.1), chain);
        let c = &mut self.chains[chain];
        let i = c
            .windows(2)
            .position(|w| key(w[0], w[1]) == ab)
            .expect("subsegment belongs to its chain");
        c.insert(i + 1, v);
        Ok(())
    }

    fn bump_steiner(&mut self) -> Result<(), GeometryError> {
        self.steiner += 1;
        if self.steiner > self.quality.max_steiner {
            return Err(GeometryError::RefinementDiverged {
                cap: self.quality.max_steiner,
            });
        }
        Ok(())
    }

    fn refine(&mut self) -> Result<(), GeometryError> {
        let mut segq: VecDeque<(usize, usize)> = VecDeque::new();
        let mut triq: VecDeque<usize> = (0..self.tris.len()).collect();
        let slots: Vec<(usize, usize)> = self.boundary_slot.keys().copied().collect();
        let mut initial: Vec<(usize, usize)> = slots
            .into_iter()
            .filter(|ab| {
                let (t, k) = self.boundary_slot[ab];
                encroaches(self.p(ab.0), self.p(ab.1), self.p(self.tris[t][k]))
            })
            .collect();
        initial.sort_unstable();
        segq.extend(initial);

        loop {
            while let Some(ab) = segq.pop_front() {
                if !self.subsegs.contains_key(&ab) {
                    continue;
                }
                self.split_subsegment(ab)?;
                self.sync_touched(&mut segq, &mut triq);
            }
            let t = match triq.pop_front() {
                Some(t) => t,
                None => break,
            };
            if !self.is_bad(t) {
                continue;
            }
            let [a, b, c] = self.tris[t].map(|v| self.p(v));
            let cc = circumcenter(a, b, c);
            let hits: Vec<(usize, usize)> = self
                .subsegs
                .keys()
                .filter(|&&(s0, s1)| encroaches(self.p(s0), self.p(s1), cc))
                .copied()
                .collect();
            if !hits.is_empty() {
                segq.extend(hits);
                triq.push_back(t);
                continue;
            }
            match self.locate(t, cc) {
                Location::Inside(s) => {
                    self.bump_steiner()?;
                    self.insert_in_triangle(s, cc);
                }
                Location::OnEdge(s, k) => {
                    if self.nbr[s][k] == NONE {
                        let (x, y) = self.edge(s, k);
                        segq.push_back(key(x, y));
                        triq.push_back(t);
                        continue;
                    }
                    self.bump_steiner()?;
                    self.insert_on_edge(s, k, cc);
                }
                Location::Outside(s, k) => {
                    let (x, y) = self.edge(s, k);
                    segq.push_back(key(x, y));
                    triq.push_back(t);
                    continue;
                }
                Location::OnVertex => continue,
            }
            self.sync_touched(&mut segq, &mut triq);
        }
        Ok(())
    }

    fn check_quality(&self) -> Result<(), GeometryError> {
        for t in 0..self.tris.len() {
            let [a, b, c] = self.tris[t].map(|v| self.p(v));
            let area = 0.5 * orient2d(a, b, c);
            let too_big = area > self.quality.max_area * (1.0 + 1e-9);
            let (v, _) = self.min_angle_vertex(t);
            let too_sharp = self.quality.min_angle > 0.0
                && triangle_min_angle_deg(a, b, c) < self.quality.min_angle - 1e-9
                && !self.exempt_corner(v);
            if too_big || too_sharp {
                return Err(GeometryError::RefinementDiverged {
                    cap: self.quality.max_steiner,
                });
            }
        }
        Ok(())
    }
}

/// Ear-clip the polygon given by `order` (positively oriented).
fn ear_clip(pts: &[Vec2<f64>], mut order: Vec<usize>) -> Result<Vec<[usize; 3]>, GeometryError> {
    let mut tris = Vec::with_capacity(order.len().saturating_sub(2));
    let mut i = 0usize;
    let mut misses = 0usize;
    while order.len() > 3 {
        let m = order.len();
        let (ip, inx) = ((i + m - 1) % m, (i + 1) % m);
        let (a, b, c) = (order[ip], order[i], order[inx]);
        let (pa, pb, pc) = (pts[a], pts[b], pts[c]);
        let is_ear = orient2d(pa, pb, pc) > 0.0
            && order.iter().all(|&v| {
                if v == a || v == b || v == c {
                    return true;
                }
                let q = pts[v];
                !(orient2d(pa, pb, q) >= 0.0 && orient2d(pb, pc, q) >= 0.0 && orient2d(pc, pa, q) >= 0.0)
            });
        if is_ear {
            tris.push([a, b, c]);
            order.remove(i);
            if i >= order.len() {
                i = 0;
            }
            misses = 0;
        } else {
            i = (i + 1) % m;
            misses += 1;
            if misses > m {
                return Err(GeometryError::DegenerateBoundary(
                    "no clippable ear; polygon is not simple".into(),
                ));
            }
        }
    }
    let [a, b, c] = [order[0], order[1], order[2]];
    if orient2d(pts[a], pts[b], pts[c]) <= 0.0 {
        return Err(GeometryError::DegenerateBoundary(
            "final ear is degenerate".into(),
        ));
    }
    tris.push([a, b, c]);
    Ok(tris)
}
