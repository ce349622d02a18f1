//! Fixed Corotated elasticity on linear triangles.
//!
//! Energy density Ψ(F) = μ‖F − R‖²_F + λ/2 (det F − 1)², where R is the
//! rotation closest to F. Forces are the negative gradient of
//! Σ Ψ(F_i) V_i with respect to world positions.

use crate::geometry::TriMesh;
use crate::linalg::{Mat2, Vec2};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElasticsError {
    #[error("Poisson ratio must lie in [0, 0.5), got {0}")]
    InvalidPoisson(f64),
    #[error("invalid material {field}: {message}")]
    InvalidMaterial {
        field: &'static str,
        message: String,
    },
    #[error("body state mismatch: {0}")]
    StateMismatch(String),
}

/// Homogeneous material of one body. Lamé parameters are per unit thickness.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material<T> {
    pub mu: T,
    pub lambda: T,
    pub density: T,
}

impl<T: Real> Material<T> {
    pub fn new(mu: T, lambda: T, density: T) -> Result<Self, ElasticsError> {
        let m = Material {
            mu,
            lambda,
            density,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ElasticsError> {
        if !(self.mu > T::zero()) || !self.mu.is_finite() {
            return Err(ElasticsError::InvalidMaterial {
                field: "mu",
                message: format!("must be positive, got {}",
                self.mu
            )});
        }
        if !(self.lambda >= T::zero()) || !self.lambda.is_finite() {
            return Err(ElasticsError::InvalidMaterial {
                field: "lambda",
                message: format!("must be non-negative, got {}",
                self.lambda
            )});
        }
        if !(self.density > T::zero()) || !self.density.is_finite() {
            return Err(ElasticsError::InvalidMaterial {
                field: "density",
                message: format!("must be positive, got {}",
                self.density
            )});
        }
        Ok(())
    }
}

/// Plane-strain conversion from Young's modulus and Poisson ratio:
/// μ = E / (2(1+ν)), λ = Eν / ((1+ν)(1−2ν)).
pub fn material_from_young_poisson<T: Real>(
    young: T,
    poisson: T,
    density: T,
) -> Result<Material<T>, ElasticsError> {
    if !(poisson >= T::zero() && poisson < T::half()) {
        return Err(ElasticsError::InvalidPoisson(poisson.to_f64_lossy()));
    }
    if !(young > T::zero()) || !young.is_finite() {
        return Err(ElasticsError::InvalidMaterial {
            field: "young",
            message: format!("must be positive, got {young}"),
        });
    }
    let one = T::one();
    let mu = young / (T::two() * (one + poisson));
    let lambda = young * poisson / ((one + poisson) * (one - T::two() * poisson));
    Material::new(mu, lambda, density)
}

/// World-space state of one deformable body.
#[derive(Clone, Debug, PartialEq)]
pub struct BodyState<T> {
    mesh: Arc<TriMesh<T>>,
    pub positions: Vec<Vec2<T>>,
    pub velocities: Vec<Vec2<T>>,
    masses: Vec<T>,
}

impl<T: Real> BodyState<T> {
    /// Body at rest: positions equal rest positions, zero velocity, lumped
    /// masses from `density`.
    pub fn at_rest(mesh: Arc<TriMesh<T>>, density: T) -> Self {
        let masses = lumped_masses(&mesh, density);
        BodyState {
            positions: mesh.rest_positions().to_vec(),
            velocities: vec![Vec2::zero(); mesh.vertex_count()],
            masses,
            mesh,
        }
    }

    pub fn new(
        mesh: Arc<TriMesh<T>>,
        positions: Vec<Vec2<T>>,
        velocities: Vec<Vec2<T>>,
        masses: Vec<T>,
    ) -> Result<Self, ElasticsError> {
        let n = mesh.vertex_count();
        if positions.len() != n || velocities.len() != n || masses.len() != n {
            return Err(ElasticsError::StateMismatch(format!(
                "mesh has {n} vertices but got {} positions, {} velocities, {} masses",
                positions.len(),
                velocities.len(),
                masses.len()
            )));
        }
        if let Some(i) = masses.iter().position(|&m| !(m > T::zero()) || !m.is_finite()) {
            return Err(ElasticsError::StateMismatch(format!(
                "vertex {i} has non-positive mass {}",
                masses[i]
            )));
        }
        Ok(BodyState {
            mesh,
            positions,
            velocities,
            masses,
        })
    }

    pub fn mesh(&self) -> &Arc<TriMesh<T>> {
        &self.mesh
    }

    pub fn masses(&self) -> &[T] {
        &self.masses
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().all(|p| p.is_finite()) && self.velocities.iter().all(|v| v.is_finite())
    }

    pub fn momentum(&self) -> Vec2<T> {
        self.velocities
            .iter()
            .zip(&self.masses)
            .fold(Vec2::zero(), |acc, (&v, &m)| acc + v * m)
    }

    pub fn kinetic_energy(&self) -> T {
        self.velocities
            .iter()
            .zip(&self.masses)
            .fold(T::zero(), |acc, (&v, &m)| acc + m * v.norm_squared())
            * T::half()
    }

    pub fn center_of_mass(&self) -> Vec2<T> {
        let (sum, total) = self
            .positions
            .iter()
            .zip(&self.masses)
            .fold((Vec2::zero(), T::zero()), |(s, t), (&x, &m)| (s + x * m, t + m));
        sum / total
    }
}

/// Lumped vertex masses: each triangle hands ρV/3 to each of its corners.
pub fn lumped_masses<T: Real>(mesh: &TriMesh<T>, density: T) -> Vec<T> {
    let mut m = vec![T::zero(); mesh.vertex_count()];
    let third = T::lit(3.0);
    for (tri, &area) in mesh.triangles().iter().zip(mesh.rest_areas()) {
        let share = density * area / third;
        for &v in tri {
            m[v] += share;
        }
    }
    m
}

/// F = [x₁−x₀, x₂−x₀] · Dm⁻¹ for triangle `tri`.
pub fn deformation_gradient<T: Real>(state: &BodyState<T>, tri: usize) -> Mat2<T> {
    gradient_at(&state.mesh, &state.positions, tri)
}

fn gradient_at<T: Real>(mesh: &TriMesh<T>, x: &[Vec2<T>], tri: usize) -> Mat2<T> {
    let [a, b, c] = mesh.triangles()[tri];
    let ds = Mat2::from_cols(x[b] - x[a], x[c] - x[a]);
    ds * mesh.inv_rest_shape()[tri]
}

/// Rotation factor of the polar decomposition F = R S.
///
/// Closed form for 2×2: R is the rotation by atan2(F₁₀ − F₀₁, F₀₀ + F₁₁),
/// the rotation maximizing tr(RᵀF). For det F > 0 this is the polar factor;
/// for det F < 0 it coincides with the signed SVD (the smaller singular
/// direction flipped), so R stays a proper rotation. When F is a pure
/// reflection-plus-scale with no preferred rotation the identity is returned.
pub fn polar_rotation<T: Real>(f: &Mat2<T>) -> Mat2<T> {
    let c = f.m00 + f.m11;
    let s = f.m10 - f.m01;
    let n = c.hypot(s);
    if !(n > T::epsilon() * (T::one() + f.frobenius_squared().sqrt())) {
        return Mat2::identity();
    }
    let (c, s) = (c / n, s / n);
    Mat2::new(c, -s, s, c)
}

pub fn energy_density<T: Real>(f: &Mat2<T>, m: &Material<T>) -> T {
    let r = polar_rotation(f);
    let j = f.det() - T::one();
    m.mu * (*f - r).frobenius_squared() + m.lambda * T::half() * j * j
}

/// First Piola–Kirchhoff stress P = ∂Ψ/∂F = 2μ(F − R) + λ(J − 1)·cof(F).
///
/// cof(F) equals J·F⁻ᵀ for invertible F and stays finite through inversion,
/// so no determinant clamp is needed.
pub fn first_piola<T: Real>(f: &Mat2<T>, m: &Material<T>) -> Mat2<T> {
    let r = polar_rotation(f);
    (*f - r) * (T::two() * m.mu) + f.cofactor() * (m.lambda * (f.det() - T::one()))
}

/// Σ Ψ(F_i)·V_i over all triangles.
pub fn total_energy<T: Real>(state: &BodyState<T>, m: &Material<T>) -> T {
    energy_at(&state.mesh, &state.positions, m)
}

pub(crate) fn energy_at<T: Real>(mesh: &TriMesh<T>, x: &[Vec2<T>], m: &Material<T>) -> T {
    (0..mesh.triangle_count()).fold(T::zero(), |acc, t| {
        acc + energy_density(&gradient_at(mesh, x, t), m) * mesh.rest_areas()[t]
    })
}

/// Per-vertex internal forces, −∂E/∂x.
pub fn internal_forces<T: Real>(state: &BodyState<T>, m: &Material<T>) -> Vec<Vec2<T>> {
    let mut out = vec![Vec2::zero(); state.vertex_count()];
    add_internal_forces(&state.mesh, &state.positions, m, &mut out);
    out
}

/// Adds internal forces into `out`, triangle by triangle in index order.
pub fn add_internal_forces<T: Real>(
    mesh: &TriMesh<T>,
    x: &[Vec2<T>],
    m: &Material<T>,
    out: &mut [Vec2<T>],
) {
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let f = gradient_at(mesh, x, t);
        let p = first_piola(&f, m);
        // H = -V P Dm^-T; columns are the forces on corners 1 and 2.
        let h = p * mesh.inv_rest_shape()[t].transpose() * (-mesh.rest_areas()[t]);
        let f1 = h.col(0);
        let f2 = h.col(1);
        out[tri[1]] += f1;
        out[tri[2]] += f2;
        out[tri[0]] -= f1 + f2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri_mesh() -> Arc<TriMesh<f64>> {
        Arc::new(
            TriMesh::new(
                vec![
                    Vec2::new(0.0, 0.0),
                    Vec2::new(1.0, 0.0),
                    Vec2::new(0.0, 1.0),
                ],
                vec![[0, 1, 2]],
                vec![],
            )
            .unwrap(),
        )
    }

    #[test]
    fn young_poisson_conversion() {
        let m = material_from_young_poisson(1.0, 0.0, 1.0).unwrap();
        assert_eq!((m.mu, m.lambda), (0.5, 0.0));
        let m = material_from_young_poisson(2.6f64, 0.3, 1.0).unwrap();
        assert!((m.mu - 1.0).abs() < 1e-12);
        assert!((m.lambda - 1.5).abs() < 1e-12);
        assert_eq!(
            material_from_young_poisson(1.0, 0.5, 1.0),
            Err(ElasticsError::InvalidPoisson(0.5))
        );
        assert!(material_from_young_poisson(1.0, -0.1, 1.0).is_err());
    }

    #[test]
    fn gradient_of_stretched_triangle() {
        let mut s = BodyState::at_rest(tri_mesh(), 1.0);
        assert_eq!(deformation_gradient(&s, 0), Mat2::identity());
        s.positions[1] = Vec2::new(2.0, 0.0);
        assert_eq!(deformation_gradient(&s, 0), Mat2::new(2.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn stretch_energy_and_stress() {
        let mat = Material::new(1.0, 1.0, 1.0).unwrap();
        let f = Mat2::new(2.0f64, 0.0, 0.0, 1.0);
        assert_eq!(polar_rotation(&f), Mat2::identity());
        assert!((energy_density(&f, &mat) - 1.5).abs() < 1e-15);
        let p = first_piola(&f, &mat);
        assert!(p.max_abs_diff(&Mat2::new(3.0, 0.0, 0.0, 2.0)) < 1e-15);
    }

    #[test]
    fn rotations_are_stress_free() {
        let mat = Material::new(1.3, 0.7, 1.0).unwrap();
        for k in 0..16 {
            let r = Mat2::rotation(k as f64 * 0.4 - 3.0);
            assert!(polar_rotation(&r).max_abs_diff(&r) < 1e-15);
            assert!(energy_density(&r, &mat) < 1e-28);
            assert!(first_piola(&r, &mat).max_abs_diff(&Mat2::zero()) < 1e-14);
        }
    }

    #[test]
    fn inverted_element_gets_proper_rotation() {
        let f = Mat2::new(-0.5f64, 0.1, 0.2, 1.0);
        let r = polar_rotation(&f);
        assert!((r.det() - 1.0).abs() < 1e-12);
        assert!(energy_density(&f, &Material::new(1.0, 1.0, 1.0).unwrap()).is_finite());
    }

    #[test]
    fn lumped_masses_share_thirds() {
        let m = Arc::new(
            TriMesh::new(
                vec![
                    Vec2::new(0.0, 0.0),
                    Vec2::new(3.0, 0.0),
                    Vec2::new(3.0, 2.0),
                    Vec2::new(0.0, 2.0),
                ],
                vec![[0, 1, 2], [0, 2, 3]],
                vec![],
            )
            .unwrap(),
        );
        assert_eq!(lumped_masses(&m, 1.0), vec![2.0, 1.0, 2.0, 1.0]);
    }

    #[test]
    fn rest_state_has_no_force_or_energy() {
        let s = BodyState::at_rest(tri_mesh(), 1.0);
        let mat = Material::new(1.0, 1.0, 1.0).unwrap();
        assert_eq!(total_energy(&s, &mat), 0.0);
        assert!(internal_forces(&s, &mat).iter().all(|f| f.norm() < 1e-12));
    }

    #[test]
    fn state_lengths_are_checked() {
        let mesh = tri_mesh();
        assert!(BodyState::new(mesh.clone(), vec![Vec2::zero(); 2], vec![Vec2::zero(); 3], vec![1.0; 3]).is_err());
        assert!(BodyState::new(mesh, vec![Vec2::zero(); 3], vec![Vec2::zero(); 3], vec![1.0, 0.0, 1.0]).is_err());
    }
}
