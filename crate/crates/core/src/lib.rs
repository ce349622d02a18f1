//! Physics-driven 2D animation data from a still illustration and object masks.
//!
//! The crate turns masks into triangle meshes ([`geometry`]), simulates them as
//! Fixed Corotated elastic bodies ([`elastics`], [`dynamics`]) driven by energy
//! strokes and rigging points ([`strokes`]), rasterizes the motion into dense
//! optical flow ([`flowfield`]), and forward-warps a line sketch of the input
//! along that flow ([`imaging`]). [`scene`] ties it together behind a JSON scene
//! description.
//!
//! Geometry and physics are generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, which is what the pipeline uses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod elastics;
pub mod flowfield;
pub mod geometry;
pub mod imaging;
pub mod linalg;
pub mod scalar;
pub mod scene;
pub mod strokes;

pub use linalg::{Mat2, Vec2};
pub use scalar::Real;

pub type Point = linalg::Vec2<f64>;
pub type Matrix2 = linalg::Mat2<f64>;
pub type Mesh = geometry::TriMesh<f64>;
pub type Body = elastics::BodyState<f64>;
pub type Material = elastics::Material<f64>;
pub type Rig = dynamics::RigPoint<f64>;
pub type Stroke = strokes::EnergyStroke<f64>;
pub type Particle = strokes::FlowParticle<f64>;
pub type Snapshot = dynamics::Snapshot<f64>;
