//! Rigid point-cloud registration built around feature-consistency matching.
//!
//! The pipeline turns a putative correspondence set into a pose estimate:
//! correspondences are embedded into a feature space (a multiscale graph
//! network or a pluggable provider), weighted by a confidence MLP, grown into
//! candidate inlier subsets, scored with a feature consistency matrix whose
//! principal vector supplies per-pair weights for a closed-form weighted
//! Procrustes solve, and finally verified by inlier counting. Classical
//! RANSAC and ICP are included as baselines and refinement, together with a
//! deterministic synthetic benchmark harness.
//!
//! All core math is generic over the scalar type (`f32`/`f64`) through the
//! [`Real`] trait; the orchestration layer (`bench`, `training`, checkpoints)
//! is concrete `f64`.

pub mod bench;
pub mod checkpoint;
pub mod classic;
pub mod cloud;
pub mod error;
pub mod features;
pub mod geometry;
pub mod gfm;
pub mod kdtree;
pub mod matching;
pub mod procrustes;
pub mod selfcheck;
pub mod training;
pub mod verification;
pub mod weighting;

pub(crate) mod seeds;

pub use error::{Error, Result};

use std::fmt::{Debug, Display};

/// Scalar type the numeric core is generic over.
///
/// `f32` and `f64` both satisfy it; tolerances in the crate are stated for
/// `f64`, which is what the pipeline and benchmark layers instantiate.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + std::iter::Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` constant into the working scalar type.
#[inline]
pub fn real<T: Real>(value: f64) -> T {
    T::from_f64(value).expect("f64 constant representable in scalar type")
}

/// Widens any [`Real`] back to `f64` (lossless for both supported scalars).
#[inline]
pub fn to_f64<T: Real>(value: T) -> f64 {
    num_traits::ToPrimitive::to_f64(&value).expect("Real converts to f64")
}

// Concrete aliases for the default (f64) instantiation used by the pipeline.
pub type Vec3F64 = geometry::Vec3<f64>;
pub type Mat3F64 = geometry::Mat3<f64>;
pub type RigidTransformF64 = geometry::RigidTransform<f64>;
pub type PointCloudF64 = cloud::PointCloud<f64>;
pub type CorrespondenceSetF64 = features::CorrespondenceSet<f64>;
pub type FeatureMatrixF64 = features::FeatureMatrix<f64>;

// Single-precision aliases for callers that trade accuracy for footprint.
pub type Vec3F32 = geometry::Vec3<f32>;
pub type Mat3F32 = geometry::Mat3<f32>;
pub type RigidTransformF32 = geometry::RigidTransform<f32>;
pub type PointCloudF32 = cloud::PointCloud<f32>;
