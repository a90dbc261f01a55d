//! Camera egomotion estimation between adjacent video frames.
//!
//! Two consecutive frames of a camera filming a static, sufficiently distant
//! scene are linked by a six-parameter planar projective deformation. This
//! crate provides:
//!
//! * [`geometry`] — exact rotations, rigid displacements with their group
//!   operations, and the perspective warps linking two frames;
//! * [`flowmodel`] — the quadratic small-motion approximation of the flow,
//!   its closed-form error bound, and the validity conditions for treating
//!   scene depth as constant;
//! * [`imaging`] — image buffers, pixel/focal coordinate mapping, bilinear
//!   warping, pyramids, noise injection and PGM/PNG I/O;
//! * [`estimator`] — robust coarse-to-fine estimation of the flow model
//!   (IRLS with the Tukey biweight) and conversion to motion parameters;
//! * [`evaluation`] — synthetic ground-truth sequences, error metrics and
//!   noise-robustness sweeps;
//! * [`pipeline`] — chained registration for mosaicing and planar
//!   augmented-reality insertion.
//!
//! All numeric code is generic over the scalar type via [`Real`]
//! (`f32` or `f64`); the `*F64` aliases below fix the default precision
//! used by the command-line tools and the test suites.

pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod flowmodel;
pub mod geometry;
pub mod imaging;
pub mod pipeline;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::{real, Real};

pub type Rotation3F64 = geometry::Rotation3<f64>;
pub type DisplacementF64 = geometry::Displacement<f64>;
pub type MotionParamsF64 = geometry::MotionParams<f64>;
pub type ProjectiveMapF64 = geometry::ProjectiveMap<f64>;
pub type QuadraticFlowCoeffsF64 = flowmodel::QuadraticFlowCoeffs<f64>;
pub type DepthBoundsF64 = flowmodel::DepthBounds<f64>;
pub type ImageBufferF64 = imaging::ImageBuffer<f64>;
pub type IntrinsicsF64 = imaging::Intrinsics<f64>;
pub type DepthFieldF64 = imaging::DepthField<f64>;
pub type EstimatorConfigF64 = estimator::EstimatorConfig<f64>;
pub type EstimateResultF64 = estimator::EstimateResult<f64>;
pub type SequenceManifestF64 = evaluation::SequenceManifest<f64>;
pub type ChainEstimateF64 = pipeline::ChainEstimate<f64>;
pub type PlacementRectF64 = pipeline::PlacementRect<f64>;
