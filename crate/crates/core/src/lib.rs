//! Patient-specific synthetic gastrointestinal motion and registration scoring.
//!
//! The crate turns a static labeled 3D volume into a 21-phase 4D sequence with
//! known dense deformation fields, then scores deformable image registration
//! (DIR) methods and dose accumulation against that ground truth.
//!
//! The main stages, each its own module:
//!
//! 1. [`skeleton`] — thin an organ mask to a medial skeleton and extract the
//!    longest centerline path.
//! 2. [`surface`] — fit a NURBS tube surface around the centerline by radial
//!    casting, with inner-shell parameterization.
//! 3. [`motion`] — displace surface control points with a traveling
//!    peristaltic wave over 21 phases; fit wave parameters to reference motion.
//! 4. [`field`] — convert surface correspondences into dense deformation
//!    vector fields; invert and analyze them.
//! 5. [`registration`] — built-in variational solvers (optical flow, demons)
//!    producing candidate fields.
//! 6. [`metrics`] — TRE, DSC, HD95, dose accumulation, DWE, binned RMSE.
//! 7. [`phantom`] — analytic desk-scale test patients with exact geometry.
//! 8. [`qa`] — fit/re-synthesize/compare self-consistency protocol.
//! 9. [`pipeline`] — end-to-end orchestration from a JSON run config.
//!
//! All voxel-grid math is generic over the scalar type through [`Real`]
//! (`f32` or `f64`); the concrete aliases below pick the common instantiations.

pub mod error;
pub mod field;
pub mod grid;
pub mod metrics;
pub mod motion;
pub mod phantom;
pub mod pipeline;
pub mod qa;
pub mod real;
pub mod registration;
pub mod skeleton;
pub mod surface;
pub mod vec3;

pub use error::{Error, Result};
pub use real::Real;

/// Scalar grid holding `f64` samples, the pipeline default.
pub type ScalarGrid64 = grid::ScalarGrid<f64>;
/// Scalar grid holding `f32` samples, matching on-disk storage exactly.
pub type ScalarGrid32 = grid::ScalarGrid<f32>;
/// `f64` displacement field.
pub type VectorField64 = grid::VectorField<f64>;
/// `f32` displacement field.
pub type VectorField32 = grid::VectorField<f32>;
/// Label mask with `f64` geometry, the pipeline default.
pub type LabelMask64 = grid::LabelMask<f64>;
/// Tube surface with `f64` control points.
pub type TubeSurface64 = surface::TubeSurface<f64>;
/// Centerline with `f64` points.
pub type Centerline64 = skeleton::Centerline<f64>;
