//! Numerical laboratory for thin anisotropic elastic plates.
//!
//! The crate evaluates the anisotropically scaled three-dimensional plate
//! energies on tensor-product grids, their Reissner–Mindlin type limits, the
//! recovery-sequence deformations that connect the two, and rotation-field
//! estimators used in geometric rigidity arguments. Everything is deterministic:
//! parallel loops reduce in a fixed order so repeated runs agree bit for bit.
//!
//! Module map:
//!
//! * [`material`]: energy densities `W1`, `W2`, their quadratic forms at the
//!   identity and the relaxed shear form.
//! * [`fields`]: grids, deformation and mid-surface fields, discrete
//!   differential operators, snapshots.
//! * [`energy3d`]: the 3D functionals with per-term breakdown and gradients.
//! * [`limit2d`]: limiting plate functionals and their minimization.
//! * [`recovery`]: ansatz and recovery-sequence construction, Γ-convergence
//!   sweeps.
//! * [`rigidity`]: nearest rotations, mollified rotation fields, rigidity
//!   diagnostics.
//! * [`optimize`]: limited-memory quasi-Newton minimization.
//! * [`compare`]: 3D versus limit minimizer comparison.

pub mod compare;
pub mod energy3d;
pub mod fields;
pub mod limit2d;
mod linalg;
pub mod material;
pub mod optimize;
pub mod recovery;
pub mod rigidity;
mod stencil;

pub use energy3d::{BcMode, EnergyBreakdown, ForceSpec, PlateEnergy, Variant};
pub use fields::{DeformationField3, Grid2, Grid3, MidsurfaceState};
pub use limit2d::{LimitBreakdown, LimitVariant};
pub use material::{Material, MaterialParams, INFEASIBLE};
pub use optimize::{minimize, MinimizeOptions, Objective};
pub use recovery::{BumpState, StudyRow};
pub use rigidity::{RigidityReport, RotationField};
