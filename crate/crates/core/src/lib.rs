//! Finite-dimensional laboratory for complex interpolation scales of
//! sequence spaces and the derivations they induce.
//!
//! * [`spaces`]: norm kernels (`l_p`, weighted, Lorentz, Tsirelson, composites) and dual norms.
//! * [`interpolate`]: Calderón-product norms via Lozanovskii factorization and numerical derivations.
//! * [`derivations`]: closed-form centralizers and the derived-space quasi-norm.
//! * [`diagnostics`]: sampled constants, triviality gaps and A-parameters.

pub mod derivations;
pub mod diagnostics;
pub mod error;
pub mod interpolate;
mod optim;
pub mod report;
pub mod spaces;
pub mod vector;

pub use derivations::{derived_norm, DerivationSpec, DerivedVector};
pub use error::{Error, Result};
pub use interpolate::{
    calderon_norm, lozanovskii_factor, numerical_derivation, Certificate, CoupleSpec,
    Factorization, DEFAULT_EPS,
};
pub use report::{Measured, Provenance, Report, Table};
pub use spaces::{dual_norm, norm, tsirelson_norm, DualNorm, SpaceSpec};
pub use vector::{restrict, IndexSet, Partition, Vector};
