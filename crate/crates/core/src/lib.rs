//! Numerical toolkit for Lie algebroids given in local coordinates.

pub mod algebroid;
pub mod catalog;
pub mod error;
pub mod expr;
pub mod liealg;
pub mod linalg;
pub mod monodromy;
pub mod ode;
pub mod paths;
pub mod poisson;
pub mod serde_float;

pub use error::{Error, Result};
pub use expr::Expr;
pub use liealg::LieAlgebra;
pub use algebroid::{LocalAlgebroid, Section, StructureFunctions};
pub use monodromy::SphereMap;
pub use paths::APath;
pub use poisson::PoissonStructure;
