//! Port-reduced static condensation for component-based elliptic FE models.
//!
//! The crate builds structured quadrilateral meshes for rectangular components
//! (optionally with cracks or holes), assembles Q1 finite element systems for
//! the Laplacian and plane-stress linear elasticity, condenses interiors onto
//! shared ports, and constructs quasi-optimal port spaces from the spectrum of
//! a harmonic transfer operator. On top of that sit a spectral greedy that
//! merges port spaces over a family of component geometries, a residual-based
//! a posteriori error estimator for the port reduction, and a multi-component
//! chain assembler that reuses per-geometry factorizations.

pub mod error;
pub mod estimator;
pub mod fem;
pub mod greedy;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod oracle;
pub mod portspace;
pub mod schur;
pub mod study;
pub mod system;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
