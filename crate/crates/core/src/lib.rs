//! Numerical toolkit for conformal modulus, condenser capacity and ring
//! Q-mappings on Riemannian charts.

pub mod analysis;
pub mod condenser;
pub mod equicontinuity;
pub mod expr;
pub mod grid;
pub mod manifold;
pub mod modulus;
pub mod quad;

/// Toolkit version embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
