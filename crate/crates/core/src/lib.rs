//! Root particle flows of trigonometric polynomials under differentiation,
//! and a monotone explicit scheme for the truncated primitive equation
//!
//! ```text
//! ∂ₜF + (1/π)(arctan(A₀[F] / max((∂θF)₊, m)) + π/2) = 0
//! ```
//!
//! on cumulative distribution functions of measures on the circle.

pub mod error;
pub mod measure;
pub mod ops;
pub mod particles;
pub mod quadrature;
pub mod roots;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
