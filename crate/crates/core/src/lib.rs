//! Numerics for concentrating solutions of fractional critical problems.

pub mod bubble;
pub mod constants;
pub mod domain;
pub mod energy;
pub mod error;
pub mod green;
pub mod kernel;
pub mod operators;
pub mod params;
pub mod quad;
pub mod spline;
pub mod verify;

pub use constants::ConstantSet;
pub use domain::DomainSpec;
pub use error::{Error, Result};
pub use operators::OperatorKind;
pub use params::{Criticality, FracParams};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
