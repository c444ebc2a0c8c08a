//! p-adic Hua measures: exact linear algebra over Q_p, closed-form and
//! series evaluation of the Hua integral, samplers for the measures, the
//! linear-fractional action with its cocycle, and corner projections.

pub mod acceptance;
pub mod actions;
pub mod error;
pub mod experiments;
pub mod lattice;
pub mod linalg;
pub mod measures;
pub mod padic;
pub mod projective;
pub mod real;
pub mod rng;
pub mod samplers;
pub mod stats;

pub use error::{HuaError, Result};
pub use linalg::{PadicMatrix, SingularProfile};
pub use measures::{Flavor, MeasureSpec};
pub use padic::{PadicScalar, Precision, Valuation, DEFAULT_PRECISION};
pub use real::Real;
pub use rng::RandomStream;
pub use samplers::WeightedSample;
