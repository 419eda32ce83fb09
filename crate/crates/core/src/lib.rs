pub mod asymptotics;
pub mod doublewell;
pub mod error;
pub mod fpsolver;
pub mod lattice;
pub mod observables;
pub mod potential;
pub mod quad;
pub mod sdemc;
pub mod study;
pub mod supercritical;
pub mod tridiag;
pub mod weights;

pub use error::{Error, Result};

/// Crate version, recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
