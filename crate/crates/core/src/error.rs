use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("tilt {sigma} outside the subcritical interval ({lo}, {hi})")]
    Regime { sigma: f64, lo: f64, hi: f64 },
    #[error("degenerate potential: {0}")]
    Degenerate(String),
    #[error("time scale underflows: exponent {exponent} below representable range")]
    Scale { exponent: f64 },
    #[error("quadrature did not reach tolerance {tol:e} on [{a}, {b}] (estimate {estimate:e})")]
    Quadrature {
        a: f64,
        b: f64,
        tol: f64,
        estimate: f64,
    },
    #[error("point {p} outside the constructed well window [{lo}, {hi}]")]
    Window { p: f64, lo: f64, hi: f64 },
    #[error("cell edge misaligned with barrier Q_{index} by {offset:e}")]
    Alignment { index: i64, offset: f64 },
    #[error("singular tridiagonal system at row {row}")]
    SingularSystem { row: usize },
    #[error("time grids differ: {0}")]
    GridMismatch(String),
    #[error("method not applicable: {0}")]
    Method(String),
    #[error("mode inconsistent with potential: {0}")]
    Mode(String),
    #[error("integrand is singular: {0}")]
    SingularIntegral(String),
    #[error("unstable step size: dt = {dt:e} exceeds bound {bound:e}")]
    Stability { dt: f64, bound: f64 },
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
