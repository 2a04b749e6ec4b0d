use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("index {index} out of range 1..={max} for {what}")]
    OutOfRange { what: &'static str, index: usize, max: usize },

    #[error("impurity flux {0} rad is unsupported; only the cubic regime at pi/2 is modelled")]
    UnsupportedFlux(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("negative population {value} on mode {mode}")]
    NegativePopulation { mode: usize, value: f64 },

    #[error("integrator step size underflow at t = {time:e} s (step {step:e} s); the system is too stiff")]
    StepUnderflow { time: f64, step: f64 },

    #[error("steady state not reached by t = {time:e} s; last residual {residual:e}")]
    NotConverged { time: f64, residual: f64 },

    #[error("invalid trial state: {0}")]
    InvalidState(String),

    #[error("Fock truncation {truncation} too small: {mass:e} probability mass in the top level")]
    TruncationOverflow { truncation: usize, mass: f64 },

    #[error("coupler pole: beta denominator {denominator:e} vanishes near omega = {omega:e} rad/s")]
    CouplerPole { omega: f64, denominator: f64 },

    #[error("regime violation: {0}")]
    Regime(String),

    #[error("sampling too coarse: dt = {dt:e} s exceeds {limit:e} s")]
    Undersampled { dt: f64, limit: f64 },

    #[error("unsupported external flux {0} rad; the probe runs at 0 or pi/2")]
    UnsupportedPhiExt(f64),

    #[error("rank-deficient degeneracy groups: {0}")]
    RankDeficient(String),

    #[error("{0}")]
    Io(String),
}
