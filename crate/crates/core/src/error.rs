use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("light speed must be positive and finite, got {0}")]
    InvalidLightSpeed(f64),

    #[error("speed {speed} is not below the light speed {c}")]
    Superluminal { speed: f64, c: f64 },

    #[error("inverse velocity map failed to converge for |w| = {0}")]
    InverseNotConverged(f64),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("mollifier width {epsilon} is below the resolvable limit {min} for this grid")]
    Unresolvable { epsilon: f64, min: f64 },

    #[error("CFL number {cfl:.4} exceeds 0.5 (max |u| = {umax}, dt = {dt})")]
    Cfl { cfl: f64, umax: f64, dt: f64 },

    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },

    #[error("time step {0} outside the admissible range")]
    TimeStep(f64),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Lyapunov value {value} at t = {t} is not positive; decay already at the floor")]
    NonPositiveSample { t: f64, value: f64 },

    #[error("decay fit needs at least 10 samples in the window, found {0}")]
    TooFewSamples(usize),

    #[error("moment interpolation check on an empty histogram")]
    EmptyHistogram,

    #[error("Picard iteration diverged at iterate {iterate}")]
    Divergence {
        iterate: usize,
        trace: Box<crate::picard::IterationTrace>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("parse: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
