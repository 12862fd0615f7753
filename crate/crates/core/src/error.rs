use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A finite-precision orbit ran out of significant bits.
    #[error("precision exhausted at step {step}")]
    PrecisionExhausted { step: u64 },
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("invalid radius {0}: must lie in (0, 1/2)")]
    InvalidRadius(f64),
    #[error("invalid ladder: {0}")]
    InvalidLadder(String),
    #[error("radius ladder is not strictly decreasing")]
    LadderNotDecreasing,
    #[error("invalid observable: {0}")]
    InvalidObservable(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("only {surviving} radii passed the count floor (need at least 3)")]
    InsufficientSample { surviving: usize },
    #[error("only {above_noise} lags above the noise floor (need at least {required})")]
    InsufficientSignal { above_noise: usize, required: usize },
    #[error("shift {shift} exceeds the branch enumeration budget")]
    BranchBudgetExceeded { shift: u32 },
    #[error("decay model is undetermined")]
    UndeterminedDecay,
    #[error("ensemble needs at least {required} trials, got {trials}")]
    TooFewTrials { trials: u64, required: u64 },
    #[error("backend disagreement at step {step}: {detail}")]
    BackendMismatch { step: u64, detail: String },
}
