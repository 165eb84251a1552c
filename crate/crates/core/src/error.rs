use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // geometry
    #[error("invalid microphone array: {0}")]
    InvalidArray(String),
    #[error("invalid microphone pair ({0}, {1})")]
    InvalidPair(usize, usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("delay vector is infeasible (discriminant {delta:e} < 0)")]
    Infeasible { delta: f64 },
    #[error("equality constraints violated (squared residual {residual:e})")]
    EqualityViolation { residual: f64 },
    #[error("no localization candidate reproduces the delay vector")]
    DisambiguationFailure,

    // correlation
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("channel {0} is silent")]
    SilentChannel(usize),
    #[error("frame too short: {len} samples cannot support a lag of {lag} samples")]
    FrameTooShort { len: usize, lag: usize },
    #[error("lag {lag:e} s outside the tabulated range ±{max:e} s")]
    LagOutOfRange { lag: f64, max: f64 },

    // solvers
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("no feasible region found, even after restarting on the discarded list")]
    NoFeasibleRegion,
    #[error("iteration budget of {0} exhausted")]
    IterationsExhausted(usize),
    #[error("initial point is infeasible for the constrained solver")]
    InitInfeasible,
    #[error("non-finite Newton step")]
    NonFiniteStep,
    #[error("initialization grid is empty")]
    EmptyGrid,
    #[error("every start of the multi-start solver failed")]
    AllStartsFailed,

    // simulation
    #[error("source position lies outside the room")]
    SourceOutsideRoom,
    #[error("source signal too short: need {needed} samples, got {got}")]
    SignalTooShort { needed: usize, got: usize },
    #[error("invalid room: {0}")]
    InvalidRoom(String),

    // io
    #[error("sample-rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
