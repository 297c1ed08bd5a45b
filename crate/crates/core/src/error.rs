use thiserror::Error;

/// Errors raised by the simulation kernels and the experiment harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("reflectance out of range: {0} (expected 0 <= R <= 1)")]
    ReflectanceOutOfRange(f64),

    #[error("gain magnitude {0} outside the perturbative regime (|g| <= {max})", max = crate::quantum::GAIN_HARD_LIMIT)]
    GainOutOfRange(f64),

    #[error("occupation overflow: mode would exceed one photon at tuple {0:?}")]
    OccupationOverflow([u8; 4]),

    #[error("beamsplitter requires vacuum Eve modes, found population {0:.3e}")]
    EveModesOccupied(f64),

    #[error("exact oracle invalid: cutoff leakage {leakage:.3e} exceeds {limit:.1e}")]
    CutoffLeakage { leakage: f64, limit: f64 },

    #[error("per-slot detection probability {0} exceeds 1")]
    SlotProbability(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("closed form only tabulated at phi_AE in {{0, +pi/2, pi, -pi/2}}, got {0}")]
    UntabulatedPhase(f64),

    #[error("beamsplitter reflection amplitude r = 0 leaves the shift factor t/r undefined")]
    UndefinedShift,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("incomplete phase grid: missing point ({0}, {1})")]
    IncompleteGrid(f64, f64),

    #[error("channel overlap: {requested} channels of pitch {pitch:.3e} m exceed span {span:.3e} m")]
    ChannelOverlap {
        requested: usize,
        pitch: f64,
        span: f64,
    },

    #[error("invalid detuning: omega = {omega:.4e} must be below omega_p / 2 = {half_pump:.4e}")]
    InvalidDetuning { omega: f64, half_pump: f64 },

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
