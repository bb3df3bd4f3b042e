//! Error types shared across the crate.
//!
//! Each validation error names the model requirement it violates, so a bad
//! configuration file fails with an actionable message rather than a NaN
//! twenty layers deeper.

use thiserror::Error;

/// Errors raised while validating or constructing a model.
#[derive(Debug, Clone, Error)]
pub enum ModelError {
    #[error("transition matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("mean reward matrix has {mu_rows} rows but transition matrix has {p_rows}")]
    DimensionMismatch { p_rows: usize, mu_rows: usize },

    #[error("transition row {row} sums to {sum} (must be 1 within 1e-12) or has a negative entry")]
    RowsNotStochastic { row: usize, sum: f64 },

    #[error("transition matrix is numerically singular (|det| = {det:.3e} < 1e-10); an invertible chain is required for spectral identifiability")]
    SingularTransition { det: f64 },

    #[error("mean reward matrix is rank deficient (smallest singular value {sigma_min:.3e} < 1e-10); distinct per-state reward profiles are required for spectral identifiability")]
    RankDeficientRewards { sigma_min: f64 },

    #[error("mean reward mu[{state}][{arm}] = {value} lies outside the open interval (0, 1)")]
    MeanOutOfRange { state: usize, arm: usize, value: f64 },

    #[error("transition matrix has a zero entry (min entry must be positive for belief-error control)")]
    ZeroTransitionEntry,

    #[error("stationary distribution is not unique (linear system numerically singular)")]
    NoUniqueStationary,

    #[error("arm index {arm} out of range for {num_arms} arms")]
    ArmOutOfRange { arm: usize, num_arms: usize },

    #[error("reward {0} is not binary")]
    RewardNotBinary(u8),

    #[error("observation index {index} out of range for alphabet size {size}")]
    ObservationOutOfRange { index: usize, size: usize },

    #[error("belief vector sums to {sum} (must be 1 within 1e-10) or has a negative entry")]
    InvalidBelief { sum: f64 },

    #[error("horizon must be at least 1")]
    EmptyHorizon,
}

/// Errors raised by the Bayesian filter.
#[derive(Debug, Clone, Error)]
pub enum BeliefError {
    #[error("likelihood denominator underflowed ({0:.3e} < 1e-300); inputs are corrupted")]
    DegenerateLikelihood(f64),

    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Errors raised by the spectral estimation pipeline.
#[derive(Debug, Clone, Error)]
pub enum SpectralError {
    #[error("no complete observation triple is available (every segment shorter than 3)")]
    InsufficientData,

    #[error("cross-moment matrix {name} has truncated rank {rank} < {required}; not enough distinct observations to identify the requested state count")]
    IllConditionedMoments {
        name: &'static str,
        rank: usize,
        required: usize,
    },

    #[error("whitening failed: only {found} positive eigenvalues above 1e-10, need {required}")]
    WhiteningFailure { found: usize, required: usize },

    #[error("tensor power iterations disagree across restarts (residual {residual:.3e} after {restarts} restarts)")]
    NonConvergence { residual: f64, restarts: usize },

    #[error("observation column {column} has total pair mass {mass:.3e} < 1e-8 for arm {arm}")]
    DegenerateColumn {
        column: usize,
        arm: usize,
        mass: f64,
    },

    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Errors raised by the belief-space planner.
#[derive(Debug, Clone, Error)]
pub enum PlannerError {
    #[error("simplex grid would hold {points} points, above the budget of {budget}")]
    GridTooLarge { points: usize, budget: usize },

    #[error("grid resolution and dimension must both be at least 1")]
    InvalidGrid,

    #[error("bias span bound requires a minimum transition entry in (0, 1/2), got {0}")]
    EpsilonOutOfRange(f64),

    #[error("no candidate model could be planned ({failures} failures)")]
    NoPlannableCandidate { failures: usize },

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Belief(#[from] BeliefError),
}

/// Errors raised by agents and the benchmark harness.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid schedule parameters: tau1 = {tau1} (need >= 3), tau2 = {tau2} (need >= 1), horizon = {horizon} (need >= 1)")]
    InvalidSchedule {
        tau1: usize,
        tau2: usize,
        horizon: usize,
    },

    #[error("invalid baseline parameter: {0}")]
    InvalidBaseline(String),

    #[error("experiment config: {0}")]
    InvalidConfig(String),

    #[error("slope fit needs at least 3 positive points, got {0}")]
    TooFewPoints(usize),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("model file {path}: {message}")]
    ModelFile { path: String, message: String },

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Spectral(#[from] SpectralError),

    #[error(transparent)]
    Planner(#[from] PlannerError),

    #[error(transparent)]
    Belief(#[from] BeliefError),
}
