use thiserror::Error;

/// Errors raised by the analytic and simulation modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("tree must have at least one level")]
    EmptyTopology,

    #[error("level {level}: degree {degree} is below the minimum of 2")]
    DegreeTooSmall { level: usize, degree: u64 },

    #[error("level {level} is out of range for a tree of depth {depth}")]
    LevelOutOfRange { level: usize, depth: usize },

    #[error("{what}: expected {expected} levels, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("level {level}: {count} Byzantines requested but the level has only {nodes} nodes")]
    CountExceedsLevel { level: usize, count: u64, nodes: u64 },

    #[error("level {level}: {requested} Byzantines cannot be placed, only {available} nodes lie outside covered subtrees")]
    InfeasiblePlacement {
        level: usize,
        requested: u64,
        available: u64,
    },

    #[error("placement at level {level} marks node {node} which has a Byzantine ancestor")]
    OverlappingPlacement { level: usize, node: u64 },

    #[error("{name} = {value} is not a valid probability")]
    InvalidProbability { name: &'static str, value: f64 },

    #[error("operating point requires 0 <= P_fa < P_d <= 1, got P_d = {p_detect}, P_fa = {p_false_alarm}")]
    UninformativeOperatingPoint { p_detect: f64, p_false_alarm: f64 },

    #[error("coverage {value} at index {index} is outside the admissible range")]
    CoverageOutOfRange { index: usize, value: f64 },

    #[error("coverage must be non-decreasing across levels (index {index})")]
    CoverageDecreasing { index: usize },

    #[error("grid resolution must be at least 2, got {0}")]
    GridTooCoarse(usize),

    #[error("finite-difference step {step} does not fit inside the probability bounds")]
    StepTooLarge { step: f64 },

    #[error("likelihood-ratio threshold must be positive, got {0}")]
    NonPositiveThreshold(f64),

    #[error("signal amplitude must be positive, got {0}")]
    NonPositiveAmplitude(f64),

    #[error("cost set is empty")]
    EmptyCosts,

    #[error("cost set must be sorted in descending order (position {position})")]
    UnsortedCosts { position: usize },

    #[error("cost set has {available} entries but the tree has {levels} levels")]
    TooFewCosts { available: usize, levels: usize },

    #[error("costs must be positive")]
    ZeroCost,

    #[error("enumeration of {size} candidates exceeds the limit of {limit}")]
    EnumerationLimit { size: u128, limit: u128 },

    #[error("level {level}: honest/anchor disagreement {honest} is not below Byzantine/anchor disagreement {byzantine}")]
    SeparationViolated {
        level: usize,
        honest: f64,
        byzantine: f64,
    },

    #[error("priors must be non-negative and sum to one, got P0 = {0}")]
    InvalidPrior(f64),

    #[error("honest false-isolation cap at level {level} must lie in (0, 0.5), got {value}")]
    InvalidDeltaCap { level: usize, value: f64 },

    #[error("normal approximation breaks down: {0}")]
    ApproximationDomain(String),

    #[error("trial count {requested} exceeds the budget of {budget}")]
    TrialBudget { requested: u64, budget: u64 },

    #[error("at least one trial is required")]
    NoTrials,

    #[error("false-alarm level must lie in (0, 1], got {0}")]
    InvalidFalseAlarmLevel(f64),

    #[error("fusion statistic is constant ({value}) under H0; the threshold is degenerate")]
    DegenerateCalibration { value: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
