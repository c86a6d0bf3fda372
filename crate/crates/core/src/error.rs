use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("network is not strongly connected: no path from zone {from} to zone {to}")]
    NotStronglyConnected { from: u32, to: u32 },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid cluster count k = {k} for {distinct} distinct points")]
    InvalidK { k: usize, distinct: usize },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("step {step} is outside the scenario (length {len})")]
    StepOutOfRange { step: usize, len: usize },

    #[error("infeasible action: {0}")]
    InfeasibleAction(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("rebalancing vector is not balanced: residual {residual:e}")]
    NotBalanced { residual: f64 },

    #[error("program is infeasible")]
    Infeasible,

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("hard terminal constraint is unreachable from the current state")]
    InfeasibleHorizon,

    #[error("fleet not conserved: expected {expected} vehicles, found {found}")]
    Conservation { expected: u64, found: u64 },

    #[error("invalid program: {0}")]
    InvalidProgram(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("configs differ in more than the controller: {0}")]
    MismatchedConfigs(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("plot error: {0}")]
    Plot(String),
}

impl Error {
    pub fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    /// Short stable identifier, used in the CLI's JSON error envelope.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotStronglyConnected { .. } => "not_strongly_connected",
            Error::InvalidNetwork(_) => "invalid_network",
            Error::InvalidK { .. } => "invalid_k",
            Error::InvalidScenario(_) => "invalid_scenario",
            Error::StepOutOfRange { .. } => "step_out_of_range",
            Error::InfeasibleAction(_) => "infeasible_action",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NotBalanced { .. } => "not_balanced",
            Error::Infeasible => "infeasible",
            Error::SolverFailure(_) => "solver_failure",
            Error::InfeasibleHorizon => "infeasible_horizon",
            Error::Conservation { .. } => "conservation",
            Error::InvalidProgram(_) => "invalid_program",
            Error::Config(_) => "config",
            Error::MismatchedConfigs(_) => "mismatched_configs",
            Error::Parse { .. } => "parse",
            Error::AtStep { source, .. } => source.kind(),
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Plot(_) => "plot",
        }
    }
}
