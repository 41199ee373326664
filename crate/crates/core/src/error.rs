use thiserror::Error;

pub type Result<T> = std::result::Result<T, DrexError>;

#[derive(Debug, Error)]
pub enum DrexError {
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("invalid MDP at {location}: {message}")]
    InvalidMdp { location: String, message: String },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error(
        "value iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    Convergence { iterations: usize, residual: f64 },

    #[error("singular linear system while solving for discounted occupancy")]
    SingularSystem,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("demonstrator is degenerate: {0}")]
    DemonstratorDegenerate(String),

    #[error("ranking needs at least two distinct noise levels, found {found}")]
    InsufficientLevels { found: usize },

    #[error("no trajectory is long enough to crop a snippet of length {min_len}")]
    NoValidTrajectory { min_len: usize },

    #[error("reward training diverged at update {update}")]
    TrainingDiverged {
        update: usize,
        last_finite: Vec<f64>,
    },

    #[error("theorem inapplicable: {0}")]
    TheoremInapplicable(&'static str),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<DrexError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl DrexError {
    pub(crate) fn mdp(location: impl Into<String>, message: impl Into<String>) -> Self {
        DrexError::InvalidMdp {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Innermost error once stage labels are peeled off.
    pub fn root(&self) -> &DrexError {
        match self {
            DrexError::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| DrexError::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
