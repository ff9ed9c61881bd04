use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChoreoError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("series orders differ ({left} vs {right})")]
    OrderMismatch { left: usize, right: usize },

    #[error("degenerate reference phase: {0}")]
    DegenerateReference(String),

    #[error("collision: {0}")]
    Collision(String),

    #[error("not a simple branching point: {0}")]
    NotSimpleBranchPoint(String),

    #[error("at or near a branch point: {0}")]
    NearBranchPoint(String),

    #[error("Newton corrector failed: {0}")]
    NewtonFailed(String),

    #[error("step size fell below the minimum ({ds:.3e}): {reason}")]
    StepUnderflow { ds: f64, reason: String },

    #[error("branch switch failed: {0}")]
    SwitchFailed(String),

    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },

    #[error("pipeline stage `{stage}` failed at step {step}: {source}")]
    Stage {
        stage: String,
        step: usize,
        #[source]
        source: Box<ChoreoError>,
    },

    #[error("archive: {0}")]
    Archive(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = ChoreoError> = std::result::Result<T, E>;
