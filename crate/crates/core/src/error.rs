use thiserror::Error;

/// Every failure the toolkit reports, from geometry up to dataset IO.
#[derive(Debug, Error)]
pub enum FoldError {
    #[error("empty input")]
    EmptyInput,
    #[error("sample count {k} out of range 1..={n}")]
    BadK { k: usize, n: usize },
    #[error("degenerate geometry: {0}")]
    Degenerate(&'static str),
    #[error("size mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("bad garment spec field `{field}`: {reason}")]
    BadSpec { field: &'static str, reason: String },
    #[error("bad parameter `{field}`: {reason}")]
    BadParam { field: &'static str, reason: String },
    #[error("simulation blew up at vertex {vertex}")]
    NumericalBlowup { vertex: usize },
    #[error("vertex {0} is not grasped")]
    NotGrasped(usize),
    #[error("vertex {vertex} out of range for mesh with {count} vertices")]
    BadVertex { vertex: usize, count: usize },
    #[error("grasp and target closer than 1 mm")]
    DegenerateSegment,
    #[error("no observed point lies on the moving side of the fold line")]
    NothingToFold,
    #[error("unrecognized instruction segments: {0:?}")]
    UnknownInstruction(Vec<String>),
    #[error("stage {stage} is not valid for category {category}")]
    CategoryMismatch { stage: String, category: String },
    #[error("flow field has no motion")]
    NoMotion,
    #[error("trajectory has {frames} frames, need at least {needed}")]
    TooShort { frames: usize, needed: usize },
    #[error("action budget exhausted")]
    BudgetExhausted,
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = FoldError> = std::result::Result<T, E>;
