use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("duplicate video id `{0}`")]
    DuplicateId(String),
    #[error("insufficient videos: {0}")]
    InsufficientVideos(String),
    #[error("video `{video_id}` has {frame_count} frames, needs at least {required}")]
    VideoTooShort {
        video_id: String,
        frame_count: usize,
        required: usize,
    },
    #[error("frame annotations of training video `{0}` are not exposed under this split")]
    AnnotationHidden(String),
    #[error("invalid anomaly window: {0}")]
    InvalidAnomalyWindow(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("frames of {height}x{width} are too small for {scales} MS-SSIM scales")]
    TooSmallForScales {
        height: usize,
        width: usize,
        scales: usize,
    },
    #[error("insufficient scenarios: need {needed}, have {available}")]
    InsufficientScenarios { needed: usize, available: usize },
    #[error("insufficient blocks for {scenario_id}/{view_id}: need {needed}, have {available}")]
    InsufficientBlocks {
        scenario_id: String,
        view_id: String,
        needed: usize,
        available: usize,
    },
    #[error("empty task set")]
    EmptyTaskSet,
    #[error("empty input")]
    EmptyInput,
    #[error("labels contain a single class")]
    DegenerateLabels,
    #[error("no video has both normal and anomalous frames")]
    NoEvaluableVideos,
    #[error("no positive (anomalous) frames")]
    NoPositives,
    #[error("no negative (normal) frames")]
    NoNegatives,
    #[error("unknown video id `{0}`")]
    UnknownVideoId(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Short machine-readable tag, used as the `status` column of reports.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::MissingFile(_) => "MissingFile",
            Error::Schema(_) => "SchemaError",
            Error::DuplicateId(_) => "DuplicateId",
            Error::InsufficientVideos(_) => "InsufficientVideos",
            Error::VideoTooShort { .. } => "VideoTooShort",
            Error::AnnotationHidden(_) => "AnnotationHidden",
            Error::InvalidAnomalyWindow(_) => "InvalidAnomalyWindow",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::TooSmallForScales { .. } => "TooSmallForScales",
            Error::InsufficientScenarios { .. } => "InsufficientScenarios",
            Error::InsufficientBlocks { .. } => "InsufficientBlocks",
            Error::EmptyTaskSet => "EmptyTaskSet",
            Error::EmptyInput => "EmptyInput",
            Error::DegenerateLabels => "DegenerateLabels",
            Error::NoEvaluableVideos => "NoEvaluableVideos",
            Error::NoPositives => "NoPositives",
            Error::NoNegatives => "NoNegatives",
            Error::UnknownVideoId(_) => "UnknownVideoId",
            Error::Checkpoint(_) => "CheckpointError",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
            Error::Csv(_) => "CsvError",
            Error::Image(_) => "ImageError",
        }
    }
}
