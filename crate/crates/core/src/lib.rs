//! Scenario-adaptive few-shot video anomaly detection.
//!
//! A future-frame predictor is meta-trained over (scenario, view) tasks,
//! adapted to a target video from its first few frames, and scored by
//! per-video normalized PSNR. Frame-level Micro/Macro AUC, AP and FPR are
//! computed over the resulting score series.

pub mod autodiff;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod meta;
pub mod predictor;
pub mod scoring;
pub mod synth;

pub use dataset::{
    load_manifest, protocol_split, slide_blocks, ColorMode, Frame, FrameAnnotation, FrameStore,
    Label, LoadedVideo, Manifest, Protocol, SplitSpec, TemporalBlock, VideoRecord,
};
pub use error::{Error, Result};
pub use eval::{LabeledScores, Polarity};
pub use meta::{EpisodeTask, MetaConfig, SamplerMode};
pub use predictor::{init_predictor, CompositeLoss, FramePredictor, LossConfig, PredictorConfig};
pub use scoring::ScoreSeries;
