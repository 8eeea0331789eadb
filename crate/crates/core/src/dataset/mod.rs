//! On-disk dataset layout: manifests, frame annotations, protocol splits and
//! temporal-block extraction. Frame indices are 1-based throughout.

mod blocks;
mod frames;
mod manifest;
mod split;

pub use blocks::{slide_blocks, TemporalBlock};
pub use frames::{
    frame_file_name, load_video, quantize, read_frame, write_frame, ColorMode, Frame, FrameStore,
    LoadedVideo,
};
pub use manifest::{load_manifest, parse_manifest, FrameAnnotation, Label, Manifest, VideoRecord};
pub use split::{
    protocol_split, Protocol, SplitSpec, Supervision, TrainVideo, ABNORMAL_TRAIN_FRACTION,
    NORMAL_TRAIN_FRACTION,
};
