use std::sync::Arc;

use super::{Frame, LoadedVideo};
use crate::error::{Error, Result};

/// A `window`-frame clip: the first `window − 1` frames are the predictor
/// input, the last one is the target.
#[derive(Clone, Debug)]
pub struct TemporalBlock {
    frames: Arc<[Frame]>,
    source_video: Arc<str>,
    start_index: usize,
    window: usize,
}

impl TemporalBlock {
    /// `start_index` is 1-based.
    pub fn new(video: &LoadedVideo, start_index: usize, window: usize) -> Result<Self> {
        check_window(window)?;
        let n = video.frames.len();
        if start_index < 1 || start_index + window - 1 > n {
            return Err(Error::VideoTooShort {
                video_id: video.video_id().to_string(),
                frame_count: n,
                required: start_index.max(1) + window - 1,
            });
        }
        Ok(Self {
            frames: Arc::clone(&video.frames),
            source_video: Arc::from(video.video_id()),
            start_index,
            window,
        })
    }

    /// Builds a free-standing block from explicit frames (`inputs` then
    /// `target`), mostly useful for tests and tooling.
    pub fn from_frames(source_video: &str, inputs: Vec<Frame>, target: Frame) -> Self {
        let window = inputs.len() + 1;
        let mut frames = inputs;
        frames.push(target);
        Self {
            frames: frames.into(),
            source_video: Arc::from(source_video),
            start_index: 1,
            window,
        }
    }

    pub fn input_frames(&self) -> &[Frame] {
        let s = self.start_index - 1;
        &self.frames[s..s + self.window - 1]
    }

    pub fn target_frame(&self) -> &Frame {
        &self.frames[self.start_index + self.window - 2]
    }

    pub fn source_video(&self) -> &str {
        &self.source_video
    }

    pub fn start_index(&self) -> usize {
        self.start_index
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// 1-based index of the target frame in the source video.
    pub fn target_index(&self) -> usize {
        self.start_index + self.window - 1
    }
}

fn check_window(window: usize) -> Result<()> {
    if window < 2 {
        return Err(Error::InvalidConfig(format!(
            "temporal window must be >= 2, got {window}"
        )));
    }
    Ok(())
}

/// Every block of a video under a step-1 sliding window, in order of
/// `start_index` (1, 2, …, frame_count − window + 1).
pub fn slide_blocks(video: &LoadedVideo, window: usize) -> Result<Vec<TemporalBlock>> {
    check_window(window)?;
    let n = video.record.frame_count;
    if n < window {
        return Err(Error::VideoTooShort {
            video_id: video.video_id().to_string(),
            frame_count: n,
            required: window,
        });
    }
    (1..=n - window + 1)
        .map(|s| TemporalBlock::new(video, s, window))
        .collect()
}
