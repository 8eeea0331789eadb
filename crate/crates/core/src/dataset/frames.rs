use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};

use super::{Manifest, VideoRecord};
use crate::error::{Error, Result};

/// One video frame, channel-major, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Frame {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), height * width, "frame data length");
        Self {
            height,
            width,
            channels: 1,
            data,
        }
    }

    pub fn filled(height: usize, width: usize, v: f64) -> Self {
        Self::new(height, width, vec![v; height * width])
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Quantizes to 8 bits with round-half-up.
    pub fn to_gray8(&self) -> GrayImage {
        assert_eq!(self.channels, 1, "only grayscale frames can be written");
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([quantize(self.at(y as usize, x as usize))])
        })
    }
}

/// `[0,1]` → `0..=255`, rounding half up.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// How frames are decoded from disk.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorMode {
    #[default]
    Gray,
    Rgb,
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.png")
}

pub fn read_frame(path: &Path, mode: ColorMode) -> Result<Frame> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(match mode {
        ColorMode::Gray => {
            let g = img.to_luma8();
            Frame::new(h, w, g.as_raw().iter().map(|&p| p as f64 / 255.0).collect())
        }
        ColorMode::Rgb => {
            let rgb = img.to_rgb8();
            let mut data = vec![0.0; 3 * h * w];
            for (i, px) in rgb.pixels().enumerate() {
                for c in 0..3 {
                    data[c * h * w + i] = px[c] as f64 / 255.0;
                }
            }
            Frame {
                height: h,
                width: w,
                channels: 3,
                data,
            }
        }
    })
}

pub fn write_frame(path: &Path, frame: &Frame) -> Result<()> {
    frame.to_gray8().save(path)?;
    Ok(())
}

/// A video's record together with its decoded frames.
#[derive(Clone, Debug)]
pub struct LoadedVideo {
    pub record: VideoRecord,
    pub frames: Arc<[Frame]>,
}

impl LoadedVideo {
    pub fn new(record: VideoRecord, frames: Vec<Frame>) -> Result<Self> {
        if frames.len() != record.frame_count {
            return Err(Error::Schema(format!(
                "{}: {} frames decoded, frame_count is {}",
                record.video_id,
                frames.len(),
                record.frame_count
            )));
        }
        Ok(Self {
            record,
            frames: frames.into(),
        })
    }

    pub fn video_id(&self) -> &str {
        &self.record.video_id
    }
}

pub fn load_video(
    manifest: &Manifest,
    record: &VideoRecord,
    mode: ColorMode,
) -> Result<LoadedVideo> {
    let dir = manifest.frames_dir(record);
    let frames = (1..=record.frame_count)
        .map(|i| read_frame(&dir.join(frame_file_name(i)), mode))
        .collect::<Result<Vec<_>>>()?;
    LoadedVideo::new(record.clone(), frames)
}

/// In-memory cache of decoded videos keyed by `video_id`.
#[derive(Clone, Debug, Default)]
pub struct FrameStore {
    videos: HashMap<String, Arc<LoadedVideo>>,
}

impl FrameStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load<'a>(
        manifest: &Manifest,
        ids: impl IntoIterator<Item = &'a str>,
        mode: ColorMode,
    ) -> Result<Self> {
        let mut store = Self::new();
        for id in ids {
            let rec = manifest.record(id)?;
            store.insert(load_video(manifest, rec, mode)?);
        }
        Ok(store)
    }

    pub fn insert(&mut self, video: LoadedVideo) {
        self.videos
            .insert(video.record.video_id.clone(), Arc::new(video));
    }

    pub fn get(&self, video_id: &str) -> Result<&Arc<LoadedVideo>> {
        self.videos
            .get(video_id)
            .ok_or_else(|| Error::UnknownVideoId(video_id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }
}
