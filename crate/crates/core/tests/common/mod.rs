#![allow(dead_code)]

pub mod gradcheck;
pub mod metrics;

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vad_core::synth::{Dynamics, SceneConfig};
use vad_core::{Frame, Label, LoadedVideo, Manifest, PredictorConfig, TemporalBlock, VideoRecord};

/// 16×16, one level, two base channels: 263 parameters.
pub fn tiny_config() -> PredictorConfig {
    PredictorConfig {
        frame_size: (16, 16),
        input_frames: 4,
        base_channels: 2,
        depth: 1,
        recurrent_bottleneck: false,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_frame(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Frame {
    Frame::new(h, w, (0..h * w).map(|_| rng.random::<f64>()).collect())
}

pub fn random_block(rng: &mut ChaCha8Rng, config: &PredictorConfig) -> TemporalBlock {
    let (h, w) = config.frame_size;
    let inputs = (0..config.input_frames)
        .map(|_| random_frame(rng, h, w))
        .collect();
    TemporalBlock::from_frames("random", inputs, random_frame(rng, h, w))
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Central differences of `f` at `theta`.
pub fn finite_difference(theta: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            x[i] = theta[i] + step;
            let up = f(&x);
            x[i] = theta[i] - step;
            let down = f(&x);
            x[i] = theta[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

pub fn scene(id: &str, seed: u64, size: (usize, usize)) -> SceneConfig {
    SceneConfig {
        scenario_id: id.to_string(),
        dynamics: Dynamics {
            n_agents: 2,
            agent_speed_px_per_frame: 1.0,
            agent_size_px: 3,
            background_level: 0.25,
            lighting_period_frames: None,
            noise_std: 0.01,
        },
        frame_size: size,
        seed,
    }
}

pub fn record(
    id: &str,
    scenario: &str,
    view: &str,
    label: Label,
    frame_count: usize,
) -> VideoRecord {
    VideoRecord {
        video_id: id.to_string(),
        scenario_id: scenario.to_string(),
        view_id: view.to_string(),
        frame_count,
        fps: 30.0,
        label,
        anomaly_type: (label == Label::Abnormal).then(|| "intruder".to_string()),
        frames_path: PathBuf::from(format!("frames/{id}")),
        annotation_path: None,
    }
}

pub fn loaded(id: &str, frames: Vec<Frame>) -> LoadedVideo {
    let rec = record(id, "s", "s-cam0", Label::Normal, frames.len());
    LoadedVideo::new(rec, frames).unwrap()
}

/// 14 scenarios, 480 normal and 240 abnormal videos, spread unevenly.
pub fn msad_sized() -> Manifest {
    let mut records = Vec::new();
    let mut normals_left = 480;
    let mut abnormals_left = 240;
    for s in 0..14 {
        let scenario = format!("scene{s:02}");
        let n = if s == 13 {
            normals_left
        } else {
            30 + (s * 7) % 11
        };
        let a = if s == 13 {
            abnormals_left
        } else {
            12 + (s * 5) % 9
        };
        normals_left -= n;
        abnormals_left -= a;
        for i in 0..n {
            let view = format!("{scenario}-cam{}", i % 3);
            records.push(record(
                &format!("{scenario}-n{i:03}"),
                &scenario,
                &view,
                Label::Normal,
                40,
            ));
        }
        for i in 0..a {
            let view = format!("{scenario}-cam{}", i % 3);
            records.push(record(
                &format!("{scenario}-a{i:03}"),
                &scenario,
                &view,
                Label::Abnormal,
                40,
            ));
        }
    }
    Manifest::new(records, ".").unwrap()
}
