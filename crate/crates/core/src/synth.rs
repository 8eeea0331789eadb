//! Deterministic multi-scenario, multi-view synthetic surveillance videos
//! with injectable anomalies and exact frame-level ground truth.
//!
//! A scenario is a world of filled-square agents moving at constant speed
//! and bouncing off the borders over a flat, optionally slowly varying
//! background. A view renders that world through a fixed viewpoint
//! transform (mirror, zoom and offset) derived from the view id, so views of
//! one scenario share dynamics but differ in appearance. Anomalies only
//! touch the frames inside their window.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    frame_file_name, write_frame, Frame, FrameAnnotation, Label, Manifest, VideoRecord,
};
use crate::error::{Error, Result};

/// Amplitude of the periodic background modulation.
pub const LIGHTING_AMPLITUDE: f64 = 0.1;
pub const DEFAULT_FPS: f64 = 30.0;

const STREAM_WORLD: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_INTRUDER: u64 = 2;
const STREAM_WINDOW: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dynamics {
    pub n_agents: usize,
    pub agent_speed_px_per_frame: f64,
    pub agent_size_px: usize,
    pub background_level: f64,
    #[serde(default)]
    pub lighting_period_frames: Option<usize>,
    pub noise_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub scenario_id: String,
    pub dynamics: Dynamics,
    /// `(H, W)`.
    pub frame_size: (usize, usize),
    pub seed: u64,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let d = &self.dynamics;
        let (h, w) = self.frame_size;
        let bad = |m: String| Err(Error::InvalidConfig(format!("{}: {m}", self.scenario_id)));
        if h == 0 || w == 0 {
            return bad("frame size must be positive".into());
        }
        if d.agent_size_px == 0 || d.agent_size_px >= h.min(w) {
            return bad(format!("agent_size_px must be in 1..{}", h.min(w)));
        }
        if !(d.agent_speed_px_per_frame > 0.0) {
            return bad("agent_speed_px_per_frame must be > 0".into());
        }
        if !(0.0..=1.0).contains(&d.background_level) {
            return bad("background_level must be in [0, 1]".into());
        }
        if !(0.0..=0.2).contains(&d.noise_std) {
            return bad("noise_std must be in [0, 0.2]".into());
        }
        if d.lighting_period_frames == Some(0) {
            return bad("lighting_period_frames must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    /// One agent moves several times faster, then returns to its path.
    SpeedBurst,
    /// An oversized extra agent wanders erratically through the scene.
    Intruder,
    /// One agent blinks between its intensity and the inverse.
    AppearanceFlip,
    /// Global brightness jump.
    IlluminationSpike,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 4] = [
        AnomalyKind::SpeedBurst,
        AnomalyKind::Intruder,
        AnomalyKind::AppearanceFlip,
        AnomalyKind::IlluminationSpike,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AnomalyKind::SpeedBurst => "speed_burst",
            AnomalyKind::Intruder => "intruder",
            AnomalyKind::AppearanceFlip => "appearance_flip",
            AnomalyKind::IlluminationSpike => "illumination_spike",
        }
    }

    /// Agent-bound anomalies stand in for human-related events; the
    /// illumination spike is the non-human (global) family.
    pub fn is_agent_bound(self) -> bool {
        !matches!(self, AnomalyKind::IlluminationSpike)
    }

    /// Velocity multiplier, intruder size multiplier, unused, brightness
    /// offset.
    pub fn default_magnitude(self) -> f64 {
        match self {
            AnomalyKind::SpeedBurst => 4.0,
            AnomalyKind::Intruder => 2.0,
            AnomalyKind::AppearanceFlip => 1.0,
            AnomalyKind::IlluminationSpike => 0.3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalySpec {
    pub kind: AnomalyKind,
    /// 1-based, inclusive.
    pub start_frame: usize,
    /// 1-based, inclusive.
    pub end_frame: usize,
    pub magnitude: f64,
}

impl AnomalySpec {
    pub fn contains(&self, t: usize) -> bool {
        (self.start_frame..=self.end_frame).contains(&t)
    }
}

#[derive(Clone, Copy, Debug)]
struct Agent {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    size: f64,
    intensity: f64,
}

impl Agent {
    fn spawn(rng: &mut ChaCha8Rng, h: usize, w: usize, size: f64, speed: f64, bg: f64) -> Self {
        let x = rng.random_range(0.0..=(w as f64 - size));
        let y = rng.random_range(0.0..=(h as f64 - size));
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let intensity = if bg < 0.5 {
            rng.random_range(0.7..0.95)
        } else {
            rng.random_range(0.05..0.3)
        };
        Self {
            x,
            y,
            vx: speed * angle.cos(),
            vy: speed * angle.sin(),
            size,
            intensity,
        }
    }

    fn step(&mut self, h: usize, w: usize) {
        let (x, vx) = bounce(self.x + self.vx, self.vx, w as f64 - self.size);
        let (y, vy) = bounce(self.y + self.vy, self.vy, h as f64 - self.size);
        (self.x, self.vx, self.y, self.vy) = (x, vx, y, vy);
    }

    fn covers(&self, wx: f64, wy: f64) -> bool {
        wx >= self.x && wx < self.x + self.size && wy >= self.y && wy < self.y + self.size
    }
}

/// Reflects `p` into `[0, hi]`, flipping the velocity on each bounce.
fn bounce(p: f64, v: f64, hi: f64) -> (f64, f64) {
    if hi <= 0.0 {
        return (0.0, v);
    }
    let (q, flips) = fold(p, hi);
    (q, if flips % 2 == 1 { -v } else { v })
}

/// Folds an unconstrained coordinate into `[0, hi]` by repeated reflection.
fn fold(p: f64, hi: f64) -> (f64, u64) {
    let period = 2.0 * hi;
    let k = (p / period).floor();
    let r = p - k * period;
    let base_flips = (2.0 * k).abs() as u64;
    if r <= hi {
        (r, base_flips)
    } else {
        (period - r, base_flips + 1)
    }
}

/// Fixed viewpoint transform mapping output pixels to world coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViewTransform {
    pub mirror: bool,
    pub scale: f64,
    pub offset_x: f64,
    pub offset_y: f64,
}

/// 64-bit FNV-1a, stable across platforms and releases.
fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl ViewTransform {
    pub fn for_view(view_id: &str, h: usize, w: usize) -> Self {
        let bits = splitmix(fnv1a(view_id));
        let mirror = bits & 1 == 1;
        let scale = [1.0, 0.875, 0.75][((bits >> 1) % 3) as usize];
        let ux = ((bits >> 8) & 0xffff) as f64 / 65535.0;
        let uy = ((bits >> 24) & 0xffff) as f64 / 65535.0;
        Self {
            mirror,
            scale,
            offset_x: ux * (1.0 - scale) * w as f64,
            offset_y: uy * (1.0 - scale) * h as f64,
        }
    }

    fn world(&self, r: usize, c: usize, w: usize) -> (f64, f64) {
        let c = if self.mirror { w - 1 - c } else { c };
        (
            self.offset_x + (c as f64 + 0.5) * self.scale,
            self.offset_y + (r as f64 + 0.5) * self.scale,
        )
    }
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Renders `length` frames of `config` seen from `view_id`, optionally with
/// an anomaly. Returns unquantized frames in `[0, 1]` and the frame labels.
pub fn generate_video(
    config: &SceneConfig,
    view_id: &str,
    length: usize,
    anomaly: Option<&AnomalySpec>,
) -> Result<(Vec<Frame>, FrameAnnotation)> {
    config.validate()?;
    if length < 2 {
        return Err(Error::InvalidConfig(format!(
            "video length must be >= 2, got {length}"
        )));
    }
    let d = &config.dynamics;
    if let Some(a) = anomaly {
        if a.start_frame < 1 || a.start_frame > a.end_frame || a.end_frame > length {
            return Err(Error::InvalidAnomalyWindow(format!(
                "[{}, {}] does not fit in 1..={length}",
                a.start_frame, a.end_frame
            )));
        }
        if !(a.magnitude > 0.0) {
            return Err(Error::InvalidAnomalyWindow("magnitude must be > 0".into()));
        }
        if a.kind.is_agent_bound() && a.kind != AnomalyKind::Intruder && d.n_agents == 0 {
            return Err(Error::InvalidConfig(format!(
                "{} needs at least one agent",
                a.kind.name()
            )));
        }
    }

    let (h, w) = config.frame_size;
    let view = ViewTransform::for_view(view_id, h, w);
    let size = d.agent_size_px as f64;
    let mut world_rng = rng_stream(config.seed, STREAM_WORLD);
    let mut noise_rng = rng_stream(config.seed, STREAM_NOISE);
    let mut agents: Vec<Agent> = (0..d.n_agents)
        .map(|_| {
            Agent::spawn(
                &mut world_rng,
                h,
                w,
                size,
                d.agent_speed_px_per_frame,
                d.background_level,
            )
        })
        .collect();

    let mut intruder_rng = rng_stream(config.seed, STREAM_INTRUDER);
    let intruder_speed = anomaly.map_or(0.0, |a| d.agent_speed_px_per_frame * a.magnitude);
    let mut intruder = anomaly
        .filter(|a| a.kind == AnomalyKind::Intruder)
        .map(|a| {
            let side = (size * a.magnitude).min(h.min(w) as f64 - 1.0).max(1.0);
            Agent::spawn(
                &mut intruder_rng,
                h,
                w,
                side,
                intruder_speed,
                d.background_level,
            )
        });

    let mut frames = Vec::with_capacity(length);
    let mut labels = vec![0u8; length];
    for t in 1..=length {
        let active = anomaly.filter(|a| a.contains(t));
        if active.is_some() {
            labels[t - 1] = 1;
        }
        let mut bg = d.background_level;
        if let Some(p) = d.lighting_period_frames {
            bg += LIGHTING_AMPLITUDE * (std::f64::consts::TAU * t as f64 / p as f64).sin();
        }

        let mut shown = agents.clone();
        if let (Some(a), Some(first)) = (active, shown.first_mut()) {
            match a.kind {
                AnomalyKind::SpeedBurst => {
                    // Out at (m−1)× the normal speed for half the window, then
                    // back, so the path rejoins the normal one after the window.
                    let tau = (t - a.start_frame) as f64;
                    let len = (a.end_frame - a.start_frame + 1) as f64;
                    let k = (a.magnitude - 1.0) * (tau + 1.0).min(len - tau);
                    let hi_x = w as f64 - first.size;
                    let hi_y = h as f64 - first.size;
                    first.x = fold(first.x + k * first.vx, hi_x).0;
                    first.y = fold(first.y + k * first.vy, hi_y).0;
                }
                AnomalyKind::AppearanceFlip => {
                    // Inverted on every other frame, starting with the first.
                    if (t - a.start_frame).is_multiple_of(2) {
                        first.intensity = 1.0 - first.intensity;
                    }
                }
                _ => {}
            }
        }
        if let (Some(a), Some(intr)) = (active, intruder.as_ref()) {
            if a.kind == AnomalyKind::Intruder {
                shown.push(*intr);
            }
        }
        let spike = match active {
            Some(a) if a.kind == AnomalyKind::IlluminationSpike => a.magnitude,
            _ => 0.0,
        };

        let mut data = vec![0.0; h * w];
        for r in 0..h {
            for c in 0..w {
                let (wx, wy) = view.world(r, c, w);
                let mut v = bg;
                for ag in &shown {
                    if ag.covers(wx, wy) {
                        v = ag.intensity;
                    }
                }
                let n: f64 = noise_rng.sample(StandardNormal);
                data[r * w + c] = (v + spike + d.noise_std * n).clamp(0.0, 1.0);
            }
        }
        frames.push(Frame::new(h, w, data));

        for ag in &mut agents {
            ag.step(h, w);
        }
        if let (Some(a), Some(intr)) = (anomaly, intruder.as_mut()) {
            if t >= a.start_frame {
                // Erratic walk: a fresh heading every frame.
                let angle = intruder_rng.random_range(0.0..std::f64::consts::TAU);
                intr.vx = intruder_speed * angle.cos();
                intr.vy = intruder_speed * angle.sin();
                intr.step(h, w);
            }
        }
    }
    Ok((frames, FrameAnnotation { labels }))
}

/// Dataset generator settings (also the JSON generator spec file).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub scenarios: Vec<SceneConfig>,
    pub views_per_scenario: usize,
    pub normals_per_view: usize,
    pub abnormals_per_view: usize,
    pub length: usize,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Seed of the `ordinal`-th generated video.
pub fn video_seed(dataset_seed: u64, scenario_seed: u64, ordinal: u64) -> u64 {
    splitmix(splitmix(dataset_seed ^ splitmix(scenario_seed)) ^ ordinal)
}

/// Anomaly window for an abnormal video: a duration of ⌊L/5⌋..=⌊L/4⌋ frames
/// starting in the second half of the video.
pub fn anomaly_window(seed: u64, length: usize) -> (usize, usize) {
    let mut rng = rng_stream(seed, STREAM_WINDOW);
    let lo = (length / 5).max(1);
    let hi = (length / 4).max(lo);
    let dur = rng.random_range(lo..=hi);
    let first = (length / 2 + 1).min(length + 1 - dur);
    let start = rng.random_range(first..=length + 1 - dur);
    (start, start + dur - 1)
}

pub fn view_id(scenario_id: &str, k: usize) -> String {
    format!("{scenario_id}-cam{k}")
}

/// Writes frames, annotations and `manifest.json` under `out_dir`.
/// Abnormal videos cycle through every [`AnomalyKind`]. When no video is
/// requested nothing is written.
pub fn generate_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<Manifest> {
    for s in &spec.scenarios {
        s.validate()?;
    }
    let mut records = Vec::new();
    let mut ordinal = 0u64;
    let mut abnormal_ordinal = 0usize;
    let per_view = spec.normals_per_view + spec.abnormals_per_view;
    if spec.scenarios.is_empty() || spec.views_per_scenario == 0 || per_view == 0 {
        return Manifest::new(records, out_dir);
    }
    fs::create_dir_all(out_dir.join("frames"))?;
    fs::create_dir_all(out_dir.join("annotations"))?;

    for scene in &spec.scenarios {
        for k in 0..spec.views_per_scenario {
            let view = view_id(&scene.scenario_id, k);
            for j in 0..per_view {
                let abnormal = j >= spec.normals_per_view;
                let video_id = if abnormal {
                    format!("{view}-a{:03}", j - spec.normals_per_view)
                } else {
                    format!("{view}-n{j:03}")
                };
                let seed = video_seed(spec.seed, scene.seed, ordinal);
                ordinal += 1;
                let cfg = SceneConfig {
                    seed,
                    ..scene.clone()
                };
                let anomaly = abnormal.then(|| {
                    let kind = AnomalyKind::ALL[abnormal_ordinal % AnomalyKind::ALL.len()];
                    abnormal_ordinal += 1;
                    let (start_frame, end_frame) = anomaly_window(seed, spec.length);
                    AnomalySpec {
                        kind,
                        start_frame,
                        end_frame,
                        magnitude: kind.default_magnitude(),
                    }
                });
                let (frames, ann) = generate_video(&cfg, &view, spec.length, anomaly.as_ref())?;

                let frames_rel = Path::new("frames").join(&video_id);
                let dir = out_dir.join(&frames_rel);
                fs::create_dir_all(&dir)?;
                for (i, f) in frames.iter().enumerate() {
                    write_frame(&dir.join(frame_file_name(i + 1)), f)?;
                }
                let ann_rel = Path::new("annotations").join(format!("{video_id}.txt"));
                ann.write(&out_dir.join(&ann_rel))?;

                records.push(VideoRecord {
                    video_id,
                    scenario_id: scene.scenario_id.clone(),
                    view_id: view.clone(),
                    frame_count: spec.length,
                    fps: DEFAULT_FPS,
                    label: if abnormal {
                        Label::Abnormal
                    } else {
                        Label::Normal
                    },
                    anomaly_type: anomaly.map(|a| a.kind.name().to_string()),
                    frames_path: frames_rel,
                    annotation_path: Some(ann_rel),
                });
            }
        }
    }
    let manifest = Manifest::new(records, out_dir)?;
    manifest.write(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}
