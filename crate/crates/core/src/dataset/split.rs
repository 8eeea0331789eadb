use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FrameAnnotation, Label, Manifest, VideoRecord};
use crate::error::{Error, Result};

/// Evaluation protocol.
///
/// * `ProtocolI`: train on normal videos only, test on the remaining normal
///   videos and every abnormal video.
/// * `ProtocolIi`: train on normal videos and half of the abnormal videos
///   with video-level labels only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Protocol {
    #[serde(rename = "protocol_i")]
    ProtocolI,
    #[serde(rename = "protocol_ii")]
    ProtocolIi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    NormalOnly,
    VideoLevel,
}

impl Protocol {
    pub fn supervision(self) -> Supervision {
        match self {
            Protocol::ProtocolI => Supervision::NormalOnly,
            Protocol::ProtocolIi => Supervision::VideoLevel,
        }
    }
}

/// Fraction of normal videos assigned to training, per scenario stratum.
pub const NORMAL_TRAIN_FRACTION: f64 = 0.75;
/// Fraction of abnormal videos assigned to training under protocol ii.
pub const ABNORMAL_TRAIN_FRACTION: f64 = 0.5;

/// Train/test partition of a manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub protocol: Protocol,
    pub seed: u64,
    pub train_ids: BTreeSet<String>,
    pub test_ids: BTreeSet<String>,
}

/// A training video as exposed by a split: the video-level label is visible,
/// frame-level annotations are not.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainVideo<'a> {
    pub video_id: &'a str,
    pub scenario_id: &'a str,
    pub view_id: &'a str,
    pub frame_count: usize,
    pub label: Label,
}

impl SplitSpec {
    pub fn supervision(&self) -> Supervision {
        self.protocol.supervision()
    }

    pub fn is_train(&self, video_id: &str) -> bool {
        self.train_ids.contains(video_id)
    }

    pub fn train_videos<'a>(&self, manifest: &'a Manifest) -> Result<Vec<TrainVideo<'a>>> {
        self.train_ids
            .iter()
            .map(|id| {
                let r = manifest.record(id)?;
                Ok(TrainVideo {
                    video_id: &r.video_id,
                    scenario_id: &r.scenario_id,
                    view_id: &r.view_id,
                    frame_count: r.frame_count,
                    label: r.label,
                })
            })
            .collect()
    }

    pub fn test_records<'a>(&self, manifest: &'a Manifest) -> Result<Vec<&'a VideoRecord>> {
        self.test_ids.iter().map(|id| manifest.record(id)).collect()
    }

    /// Frame labels of a test video. Training videos never expose them.
    pub fn test_annotation(
        &self,
        manifest: &Manifest,
        video_id: &str,
    ) -> Result<Option<FrameAnnotation>> {
        if self.is_train(video_id) {
            return Err(Error::AnnotationHidden(video_id.to_string()));
        }
        if !self.test_ids.contains(video_id) {
            return Err(Error::UnknownVideoId(video_id.to_string()));
        }
        manifest.annotation(manifest.record(video_id)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let spec: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        if let Some(id) = spec.train_ids.intersection(&spec.test_ids).next() {
            return Err(Error::Schema(format!("`{id}` is in both train and test")));
        }
        Ok(spec)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        fs::write(path, s)?;
        Ok(())
    }
}

/// Splits `manifest` under `protocol`, stratified by scenario.
///
/// Each stratum gets `fraction × size` training videos; the total is
/// `round(fraction × total)` and the fractional parts are settled by
/// largest remainder (ties go to the lexicographically first scenario).
/// Which videos of a stratum go to training is a seeded shuffle.
pub fn protocol_split(manifest: &Manifest, protocol: Protocol, seed: u64) -> Result<SplitSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_ids = BTreeSet::new();

    let normals = strata(manifest, Label::Normal);
    train_ids.extend(allocate(
        &normals,
        NORMAL_TRAIN_FRACTION,
        "normal",
        &mut rng,
    )?);

    if protocol == Protocol::ProtocolIi {
        let abnormals = strata(manifest, Label::Abnormal);
        train_ids.extend(allocate(
            &abnormals,
            ABNORMAL_TRAIN_FRACTION,
            "abnormal",
            &mut rng,
        )?);
    }

    let test_ids = manifest
        .records()
        .iter()
        .map(|r| r.video_id.clone())
        .filter(|id| !train_ids.contains(id))
        .collect();
    Ok(SplitSpec {
        protocol,
        seed,
        train_ids,
        test_ids,
    })
}

fn strata(manifest: &Manifest, label: Label) -> BTreeMap<&str, Vec<&str>> {
    let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in manifest.records().iter().filter(|r| r.label == label) {
        out.entry(r.scenario_id.as_str())
            .or_default()
            .push(r.video_id.as_str());
    }
    for ids in out.values_mut() {
        ids.sort_unstable();
    }
    out
}

fn allocate(
    strata: &BTreeMap<&str, Vec<&str>>,
    fraction: f64,
    what: &str,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<String>> {
    let total: usize = strata.values().map(Vec::len).sum();
    let quota = (fraction * total as f64).round() as usize;
    if quota == 0 || quota == total {
        return Err(Error::InsufficientVideos(format!(
            "{total} {what} videos cannot be split {:.0}/{:.0} with both sides non-empty",
            fraction * 100.0,
            (1.0 - fraction) * 100.0
        )));
    }

    let mut counts: Vec<(usize, f64)> = strata
        .values()
        .map(|ids| {
            let exact = fraction * ids.len() as f64;
            (exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = counts.iter().map(|c| c.0).sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    // Stable sort keeps scenario order among equal remainders.
    order.sort_by(|&a, &b| counts[b].1.total_cmp(&counts[a].1));
    for &i in order.iter().take(quota.saturating_sub(assigned)) {
        counts[i].0 += 1;
    }

    let mut out = Vec::with_capacity(quota);
    for ((_, ids), (n, _)) in strata.iter().zip(counts) {
        let mut ids = ids.clone();
        ids.shuffle(rng);
        out.extend(ids.into_iter().take(n).map(str::to_string));
    }
    Ok(out)
}
