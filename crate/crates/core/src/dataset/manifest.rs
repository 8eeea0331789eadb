use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Video-level label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Abnormal,
}

/// Catalog entry binding a video to its scenario, view, labels and
/// annotation file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoRecord {
    pub video_id: String,
    pub scenario_id: String,
    pub view_id: String,
    pub frame_count: usize,
    pub fps: f64,
    pub label: Label,
    pub anomaly_type: Option<String>,
    /// Directory of `frame_%06d.png` files, relative to the manifest file
    /// unless absolute.
    pub frames_path: PathBuf,
    pub annotation_path: Option<PathBuf>,
}

const RECORD_KEYS: [&str; 9] = [
    "video_id",
    "scenario_id",
    "view_id",
    "frame_count",
    "fps",
    "label",
    "anomaly_type",
    "frames_path",
    "annotation_path",
];

impl VideoRecord {
    fn validate(&self) -> Result<()> {
        let id = &self.video_id;
        if id.is_empty() {
            return Err(Error::Schema("empty video_id".into()));
        }
        if self.frame_count < 1 {
            return Err(Error::Schema(format!("{id}: frame_count must be >= 1")));
        }
        if !(self.fps > 0.0) {
            return Err(Error::Schema(format!("{id}: fps must be > 0")));
        }
        match (self.label, &self.anomaly_type) {
            (Label::Normal, Some(_)) => Err(Error::Schema(format!(
                "{id}: normal video must not carry an anomaly_type"
            ))),
            (Label::Abnormal, None) => Err(Error::Schema(format!(
                "{id}: abnormal video needs an anomaly_type"
            ))),
            _ => Ok(()),
        }
    }
}

/// Per-frame binary labels, 0 = normal, 1 = anomalous.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameAnnotation {
    pub labels: Vec<u8>,
}

impl FrameAnnotation {
    pub fn all_normal(frame_count: usize) -> Self {
        Self {
            labels: vec![0; frame_count],
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Parses the newline-delimited `0`/`1` text format.
    pub fn parse(text: &str) -> Result<Self> {
        let labels = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .enumerate()
            .map(|(i, l)| match l {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(Error::Schema(format!(
                    "annotation line {}: expected 0 or 1, got `{other}`",
                    i + 1
                ))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(Self { labels })
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.labels.len() * 2);
        for &l in &self.labels {
            s.push(if l == 0 { '0' } else { '1' });
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Validated catalog of videos plus the scenario → view → videos index.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    records: Vec<VideoRecord>,
    scenario_index: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    by_id: HashMap<String, usize>,
    base_dir: PathBuf,
}

impl Manifest {
    /// Builds a manifest from records, checking id uniqueness and the
    /// per-record invariants. File existence is not checked here; see
    /// [`load_manifest`].
    pub fn new(records: Vec<VideoRecord>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(records.len());
        let mut scenario_index: BTreeMap<String, BTreeMap<String, Vec<String>>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            r.validate()?;
            if by_id.insert(r.video_id.clone(), i).is_some() {
                return Err(Error::DuplicateId(r.video_id.clone()));
            }
            scenario_index
                .entry(r.scenario_id.clone())
                .or_default()
                .entry(r.view_id.clone())
                .or_default()
                .push(r.video_id.clone());
        }
        Ok(Self {
            records,
            scenario_index,
            by_id,
            base_dir: base_dir.into(),
        })
    }

    pub fn records(&self) -> &[VideoRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, video_id: &str) -> Option<&VideoRecord> {
        self.by_id.get(video_id).map(|&i| &self.records[i])
    }

    pub fn record(&self, video_id: &str) -> Result<&VideoRecord> {
        self.get(video_id)
            .ok_or_else(|| Error::UnknownVideoId(video_id.to_string()))
    }

    /// scenario_id → view_id → video_ids, in manifest order.
    pub fn scenario_index(&self) -> &BTreeMap<String, BTreeMap<String, Vec<String>>> {
        &self.scenario_index
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn frames_dir(&self, record: &VideoRecord) -> PathBuf {
        self.resolve(&record.frames_path)
    }

    /// Frame-level labels of a video. Normal videos without an annotation
    /// file are all-normal; abnormal videos without one have no frame labels.
    pub fn annotation(&self, record: &VideoRecord) -> Result<Option<FrameAnnotation>> {
        match &record.annotation_path {
            Some(p) => Ok(Some(FrameAnnotation::read(&self.resolve(p))?)),
            None if record.label == Label::Normal => {
                Ok(Some(FrameAnnotation::all_normal(record.frame_count)))
            }
            None => Ok(None),
        }
    }

    /// Distinct scenario ids, sorted.
    pub fn scenarios(&self) -> Vec<&str> {
        self.scenario_index.keys().map(String::as_str).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.records)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Parses a manifest document without touching the filesystem.
pub fn parse_manifest(text: &str, base_dir: impl Into<PathBuf>) -> Result<Manifest> {
    let raw: Vec<serde_json::Map<String, serde_json::Value>> = serde_json::from_str(text)
        .map_err(|e| Error::Schema(format!("manifest is not an array of objects: {e}")))?;
    let expected: BTreeSet<&str> = RECORD_KEYS.into_iter().collect();
    let mut records = Vec::with_capacity(raw.len());
    for (i, obj) in raw.into_iter().enumerate() {
        let keys: BTreeSet<&str> = obj.keys().map(String::as_str).collect();
        if keys != expected {
            let missing: Vec<_> = expected.difference(&keys).collect();
            let extra: Vec<_> = keys.difference(&expected).collect();
            return Err(Error::Schema(format!(
                "record {i}: missing keys {missing:?}, unexpected keys {extra:?}"
            )));
        }
        let rec: VideoRecord = serde_json::from_value(serde_json::Value::Object(obj))
            .map_err(|e| Error::Schema(format!("record {i}: {e}")))?;
        records.push(rec);
    }
    Manifest::new(records, base_dir)
}

/// Loads and fully validates a manifest file, including every referenced
/// frame directory and annotation file.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let manifest = parse_manifest(&text, base)?;
    for r in manifest.records() {
        let dir = manifest.frames_dir(r);
        if !dir.is_dir() {
            return Err(Error::MissingFile(dir));
        }
        if let Some(p) = &r.annotation_path {
            let ann = FrameAnnotation::read(&manifest.resolve(p))?;
            if ann.len() != r.frame_count {
                return Err(Error::Schema(format!(
                    "{}: annotation has {} entries, frame_count is {}",
                    r.video_id,
                    ann.len(),
                    r.frame_count
                )));
            }
            if r.label == Label::Normal && ann.labels.iter().any(|&l| l != 0) {
                return Err(Error::Schema(format!(
                    "{}: normal video has anomalous frame labels",
                    r.video_id
                )));
            }
        }
    }
    Ok(manifest)
}
