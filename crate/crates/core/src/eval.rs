//! Frame-level evaluation: Micro/Macro ROC AUC, average precision, false
//! positive rate at a threshold, and grouped reports.
//!
//! Anomalous frames are the positive class. Scores are ranked by anomaly
//! score: `1 − s` for normalcy-oriented scores (the normalized PSNR), the
//! score itself for anomaly-oriented files from external detectors. Ties
//! count ½ in AUC. Average precision walks frames in descending anomaly
//! score, breaking ties by concatenation order (videos by id, then frame).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Label, Manifest};
use crate::error::{Error, Result};
use crate::scoring::ScoreTable;

/// Orientation of the scores in a [`LabeledScores`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// High = normal (normalized PSNR).
    #[default]
    Normalcy,
    /// High = anomalous.
    Anomaly,
}

/// Per-video frame scores with aligned binary labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledScores {
    polarity: Polarity,
    per_video: BTreeMap<String, (Vec<f64>, Vec<u8>)>,
}

impl LabeledScores {
    pub fn new(polarity: Polarity) -> Self {
        Self {
            polarity,
            per_video: BTreeMap::new(),
        }
    }

    pub fn insert(
        &mut self,
        video_id: impl Into<String>,
        scores: Vec<f64>,
        labels: Vec<u8>,
    ) -> Result<()> {
        let id = video_id.into();
        if scores.is_empty() || scores.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{id}: {} scores vs {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Schema(format!("{id}: labels must be 0 or 1")));
        }
        self.per_video.insert(id, (scores, labels));
        Ok(())
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    pub fn videos(&self) -> impl Iterator<Item = (&str, &[f64], &[u8])> {
        self.per_video
            .iter()
            .map(|(k, (s, l))| (k.as_str(), s.as_slice(), l.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.per_video.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_video.is_empty()
    }

    pub fn n_frames(&self) -> usize {
        self.per_video.values().map(|(s, _)| s.len()).sum()
    }

    fn to_anomaly(&self, s: f64) -> f64 {
        match self.polarity {
            Polarity::Normalcy => 1.0 - s,
            Polarity::Anomaly => s,
        }
    }

    fn to_normalcy(&self, s: f64) -> f64 {
        match self.polarity {
            Polarity::Normalcy => s,
            Polarity::Anomaly => 1.0 - s,
        }
    }

    /// Anomaly scores and labels concatenated in video-id order.
    pub fn concatenated(&self) -> (Vec<f64>, Vec<u8>) {
        let mut scores = Vec::with_capacity(self.n_frames());
        let mut labels = Vec::with_capacity(self.n_frames());
        for (s, l) in self.per_video.values() {
            scores.extend(s.iter().map(|&v| self.to_anomaly(v)));
            labels.extend_from_slice(l);
        }
        (scores, labels)
    }

    /// Subset restricted to `ids` (missing ids are ignored).
    pub fn subset<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Self {
        let mut out = Self::new(self.polarity);
        for id in ids {
            if let Some(v) = self.per_video.get(id) {
                out.per_video.insert(id.to_string(), v.clone());
            }
        }
        out
    }

    /// Aligns a score table with frame annotations. Frames without a score
    /// are dropped, so the alignment starts at each video's first scored
    /// frame.
    pub fn from_table(
        table: &ScoreTable,
        polarity: Polarity,
        mut labels_for: impl FnMut(&str) -> Result<Vec<u8>>,
    ) -> Result<Self> {
        let mut out = Self::new(polarity);
        for (id, rows) in table {
            let labels = labels_for(id)?;
            let mut s = Vec::with_capacity(rows.len());
            let mut l = Vec::with_capacity(rows.len());
            for &(frame, score) in rows {
                let lab = *labels.get(frame - 1).ok_or_else(|| {
                    Error::Schema(format!(
                        "{id}: frame {frame} beyond annotation length {}",
                        labels.len()
                    ))
                })?;
                s.push(score);
                l.push(lab);
            }
            out.insert(id.clone(), s, l)?;
        }
        Ok(out)
    }
}

/// Mann–Whitney AUC of anomaly scores against labels, ties counted ½.
pub fn auc(anomaly_scores: &[f64], labels: &[u8]) -> Result<f64> {
    assert_eq!(anomaly_scores.len(), labels.len());
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| anomaly_scores[a].total_cmp(&anomaly_scores[b]));
    // Twice the number of correctly ordered pairs, with ties counting 1.
    let mut twice_wins = 0u128;
    let mut neg_below = 0u128;
    let mut i = 0;
    while i < order.len() {
        let v = anomaly_scores[order[i]];
        let mut j = i;
        let (mut p, mut n) = (0u128, 0u128);
        while j < order.len() && anomaly_scores[order[j]].total_cmp(&v).is_eq() {
            if labels[order[j]] == 1 {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        twice_wins += p * (2 * neg_below + n);
        neg_below += n;
        i = j;
    }
    Ok(twice_wins as f64 / (2.0 * pos as f64 * neg as f64))
}

/// AUC over all frames concatenated across videos.
pub fn micro_auc(data: &LabeledScores) -> Result<f64> {
    let (s, l) = data.concatenated();
    auc(&s, &l)
}

/// Macro AUC and which videos were left out for lacking one of the classes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MacroAuc {
    pub value: f64,
    pub included: usize,
    pub excluded: Vec<String>,
}

/// Unweighted mean of per-video AUCs over videos containing both classes.
pub fn macro_auc(data: &LabeledScores) -> Result<MacroAuc> {
    let mut sum = 0.0;
    let mut included = 0;
    let mut excluded = Vec::new();
    for (id, s, l) in data.videos() {
        let anom: Vec<f64> = s.iter().map(|&v| data.to_anomaly(v)).collect();
        match auc(&anom, l) {
            Ok(a) => {
                sum += a;
                included += 1;
            }
            Err(_) => excluded.push(id.to_string()),
        }
    }
    if included == 0 {
        return Err(Error::NoEvaluableVideos);
    }
    Ok(MacroAuc {
        value: sum / included as f64,
        included,
        excluded,
    })
}

/// Step-interpolated average precision over descending anomaly score.
pub fn average_precision(data: &LabeledScores) -> Result<f64> {
    let (s, l) = data.concatenated();
    ap(&s, &l)
}

pub fn ap(anomaly_scores: &[f64], labels: &[u8]) -> Result<f64> {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 {
        return Err(Error::NoPositives);
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| anomaly_scores[b].total_cmp(&anomaly_scores[a]));
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] == 1 {
            tp += 1;
            sum += tp as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / pos as f64)
}

/// Fraction of normal frames flagged anomalous (`s_t < threshold`).
pub fn fpr_at_threshold(data: &LabeledScores, threshold: f64) -> Result<f64> {
    let mut neg = 0usize;
    let mut fp = 0usize;
    for (_, s, l) in data.videos() {
        for (&v, &lab) in s.iter().zip(l) {
            if lab == 0 {
                neg += 1;
                if data.to_normalcy(v) < threshold {
                    fp += 1;
                }
            }
        }
    }
    if neg == 0 {
        return Err(Error::NoNegatives);
    }
    Ok(fp as f64 / neg as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    AnomalyType,
    Scenario,
}

/// One report row. Metric fields are `None` when undefined for the group.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub group: String,
    pub n_videos: usize,
    pub n_frames: usize,
    /// Micro AUC.
    pub auc: Option<f64>,
    pub ap: Option<f64>,
    pub fpr: Option<f64>,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupReport {
    pub group_by: GroupBy,
    pub threshold: f64,
    /// Which normal frames serve as negatives for each group.
    pub negative_pool: &'static str,
    pub rows: Vec<ReportRow>,
}

pub const OVERALL: &str = "Overall";

fn report_row(group: String, data: &LabeledScores, threshold: f64) -> ReportRow {
    let (s, l) = data.concatenated();
    let pos = l.iter().filter(|&&v| v == 1).count();
    let status = if data.is_empty() {
        "Empty".to_string()
    } else if pos == 0 {
        Error::NoPositives.tag().to_string()
    } else if pos == l.len() {
        Error::NoNegatives.tag().to_string()
    } else {
        "ok".to_string()
    };
    ReportRow {
        group,
        n_videos: data.len(),
        n_frames: data.n_frames(),
        auc: auc(&s, &l).ok(),
        ap: ap(&s, &l).ok(),
        fpr: fpr_at_threshold(data, threshold).ok(),
        status,
    }
}

/// Per-group metrics over (group's abnormal videos ∪ every normal video),
/// followed by an Overall row over all videos.
///
/// Anomaly-type groups come from the abnormal videos present; scenario
/// groups cover every scenario present in `data`.
pub fn grouped_report(
    data: &LabeledScores,
    manifest: &Manifest,
    group_by: GroupBy,
    threshold: f64,
) -> Result<GroupReport> {
    let mut normals = Vec::new();
    let mut groups: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for (id, _, _) in data.videos() {
        let r = manifest.record(id)?;
        if group_by == GroupBy::Scenario {
            groups.entry(r.scenario_id.clone()).or_default();
        }
        match r.label {
            Label::Normal => normals.push(id),
            Label::Abnormal => {
                let key = match group_by {
                    GroupBy::AnomalyType => r.anomaly_type.clone().unwrap_or_default(),
                    GroupBy::Scenario => r.scenario_id.clone(),
                };
                groups.entry(key).or_default().push(id);
            }
        }
    }
    let mut rows: Vec<ReportRow> = groups
        .into_iter()
        .map(|(g, abnormal)| {
            let ids: BTreeSet<&str> = abnormal
                .into_iter()
                .chain(normals.iter().copied())
                .collect();
            report_row(g, &data.subset(ids), threshold)
        })
        .collect();
    rows.push(report_row(OVERALL.to_string(), data, threshold));
    Ok(GroupReport {
        group_by,
        threshold,
        negative_pool: "all_normal_videos",
        rows,
    })
}

impl GroupReport {
    pub fn overall(&self) -> &ReportRow {
        self.rows.last().expect("overall row")
    }

    /// CSV with metric values as percentages, 2 decimals.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "group", "n_videos", "n_frames", "auc", "ap", "fpr", "status",
        ])?;
        let pct = |v: Option<f64>| v.map(|x| format!("{:.2}", x * 100.0)).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.group.clone(),
                r.n_videos.to_string(),
                r.n_frames.to_string(),
                pct(r.auc),
                pct(r.ap),
                pct(r.fpr),
                r.status.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON with raw fractions.
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        fs::write(path, s)?;
        Ok(())
    }
}
