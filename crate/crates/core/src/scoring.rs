//! PSNR frame quality, per-video min–max normalized anomaly scores and
//! threshold decisions. Lower normalized scores mean more anomalous.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{slide_blocks, Frame, LoadedVideo};
use crate::error::{Error, Result};
use crate::predictor::FramePredictor;

/// PSNR reported when the squared error is negligible.
pub const PSNR_CAP_DB: f64 = 100.0;
/// Example decision threshold on normalized scores.
pub const DEFAULT_THRESHOLD: f64 = 0.8;

/// `10·log10(peak² / MSE)` with `peak = max(truth)` (1 when the frame is
/// all zero), capped at [`PSNR_CAP_DB`] once `MSE < peak²·1e-10`.
pub fn psnr(truth: &Frame, pred: &Frame) -> Result<f64> {
    if truth.data.len() != pred.data.len()
        || (truth.height, truth.width, truth.channels) != (pred.height, pred.width, pred.channels)
    {
        return Err(Error::ShapeMismatch(format!(
            "truth {}x{} vs prediction {}x{}",
            truth.height, truth.width, pred.height, pred.width
        )));
    }
    let max = truth.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let peak = if max > 0.0 { max } else { 1.0 };
    let mse = truth
        .data
        .iter()
        .zip(&pred.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / truth.data.len() as f64;
    let peak2 = peak * peak;
    if mse < peak2 * 1e-10 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak2 / mse).log10()).min(PSNR_CAP_DB))
}

/// `s_t = (p_t − min p) / (max p − min p)`; a flat profile maps to all 1.0.
pub fn normalize_scores(psnr_values: &[f64]) -> Result<Vec<f64>> {
    if psnr_values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let lo = psnr_values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = psnr_values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) {
        return Ok(vec![1.0; psnr_values.len()]);
    }
    Ok(psnr_values
        .iter()
        .map(|&p| ((p - lo) / range).clamp(0.0, 1.0))
        .collect())
}

/// Normalized scores of one video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub video_id: String,
    /// One score per scored frame, starting at `first_scored_frame`.
    pub scores: Vec<f64>,
    /// Raw PSNR values behind `scores`.
    pub psnr: Vec<f64>,
    /// 1-based index of the frame `scores[0]` belongs to.
    pub first_scored_frame: usize,
    pub threshold: f64,
}

impl ScoreSeries {
    /// 1-based frame index of `scores[i]`.
    pub fn frame_index(&self, i: usize) -> usize {
        self.first_scored_frame + i
    }

    /// Scores for every frame of the video, padding unscored leading frames
    /// with 1.0.
    pub fn padded(&self) -> Vec<f64> {
        let mut v = vec![1.0; self.first_scored_frame - 1];
        v.extend_from_slice(&self.scores);
        v
    }
}

/// Predicts every frame from `T′` on and normalizes the PSNR profile over
/// the whole video.
pub fn score_video(model: &FramePredictor, video: &LoadedVideo) -> Result<ScoreSeries> {
    let window = model.config().window();
    let blocks = slide_blocks(video, window)?;
    let mut values = Vec::with_capacity(blocks.len());
    for b in &blocks {
        let pred = model.predict(b.input_frames())?;
        values.push(psnr(b.target_frame(), &pred)?);
    }
    Ok(ScoreSeries {
        video_id: video.video_id().to_string(),
        scores: normalize_scores(&values)?,
        psnr: values,
        first_scored_frame: window,
        threshold: DEFAULT_THRESHOLD,
    })
}

/// `1` (anomaly) where `s_t < threshold`.
pub fn decide(series: &ScoreSeries, threshold: f64) -> Vec<u8> {
    decide_scores(&series.scores, threshold)
}

pub fn decide_scores(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s < threshold)).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoreRow {
    video_id: String,
    frame_index: usize,
    score: f64,
}

/// Writes `video_id,frame_index,score` rows. With `pad_full_length`, unscored
/// leading frames are emitted with score 1.0.
pub fn write_score_csv(path: &Path, series: &[ScoreSeries], pad_full_length: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in series {
        let (start, values) = if pad_full_length {
            (1, s.padded())
        } else {
            (s.first_scored_frame, s.scores.clone())
        };
        for (i, score) in values.into_iter().enumerate() {
            w.serialize(ScoreRow {
                video_id: s.video_id.clone(),
                frame_index: start + i,
                score,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Scores read back from a score file: per video, `(frame_index, score)`
/// sorted by frame index.
pub type ScoreTable = BTreeMap<String, Vec<(usize, f64)>>;

pub fn read_score_csv(path: &Path) -> Result<ScoreTable> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["video_id", "frame_index", "score"] {
        return Err(Error::Schema(format!(
            "score file header must be video_id,frame_index,score; got {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut table = ScoreTable::new();
    for row in r.deserialize() {
        let row: ScoreRow = row?;
        if row.frame_index < 1 {
            return Err(Error::Schema(format!(
                "{}: frame_index is 1-based",
                row.video_id
            )));
        }
        if !row.score.is_finite() {
            return Err(Error::Schema(format!(
                "{} frame {}: non-finite score",
                row.video_id, row.frame_index
            )));
        }
        table
            .entry(row.video_id)
            .or_default()
            .push((row.frame_index, row.score));
    }
    for (id, rows) in &mut table {
        rows.sort_by_key(|r| r.0);
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Schema(format!("{id}: duplicate frame_index")));
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_worked_values() {
        let t = Frame::filled(4, 4, 0.5);
        let p = Frame::filled(4, 4, 0.25);
        assert!((psnr(&t, &p).unwrap() - 10.0 * 4f64.log10()).abs() < 1e-12);
        let z = Frame::filled(3, 5, 0.0);
        let q = Frame::filled(3, 5, 0.1);
        assert!((psnr(&z, &q).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&t, &t).unwrap(), PSNR_CAP_DB);
        assert!(matches!(
            psnr(&t, &Frame::filled(2, 2, 0.0)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(
            normalize_scores(&[20.0, 30.0, 25.0]).unwrap(),
            vec![0.0, 1.0, 0.5]
        );
        assert_eq!(normalize_scores(&[17.0, 17.0, 17.0]).unwrap(), vec![1.0; 3]);
        assert_eq!(
            normalize_scores(&[10.0, 14.0, 12.0, 20.0]).unwrap(),
            vec![0.0, 0.4, 0.2, 1.0]
        );
        assert!(matches!(normalize_scores(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn decisions() {
        let s = ScoreSeries {
            video_id: "v".into(),
            scores: vec![0.0, 0.5, 1.0],
            psnr: vec![0.0; 3],
            first_scored_frame: 5,
            threshold: 0.8,
        };
        assert_eq!(decide(&s, 0.8), vec![1, 1, 0]);
        assert_eq!(decide(&s, 0.0), vec![0, 0, 0]);
        assert_eq!(decide(&s, 1.0), vec![1, 1, 0]);
        assert_eq!(s.padded(), vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn score_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scores.csv");
        let s = ScoreSeries {
            video_id: "v".into(),
            scores: vec![0.25, 1.0],
            psnr: vec![1.0, 2.0],
            first_scored_frame: 3,
            threshold: 0.8,
        };
        write_score_csv(&p, std::slice::from_ref(&s), false).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("video_id,frame_index,score\n"));
        let t = read_score_csv(&p).unwrap();
        assert_eq!(t["v"], vec![(3, 0.25), (4, 1.0)]);
        write_score_csv(&p, &[s], true).unwrap();
        assert_eq!(read_score_csv(&p).unwrap()["v"].len(), 4);
    }
}
