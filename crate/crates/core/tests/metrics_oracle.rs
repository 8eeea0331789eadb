mod common;

use std::time::Instant;

use common::metrics::*;
use common::*;
use proptest::prelude::*;
use vad_core::eval::{
    auc, average_precision, fpr_at_threshold, grouped_report, macro_auc, micro_auc, GroupBy,
    OVERALL,
};
use vad_core::{Error, Label, LabeledScores, Manifest, Polarity};

#[test]
fn micro_auc_and_ap_match_brute_force_oracles() {
    let start = Instant::now();
    let mut r = rng(17);
    let mut checked = 0;
    for i in 0..200 {
        let d = fixture(&mut r, i);
        let (s, l) = d.concatenated();
        if !both_classes(&l) {
            continue;
        }
        let micro = micro_auc(&d).unwrap();
        assert!((micro - pair_oracle(&s, &l)).abs() < 1e-12, "fixture {i}");
        let ap = average_precision(&d).unwrap();
        assert!((ap - ap_oracle(&s, &l)).abs() < 1e-12, "fixture {i}");
        checked += 1;
    }
    assert!(checked >= 190);
    assert!(start.elapsed().as_secs() < 30);
}

#[test]
fn macro_auc_matches_per_video_oracle() {
    let mut r = rng(18);
    for i in 0..200 {
        let d = fixture(&mut r, i);
        let per_video: Vec<f64> = d
            .videos()
            .filter(|(_, _, l)| both_classes(l))
            .map(|(_, s, l)| pair_oracle(s, l))
            .collect();
        match macro_auc(&d) {
            Ok(m) => {
                let oracle = per_video.iter().sum::<f64>() / per_video.len() as f64;
                assert!((m.value - oracle).abs() < 1e-12);
                assert_eq!(m.included, per_video.len());
                assert_eq!(m.included + m.excluded.len(), d.len());
            }
            Err(e) => {
                assert!(per_video.is_empty());
                assert!(matches!(e, Error::NoEvaluableVideos));
            }
        }
    }
}

#[test]
fn auc_is_exactly_invariant_to_increasing_transforms() {
    let mut r = rng(19);
    let transforms: [fn(f64) -> f64; 4] = [
        |x| x.exp(),
        |x| 3.0 * x - 7.0,
        |x| x.powi(3),
        |x| (x + 1.0).ln(),
    ];
    for i in 0..100 {
        let d = fixture(&mut r, i);
        let (s, l) = d.concatenated();
        if !both_classes(&l) {
            continue;
        }
        let base = auc(&s, &l).unwrap();
        for f in transforms {
            let t: Vec<f64> = s.iter().map(|&x| f(x)).collect();
            assert_eq!(auc(&t, &l).unwrap(), base, "fixture {i}");
        }
    }
}

#[test]
fn worked_metric_examples() {
    assert_eq!(auc(&[0.9, 0.6, 0.65, 0.2], &[1, 1, 0, 0]).unwrap(), 0.75);
    assert_eq!(auc(&[0.9, 0.8, 0.1], &[1, 1, 0]).unwrap(), 1.0);
    assert!(matches!(
        auc(&[0.1, 0.2], &[0, 0]),
        Err(Error::DegenerateLabels)
    ));

    let mut d = LabeledScores::new(Polarity::Anomaly);
    d.insert("a", vec![0.9, 0.1], vec![1, 0]).unwrap();
    assert_eq!(average_precision(&d).unwrap(), 1.0);
    let mut d = LabeledScores::new(Polarity::Anomaly);
    d.insert("a", vec![0.9, 0.1], vec![0, 1]).unwrap();
    assert_eq!(average_precision(&d).unwrap(), 0.5);

    let mut d = LabeledScores::new(Polarity::Anomaly);
    d.insert("a", vec![0.9, 0.1, 0.8, 0.2], vec![1, 0, 1, 0])
        .unwrap();
    d.insert("b", vec![0.5, 0.5], vec![1, 0]).unwrap();
    assert_eq!(macro_auc(&d).unwrap().value, 0.75);

    let mut d = LabeledScores::new(Polarity::Normalcy);
    d.insert("n", vec![0.9, 0.5], vec![0, 0]).unwrap();
    assert_eq!(fpr_at_threshold(&d, 0.8).unwrap(), 0.5);
    assert_eq!(fpr_at_threshold(&d, 1.0).unwrap(), 1.0);
}

#[test]
fn single_video_macro_equals_micro() {
    let mut r = rng(20);
    for i in 0..20 {
        let d = fixture(&mut r, i);
        let (id, s, l) = d.videos().next().unwrap();
        if !both_classes(l) {
            continue;
        }
        let mut one = LabeledScores::new(Polarity::Anomaly);
        one.insert(id, s.to_vec(), l.to_vec()).unwrap();
        assert_eq!(macro_auc(&one).unwrap().value, micro_auc(&one).unwrap());
    }
}

fn toy_manifest() -> Manifest {
    let records = vec![
        record("n1", "mall", "mall-cam0", Label::Normal, 6),
        record("n2", "road", "road-cam0", Label::Normal, 6),
        with_type(
            record("a1", "mall", "mall-cam0", Label::Abnormal, 6),
            "fall",
        ),
        with_type(
            record("a2", "road", "road-cam0", Label::Abnormal, 6),
            "intruder",
        ),
        with_type(
            record("a3", "road", "road-cam1", Label::Abnormal, 6),
            "intruder",
        ),
    ];
    Manifest::new(records, ".").unwrap()
}

fn with_type(mut r: vad_core::VideoRecord, t: &str) -> vad_core::VideoRecord {
    r.anomaly_type = Some(t.to_string());
    r
}

fn toy_scores() -> LabeledScores {
    let mut d = LabeledScores::new(Polarity::Anomaly);
    d.insert("n1", vec![0.1, 0.3, 0.2, 0.35], vec![0; 4])
        .unwrap();
    d.insert("n2", vec![0.15, 0.5, 0.05, 0.25], vec![0; 4])
        .unwrap();
    d.insert("a1", vec![0.2, 0.9, 0.8, 0.1], vec![0, 1, 1, 0])
        .unwrap();
    d.insert("a2", vec![0.1, 0.4, 0.3, 0.2], vec![0, 1, 1, 0])
        .unwrap();
    d.insert("a3", vec![0.3, 0.45, 0.6, 0.0], vec![0, 1, 1, 0])
        .unwrap();
    d
}

fn row_oracle(d: &LabeledScores, ids: &[&str]) -> f64 {
    let (s, l) = d.subset(ids.iter().copied()).concatenated();
    pair_oracle(&s, &l)
}

#[test]
fn grouped_rows_match_oracle_and_bracket_overall() {
    let d = toy_scores();
    let report = grouped_report(&d, &toy_manifest(), GroupBy::AnomalyType, 0.8).unwrap();
    let names: Vec<&str> = report.rows.iter().map(|r| r.group.as_str()).collect();
    assert_eq!(names, ["fall", "intruder", OVERALL]);
    let fall = report.rows[0].auc.unwrap();
    let intruder = report.rows[1].auc.unwrap();
    let overall = report.overall().auc.unwrap();
    assert!((fall - row_oracle(&d, &["a1", "n1", "n2"])).abs() < 1e-12);
    assert!((intruder - row_oracle(&d, &["a2", "a3", "n1", "n2"])).abs() < 1e-12);
    assert!((overall - micro_auc(&d).unwrap()).abs() < 1e-12);
    assert!(intruder < overall && overall < fall);
    assert_eq!(report.rows[0].n_videos, 3);
    assert_eq!(report.overall().n_frames, 20);
}

#[test]
fn scenario_report_covers_every_scenario() {
    let d = toy_scores();
    let report = grouped_report(&d, &toy_manifest(), GroupBy::Scenario, 0.8).unwrap();
    let names: Vec<&str> = report.rows.iter().map(|r| r.group.as_str()).collect();
    assert_eq!(names, ["mall", "road", OVERALL]);
}

#[test]
fn one_group_equals_overall() {
    let mut d = toy_scores();
    d = d.subset(["n1", "n2", "a1"]);
    let report = grouped_report(&d, &toy_manifest(), GroupBy::AnomalyType, 0.8).unwrap();
    assert_eq!(report.rows.len(), 2);
    let (g, o) = (&report.rows[0], report.overall());
    assert_eq!(
        (g.auc, g.ap, g.fpr, g.n_frames),
        (o.auc, o.ap, o.fpr, o.n_frames)
    );
}

#[test]
fn group_without_positive_frames_is_marked() {
    let mut d = toy_scores();
    d.insert("a1", vec![0.2, 0.9, 0.8, 0.1], vec![0; 4])
        .unwrap();
    let report = grouped_report(&d, &toy_manifest(), GroupBy::AnomalyType, 0.8).unwrap();
    let fall = &report.rows[0];
    assert_eq!(fall.status, Error::NoPositives.tag());
    assert_eq!(fall.auc, None);
    assert_eq!(fall.ap, None);
}

#[test]
fn unknown_video_is_rejected() {
    let mut d = toy_scores();
    d.insert("ghost", vec![0.5], vec![1]).unwrap();
    let err = grouped_report(&d, &toy_manifest(), GroupBy::AnomalyType, 0.8).unwrap_err();
    assert!(matches!(err, Error::UnknownVideoId(_)));
}

#[test]
fn merged_groups_reproduce_overall() {
    let d = toy_scores();
    let report = grouped_report(&d, &toy_manifest(), GroupBy::AnomalyType, 0.8).unwrap();
    let grouped_abnormal = report.rows.len() - 1;
    assert_eq!(grouped_abnormal, 2);
    let merged = d.subset(["a1", "a2", "a3", "n1", "n2"]);
    assert_eq!(micro_auc(&merged).unwrap(), report.overall().auc.unwrap());
    assert_eq!(
        average_precision(&merged).unwrap(),
        report.overall().ap.unwrap()
    );
}

proptest! {
    #[test]
    fn auc_matches_oracle(
        pairs in prop::collection::vec((0u8..20, prop::bool::ANY), 2..120)
    ) {
        let scores: Vec<f64> = pairs.iter().map(|(s, _)| *s as f64 / 20.0).collect();
        let labels: Vec<u8> = pairs.iter().map(|(_, l)| u8::from(*l)).collect();
        prop_assume!(both_classes(&labels));
        prop_assert!((auc(&scores, &labels).unwrap() - pair_oracle(&scores, &labels)).abs() < 1e-12);
    }

    #[test]
    fn polarity_flip_is_consistent(
        pairs in prop::collection::vec((0.0f64..1.0, prop::bool::ANY), 2..80)
    ) {
        let scores: Vec<f64> = pairs.iter().map(|(s, _)| *s).collect();
        let labels: Vec<u8> = pairs.iter().map(|(_, l)| u8::from(*l)).collect();
        prop_assume!(both_classes(&labels));
        let mut normalcy = LabeledScores::new(Polarity::Normalcy);
        normalcy.insert("v", scores.iter().map(|s| 1.0 - s).collect(), labels.clone()).unwrap();
        let mut anomaly = LabeledScores::new(Polarity::Anomaly);
        anomaly.insert("v", scores.clone(), labels.clone()).unwrap();
        let a = micro_auc(&normalcy).unwrap();
        let b = micro_auc(&anomaly).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn separated_scores_give_perfect_ap_and_auc(n_pos in 1usize..30, n_neg in 1usize..30) {
        let mut scores: Vec<f64> = (0..n_pos).map(|i| 1.0 + i as f64).collect();
        scores.extend((0..n_neg).map(|i| -(i as f64)));
        let mut labels = vec![1u8; n_pos];
        labels.extend(vec![0u8; n_neg]);
        let mut d = LabeledScores::new(Polarity::Anomaly);
        d.insert("v", scores, labels).unwrap();
        prop_assert_eq!(average_precision(&d).unwrap(), 1.0);
        prop_assert_eq!(micro_auc(&d).unwrap(), 1.0);
    }
}
