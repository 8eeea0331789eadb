//! Brute-force metric oracles and randomized score fixtures.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use vad_core::{LabeledScores, Polarity};

/// Mann–Whitney statistic by comparing every positive with every negative.
pub fn pair_oracle(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// Step-interpolated AP from explicit ranks: frame `i` sits at rank
/// `#{j : s_j > s_i} + #{j ≤ i : s_j = s_i}`.
pub fn ap_oracle(scores: &[f64], labels: &[u8]) -> f64 {
    let n = scores.len();
    let rank = |i: usize| {
        (0..n)
            .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j <= i))
            .count()
    };
    let ranks: Vec<usize> = (0..n).map(rank).collect();
    let positives: Vec<usize> = (0..n).filter(|&i| labels[i] == 1).collect();
    let mut sum = 0.0;
    for &i in &positives {
        let hits = positives.iter().filter(|&&j| ranks[j] <= ranks[i]).count();
        sum += hits as f64 / ranks[i] as f64;
    }
    sum / positives.len() as f64
}

/// Random multi-video fixture; every other one has heavily tied scores.
pub fn fixture(rng: &mut ChaCha8Rng, index: usize) -> LabeledScores {
    let mut d = LabeledScores::new(Polarity::Anomaly);
    let videos = rng.random_range(1..=6);
    let budget = rng.random_range(videos * 2..=2000);
    let tied = index.is_multiple_of(2);
    for v in 0..videos {
        let len = (budget / videos).max(2);
        let rate = rng.random_range(0.05..0.6);
        let scores = (0..len)
            .map(|_| {
                let x: f64 = rng.random();
                if tied {
                    (x * 12.0).floor() / 12.0
                } else {
                    x
                }
            })
            .collect();
        let labels = (0..len).map(|_| u8::from(rng.random_bool(rate))).collect();
        d.insert(format!("v{v:02}"), scores, labels).unwrap();
    }
    d
}

pub fn both_classes(labels: &[u8]) -> bool {
    labels.contains(&0) && labels.contains(&1)
}
