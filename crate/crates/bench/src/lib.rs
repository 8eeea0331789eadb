//! Deterministic inputs for the kernel benchmarks in `benches/`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vad_core::meta::EpisodeTask;
use vad_core::{Frame, LabeledScores, Polarity, PredictorConfig, TemporalBlock};

fn frame(rng: &mut ChaCha8Rng, (h, w): (usize, usize)) -> Frame {
    Frame::new(h, w, (0..h * w).map(|_| rng.random::<f64>()).collect())
}

/// A block of uniform-noise frames shaped for `config`.
pub fn block(config: &PredictorConfig, seed: u64) -> TemporalBlock {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = (0..config.input_frames)
        .map(|_| frame(&mut rng, config.frame_size))
        .collect();
    let target = frame(&mut rng, config.frame_size);
    TemporalBlock::from_frames("bench", inputs, target)
}

/// `n` tasks of `k` training and `k` validation blocks each.
pub fn tasks(config: &PredictorConfig, n: usize, k: usize, seed: u64) -> Vec<EpisodeTask> {
    (0..n)
        .map(|i| {
            let base = seed + (2 * k * i) as u64;
            EpisodeTask {
                scenario_id: format!("s{i}"),
                view_id: format!("s{i}-cam0"),
                train_pairs: (0..k).map(|j| block(config, base + j as u64)).collect(),
                val_pairs: (0..k)
                    .map(|j| block(config, base + (k + j) as u64))
                    .collect(),
            }
        })
        .collect()
}

/// `videos` videos of `frames` frames with 20% positives and tied scores.
pub fn scores(videos: usize, frames: usize, seed: u64) -> LabeledScores {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = LabeledScores::new(Polarity::Normalcy);
    for v in 0..videos {
        let s = (0..frames)
            .map(|_| (rng.random::<f64>() * 1000.0).round() / 1000.0)
            .collect();
        let l = (0..frames)
            .map(|_| u8::from(rng.random_bool(0.2)))
            .collect();
        out.insert(format!("v{v:03}"), s, l)
            .expect("fresh id and matching lengths");
    }
    out
}
