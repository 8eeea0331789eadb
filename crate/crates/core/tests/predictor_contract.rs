mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use vad_core::predictor::{
    composite_loss, gdl_loss, l1_loss, msssim_loss, LossWeights, SSIM_C1, SSIM_C2,
};
use vad_core::{init_predictor, CompositeLoss, Error, Frame, LossConfig, PredictorConfig};

fn frame(rows: &[&[f64]]) -> Frame {
    let w = rows[0].len();
    Frame::new(rows.len(), w, rows.concat())
}

#[test]
fn hand_counted_parameter_total() {
    let config = PredictorConfig {
        frame_size: (16, 16),
        input_frames: 4,
        base_channels: 4,
        depth: 1,
        recurrent_bottleneck: false,
    };
    // encoder 4→4 (3×3), bottleneck 4→8 (3×3), decoder 8+4→4 (3×3), head 4→1 (1×1)
    let by_hand = (4 * 4 * 9 + 4) + (4 * 8 * 9 + 8) + (12 * 4 * 9 + 4) + (4 + 1);
    assert_eq!(by_hand, 885);
    assert_eq!(config.parameter_count(), 885);
    assert_eq!(init_predictor(config, 0).unwrap().parameters().len(), 885);
}

#[test]
fn initialization_is_deterministic() {
    let a = init_predictor(tiny_config(), 5).unwrap();
    let b = init_predictor(tiny_config(), 5).unwrap();
    let c = init_predictor(tiny_config(), 6).unwrap();
    assert_eq!(a.parameters(), b.parameters());
    assert_ne!(a.parameters(), c.parameters());
}

#[test]
fn indivisible_frame_size_is_rejected() {
    let config = PredictorConfig {
        frame_size: (31, 32),
        depth: 2,
        ..tiny_config()
    };
    assert!(matches!(
        init_predictor(config, 0),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn wrong_input_shape_is_rejected() {
    let model = init_predictor(tiny_config(), 1).unwrap();
    let mut r = rng(1);
    let three: Vec<Frame> = (0..3).map(|_| random_frame(&mut r, 16, 16)).collect();
    assert!(matches!(
        model.predict(&three),
        Err(Error::ShapeMismatch(_))
    ));
    let small: Vec<Frame> = (0..4).map(|_| random_frame(&mut r, 8, 16)).collect();
    assert!(matches!(
        model.predict(&small),
        Err(Error::ShapeMismatch(_))
    ));
}

#[test]
fn zeroed_output_layer_predicts_midgray() {
    for recurrent in [false, true] {
        let config = PredictorConfig {
            recurrent_bottleneck: recurrent,
            ..tiny_config()
        };
        let mut model = init_predictor(config, 2).unwrap();
        model.zero_output_layer();
        let block = random_block(&mut rng(3), model.config());
        let out = model.predict(block.input_frames()).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.5));
    }
}

#[test]
fn batched_prediction_equals_single_calls() {
    let model = init_predictor(tiny_config(), 4).unwrap();
    let mut r = rng(4);
    let blocks: Vec<_> = (0..3)
        .map(|_| random_block(&mut r, model.config()))
        .collect();
    let inputs: Vec<&[Frame]> = blocks.iter().map(|b| b.input_frames()).collect();
    let batched = model.predict_batch(&inputs).unwrap();
    for (b, out) in blocks.iter().zip(&batched) {
        assert_eq!(*out, model.predict(b.input_frames()).unwrap());
    }
}

#[test]
fn l1_examples() {
    let mut r = rng(6);
    let f = random_frame(&mut r, 5, 7);
    assert_eq!(l1_loss(&f, &f).unwrap(), 0.0);
    assert_eq!(
        l1_loss(&Frame::filled(3, 5, 0.75), &Frame::filled(3, 5, 0.25)).unwrap(),
        0.5
    );
    let p = frame(&[&[1.0, 0.0], &[0.0, 0.0]]);
    assert_eq!(l1_loss(&p, &Frame::filled(2, 2, 0.0)).unwrap(), 0.25);
}

#[test]
fn gdl_examples() {
    let mut r = rng(7);
    let t = random_frame(&mut r, 6, 6);
    assert_eq!(gdl_loss(&t, &t, 1.0).unwrap(), 0.0);
    let p = frame(&[&[0.0, 1.0], &[0.0, 1.0]]);
    assert_eq!(gdl_loss(&p, &Frame::filled(2, 2, 0.0), 1.0).unwrap(), 1.0);
}

/// `1 − MS-SSIM` evaluated directly from its definition with explicit loops.
fn msssim_oracle(x: &Frame, y: &Frame, scales: usize) -> f64 {
    const WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
    let g: Vec<f64> = (0..11)
        .map(|k| (-((k as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5)).exp())
        .collect();
    let gs: f64 = g.iter().sum();
    let wsum: f64 = WEIGHTS[..scales].iter().sum();
    let (mut x, mut y) = (x.clone(), y.clone());
    let mut product = 1.0;
    for s in 0..scales {
        let (h, w) = (x.height, x.width);
        let mut acc = 0.0;
        let mut n = 0.0;
        for r in 0..=h - 11 {
            for c in 0..=w - 11 {
                let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let k = g[i] * g[j] / (gs * gs);
                        let a = x.at(r + i, c + j);
                        let b = y.at(r + i, c + j);
                        mx += k * a;
                        my += k * b;
                        xx += k * a * a;
                        yy += k * b * b;
                        xy += k * a * b;
                    }
                }
                let (vx, vy, cov) = (xx - mx * mx, yy - my * my, xy - mx * my);
                let cs = (2.0 * cov + SSIM_C2) / (vx + vy + SSIM_C2);
                let l = (2.0 * mx * my + SSIM_C1) / (mx * mx + my * my + SSIM_C1);
                acc += if s + 1 == scales { l * cs } else { cs };
                n += 1.0;
            }
        }
        product *= (acc / n).max(0.0).powf(WEIGHTS[s] / wsum);
        let pool = |f: &Frame| {
            let (h2, w2) = (f.height / 2, f.width / 2);
            let mut d = Vec::with_capacity(h2 * w2);
            for r in 0..h2 {
                for c in 0..w2 {
                    let v = f.at(2 * r, 2 * c)
                        + f.at(2 * r, 2 * c + 1)
                        + f.at(2 * r + 1, 2 * c)
                        + f.at(2 * r + 1, 2 * c + 1);
                    d.push(v / 4.0);
                }
            }
            Frame::new(h2, w2, d)
        };
        x = pool(&x);
        y = pool(&y);
    }
    1.0 - product
}

fn bright_square(n: usize, side: usize) -> Frame {
    let lo = (n - side) / 2;
    let data = (0..n * n)
        .map(|i| {
            let (r, c) = (i / n, i % n);
            if (lo..lo + side).contains(&r) && (lo..lo + side).contains(&c) {
                0.9
            } else {
                0.5
            }
        })
        .collect();
    Frame::new(n, n, data)
}

#[test]
fn msssim_matches_explicit_loop_oracle() {
    let flat = Frame::filled(16, 16, 0.5);
    let square = bright_square(16, 6);
    let v = msssim_loss(&flat, &square, 1).unwrap();
    assert!((v - msssim_oracle(&flat, &square, 1)).abs() < 1e-10);
    assert!(v > 0.0);

    let mut r = rng(8);
    let a = random_frame(&mut r, 24, 24);
    let b = Frame::new(
        24,
        24,
        a.data
            .iter()
            .map(|v| 0.7 * v + 0.1 * r.random::<f64>())
            .collect(),
    );
    for scales in [1, 2] {
        let v = msssim_loss(&a, &b, scales).unwrap();
        assert!(
            (v - msssim_oracle(&a, &b, scales)).abs() < 1e-10,
            "{scales} scales"
        );
    }
}

#[test]
fn msssim_identity_and_size_limits() {
    let mut r = rng(9);
    let f = random_frame(&mut r, 16, 16);
    assert!(msssim_loss(&f, &f, 1).unwrap().abs() < 1e-12);
    assert!(matches!(
        msssim_loss(&f, &f, 3),
        Err(Error::TooSmallForScales { .. })
    ));
}

#[test]
fn single_term_weights_reduce_to_that_term() {
    let model = init_predictor(tiny_config(), 10).unwrap();
    let block = random_block(&mut rng(10), model.config());
    let pred = model.predict(block.input_frames()).unwrap();
    let target = block.target_frame();
    let cases: [(LossWeights, f64); 3] = [
        (
            LossWeights {
                w_l1: 1.0,
                w_msssim: 0.0,
                w_gdl: 0.0,
            },
            l1_loss(&pred, target).unwrap(),
        ),
        (
            LossWeights {
                w_l1: 0.0,
                w_msssim: 1.0,
                w_gdl: 0.0,
            },
            msssim_loss(&pred, target, 1).unwrap(),
        ),
        (
            LossWeights {
                w_l1: 0.0,
                w_msssim: 0.0,
                w_gdl: 1.0,
            },
            gdl_loss(&pred, target, 1.0).unwrap(),
        ),
    ];
    for (weights, expected) in cases {
        let config = LossConfig {
            weights,
            ..LossConfig::default()
        };
        let loss = CompositeLoss::new(&config, (16, 16)).unwrap();
        let (value, _) = composite_loss(&model, &block, &loss).unwrap();
        assert!((value - expected).abs() < 1e-14, "{weights:?}");
    }
}

#[test]
fn exact_prediction_has_zero_loss_and_gradient() {
    let mut model = init_predictor(tiny_config(), 11).unwrap();
    model.zero_output_layer();
    let mut r = rng(11);
    let inputs: Vec<Frame> = (0..4).map(|_| random_frame(&mut r, 16, 16)).collect();
    let block = vad_core::TemporalBlock::from_frames("v", inputs, Frame::filled(16, 16, 0.5));
    let loss = CompositeLoss::new(&LossConfig::default(), (16, 16)).unwrap();
    let (value, grad) = composite_loss(&model, &block, &loss).unwrap();
    assert!(value.abs() < 1e-15, "{value}");
    assert!(norm(&grad) < 1e-12, "{}", norm(&grad));
}

proptest! {
    #[test]
    fn gdl_ignores_global_shifts(
        raw in prop::collection::vec(0u8..=48, 36),
        shift in 1u8..16,
        alpha_choice in 0usize..3,
    ) {
        let t = Frame::new(6, 6, raw.iter().map(|&v| v as f64 / 64.0).collect());
        let p = Frame::new(6, 6, t.data.iter().map(|v| v + shift as f64 / 64.0).collect());
        let alpha = [1.0, 2.0, 0.5][alpha_choice];
        prop_assert_eq!(gdl_loss(&p, &t, alpha).unwrap(), 0.0);
    }

    #[test]
    fn predictions_have_frame_shape_and_unit_range(seed in 0u64..1000, recurrent in any::<bool>()) {
        let config = PredictorConfig { recurrent_bottleneck: recurrent, ..tiny_config() };
        let model = init_predictor(config, seed).unwrap();
        let block = random_block(&mut rng(seed), model.config());
        let out = model.predict(block.input_frames()).unwrap();
        prop_assert_eq!((out.height, out.width), (16, 16));
        prop_assert!(out.data.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(out, model.predict(block.input_frames()).unwrap());
    }

    #[test]
    fn composite_loss_is_nonnegative(seed in 0u64..1000) {
        let model = init_predictor(tiny_config(), seed).unwrap();
        let block = random_block(&mut rng(seed + 1), model.config());
        let loss = CompositeLoss::new(&LossConfig::default(), (16, 16)).unwrap();
        let (value, grad) = composite_loss(&model, &block, &loss).unwrap();
        prop_assert!(value > 0.0);
        prop_assert!(grad.iter().all(|g| g.is_finite()));
    }
}
