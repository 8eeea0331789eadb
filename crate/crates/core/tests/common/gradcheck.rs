//! Finite-difference oracle for the composite loss and the meta-objective,
//! restricted to fixtures where no probe crosses a kink of the loss.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use vad_core::meta::{inner_adapt, mean_loss, meta_objective, EpisodeTask};
use vad_core::predictor::{composite_loss, max_scales, msssim_loss};
use vad_core::{CompositeLoss, Frame, FramePredictor, LossConfig, MetaConfig, TemporalBlock};

use super::{relative_error, rng};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const MODELS: u64 = 20;
pub const MAX_DRAWS: usize = 50;

pub fn loss_for(model: &FramePredictor) -> CompositeLoss {
    CompositeLoss::new(&LossConfig::default(), model.config().frame_size).unwrap()
}

/// Checkerboard inputs with a target stretched away from the model's own
/// initial prediction, `t = c + 1.5·(p − c)` with `c = min(p) − 0.05`, so that
/// `t − p ≥ 0.025`, `| |∇t| − |∇p| | = 0.5·|∇p|` and the structure term sees a
/// positive covariance `1.5·var(p)`.
pub fn contrast_block(rng: &mut ChaCha8Rng, model: &FramePredictor) -> TemporalBlock {
    let (h, w) = model.config().frame_size;
    let inputs: Vec<Frame> = (0..model.config().input_frames)
        .map(|_| {
            let amp = rng.random_range(0.2..0.4);
            let data = (0..h * w)
                .map(|i| {
                    let sign = if (i / w + i % w) % 2 == 0 { 1.0 } else { -1.0 };
                    0.5 + amp * sign + 0.1 * (rng.random::<f64>() - 0.5)
                })
                .collect();
            Frame::new(h, w, data)
        })
        .collect();
    let p = model.predict(&inputs).unwrap();
    let c = p.data.iter().copied().fold(f64::INFINITY, f64::min) - 0.05;
    let target = Frame::new(h, w, p.data.iter().map(|v| c + 1.5 * (v - c)).collect());
    assert!(target.data.iter().all(|v| (0.0..=1.0).contains(v)));
    TemporalBlock::from_frames("board", inputs, target)
}

pub fn edges(f: &Frame) -> Vec<f64> {
    let (h, w) = (f.height, f.width);
    let mut out = Vec::with_capacity(2 * h * w);
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                out.push(f.at(y, x + 1) - f.at(y, x));
            }
            if y + 1 < h {
                out.push(f.at(y + 1, x) - f.at(y, x));
            }
        }
    }
    out
}

/// Which side of each kink of the composite loss `pair` sits on under `model`:
/// the sign of every `|·|` argument and of the clamped structure product.
pub fn kink_signs(model: &FramePredictor, pair: &TemporalBlock, out: &mut Vec<bool>) {
    let p = model.predict(pair.input_frames()).unwrap();
    let t = pair.target_frame();
    out.extend(p.data.iter().zip(&t.data).map(|(a, b)| a > b));
    let (ep, et) = (edges(&p), edges(t));
    out.extend(ep.iter().map(|d| *d > 0.0));
    out.extend(ep.iter().zip(&et).map(|(a, b)| a.abs() > b.abs()));
    let scales = max_scales(p.height, p.width, LossConfig::default().msssim_scales).unwrap();
    out.push(msssim_loss(&p, t, scales).unwrap() < 1.0);
}

/// Meta-objective value by walking each task's inner trajectory with plain
/// gradient steps, together with the kink signs met along the way.
pub fn trajectory_probe(
    model: &FramePredictor,
    tasks: &[EpisodeTask],
    config: &MetaConfig,
    loss: &CompositeLoss,
) -> (f64, Vec<bool>) {
    let one = MetaConfig {
        inner_steps: 1,
        ..config.clone()
    };
    let mut signs = Vec::new();
    let mut value = 0.0;
    for t in tasks {
        let mut theta = model.clone();
        for _ in 0..config.inner_steps {
            t.train_pairs
                .iter()
                .for_each(|b| kink_signs(&theta, b, &mut signs));
            theta = inner_adapt(&theta, t, &one, loss).unwrap();
        }
        t.val_pairs
            .iter()
            .for_each(|b| kink_signs(&theta, b, &mut signs));
        value += mean_loss(&theta, &t.val_pairs, loss).unwrap();
    }
    (value, signs)
}

/// Central differences of the value returned by `probe`, or `None` when
/// some probe lands across a kink it reports, where the loss is not
/// differentiable and central differences mean nothing.
pub fn smooth_fd(theta: &[f64], probe: impl Fn(&[f64]) -> (f64, Vec<bool>)) -> Option<Vec<f64>> {
    let (_, base) = probe(theta);
    let mut x = theta.to_vec();
    let mut fd = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let mut side = |v: f64| {
            x[i] = v;
            let (value, signs) = probe(&x);
            x[i] = theta[i];
            (signs == base).then_some(value)
        };
        let up = side(theta[i] + STEP)?;
        let down = side(theta[i] - STEP)?;
        fd.push((up - down) / (2.0 * STEP));
    }
    Some(fd)
}

/// Draws fixtures until one keeps every probe on a smooth piece, then
/// returns the analytic gradient alongside the finite differences.
pub fn smooth_check<T>(
    rng: &mut ChaCha8Rng,
    model: &FramePredictor,
    make: impl Fn(&mut ChaCha8Rng) -> T,
    grad: impl Fn(&FramePredictor, &T) -> Vec<f64>,
    probe: impl Fn(&FramePredictor, &T) -> (f64, Vec<bool>),
) -> (Vec<f64>, Vec<f64>) {
    for _ in 0..MAX_DRAWS {
        let x = make(rng);
        let fd = smooth_fd(model.parameters(), |theta| {
            probe(&model.with_parameters(theta.to_vec()), &x)
        });
        if let Some(fd) = fd {
            return (grad(model, &x), fd);
        }
    }
    panic!("every one of {MAX_DRAWS} fixtures put a probe across a kink");
}

pub fn pair_probe(
    model: &FramePredictor,
    pair: &TemporalBlock,
    loss: &CompositeLoss,
) -> (f64, Vec<bool>) {
    let p = model.predict(pair.input_frames()).unwrap();
    let mut signs = Vec::new();
    kink_signs(model, pair, &mut signs);
    (loss.evaluate(&p, pair.target_frame()).unwrap(), signs)
}

pub fn task(rng: &mut ChaCha8Rng, model: &FramePredictor, k: usize, v: usize) -> EpisodeTask {
    EpisodeTask {
        scenario_id: "s".into(),
        view_id: "s-cam0".into(),
        train_pairs: (0..k).map(|_| contrast_block(rng, model)).collect(),
        val_pairs: (0..v).map(|_| contrast_block(rng, model)).collect(),
    }
}

pub fn composite_check(model: &FramePredictor, loss: &CompositeLoss, seed: u64) -> f64 {
    let mut r = rng(seed);
    let (grad, fd) = smooth_check(
        &mut r,
        model,
        |r| contrast_block(r, model),
        |m, pair| composite_loss(m, pair, loss).unwrap().1,
        |m, pair| pair_probe(m, pair, loss),
    );
    relative_error(&grad, &fd)
}

/// Relative error of the second-order meta-gradient of a two-task, two-step
/// objective against smooth central differences.
pub fn meta_check(model: &FramePredictor, seed: u64) -> f64 {
    let config = MetaConfig {
        inner_lr: 0.1,
        inner_steps: 2,
        second_order: true,
        ..MetaConfig::default()
    };
    let loss = loss_for(model);
    let mut r = rng(seed);
    let (grad, fd) = smooth_check(
        &mut r,
        model,
        |r| vec![task(r, model, 2, 2), task(r, model, 2, 1)],
        |m, tasks| meta_objective(m, tasks, &config, &loss).unwrap().1,
        |m, tasks| trajectory_probe(m, tasks, &config, &loss),
    );
    relative_error(&grad, &fd)
}
