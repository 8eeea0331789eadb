//! Frame reconstruction losses: L1, MS-SSIM and gradient difference.

use serde::{Deserialize, Serialize};

use super::model::{check_frame, frame_tensor, gather_grads, insert_params, FramePredictor};
use crate::autodiff::{Graph, Real, Var};
use crate::dataset::{Frame, TemporalBlock};
use crate::error::{Error, Result};

/// Gaussian window side length used by MS-SSIM.
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
/// Stabilizers for dynamic range 1: `(0.01·R)²`, `(0.03·R)²`.
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
/// Standard per-scale MS-SSIM exponents, finest scale first.
pub const MSSSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Largest usable scale count `≤ requested` for `h×w` frames, if any.
pub fn max_scales(h: usize, w: usize, requested: usize) -> Option<usize> {
    (1..=requested.min(MSSSIM_WEIGHTS.len()))
        .rev()
        .find(|&s| h.min(w) >= (1 << (s - 1)) * SSIM_WINDOW)
}

/// Relative weights of the three reconstruction terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub w_l1: f64,
    pub w_msssim: f64,
    pub w_gdl: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_l1: 1.0,
            w_msssim: 1.0,
            w_gdl: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ws = [self.w_l1, self.w_msssim, self.w_gdl];
        if ws.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidConfig(
                "loss weights must be finite and >= 0".into(),
            ));
        }
        if ws.iter().all(|&w| w == 0.0) {
            return Err(Error::InvalidConfig(
                "at least one loss weight must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Loss weights plus the per-term settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub weights: LossWeights,
    /// Requested MS-SSIM scales; reduced automatically for small frames.
    pub msssim_scales: usize,
    pub gdl_alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            msssim_scales: 3,
            gdl_alpha: 1.0,
        }
    }
}

/// One reconstruction term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossTerm {
    L1,
    MsSsim { scales: usize },
    Gdl { alpha: f64 },
}

impl LossTerm {
    fn build<S: Real>(&self, g: &mut Graph<S>, pred: Var, target: Var) -> Var {
        match *self {
            LossTerm::L1 => l1_node(g, pred, target),
            LossTerm::MsSsim { scales } => msssim_node(g, pred, target, scales),
            LossTerm::Gdl { alpha } => gdl_node(g, pred, target, alpha),
        }
    }
}

/// Weighted sum of reconstruction terms, resolved for a frame size.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeLoss {
    terms: Vec<(f64, LossTerm)>,
}

impl CompositeLoss {
    pub fn new(config: &LossConfig, frame_size: (usize, usize)) -> Result<Self> {
        config.weights.validate()?;
        if !(config.gdl_alpha > 0.0) {
            return Err(Error::InvalidConfig("gdl_alpha must be > 0".into()));
        }
        let w = config.weights;
        let mut terms = Vec::new();
        if w.w_l1 > 0.0 {
            terms.push((w.w_l1, LossTerm::L1));
        }
        if w.w_msssim > 0.0 {
            let (h, wd) = frame_size;
            let scales =
                max_scales(h, wd, config.msssim_scales.max(1)).ok_or(Error::TooSmallForScales {
                    height: h,
                    width: wd,
                    scales: 1,
                })?;
            terms.push((w.w_msssim, LossTerm::MsSsim { scales }));
        }
        if w.w_gdl > 0.0 {
            terms.push((
                w.w_gdl,
                LossTerm::Gdl {
                    alpha: config.gdl_alpha,
                },
            ));
        }
        Ok(Self { terms })
    }

    /// Adds a further weighted term.
    pub fn with_term(mut self, weight: f64, term: LossTerm) -> Self {
        self.terms.push((weight, term));
        self
    }

    pub fn terms(&self) -> &[(f64, LossTerm)] {
        &self.terms
    }

    fn build<S: Real>(&self, g: &mut Graph<S>, pred: Var, target: Var) -> Var {
        let mut total: Option<Var> = None;
        for (w, term) in &self.terms {
            let t = term.build(g, pred, target);
            let t = g.affine(t, *w, 0.0);
            total = Some(match total {
                Some(acc) => g.add(acc, t),
                None => t,
            });
        }
        total.expect("composite loss has at least one term")
    }

    /// Loss value for a prediction, no gradient.
    pub fn evaluate(&self, pred: &Frame, target: &Frame) -> Result<f64> {
        check_pair(pred, target)?;
        let mut g = Graph::<f64>::new();
        let p = g.constant(frame_tensor(pred));
        let t = g.constant(frame_tensor(target));
        let l = self.build(&mut g, p, t);
        Ok(g.value(l).item())
    }
}

fn check_pair(pred: &Frame, target: &Frame) -> Result<()> {
    if pred.channels != 1 || target.channels != 1 {
        return Err(Error::ShapeMismatch(
            "losses expect single-channel frames".into(),
        ));
    }
    if (pred.height, pred.width) != (target.height, target.width) {
        return Err(Error::ShapeMismatch(format!(
            "prediction {}x{} vs target {}x{}",
            pred.height, pred.width, target.height, target.width
        )));
    }
    Ok(())
}

fn l1_node<S: Real>(g: &mut Graph<S>, pred: Var, target: Var) -> Var {
    let d = g.sub(pred, target);
    let a = g.abs(d);
    g.mean(a)
}

/// `1 − MS-SSIM`, valid-mode Gaussian statistics, 2×2 average pooling
/// between scales, per-scale contrast-structure means clamped at 0.
fn msssim_node<S: Real>(g: &mut Graph<S>, pred: Var, target: Var, scales: usize) -> Var {
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let wsum: f64 = MSSSIM_WEIGHTS[..scales].iter().sum();
    let (mut x, mut y) = (pred, target);
    let mut product: Option<Var> = None;
    for s in 0..scales {
        let exponent = MSSSIM_WEIGHTS[s] / wsum;
        let mu_x = g.gauss_valid(x, &taps);
        let mu_y = g.gauss_valid(y, &taps);
        let xx = g.mul(x, x);
        let yy = g.mul(y, y);
        let xy = g.mul(x, y);
        let e_xx = g.gauss_valid(xx, &taps);
        let e_yy = g.gauss_valid(yy, &taps);
        let e_xy = g.gauss_valid(xy, &taps);
        let mu_xx = g.mul(mu_x, mu_x);
        let mu_yy = g.mul(mu_y, mu_y);
        let mu_xy = g.mul(mu_x, mu_y);
        let var_x = g.sub(e_xx, mu_xx);
        let var_y = g.sub(e_yy, mu_yy);
        let cov = g.sub(e_xy, mu_xy);

        let cs_num = g.affine(cov, 2.0, SSIM_C2);
        let var_sum = g.add(var_x, var_y);
        let cs_den = g.affine(var_sum, 1.0, SSIM_C2);
        let cs = g.div(cs_num, cs_den);

        let factor = if s + 1 == scales {
            let l_num = g.affine(mu_xy, 2.0, SSIM_C1);
            let mu_sum = g.add(mu_xx, mu_yy);
            let l_den = g.affine(mu_sum, 1.0, SSIM_C1);
            let l = g.div(l_num, l_den);
            let ssim = g.mul(l, cs);
            g.mean(ssim)
        } else {
            g.mean(cs)
        };
        let powered = g.pow_pos(factor, exponent);
        product = Some(match product {
            Some(p) => g.mul(p, powered),
            None => powered,
        });
        if s + 1 < scales {
            x = g.avg_pool2(x);
            y = g.avg_pool2(y);
        }
    }
    let ms = product.expect("scales >= 1");
    g.affine(ms, -1.0, 1.0)
}

/// Sum of the per-direction means of `| |∇target| − |∇pred| |^α` over
/// horizontal and vertical forward differences.
fn gdl_node<S: Real>(g: &mut Graph<S>, pred: Var, target: Var, alpha: f64) -> Var {
    let mut parts = Vec::with_capacity(2);
    for horizontal in [true, false] {
        let (dp, dt) = if horizontal {
            (g.diff_w(pred), g.diff_w(target))
        } else {
            (g.diff_h(pred), g.diff_h(target))
        };
        let ap = g.abs(dp);
        let at = g.abs(dt);
        let d = g.sub(at, ap);
        let ad = g.abs(d);
        let p = if alpha == 1.0 {
            ad
        } else {
            g.pow_pos(ad, alpha)
        };
        parts.push(g.mean(p));
    }
    g.add(parts[0], parts[1])
}

fn eval_term(pred: &Frame, target: &Frame, term: LossTerm) -> Result<f64> {
    check_pair(pred, target)?;
    let mut g = Graph::<f64>::new();
    let p = g.constant(frame_tensor(pred));
    let t = g.constant(frame_tensor(target));
    let l = term.build(&mut g, p, t);
    Ok(g.value(l).item())
}

/// Mean absolute difference.
pub fn l1_loss(pred: &Frame, target: &Frame) -> Result<f64> {
    eval_term(pred, target, LossTerm::L1)
}

/// `1 − MS-SSIM(pred, target)` over exactly `scales` scales.
pub fn msssim_loss(pred: &Frame, target: &Frame, scales: usize) -> Result<f64> {
    check_pair(pred, target)?;
    let (h, w) = (pred.height, pred.width);
    if scales == 0 || scales > MSSSIM_WEIGHTS.len() || h.min(w) < (1 << (scales - 1)) * SSIM_WINDOW
    {
        return Err(Error::TooSmallForScales {
            height: h,
            width: w,
            scales,
        });
    }
    eval_term(pred, target, LossTerm::MsSsim { scales })
}

/// Gradient difference loss with exponent `alpha`.
pub fn gdl_loss(pred: &Frame, target: &Frame, alpha: f64) -> Result<f64> {
    check_pair(pred, target)?;
    if pred.height < 2 || pred.width < 2 {
        return Err(Error::ShapeMismatch(
            "gdl needs frames of at least 2x2".into(),
        ));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidConfig("gdl alpha must be > 0".into()));
    }
    eval_term(pred, target, LossTerm::Gdl { alpha })
}

/// Composite loss of one block and its gradient with respect to θ.
pub fn composite_loss(
    model: &FramePredictor,
    pair: &TemporalBlock,
    loss: &CompositeLoss,
) -> Result<(f64, Vec<f64>)> {
    check_block(model, pair)?;
    Ok(loss_and_grad(model, model.parameters(), pair, loss))
}

pub(crate) fn check_block(model: &FramePredictor, pair: &TemporalBlock) -> Result<()> {
    model.check_input(pair.input_frames())?;
    let (h, w) = model.config().frame_size;
    check_frame(pair.target_frame(), h, w)
}

/// Loss and ∂loss/∂θ at an arbitrary parameter vector of scalar type `S`.
/// Shapes must already be validated.
pub(crate) fn loss_and_grad<S: Real>(
    model: &FramePredictor,
    theta: &[S],
    pair: &TemporalBlock,
    loss: &CompositeLoss,
) -> (S, Vec<S>) {
    let mut g = Graph::<S>::new();
    let vars = insert_params(&mut g, model.layout(), theta, true);
    let pred = model.forward(&mut g, &vars, pair.input_frames());
    let target = g.constant(frame_tensor(pair.target_frame()));
    let l = loss.build(&mut g, pred, target);
    let value = g.value(l).item();
    let grads = g.backward(l);
    (value, gather_grads(&grads, model.layout(), &vars))
}

/// Loss value only.
pub(crate) fn loss_value(
    model: &FramePredictor,
    pair: &TemporalBlock,
    loss: &CompositeLoss,
) -> f64 {
    let mut g = Graph::<f64>::new();
    let vars = insert_params(&mut g, model.layout(), model.parameters(), false);
    let pred = model.forward(&mut g, &vars, pair.input_frames());
    let target = g.constant(frame_tensor(pair.target_frame()));
    let l = loss.build(&mut g, pred, target);
    g.value(l).item()
}
