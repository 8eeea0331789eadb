use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Graph, Real, Tensor, Var};
use crate::dataset::Frame;
use crate::error::{Error, Result};

/// Architecture of the future-frame predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    /// `(H, W)`.
    pub frame_size: (usize, usize),
    /// Number of past frames fed to the model (`T′ − 1`).
    pub input_frames: usize,
    pub base_channels: usize,
    /// Number of down/up-sampling levels.
    pub depth: usize,
    pub recurrent_bottleneck: bool,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            frame_size: (32, 32),
            input_frames: 4,
            base_channels: 4,
            depth: 2,
            recurrent_bottleneck: false,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.frame_size;
        if h == 0 || w == 0 {
            return Err(Error::InvalidConfig("frame size must be positive".into()));
        }
        if self.input_frames == 0 {
            return Err(Error::InvalidConfig("input_frames must be >= 1".into()));
        }
        if self.base_channels == 0 {
            return Err(Error::InvalidConfig("base_channels must be >= 1".into()));
        }
        if self.depth == 0 {
            return Err(Error::InvalidConfig("depth must be >= 1".into()));
        }
        let m = 1usize << self.depth;
        if h % m != 0 || w % m != 0 {
            return Err(Error::InvalidConfig(format!(
                "frame size {h}x{w} not divisible by 2^{} = {m}",
                self.depth
            )));
        }
        Ok(())
    }

    /// Temporal window `T′`.
    pub fn window(&self) -> usize {
        self.input_frames + 1
    }

    fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Convolution layers in parameter-vector order.
    pub fn layout(&self) -> Vec<ConvSpec> {
        let mut specs = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, cin: usize, cout: usize, kernel: usize| {
            let s = ConvSpec {
                name,
                cin,
                cout,
                kernel,
                offset,
            };
            offset += s.len();
            specs.push(s);
        };
        let first_in = if self.recurrent_bottleneck {
            1
        } else {
            self.input_frames
        };
        for l in 0..self.depth {
            let cin = if l == 0 {
                first_in
            } else {
                self.channels(l - 1)
            };
            push(format!("enc{l}"), cin, self.channels(l), 3);
        }
        let (x_ch, h_ch) = (self.channels(self.depth - 1), self.channels(self.depth));
        if self.recurrent_bottleneck {
            for gate in ["gru_update", "gru_reset", "gru_candidate"] {
                push(gate.to_string(), x_ch + h_ch, h_ch, 3);
            }
        } else {
            push("bottleneck".to_string(), x_ch, h_ch, 3);
        }
        for l in (0..self.depth).rev() {
            push(
                format!("dec{l}"),
                self.channels(l + 1) + self.channels(l),
                self.channels(l),
                3,
            );
        }
        push("head".to_string(), self.channels(0), 1, 1);
        specs
    }

    pub fn parameter_count(&self) -> usize {
        self.layout().iter().map(ConvSpec::len).sum()
    }
}

/// One convolution's slice of the flat parameter vector: `cout·cin·k²`
/// weights followed by `cout` biases.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub offset: usize,
}

impl ConvSpec {
    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.kernel * self.kernel
    }

    pub fn len(&self) -> usize {
        self.weight_len() + self.cout
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fan_in(&self) -> usize {
        self.cin * self.kernel * self.kernel
    }

    fn weight_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.weight_len()
    }

    fn bias_range(&self) -> std::ops::Range<usize> {
        self.offset + self.weight_len()..self.offset + self.len()
    }
}

/// Parameterized future-frame predictor `f_θ`.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePredictor {
    config: PredictorConfig,
    layout: Vec<ConvSpec>,
    params: Vec<f64>,
}

/// Deterministic initialization: uniform weights with variance `1/fan_in`,
/// zero biases.
pub fn init_predictor(config: PredictorConfig, seed: u64) -> Result<FramePredictor> {
    config.validate()?;
    let layout = config.layout();
    let mut params = vec![0.0; layout.iter().map(ConvSpec::len).sum()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for spec in &layout {
        let bound = (3.0 / spec.fan_in() as f64).sqrt();
        for p in &mut params[spec.weight_range()] {
            *p = rng.random_range(-bound..bound);
        }
    }
    Ok(FramePredictor {
        config,
        layout,
        params,
    })
}

impl FramePredictor {
    pub fn from_parameters(config: PredictorConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        let n: usize = layout.iter().map(ConvSpec::len).sum();
        if params.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "config needs {n} parameters, got {}",
                params.len()
            )));
        }
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    pub fn layout(&self) -> &[ConvSpec] {
        &self.layout
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    /// Copy of this model with a different parameter vector of equal length.
    pub fn with_parameters(&self, params: Vec<f64>) -> Self {
        assert_eq!(params.len(), self.params.len(), "parameter vector length");
        Self {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params,
        }
    }

    /// Zeroes the final 1×1 projection, making the output exactly 0.5.
    pub fn zero_output_layer(&mut self) {
        let head = self.layout.last().expect("layout is never empty").clone();
        self.params[head.offset..head.offset + head.len()].fill(0.0);
    }

    pub fn check_input(&self, input: &[Frame]) -> Result<()> {
        let (h, w) = self.config.frame_size;
        if input.len() != self.config.input_frames {
            return Err(Error::ShapeMismatch(format!(
                "expected {} input frames, got {}",
                self.config.input_frames,
                input.len()
            )));
        }
        for f in input {
            check_frame(f, h, w)?;
        }
        Ok(())
    }

    /// Predicts the next frame.
    pub fn predict(&self, input: &[Frame]) -> Result<Frame> {
        self.check_input(input)?;
        let mut g = Graph::<f64>::new();
        let vars = insert_params(&mut g, &self.layout, &self.params, false);
        let out = self.forward(&mut g, &vars, input);
        let (h, w) = self.config.frame_size;
        Ok(Frame::new(h, w, g.value(out).data.clone()))
    }

    /// Independent predictions for each input, in order.
    pub fn predict_batch(&self, inputs: &[&[Frame]]) -> Result<Vec<Frame>> {
        inputs.iter().map(|x| self.predict(x)).collect()
    }

    /// Builds the network on `g`; `params` comes from [`insert_params`].
    pub(crate) fn forward<S: Real>(
        &self,
        g: &mut Graph<S>,
        params: &[ParamVars],
        input: &[Frame],
    ) -> Var {
        let cfg = &self.config;
        let (h, w) = cfg.frame_size;
        let depth = cfg.depth;
        let act_conv = |g: &mut Graph<S>, x: Var, p: &ParamVars| {
            let c = g.conv(x, p.weight, p.bias, 3);
            g.tanh(c)
        };
        let encode = |g: &mut Graph<S>, x: Var| {
            let mut skips = Vec::with_capacity(depth);
            let mut cur = x;
            for p in &params[..depth] {
                let e = act_conv(g, cur, p);
                skips.push(e);
                cur = g.avg_pool2(e);
            }
            (skips, cur)
        };

        let (skips, bottom) = if cfg.recurrent_bottleneck {
            let (gz, gr, gn) = (&params[depth], &params[depth + 1], &params[depth + 2]);
            let hid_ch = cfg.channels(depth);
            let mut state = g.constant(Tensor::zeros(hid_ch, h >> depth, w >> depth));
            let mut last_skips = Vec::new();
            for f in input {
                let x = g.constant(frame_tensor(f));
                let (skips, feat) = encode(g, x);
                let xh = g.concat(feat, state);
                let z = g.conv(xh, gz.weight, gz.bias, 3);
                let z = g.sigmoid(z);
                let r = g.conv(xh, gr.weight, gr.bias, 3);
                let r = g.sigmoid(r);
                let rh = g.mul(r, state);
                let xrh = g.concat(feat, rh);
                let cand = g.conv(xrh, gn.weight, gn.bias, 3);
                let cand = g.tanh(cand);
                // h ← h + z ⊙ (candidate − h)
                let delta = g.sub(cand, state);
                let step = g.mul(z, delta);
                state = g.add(state, step);
                last_skips = skips;
            }
            (last_skips, state)
        } else {
            let x = g.constant(stack_frames(input));
            let (skips, feat) = encode(g, x);
            let b = act_conv(g, feat, &params[depth]);
            (skips, b)
        };

        let dec_start = if cfg.recurrent_bottleneck {
            depth + 3
        } else {
            depth + 1
        };
        let mut cur = bottom;
        for (i, l) in (0..depth).rev().enumerate() {
            let up = g.upsample2(cur);
            let cat = g.concat(up, skips[l]);
            cur = act_conv(g, cat, &params[dec_start + i]);
        }
        let head = &params[dec_start + depth];
        let o = g.conv(cur, head.weight, head.bias, 1);
        g.sigmoid(o)
    }
}

/// Weight and bias handles of one convolution.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ParamVars {
    pub weight: Var,
    pub bias: Var,
}

pub(crate) fn insert_params<S: Real>(
    g: &mut Graph<S>,
    layout: &[ConvSpec],
    theta: &[S],
    trainable: bool,
) -> Vec<ParamVars> {
    layout
        .iter()
        .map(|s| {
            let wt = Tensor::from_vec(1, 1, s.weight_len(), theta[s.weight_range()].to_vec());
            let bt = Tensor::from_vec(1, 1, s.cout, theta[s.bias_range()].to_vec());
            if trainable {
                ParamVars {
                    weight: g.param(wt),
                    bias: g.param(bt),
                }
            } else {
                ParamVars {
                    weight: g.constant(wt),
                    bias: g.constant(bt),
                }
            }
        })
        .collect()
}

/// Flattens parameter gradients back into layout order.
pub(crate) fn gather_grads<S: Real>(
    grads: &Gradients<S>,
    layout: &[ConvSpec],
    vars: &[ParamVars],
) -> Vec<S> {
    let n: usize = layout.iter().map(ConvSpec::len).sum();
    let mut out = vec![S::zero(); n];
    for (s, v) in layout.iter().zip(vars) {
        if let Some(gw) = grads.get(v.weight) {
            out[s.weight_range()].copy_from_slice(&gw.data);
        }
        if let Some(gb) = grads.get(v.bias) {
            out[s.bias_range()].copy_from_slice(&gb.data);
        }
    }
    out
}

pub(crate) fn check_frame(f: &Frame, h: usize, w: usize) -> Result<()> {
    if f.channels != 1 || f.height != h || f.width != w {
        return Err(Error::ShapeMismatch(format!(
            "expected 1x{h}x{w} frame, got {}x{}x{}",
            f.channels, f.height, f.width
        )));
    }
    Ok(())
}

pub(crate) fn frame_tensor<S: Real>(f: &Frame) -> Tensor<S> {
    Tensor::from_vec(
        f.channels,
        f.height,
        f.width,
        f.data.iter().map(|&v| S::from_f64(v)).collect(),
    )
}

fn stack_frames<S: Real>(frames: &[Frame]) -> Tensor<S> {
    let (h, w) = (frames[0].height, frames[0].width);
    let data = frames
        .iter()
        .flat_map(|f| f.data.iter().map(|&v| S::from_f64(v)))
        .collect();
    Tensor::from_vec(frames.len(), h, w, data)
}
