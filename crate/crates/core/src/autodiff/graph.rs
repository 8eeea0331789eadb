use super::{Real, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv {
        x: Var,
        w: Var,
        b: Var,
        kernel: usize,
    },
    AvgPool2(Var),
    Upsample2(Var),
    Concat(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Affine {
        x: Var,
        scale: f64,
    },
    Tanh(Var),
    Sigmoid(Var),
    Abs(Var),
    PowPos {
        x: Var,
        exponent: f64,
    },
    Mean(Var),
    GaussValid {
        x: Var,
        taps: Vec<f64>,
    },
    DiffW(Var),
    DiffH(Var),
}

#[derive(Clone, Debug)]
struct Node<S> {
    value: Tensor<S>,
    op: Op,
    requires_grad: bool,
}

/// Single-use reverse-mode tape over [`Tensor`] values.
///
/// Nodes are appended in evaluation order, so a reverse sweep over the node
/// list is a valid topological order for backpropagation.
#[derive(Clone, Debug, Default)]
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
}

/// Adjoints produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Real> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&Tensor<S>> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<S>> {
        self.grads[v.0].take()
    }
}

impl<S: Real> Graph<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor<S>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<S>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    fn push(&mut self, value: Tensor<S>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Same-padded stride-1 convolution. `w` holds `out×in×k×k` weights
    /// (stored flat in a `1×1×n` tensor) and `b` holds `out` biases.
    pub fn conv(&mut self, x: Var, w: Var, b: Var, kernel: usize) -> Var {
        let xv = self.value(x);
        let (cin, h, wd) = xv.shape();
        let bv = self.value(b);
        let cout = bv.len();
        let wv = self.value(w);
        assert_eq!(wv.len(), cout * cin * kernel * kernel, "conv weight size");
        let pad = kernel / 2;
        let mut out = Tensor::zeros(cout, h, wd);
        let plane = h * wd;
        for o in 0..cout {
            let bias = bv.data[o];
            let yo = &mut out.data[o * plane..(o + 1) * plane];
            yo.iter_mut().for_each(|v| *v = bias);
            for i in 0..cin {
                let xi = &xv.data[i * plane..(i + 1) * plane];
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        let wk = wv.data[((o * cin + i) * kernel + ky) * kernel + kx];
                        let (x_lo, x_hi) = valid_range(kx, pad, wd);
                        for r in 0..h {
                            let sr = r + ky;
                            if sr < pad || sr - pad >= h {
                                continue;
                            }
                            let src = &xi[(sr - pad) * wd..(sr - pad + 1) * wd];
                            let dst = &mut yo[r * wd..(r + 1) * wd];
                            for c in x_lo..x_hi {
                                dst[c] += wk * src[c + kx - pad];
                            }
                        }
                    }
                }
            }
        }
        let rg = self.rg(&[x, w, b]);
        self.push(out, Op::Conv { x, w, b, kernel }, rg)
    }

    pub fn avg_pool2(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (c, h, w) = xv.shape();
        assert!(h % 2 == 0 && w % 2 == 0, "avg_pool2 needs even dims");
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Tensor::zeros(c, oh, ow);
        let q = S::from_f64(0.25);
        for ch in 0..c {
            let src = xv.channel(ch);
            let dst = out.channel_mut(ch);
            for r in 0..oh {
                for col in 0..ow {
                    let a = src[2 * r * w + 2 * col];
                    let b = src[2 * r * w + 2 * col + 1];
                    let cc = src[(2 * r + 1) * w + 2 * col];
                    let d = src[(2 * r + 1) * w + 2 * col + 1];
                    dst[r * ow + col] = (a + b + cc + d) * q;
                }
            }
        }
        let rg = self.rg(&[x]);
        self.push(out, Op::AvgPool2(x), rg)
    }

    pub fn upsample2(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (c, h, w) = xv.shape();
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = Tensor::zeros(c, oh, ow);
        for ch in 0..c {
            let src = xv.channel(ch);
            let dst = out.channel_mut(ch);
            for r in 0..oh {
                for col in 0..ow {
                    dst[r * ow + col] = src[(r / 2) * w + col / 2];
                }
            }
        }
        let rg = self.rg(&[x]);
        self.push(out, Op::Upsample2(x), rg)
    }

    /// Channel concatenation.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!((av.height, av.width), (bv.height, bv.width), "concat dims");
        let mut data = Vec::with_capacity(av.len() + bv.len());
        data.extend_from_slice(&av.data);
        data.extend_from_slice(&bv.data);
        let out = Tensor::from_vec(av.channels + bv.channels, av.height, av.width, data);
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Concat(a, b), rg)
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(S, S) -> S) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "elementwise shape mismatch");
        let data = av
            .data
            .iter()
            .zip(&bv.data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::from_vec(av.channels, av.height, av.width, data);
        let rg = self.rg(&[a, b]);
        self.push(out, op, rg)
    }

    fn map(&mut self, x: Var, op: Op, f: impl Fn(S) -> S) -> Var {
        let xv = self.value(x);
        let data = xv.data.iter().map(|&v| f(v)).collect();
        let out = Tensor::from_vec(xv.channels, xv.height, xv.width, data);
        let rg = self.rg(&[x]);
        self.push(out, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Div(a, b), |x, y| x / y)
    }

    /// `scale·x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let (s, t) = (S::from_f64(scale), S::from_f64(shift));
        self.map(x, Op::Affine { x, scale }, |v| v * s + t)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, Op::Tanh(x), |v| v.tanh())
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, Op::Sigmoid(x), |v| S::one() / (S::one() + (-v).exp()))
    }

    /// Absolute value; the subgradient at 0 is taken as 0.
    pub fn abs(&mut self, x: Var) -> Var {
        self.map(x, Op::Abs(x), |v| if v.value() < 0.0 { -v } else { v })
    }

    /// `max(x, 0)^exponent`, with zero gradient where `x ≤ 0`.
    pub fn pow_pos(&mut self, x: Var, exponent: f64) -> Var {
        self.map(x, Op::PowPos { x, exponent }, |v| {
            if v.value() > 0.0 {
                if exponent == 1.0 {
                    v
                } else {
                    v.powf(exponent)
                }
            } else {
                S::zero()
            }
        })
    }

    /// Mean over every element, as a `1×1×1` tensor.
    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut acc = S::zero();
        for &v in &xv.data {
            acc += v;
        }
        let out = Tensor::scalar(acc.scale(1.0 / xv.len() as f64));
        let rg = self.rg(&[x]);
        self.push(out, Op::Mean(x), rg)
    }

    /// Separable valid-mode filtering of each channel with the same 1-D taps
    /// along both axes.
    pub fn gauss_valid(&mut self, x: Var, taps: &[f64]) -> Var {
        let xv = self.value(x);
        let (c, h, w) = xv.shape();
        let k = taps.len();
        assert!(h >= k && w >= k, "gauss_valid input smaller than window");
        let (oh, ow) = (h - k + 1, w - k + 1);
        let t: Vec<S> = taps.iter().map(|&v| S::from_f64(v)).collect();
        let mut out = Tensor::zeros(c, oh, ow);
        let mut tmp = vec![S::zero(); h * ow];
        for ch in 0..c {
            let src = xv.channel(ch);
            for r in 0..h {
                for col in 0..ow {
                    let mut acc = S::zero();
                    for (j, &tj) in t.iter().enumerate() {
                        acc += tj * src[r * w + col + j];
                    }
                    tmp[r * ow + col] = acc;
                }
            }
            let dst = out.channel_mut(ch);
            for r in 0..oh {
                for col in 0..ow {
                    let mut acc = S::zero();
                    for (j, &tj) in t.iter().enumerate() {
                        acc += tj * tmp[(r + j) * ow + col];
                    }
                    dst[r * ow + col] = acc;
                }
            }
        }
        let rg = self.rg(&[x]);
        self.push(
            out,
            Op::GaussValid {
                x,
                taps: taps.to_vec(),
            },
            rg,
        )
    }

    /// Horizontal forward difference `x[i, j+1] − x[i, j]`.
    pub fn diff_w(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (c, h, w) = xv.shape();
        assert!(w >= 2);
        let mut out = Tensor::zeros(c, h, w - 1);
        for ch in 0..c {
            let src = xv.channel(ch);
            let dst = out.channel_mut(ch);
            for r in 0..h {
                for col in 0..w - 1 {
                    dst[r * (w - 1) + col] = src[r * w + col + 1] - src[r * w + col];
                }
            }
        }
        let rg = self.rg(&[x]);
        self.push(out, Op::DiffW(x), rg)
    }

    /// Vertical forward difference `x[i+1, j] − x[i, j]`.
    pub fn diff_h(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (c, h, w) = xv.shape();
        assert!(h >= 2);
        let mut out = Tensor::zeros(c, h - 1, w);
        for ch in 0..c {
            let src = xv.channel(ch);
            let dst = out.channel_mut(ch);
            for r in 0..h - 1 {
                for col in 0..w {
                    dst[r * w + col] = src[(r + 1) * w + col] - src[r * w + col];
                }
            }
        }
        let rg = self.rg(&[x]);
        self.push(out, Op::DiffH(x), rg)
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, root: Var) -> Gradients<S> {
        assert_eq!(self.value(root).len(), 1, "backward needs a scalar root");
        let mut grads: Vec<Option<Tensor<S>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::scalar(S::one()));

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Conv { x, w, b, kernel } => {
                    self.conv_backward(&g, *x, *w, *b, *kernel, &mut grads);
                }
                Op::AvgPool2(x) => {
                    if self.needs(*x) {
                        let (c, h, w) = self.value(*x).shape();
                        let mut gx = Tensor::zeros(c, h, w);
                        let q = S::from_f64(0.25);
                        let ow = w / 2;
                        for ch in 0..c {
                            let gs = g.channel(ch);
                            let dst = gx.channel_mut(ch);
                            for r in 0..h {
                                for col in 0..w {
                                    dst[r * w + col] = gs[(r / 2) * ow + col / 2] * q;
                                }
                            }
                        }
                        accumulate(&mut grads, *x, gx);
                    }
                }
                Op::Upsample2(x) => {
                    if self.needs(*x) {
                        let (c, h, w) = self.value(*x).shape();
                        let mut gx = Tensor::zeros(c, h, w);
                        let ow = 2 * w;
                        for ch in 0..c {
                            let gs = g.channel(ch);
                            let dst = gx.channel_mut(ch);
                            for r in 0..2 * h {
                                for col in 0..ow {
                                    dst[(r / 2) * w + col / 2] += gs[r * ow + col];
                                }
                            }
                        }
                        accumulate(&mut grads, *x, gx);
                    }
                }
                Op::Concat(a, b) => {
                    let av = self.value(*a);
                    let split = av.len();
                    if self.needs(*a) {
                        let ga = Tensor::from_vec(
                            av.channels,
                            av.height,
                            av.width,
                            g.data[..split].to_vec(),
                        );
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.needs(*b) {
                        let bv = self.value(*b);
                        let gb = Tensor::from_vec(
                            bv.channels,
                            bv.height,
                            bv.width,
                            g.data[split..].to_vec(),
                        );
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, map_tensor(&g, |v| -v));
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        let bv = self.value(*b);
                        accumulate(&mut grads, *a, zip_tensor(&g, bv, |gi, bi| gi * bi));
                    }
                    if self.needs(*b) {
                        let av = self.value(*a);
                        accumulate(&mut grads, *b, zip_tensor(&g, av, |gi, ai| gi * ai));
                    }
                }
                Op::Div(a, b) => {
                    let bv = self.value(*b);
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, zip_tensor(&g, bv, |gi, bi| gi / bi));
                    }
                    if self.needs(*b) {
                        let y = &node.value;
                        let mut gb = zip_tensor(&g, y, |gi, yi| -(gi * yi));
                        for (v, &bi) in gb.data.iter_mut().zip(&bv.data) {
                            *v = *v / bi;
                        }
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Affine { x, scale } => {
                    let s = *scale;
                    accumulate(&mut grads, *x, map_tensor(&g, |v| v.scale(s)));
                }
                Op::Tanh(x) => {
                    let d = zip_tensor(&g, &node.value, |gi, yi| gi * (S::one() - yi * yi));
                    accumulate(&mut grads, *x, d);
                }
                Op::Sigmoid(x) => {
                    let d = zip_tensor(&g, &node.value, |gi, yi| gi * yi * (S::one() - yi));
                    accumulate(&mut grads, *x, d);
                }
                Op::Abs(x) => {
                    let d = zip_tensor(&g, self.value(*x), |gi, xi| {
                        let v = xi.value();
                        if v > 0.0 {
                            gi
                        } else if v < 0.0 {
                            -gi
                        } else {
                            S::zero()
                        }
                    });
                    accumulate(&mut grads, *x, d);
                }
                Op::PowPos { x, exponent } => {
                    let e = *exponent;
                    let d = zip_tensor(&g, self.value(*x), |gi, xi| {
                        if xi.value() > 0.0 {
                            if e == 1.0 {
                                gi
                            } else {
                                gi * xi.powf(e - 1.0).scale(e)
                            }
                        } else {
                            S::zero()
                        }
                    });
                    accumulate(&mut grads, *x, d);
                }
                Op::Mean(x) => {
                    let xv = self.value(*x);
                    let gi = g.item().scale(1.0 / xv.len() as f64);
                    let d = Tensor::from_vec(xv.channels, xv.height, xv.width, vec![gi; xv.len()]);
                    accumulate(&mut grads, *x, d);
                }
                Op::GaussValid { x, taps } => {
                    let (c, h, w) = self.value(*x).shape();
                    let k = taps.len();
                    let (oh, ow) = (h - k + 1, w - k + 1);
                    let t: Vec<S> = taps.iter().map(|&v| S::from_f64(v)).collect();
                    let mut gx = Tensor::zeros(c, h, w);
                    let mut gtmp = vec![S::zero(); h * ow];
                    for ch in 0..c {
                        gtmp.iter_mut().for_each(|v| *v = S::zero());
                        let gs = g.channel(ch);
                        for r in 0..oh {
                            for col in 0..ow {
                                let gv = gs[r * ow + col];
                                for (j, &tj) in t.iter().enumerate() {
                                    gtmp[(r + j) * ow + col] += tj * gv;
                                }
                            }
                        }
                        let dst = gx.channel_mut(ch);
                        for r in 0..h {
                            for col in 0..ow {
                                let gv = gtmp[r * ow + col];
                                for (j, &tj) in t.iter().enumerate() {
                                    dst[r * w + col + j] += tj * gv;
                                }
                            }
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::DiffW(x) => {
                    let (c, h, w) = self.value(*x).shape();
                    let mut gx = Tensor::zeros(c, h, w);
                    for ch in 0..c {
                        let gs = g.channel(ch);
                        let dst = gx.channel_mut(ch);
                        for r in 0..h {
                            for col in 0..w - 1 {
                                let gv = gs[r * (w - 1) + col];
                                dst[r * w + col + 1] += gv;
                                dst[r * w + col] += -gv;
                            }
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::DiffH(x) => {
                    let (c, h, w) = self.value(*x).shape();
                    let mut gx = Tensor::zeros(c, h, w);
                    for ch in 0..c {
                        let gs = g.channel(ch);
                        let dst = gx.channel_mut(ch);
                        for r in 0..h - 1 {
                            for col in 0..w {
                                let gv = gs[r * w + col];
                                dst[(r + 1) * w + col] += gv;
                                dst[r * w + col] += -gv;
                            }
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
            }
        }
        Gradients { grads }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn conv_backward(
        &self,
        g: &Tensor<S>,
        x: Var,
        w: Var,
        b: Var,
        kernel: usize,
        grads: &mut [Option<Tensor<S>>],
    ) {
        let xv = self.value(x);
        let wv = self.value(w);
        let (cin, h, wd) = xv.shape();
        let cout = g.channels;
        let pad = kernel / 2;
        let plane = h * wd;

        if self.needs(b) {
            let mut gb = Tensor::zeros(1, 1, cout);
            for o in 0..cout {
                let mut acc = S::zero();
                for &v in g.channel(o) {
                    acc += v;
                }
                gb.data[o] = acc;
            }
            accumulate(grads, b, gb);
        }

        let need_w = self.needs(w);
        let need_x = self.needs(x);
        let mut gw = if need_w {
            Some(Tensor::zeros(1, 1, wv.len()))
        } else {
            None
        };
        let mut gx = if need_x {
            Some(Tensor::zeros(cin, h, wd))
        } else {
            None
        };
        for o in 0..cout {
            let go = g.channel(o);
            for i in 0..cin {
                let xi = &xv.data[i * plane..(i + 1) * plane];
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        let widx = ((o * cin + i) * kernel + ky) * kernel + kx;
                        let wk = wv.data[widx];
                        let (x_lo, x_hi) = valid_range(kx, pad, wd);
                        let mut acc = S::zero();
                        for r in 0..h {
                            let sr = r + ky;
                            if sr < pad || sr - pad >= h {
                                continue;
                            }
                            let srow = (sr - pad) * wd;
                            let grow = &go[r * wd..(r + 1) * wd];
                            if need_w {
                                let src = &xi[srow..srow + wd];
                                for c in x_lo..x_hi {
                                    acc += grow[c] * src[c + kx - pad];
                                }
                            }
                            if let Some(gx) = gx.as_mut() {
                                let dst = &mut gx.data[i * plane + srow..i * plane + srow + wd];
                                for c in x_lo..x_hi {
                                    dst[c + kx - pad] += wk * grow[c];
                                }
                            }
                        }
                        if let Some(gw) = gw.as_mut() {
                            gw.data[widx] += acc;
                        }
                    }
                }
            }
        }
        if let Some(gw) = gw {
            accumulate(grads, w, gw);
        }
        if let Some(gx) = gx {
            accumulate(grads, x, gx);
        }
    }
}

/// Output columns `c` for which `c + kx − pad` stays inside `0..width`.
#[inline]
fn valid_range(kx: usize, pad: usize, width: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kx);
    let hi = (width + pad).saturating_sub(kx).min(width);
    (lo, hi.max(lo))
}

fn accumulate<S: Real>(grads: &mut [Option<Tensor<S>>], v: Var, g: Tensor<S>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn map_tensor<S: Real>(t: &Tensor<S>, f: impl Fn(S) -> S) -> Tensor<S> {
    Tensor::from_vec(
        t.channels,
        t.height,
        t.width,
        t.data.iter().map(|&v| f(v)).collect(),
    )
}

fn zip_tensor<S: Real>(a: &Tensor<S>, b: &Tensor<S>, f: impl Fn(S, S) -> S) -> Tensor<S> {
    Tensor::from_vec(
        a.channels,
        a.height,
        a.width,
        a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    )
}
