//! The value predictors: a convolutional trunk over the `a × a` grid and a
//! fully connected head.
//!
//! Layout for width `n`: a window-1 convolution lifting `f` channels to
//! `8n`; four grouped convolutions with `n` groups and windows `[5,1]`,
//! `[1,5]`, `[5,1]`, `[1,5]` taken modulo `a`; a dense layer from all
//! `8n·a²` activations to `4n`; and the output, one value for the global
//! network or `a²` values for the local one. ReLU follows every layer but
//! the last.
//!
//! Parameters are stored as `f32` and all arithmetic runs in `f64`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use nilprove_core::par::{self, Execution};
use nilprove_core::{CutLocation, Shape};

use crate::encode::{feature_count, EncodedPosition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Head {
    /// `N`: one value per position.
    Global,
    /// `N₂`: one value per cut location.
    Local,
}

impl Head {
    pub fn name(self) -> &'static str {
        match self {
            Head::Global => "global",
            Head::Local => "local",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    None,
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Conv,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub cin: usize,
    pub cout: usize,
    pub groups: usize,
    pub window: usize,
    pub axis: Axis,
}

impl LayerSpec {
    fn conv(cin: usize, cout: usize, groups: usize, window: usize, axis: Axis) -> Self {
        LayerSpec {
            kind: LayerKind::Conv,
            cin,
            cout,
            groups,
            window,
            axis,
        }
    }

    fn dense(cin: usize, cout: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Dense,
            cin,
            cout,
            groups: 1,
            window: 1,
            axis: Axis::None,
        }
    }

    pub fn weight_count(&self) -> usize {
        self.cout * (self.cin / self.groups) * self.window
    }

    fn fan_in(&self) -> usize {
        (self.cin / self.groups) * self.window
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Layer {
    fn init<R: Rng + ?Sized>(spec: LayerSpec, last: bool, rng: &mut R) -> Self {
        let gain = if last { 1.0 } else { 6.0 };
        let bound = (gain / spec.fan_in() as f64).sqrt();
        Layer {
            spec,
            weights: (0..spec.weight_count())
                .map(|_| rng.gen_range(-bound..bound) as f32)
                .collect(),
            bias: vec![0.0; spec.cout],
        }
    }

    fn forward(&self, a: usize, input: &[f64], out: &mut [f64]) {
        let s = &self.spec;
        match s.kind {
            LayerKind::Dense => {
                for (o, slot) in out.iter_mut().enumerate() {
                    let row = &self.weights[o * s.cin..(o + 1) * s.cin];
                    *slot = self.bias[o] as f64 + row.iter().zip(input).map(|(&w, &v)| w as f64 * v).sum::<f64>();
                }
            }
            LayerKind::Conv => {
                let plane = a * a;
                let nb = neighbors(s, a);
                let (cin_pg, cout_pg) = (s.cin / s.groups, s.cout / s.groups);
                for o in 0..s.cout {
                    let g = o / cout_pg;
                    let acc = &mut out[o * plane..(o + 1) * plane];
                    acc.fill(self.bias[o] as f64);
                    for ci in 0..cin_pg {
                        let inp = &input[(g * cin_pg + ci) * plane..][..plane];
                        for k in 0..s.window {
                            let w = self.weights[(o * cin_pg + ci) * s.window + k] as f64;
                            for (slot, &src) in acc.iter_mut().zip(&nb[k * plane..(k + 1) * plane]) {
                                *slot += w * inp[src];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Accumulates parameter gradients; returns the input gradient when
    /// `need_input` is set and an empty vector otherwise.
    fn backward(
        &self,
        a: usize,
        input: &[f64],
        gout: &[f64],
        gw: &mut [f64],
        gb: &mut [f64],
        need_input: bool,
    ) -> Vec<f64> {
        let s = &self.spec;
        let mut gin = if need_input { vec![0.0; input.len()] } else { Vec::new() };
        match s.kind {
            LayerKind::Dense => {
                for (o, &g) in gout.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    gb[o] += g;
                    let grow = &mut gw[o * s.cin..(o + 1) * s.cin];
                    grow.iter_mut().zip(input).for_each(|(gv, &v)| *gv += g * v);
                    if need_input {
                        let row = &self.weights[o * s.cin..(o + 1) * s.cin];
                        gin.iter_mut().zip(row).for_each(|(gv, &w)| *gv += g * w as f64);
                    }
                }
            }
            LayerKind::Conv => {
                let plane = a * a;
                let nb = neighbors(s, a);
                let (cin_pg, cout_pg) = (s.cin / s.groups, s.cout / s.groups);
                for o in 0..s.cout {
                    let g = o / cout_pg;
                    let go = &gout[o * plane..(o + 1) * plane];
                    if go.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    gb[o] += go.iter().sum::<f64>();
                    for ci in 0..cin_pg {
                        let ic = (g * cin_pg + ci) * plane;
                        for k in 0..s.window {
                            let wi = (o * cin_pg + ci) * s.window + k;
                            let idx = &nb[k * plane..(k + 1) * plane];
                            gw[wi] += go.iter().zip(idx).map(|(&d, &src)| d * input[ic + src]).sum::<f64>();
                            if need_input {
                                let w = self.weights[wi] as f64;
                                for (&d, &src) in go.iter().zip(idx) {
                                    gin[ic + src] += d * w;
                                }
                            }
                        }
                    }
                }
            }
        }
        gin
    }
}

#[inline]
fn shifted(s: &LayerSpec, a: usize, x: usize, y: usize, k: usize) -> (usize, usize) {
    let d = (k + a * s.window - s.window / 2) % a;
    match s.axis {
        Axis::None => (x, y),
        Axis::X => ((x + d) % a, y),
        Axis::Y => (x, (y + d) % a),
    }
}

/// Source cell of every `(k, cell)` pair, laid out `k · a² + cell`.
fn neighbors(s: &LayerSpec, a: usize) -> Vec<usize> {
    let mut nb = Vec::with_capacity(s.window * a * a);
    for k in 0..s.window {
        for x in 0..a {
            for y in 0..a {
                let (xx, yy) = shifted(s, a, x, y, k);
                nb.push(xx * a + yy);
            }
        }
    }
    nb
}

/// Gradient buffers shaped like a model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Grads {
    fn zeros(model: &ValueModel) -> Self {
        Grads {
            weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: model.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    fn add(&mut self, other: &Grads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    /// Parameters in [`ValueModel::param`] order.
    pub fn flat(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .flat_map(|(w, b)| w.iter().chain(b))
            .copied()
            .collect()
    }
}

/// One training example: features, output index (0 for the global head,
/// `x·a + y` for the local one) and log-scale target.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub features: &'a EncodedPosition,
    pub output: usize,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueModel {
    pub head: Head,
    pub shape: Shape,
    pub width: usize,
    pub layers: Vec<Layer>,
}

impl ValueModel {
    pub fn specs(shape: Shape, width: usize, head: Head) -> Vec<LayerSpec> {
        let (a, f) = (shape.a, feature_count(shape));
        let c = 8 * width;
        let out = match head {
            Head::Global => 1,
            Head::Local => a * a,
        };
        vec![
            LayerSpec::conv(f, c, 1, 1, Axis::None),
            LayerSpec::conv(c, c, width, 5, Axis::X),
            LayerSpec::conv(c, c, width, 5, Axis::Y),
            LayerSpec::conv(c, c, width, 5, Axis::X),
            LayerSpec::conv(c, c, width, 5, Axis::Y),
            LayerSpec::dense(c * a * a, 4 * width),
            LayerSpec::dense(4 * width, out),
        ]
    }

    pub fn new<R: Rng + ?Sized>(shape: Shape, width: usize, head: Head, rng: &mut R) -> Self {
        assert!(width >= 1, "width must be positive");
        let specs = Self::specs(shape, width, head);
        let last = specs.len() - 1;
        ValueModel {
            head,
            shape,
            width,
            layers: specs.into_iter().enumerate().map(|(i, s)| Layer::init(s, i == last, rng)).collect(),
        }
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.spec.cout)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn locate(&self, mut i: usize) -> (usize, bool, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            if i < l.weights.len() {
                return (li, true, i);
            }
            i -= l.weights.len();
            if i < l.bias.len() {
                return (li, false, i);
            }
            i -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// Parameter `i` in layer order, weights before bias within a layer.
    pub fn param(&self, i: usize) -> f32 {
        let (l, w, k) = self.locate(i);
        if w {
            self.layers[l].weights[k]
        } else {
            self.layers[l].bias[k]
        }
    }

    pub fn set_param(&mut self, i: usize, v: f32) {
        let (l, w, k) = self.locate(i);
        if w {
            self.layers[l].weights[k] = v;
        } else {
            self.layers[l].bias[k] = v;
        }
    }

    /// Activations of every layer, input first; hidden layers after ReLU.
    fn activations(&self, input: Vec<f64>) -> Vec<Vec<f64>> {
        let a = self.shape.a;
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input);
        for (i, l) in self.layers.iter().enumerate() {
            let n = match l.spec.kind {
                LayerKind::Conv => l.spec.cout * a * a,
                LayerKind::Dense => l.spec.cout,
            };
            let mut out = vec![0.0; n];
            l.forward(a, acts.last().expect("input pushed"), &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    fn input(e: &EncodedPosition) -> Vec<f64> {
        e.features.iter().map(|&v| v as f64).collect()
    }

    pub fn forward(&self, e: &EncodedPosition) -> Vec<f64> {
        self.activations(Self::input(e)).pop().expect("at least one layer")
    }

    pub fn predict(&self, batch: &[EncodedPosition], exec: Execution) -> Vec<Vec<f64>> {
        par::map(exec, batch, |e| self.forward(e))
    }

    /// Local head values as a cut-indexed grid.
    pub fn value_at(out: &[f64], shape: Shape, c: CutLocation) -> f64 {
        out[c.x * shape.a + c.y]
    }

    /// Mean squared error over the batch and its gradient. `noise` is the
    /// standard deviation of Gaussian input noise; `noise_seed` fixes it.
    pub fn loss_and_grad(&self, batch: &[Example<'_>], noise: f64, noise_seed: u64, exec: Execution) -> (f64, Grads) {
        const CHUNK: usize = 8;
        let scale = 1.0 / batch.len().max(1) as f64;
        let per = par::map_indexed(exec, batch.len().div_ceil(CHUNK), |chunk| {
            let mut grads = Grads::zeros(self);
            let mut loss = 0.0;
            for k in chunk * CHUNK..((chunk + 1) * CHUNK).min(batch.len()) {
                loss += self.accumulate(&batch[k], k, scale, noise, noise_seed, &mut grads);
            }
            (loss, grads)
        });
        let mut per = per.into_iter();
        let (mut loss, mut total) = per.next().unwrap_or_else(|| (0.0, Grads::zeros(self)));
        for (l, g) in per {
            loss += l;
            total.add(&g);
        }
        (loss, total)
    }

    /// Backpropagates one example into `grads`; returns its loss term.
    fn accumulate(&self, ex: &Example<'_>, k: usize, scale: f64, noise: f64, noise_seed: u64, grads: &mut Grads) -> f64 {
        let mut input = Self::input(ex.features);
        if noise > 0.0 {
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(
                noise_seed ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            );
            for v in input.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += noise * z;
            }
        }
        let acts = self.activations(input);
        let err = acts.last().expect("output")[ex.output] - ex.target;
        let mut g = vec![0.0; self.outputs()];
        g[ex.output] = 2.0 * err * scale;
        let last = self.layers.len() - 1;
        for i in (0..self.layers.len()).rev() {
            if i < last {
                for (gv, &av) in g.iter_mut().zip(&acts[i + 1]) {
                    if av <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            g = self.layers[i].backward(self.shape.a, &acts[i], &g, &mut grads.weights[i], &mut grads.bias[i], i > 0);
        }
        err * err * scale
    }

    pub fn loss(&self, batch: &[Example<'_>]) -> f64 {
        let scale = 1.0 / batch.len().max(1) as f64;
        batch
            .iter()
            .map(|ex| {
                let e = self.forward(ex.features)[ex.output] - ex.target;
                e * e * scale
            })
            .sum()
    }

    /// Multiplies every parameter by `1 + scale·ε`, `ε` standard normal.
    pub fn perturb<R: Rng + ?Sized>(&mut self, scale: f64, rng: &mut R) {
        if scale <= 0.0 {
            return;
        }
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                let z: f64 = StandardNormal.sample(rng);
                *w = (*w as f64 * (1.0 + scale * z)) as f32;
            }
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, model: &mut ValueModel, grads: &Grads) {
        let g = grads.flat();
        if self.m.len() != g.len() {
            self.m = vec![0.0; g.len()];
            self.v = vec![0.0; g.len()];
            self.t = 0;
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let mut i = 0;
        for l in &mut model.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let step = self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
                *w = (*w as f64 - step) as f32;
                i += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::encode;
    use nilprove_core::Position;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grouped_conv_weight_count() {
        let s = Shape::new(5, 3).unwrap();
        for n in [1, 4, 8] {
            let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
            let m = ValueModel::new(s, n, Head::Global, &mut rng);
            for l in &m.layers[1..5] {
                assert_eq!(l.weights.len(), 320 * n);
                assert_eq!((l.spec.cin, l.spec.cout, l.spec.groups, l.spec.window), (8 * n, 8 * n, n, 5));
            }
        }
    }

    #[test]
    fn output_sizes() {
        let s = Shape::new(3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = encode(&Position::full(s));
        assert_eq!(ValueModel::new(s, 2, Head::Global, &mut rng).forward(&e).len(), 1);
        assert_eq!(ValueModel::new(s, 2, Head::Local, &mut rng).forward(&e).len(), 9);
    }

    #[test]
    fn circular_window_wraps() {
        let spec = LayerSpec::conv(1, 1, 1, 5, Axis::X);
        let xs: Vec<usize> = (0..5).map(|k| shifted(&spec, 3, 0, 1, k).0).collect();
        assert_eq!(xs, vec![1, 2, 0, 1, 2]);
        let spec = LayerSpec::conv(1, 1, 1, 5, Axis::Y);
        let ys: Vec<usize> = (0..5).map(|k| shifted(&spec, 2, 1, 1, k).1).collect();
        assert_eq!(ys, vec![1, 0, 1, 0, 1]);
    }

    #[test]
    fn overfits_single_example() {
        let s = Shape::new(3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut m = ValueModel::new(s, 2, Head::Global, &mut rng);
        let e = encode(&Position::full(s));
        let batch = [Example {
            features: &e,
            output: 0,
            target: 1.5,
        }];
        let mut opt = Adam::new(1e-3);
        let first = m.loss(&batch);
        for _ in 0..300 {
            let (_, g) = m.loss_and_grad(&batch, 0.0, 0, Execution::Sequential);
            opt.step(&mut m, &g);
        }
        assert!(m.loss(&batch) < first * 1e-3, "{} -> {}", first, m.loss(&batch));
    }
}
