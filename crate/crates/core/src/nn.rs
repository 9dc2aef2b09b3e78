//! Two-layer dense classifier: linear → ReLU → linear with a single softmax
//! head over every class, trained by plain SGD.
//!
//! All operations are pure: they borrow their inputs and return fresh values,
//! so a parameter set and its one-step "virtual" successor can coexist.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor2D<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Tensor2D<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "tensor data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }
}

/// Layer sizes of the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || output_dim == 0 {
            return Err(Error::invalid(format!(
                "network dimensions must be positive, got ({input_dim}, {hidden_dim}, {output_dim})"
            )));
        }
        Ok(Self {
            input_dim,
            hidden_dim,
            output_dim,
        })
    }

    fn layer_shapes(&self) -> [(usize, usize); 2] {
        [
            (self.input_dim, self.hidden_dim),
            (self.hidden_dim, self.output_dim),
        ]
    }
}

/// One affine layer. `weight` is `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer<S> {
    pub weight: Tensor2D<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> Layer<S> {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Tensor2D::zeros(fan_in, fan_out),
            bias: vec![S::zero(); fan_out],
        }
    }

    fn num_params(&self) -> usize {
        self.weight.data.len() + self.bias.len()
    }

    fn slot(&self, i: usize) -> &S {
        let w = self.weight.data.len();
        if i < w {
            &self.weight.data[i]
        } else {
            &self.bias[i - w]
        }
    }

    fn slot_mut(&mut self, i: usize) -> &mut S {
        let w = self.weight.data.len();
        if i < w {
            &mut self.weight.data[i]
        } else {
            &mut self.bias[i - w]
        }
    }

    fn values(&self) -> impl Iterator<Item = &S> {
        self.weight.data.iter().chain(self.bias.iter())
    }
}

fn flat_index<S: Scalar>(layers: &[Layer<S>], mut i: usize) -> (usize, usize) {
    for (l, layer) in layers.iter().enumerate() {
        let n = layer.num_params();
        if i < n {
            return (l, i);
        }
        i -= n;
    }
    panic!("flat parameter index out of range");
}

macro_rules! flat_access {
    ($ty:ident) => {
        impl<S: Scalar> $ty<S> {
            pub fn layers(&self) -> &[Layer<S>] {
                &self.layers
            }

            pub fn architecture(&self) -> Architecture {
                self.arch
            }

            /// Total number of scalars (weights then bias, layer by layer).
            pub fn num_params(&self) -> usize {
                self.layers.iter().map(Layer::num_params).sum()
            }

            /// Value at a flat index in weights-then-bias, layer order.
            pub fn get(&self, i: usize) -> S {
                let (l, j) = flat_index(&self.layers, i);
                *self.layers[l].slot(j)
            }

            pub fn set(&mut self, i: usize, v: S) {
                let (l, j) = flat_index(&self.layers, i);
                *self.layers[l].slot_mut(j) = v;
            }

            pub fn values(&self) -> impl Iterator<Item = &S> {
                self.layers.iter().flat_map(Layer::values)
            }

            pub fn is_finite(&self) -> bool {
                self.values().all(|v| v.is_finite())
            }
        }
    };
}

/// Trainable weights and biases of the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet<S> {
    arch: Architecture,
    layers: Vec<Layer<S>>,
}

/// Partial derivatives of the mean batch loss, shaped like a [`ParamSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradSet<S> {
    arch: Architecture,
    layers: Vec<Layer<S>>,
}

flat_access!(ParamSet);
flat_access!(GradSet);

impl<S: Scalar> ParamSet<S> {
    pub fn zeros(arch: Architecture) -> Self {
        Self {
            arch,
            layers: arch
                .layer_shapes()
                .iter()
                .map(|&(i, o)| Layer::zeros(i, o))
                .collect(),
        }
    }

    /// Build from explicit layers; shapes must chain.
    pub fn from_layers(arch: Architecture, layers: Vec<Layer<S>>) -> Result<Self> {
        let shapes = arch.layer_shapes();
        if layers.len() != shapes.len() {
            return Err(Error::invalid(format!(
                "expected {} layers, got {}",
                shapes.len(),
                layers.len()
            )));
        }
        for (l, (layer, &(i, o))) in layers.iter().zip(shapes.iter()).enumerate() {
            if layer.weight.shape() != (i, o) || layer.bias.len() != o {
                return Err(Error::invalid(format!(
                    "layer {l} has shape {:?}/{} but architecture needs {i}x{o}",
                    layer.weight.shape(),
                    layer.bias.len()
                )));
            }
        }
        Ok(Self { arch, layers })
    }
}

impl<S: Scalar> GradSet<S> {
    pub fn zeros(arch: Architecture) -> Self {
        let ParamSet { arch, layers } = ParamSet::zeros(arch);
        Self { arch, layers }
    }

    /// Elementwise sum of two congruent gradient sets.
    pub fn add(&self, other: &GradSet<S>) -> Result<GradSet<S>> {
        if self.arch != other.arch {
            return Err(Error::invalid("gradient sets are not shape-congruent"));
        }
        let mut out = self.clone();
        for (a, b) in out.layers.iter_mut().zip(other.layers.iter()) {
            for (x, y) in a.weight.data.iter_mut().zip(b.weight.data.iter()) {
                *x = *x + *y;
            }
            for (x, y) in a.bias.iter_mut().zip(b.bias.iter()) {
                *x = *x + *y;
            }
        }
        Ok(out)
    }
}

/// Borrowed labeled input, the unit every batch is made of.
#[derive(Debug, Clone, Copy)]
pub struct Labeled<'a, S> {
    pub features: &'a [S],
    pub label: usize,
}

impl<'a, S> Labeled<'a, S> {
    pub fn new(features: &'a [S], label: usize) -> Self {
        Self { features, label }
    }
}

/// Per-example and mean softmax cross-entropy, in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport<S> {
    pub mean_loss: S,
    pub per_example_loss: Vec<S>,
    pub predictions: Vec<usize>,
}

/// Weights uniform in ±1/sqrt(fan_in), biases zero.
pub fn init_network<S: Scalar>(
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    seed: u64,
) -> Result<ParamSet<S>> {
    let arch = Architecture::new(input_dim, hidden_dim, output_dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::zeros(arch);
    for layer in &mut params.layers {
        let bound = 1.0 / (layer.weight.rows as f64).sqrt();
        for w in &mut layer.weight.data {
            *w = S::of(rng.gen_range(-bound..bound));
        }
    }
    Ok(params)
}

fn validate_batch<S: Scalar>(params: &ParamSet<S>, batch: &[Labeled<'_, S>]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("batch is empty"));
    }
    let arch = params.arch;
    for (k, ex) in batch.iter().enumerate() {
        if ex.features.len() != arch.input_dim {
            return Err(Error::invalid(format!(
                "example {k} has {} features, network expects {}",
                ex.features.len(),
                arch.input_dim
            )));
        }
        if ex.label >= arch.output_dim {
            return Err(Error::invalid(format!(
                "example {k} label {} out of range [0, {})",
                ex.label, arch.output_dim
            )));
        }
        if ex.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("example {k} has non-finite features")));
        }
    }
    Ok(())
}

/// Forward activations of one example.
struct Activations<S> {
    hidden: Vec<S>,
    logits: Vec<S>,
}

fn affine<S: Scalar>(input: &[S], layer: &Layer<S>, out: &mut Vec<S>) {
    out.clear();
    out.extend_from_slice(&layer.bias);
    for (i, &x) in input.iter().enumerate() {
        if x == S::zero() {
            continue;
        }
        for (o, &w) in out.iter_mut().zip(layer.weight.row(i)) {
            *o = *o + x * w;
        }
    }
}

fn forward_one<S: Scalar>(params: &ParamSet<S>, x: &[S], act: &mut Activations<S>) {
    affine(x, &params.layers[0], &mut act.hidden);
    for h in act.hidden.iter_mut() {
        if *h < S::zero() {
            *h = S::zero();
        }
    }
    affine(&act.hidden, &params.layers[1], &mut act.logits);
}

/// Softmax in place; returns log-sum-exp of the logits.
fn softmax_in_place<S: Scalar>(logits: &mut [S]) -> S {
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let mut sum = S::zero();
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum = sum + *l;
    }
    for l in logits.iter_mut() {
        *l = *l / sum;
    }
    max + sum.ln()
}

fn argmax<S: Scalar>(v: &[S]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Softmax cross-entropy of every example plus argmax predictions.
pub fn forward_loss<S: Scalar>(
    params: &ParamSet<S>,
    batch: &[Labeled<'_, S>],
) -> Result<LossReport<S>> {
    validate_batch(params, batch)?;
    let mut act = Activations {
        hidden: Vec::with_capacity(params.arch.hidden_dim),
        logits: Vec::with_capacity(params.arch.output_dim),
    };
    let mut per_example_loss = Vec::with_capacity(batch.len());
    let mut predictions = Vec::with_capacity(batch.len());
    for ex in batch {
        forward_one(params, ex.features, &mut act);
        predictions.push(argmax(&act.logits));
        let target = act.logits[ex.label];
        let lse = softmax_in_place(&mut act.logits);
        per_example_loss.push((lse - target).max(S::zero()));
    }
    let total: S = per_example_loss.iter().copied().sum();
    let mean_loss = total / S::of(batch.len() as f64);
    if !mean_loss.is_finite() {
        return Err(Error::Numeric("non-finite loss".into()));
    }
    Ok(LossReport {
        mean_loss,
        per_example_loss,
        predictions,
    })
}

/// Argmax class of a single input. Caller guarantees the input width.
pub fn predict<S: Scalar>(params: &ParamSet<S>, features: &[S]) -> usize {
    let mut act = Activations {
        hidden: Vec::with_capacity(params.arch.hidden_dim),
        logits: Vec::with_capacity(params.arch.output_dim),
    };
    forward_one(params, features, &mut act);
    argmax(&act.logits)
}

/// Fraction of examples whose argmax prediction equals the label.
pub fn accuracy<S: Scalar>(params: &ParamSet<S>, batch: &[Labeled<'_, S>]) -> Result<f64> {
    validate_batch(params, batch)?;
    let hits = batch
        .iter()
        .filter(|ex| predict(params, ex.features) == ex.label)
        .count();
    Ok(hits as f64 / batch.len() as f64)
}

/// Exact gradient of the mean softmax cross-entropy over `batch`.
pub fn backward<S: Scalar>(params: &ParamSet<S>, batch: &[Labeled<'_, S>]) -> Result<GradSet<S>> {
    validate_batch(params, batch)?;
    let arch = params.arch;
    let mut grads = GradSet::zeros(arch);
    let scale = S::one() / S::of(batch.len() as f64);
    let mut act = Activations {
        hidden: Vec::with_capacity(arch.hidden_dim),
        logits: Vec::with_capacity(arch.output_dim),
    };
    let mut d_hidden = vec![S::zero(); arch.hidden_dim];
    let w2 = &params.layers[1].weight;

    for ex in batch {
        forward_one(params, ex.features, &mut act);
        softmax_in_place(&mut act.logits);
        // dL/dlogits = (softmax - onehot) / n
        let d_logits = &mut act.logits;
        d_logits[ex.label] = d_logits[ex.label] - S::one();
        for d in d_logits.iter_mut() {
            *d = *d * scale;
        }

        let (g1, g2) = grads.layers.split_at_mut(1);
        let (g1, g2) = (&mut g1[0], &mut g2[0]);
        for (b, &d) in g2.bias.iter_mut().zip(d_logits.iter()) {
            *b = *b + d;
        }
        for (h, &hv) in act.hidden.iter().enumerate() {
            if hv == S::zero() {
                d_hidden[h] = S::zero();
                continue;
            }
            let row = g2.weight.row_mut(h);
            for (g, &d) in row.iter_mut().zip(d_logits.iter()) {
                *g = *g + hv * d;
            }
            // ReLU passes gradient only where the unit is active.
            d_hidden[h] = w2
                .row(h)
                .iter()
                .zip(d_logits.iter())
                .fold(S::zero(), |acc, (&w, &d)| acc + w * d);
        }

        for (b, &d) in g1.bias.iter_mut().zip(d_hidden.iter()) {
            *b = *b + d;
        }
        for (i, &x) in ex.features.iter().enumerate() {
            if x == S::zero() {
                continue;
            }
            for (g, &d) in g1.weight.row_mut(i).iter_mut().zip(d_hidden.iter()) {
                *g = *g + x * d;
            }
        }
    }
    Ok(grads)
}

/// Returns `params - alpha * grads`; `params` is left untouched.
pub fn sgd_step<S: Scalar>(params: &ParamSet<S>, grads: &GradSet<S>, alpha: S) -> Result<ParamSet<S>> {
    if params.arch != grads.arch {
        return Err(Error::invalid("gradients are not shape-congruent with parameters"));
    }
    if !(alpha >= S::zero()) {
        return Err(Error::invalid(format!("learning rate must be >= 0, got {alpha}")));
    }
    let mut out = params.clone();
    for (p, g) in out.layers.iter_mut().zip(grads.layers.iter()) {
        for (w, &d) in p.weight.data.iter_mut().zip(g.weight.data.iter()) {
            *w = *w - alpha * d;
        }
        for (b, &d) in p.bias.iter_mut().zip(g.bias.iter()) {
            *b = *b - alpha * d;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(n: usize, dim: usize, classes: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let ys = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        (xs, ys)
    }

    fn batch<'a>(xs: &'a [Vec<f64>], ys: &[usize]) -> Vec<Labeled<'a, f64>> {
        xs.iter().zip(ys).map(|(x, &y)| Labeled::new(x, y)).collect()
    }

    #[test]
    fn init_shapes_and_zero_bias() {
        let p: ParamSet<f64> = init_network(784, 400, 10, 1).unwrap();
        assert_eq!(p.layers()[0].weight.shape(), (784, 400));
        assert_eq!(p.layers()[1].weight.shape(), (400, 10));
        assert!(p.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        let bound = 1.0 / 784f64.sqrt();
        assert!(p.layers()[0].weight.data().iter().all(|w| w.abs() < bound));
    }

    #[test]
    fn init_is_deterministic() {
        let a: ParamSet<f64> = init_network(2, 1, 2, 7).unwrap();
        let b: ParamSet<f64> = init_network(2, 1, 2, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_rejects_zero_dims() {
        assert!(matches!(
            init_network::<f64>(0, 4, 2, 1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(init_network::<f64>(3, 0, 2, 1).is_err());
    }

    #[test]
    fn zero_params_give_uniform_loss() {
        let p = ParamSet::<f64>::zeros(Architecture::new(5, 3, 10).unwrap());
        let (xs, ys) = fixture(4, 5, 10, 2);
        let r = forward_loss(&p, &batch(&xs, &ys)).unwrap();
        for l in &r.per_example_loss {
            assert!((l - 10f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn single_example_mean_is_the_example_loss() {
        let p: ParamSet<f64> = init_network(5, 4, 3, 3).unwrap();
        let (xs, ys) = fixture(1, 5, 3, 4);
        let r = forward_loss(&p, &batch(&xs, &ys)).unwrap();
        assert_eq!(r.mean_loss, r.per_example_loss[0]);
    }

    #[test]
    fn forward_rejects_bad_inputs() {
        let p: ParamSet<f64> = init_network(2, 2, 3, 3).unwrap();
        let x = vec![0.5, 0.5];
        assert!(forward_loss(&p, &[Labeled::new(&x, 3)]).is_err());
        let bad = vec![f64::NAN, 0.0];
        assert!(forward_loss(&p, &[Labeled::new(&bad, 0)]).is_err());
        assert!(forward_loss(&p, &[]).is_err());
        let short = vec![1.0];
        assert!(backward(&p, &[Labeled::new(&short, 0)]).is_err());
    }

    #[test]
    fn duplicated_batch_has_same_gradient() {
        let p: ParamSet<f64> = init_network(6, 5, 3, 11).unwrap();
        let (xs, ys) = fixture(4, 6, 3, 12);
        let b = batch(&xs, &ys);
        let mut doubled = b.clone();
        doubled.extend(b.iter().copied());
        let g1 = backward(&p, &b).unwrap();
        let g2 = backward(&p, &doubled).unwrap();
        for (a, c) in g1.values().zip(g2.values()) {
            assert!((a - c).abs() <= 1e-14 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn zero_input_contributes_no_first_layer_weight_gradient() {
        let p: ParamSet<f64> = init_network(4, 3, 2, 5).unwrap();
        let x = vec![0.0; 4];
        let g = backward(&p, &[Labeled::new(&x, 1)]).unwrap();
        assert!(g.layers()[0].weight.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sgd_identity_cases() {
        let p: ParamSet<f64> = init_network(4, 3, 2, 5).unwrap();
        let (xs, ys) = fixture(3, 4, 2, 6);
        let g = backward(&p, &batch(&xs, &ys)).unwrap();
        assert_eq!(sgd_step(&p, &g, 0.0).unwrap(), p);
        let zero = GradSet::zeros(p.architecture());
        assert_eq!(sgd_step(&p, &zero, 0.1).unwrap(), p);
        assert!(sgd_step(&p, &g, -0.1).is_err());
        let other = GradSet::zeros(Architecture::new(4, 2, 2).unwrap());
        assert!(sgd_step(&p, &other, 0.1).is_err());
    }

    #[test]
    fn two_steps_decrease_loss() {
        let p0: ParamSet<f64> = init_network(6, 8, 3, 21).unwrap();
        let (xs, ys) = fixture(10, 6, 3, 22);
        let b = batch(&xs, &ys);
        let l0 = forward_loss(&p0, &b).unwrap().mean_loss;
        let p1 = sgd_step(&p0, &backward(&p0, &b).unwrap(), 0.01).unwrap();
        let l1 = forward_loss(&p1, &b).unwrap().mean_loss;
        let p2 = sgd_step(&p1, &backward(&p1, &b).unwrap(), 0.01).unwrap();
        let l2 = forward_loss(&p2, &b).unwrap().mean_loss;
        assert!(l1 < l0 && l2 < l1, "{l0} {l1} {l2}");
    }

    #[test]
    fn works_in_single_precision() {
        let p: ParamSet<f32> = init_network(3, 4, 2, 9).unwrap();
        let x = [0.25f32, -0.5, 1.0];
        let r = forward_loss(&p, &[Labeled::new(&x, 1)]).unwrap();
        assert!(r.mean_loss.is_finite() && r.mean_loss >= 0.0);
        let g = backward(&p, &[Labeled::new(&x, 1)]).unwrap();
        assert!(g.is_finite());
    }
}
