//! Feed-forward classifier: rectifier hidden layers followed by an
//! element-wise sigmoid output layer, in double precision.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

/// Predictions are clamped to `[EPS, 1 - EPS]` before taking logarithms.
pub const LOSS_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapeError {
    #[error("expected input of length {expected}, got {actual}")]
    Input { expected: usize, actual: usize },
    #[error("expected {expected} targets, got {actual}")]
    Targets { expected: usize, actual: usize },
    #[error("layer {layer} maps {inputs} inputs but the previous layer emits {previous}")]
    Chain { layer: usize, inputs: usize, previous: usize },
    #[error("layer {layer} has {actual} parameters in {what}, expected {expected}")]
    Parameters { layer: usize, what: &'static str, expected: usize, actual: usize },
    #[error("layer {0} has a zero dimension")]
    ZeroDim(usize),
    #[error("a model needs at least one layer")]
    NoLayers,
    #[error("layer {0} contains a non-finite parameter")]
    NonFinite(usize),
}

/// Dense affine map `outputs x inputs`, weights stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Layer {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self, ShapeError> {
        Self::checked(0, inputs, outputs, weights, bias)
    }

    fn checked(
        layer: usize,
        inputs: usize,
        outputs: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, ShapeError> {
        if inputs == 0 || outputs == 0 {
            return Err(ShapeError::ZeroDim(layer));
        }
        if weights.len() != inputs * outputs {
            return Err(ShapeError::Parameters {
                layer,
                what: "weights",
                expected: inputs * outputs,
                actual: weights.len(),
            });
        }
        if bias.len() != outputs {
            return Err(ShapeError::Parameters { layer, what: "bias", expected: outputs, actual: bias.len() });
        }
        if !weights.iter().chain(&bias).all(|w| w.is_finite()) {
            return Err(ShapeError::NonFinite(layer));
        }
        Ok(Layer { inputs, outputs, weights, bias })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    /// Uniform in `[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`; biases start at zero.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let a = libm::sqrt(6.0 / (inputs + outputs) as f64);
        let weights = (0..inputs * outputs).map(|_| rng.random_range(-a..=a)).collect();
        Layer { inputs, outputs, weights, bias: vec![0.0; outputs] }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.inputs + inp]
    }

    /// `W x + b`. Zero inputs are skipped, which makes count vectors cheap.
    fn affine(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, zo) in z.iter_mut().enumerate() {
                *zo += self.weights[o * self.inputs + i] * xi;
            }
        }
        z
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    let s = if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    };
    // Keep outputs strictly inside (0, 1) even when the exponential saturates.
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

#[inline]
fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// Mean binary cross-entropy over heads.
pub fn bce_loss(predictions: &[f64], targets: &[f64]) -> Result<f64, ShapeError> {
    if predictions.len() != targets.len() {
        return Err(ShapeError::Targets { expected: predictions.len(), actual: targets.len() });
    }
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(&p, &y)| {
            let p = p.clamp(LOSS_EPS, 1.0 - LOSS_EPS);
            -(y * libm::log(p) + (1.0 - y) * libm::log(1.0 - p))
        })
        .sum();
    Ok(total / predictions.len() as f64)
}

/// Multi-layer perceptron with sigmoid output heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Gradient of the loss with respect to every parameter, shaped like [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &Mlp) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGradient { weights: vec![0.0; l.weights.len()], bias: vec![0.0; l.bias.len()] })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.layers {
            g.weights.iter_mut().chain(g.bias.iter_mut()).for_each(|x| *x *= factor);
        }
    }

    /// All entries, layer by layer, weights before bias.
    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|g| g.weights.iter().chain(&g.bias).copied())
    }
}

impl Mlp {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, ShapeError> {
        if layers.is_empty() {
            return Err(ShapeError::NoLayers);
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.inputs == 0 || layer.outputs == 0 {
                return Err(ShapeError::ZeroDim(k));
            }
            if k > 0 && layers[k - 1].outputs != layer.inputs {
                return Err(ShapeError::Chain { layer: k, inputs: layer.inputs, previous: layers[k - 1].outputs });
            }
            if !layer.weights.iter().chain(&layer.bias).all(|w| w.is_finite()) {
                return Err(ShapeError::NonFinite(k));
            }
        }
        Ok(Mlp { layers })
    }

    /// Builds a model from raw per-layer parameters for the dimension chain `dims`.
    pub fn from_parameters(dims: &[usize], params: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self, ShapeError> {
        if dims.len() < 2 || params.len() != dims.len() - 1 {
            return Err(ShapeError::NoLayers);
        }
        let layers = params
            .into_iter()
            .enumerate()
            .map(|(k, (w, b))| Layer::checked(k, dims[k], dims[k + 1], w, b))
            .collect::<Result<Vec<_>, _>>()?;
        Mlp::from_layers(layers)
    }

    /// All-zero model over `dims = [input, hidden.., output]`.
    pub fn zeros(dims: &[usize]) -> Result<Self, ShapeError> {
        Mlp::from_layers(dims.windows(2).map(|d| Layer::zeros(d[0], d[1])).collect())
    }

    /// Glorot-uniform initialisation drawn from `rng` layer by layer.
    pub fn random<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self, ShapeError> {
        if dims.iter().any(|&d| d == 0) {
            return Err(ShapeError::ZeroDim(0));
        }
        Mlp::from_layers(dims.windows(2).map(|d| Layer::glorot(d[0], d[1], rng)).collect())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.outputs).collect()
    }

    /// `[input, hidden.., output]`.
    pub fn dims(&self) -> Vec<usize> {
        core::iter::once(self.input_dim()).chain(self.layers.iter().map(|l| l.outputs)).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<(), ShapeError> {
        if x.len() != self.input_dim() {
            return Err(ShapeError::Input { expected: self.input_dim(), actual: x.len() });
        }
        Ok(())
    }

    /// Per-head probabilities, each strictly inside (0, 1).
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ShapeError> {
        self.check_input(x)?;
        let mut a = self.layers[0].affine(x);
        for layer in &self.layers[1..] {
            a.iter_mut().for_each(|v| *v = relu(*v));
            a = layer.affine(&a);
        }
        a.iter_mut().for_each(|v| *v = sigmoid(*v));
        Ok(a)
    }

    /// Loss and exact gradient of `bce_loss(forward(x), targets)`.
    pub fn backward(&self, x: &[f64], targets: &[f64]) -> Result<(f64, Gradients), ShapeError> {
        self.check_input(x)?;
        if targets.len() != self.output_dim() {
            return Err(ShapeError::Targets { expected: self.output_dim(), actual: targets.len() });
        }

        // Pre-activations of every layer; activations are recomputed from them.
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        pre.push(self.layers[0].affine(x));
        for layer in &self.layers[1..] {
            let a: Vec<f64> = pre.last().unwrap().iter().map(|&z| relu(z)).collect();
            pre.push(layer.affine(&a));
        }
        let probs: Vec<f64> = pre.last().unwrap().iter().map(|&z| sigmoid(z)).collect();
        let loss = bce_loss(&probs, targets)?;

        // d loss / d z at the output. Inside the clamp window the sigmoid and the
        // log cancel to (p - y); outside it the clamped loss is flat.
        let heads = probs.len() as f64;
        let mut delta: Vec<f64> = probs
            .iter()
            .zip(targets)
            .map(|(&p, &y)| if (LOSS_EPS..=1.0 - LOSS_EPS).contains(&p) { (p - y) / heads } else { 0.0 })
            .collect();

        let mut grads = Gradients::zeros_like(self);
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let g = &mut grads.layers[k];
            let owned;
            let input: &[f64] = if k == 0 {
                x
            } else {
                owned = pre[k - 1].iter().map(|&z| relu(z)).collect::<Vec<_>>();
                &owned
            };
            for (o, &d) in delta.iter().enumerate() {
                g.bias[o] = d;
                if d == 0.0 {
                    continue;
                }
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, &xi) in row.iter_mut().zip(input) {
                    *gw = d * xi;
                }
            }
            if k > 0 {
                let mut next = vec![0.0; layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (n, &w) in next.iter_mut().zip(row) {
                        *n += w * d;
                    }
                }
                for (n, &z) in next.iter_mut().zip(&pre[k - 1]) {
                    if z <= 0.0 {
                        *n = 0.0;
                    }
                }
                delta = next;
            }
        }
        Ok((loss, grads))
    }

    /// Applies `f(param, grad_index)` to every parameter in [`Gradients::flat`] order.
    pub(crate) fn for_each_param_mut(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        let mut i = 0;
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                f(i, w);
                i += 1;
            }
        }
    }

    /// All parameters, layer by layer, weights before bias.
    pub fn flat_parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }

    pub fn all_finite(&self) -> bool {
        self.flat_parameters().all(f64::is_finite)
    }
}
