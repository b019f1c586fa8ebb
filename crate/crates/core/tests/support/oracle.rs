//! Independent reference arithmetic for the MLP: a straight-line forward pass
//! and central finite differences. Shares no code with the engine beyond reading
//! its parameters.

#![allow(dead_code)]

use llmguard_core::Mlp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;
pub const FD_REL_TOL: f64 = 1e-5;

/// Raw parameters per layer: (inputs, outputs, weights row-major, bias).
pub type RawLayers = Vec<(usize, usize, Vec<f64>, Vec<f64>)>;

pub fn raw_layers(model: &Mlp) -> RawLayers {
    model
        .layers()
        .iter()
        .map(|l| (l.inputs(), l.outputs(), l.weights().to_vec(), l.bias().to_vec()))
        .collect()
}

/// Pre-activations of every layer, then the output probabilities.
pub fn scratch_forward(layers: &RawLayers, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut pre = Vec::new();
    let mut a = x.to_vec();
    for (k, (n_in, n_out, w, b)) in layers.iter().enumerate() {
        let mut z = vec![0.0; *n_out];
        for o in 0..*n_out {
            let mut acc = b[o];
            for i in 0..*n_in {
                acc += w[o * n_in + i] * a[i];
            }
            z[o] = acc;
        }
        pre.push(z.clone());
        a = if k + 1 == layers.len() {
            z.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect()
        } else {
            z.iter().map(|v| v.max(0.0)).collect()
        };
    }
    (pre, a)
}

pub fn scratch_loss(layers: &RawLayers, x: &[f64], y: &[f64]) -> f64 {
    let (_, p) = scratch_forward(layers, x);
    let eps = 1e-12;
    p.iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(eps, 1.0 - eps);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / p.len() as f64
}

/// Central differences of the loss for every parameter, in engine flat order
/// (layer by layer, weights then bias).
pub fn numeric_gradient(layers: &RawLayers, x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    let mut work = layers.clone();
    for k in 0..layers.len() {
        for which in 0..2 {
            let len = if which == 0 { layers[k].2.len() } else { layers[k].3.len() };
            for j in 0..len {
                let original = *param(&mut work, k, which, j);
                *param(&mut work, k, which, j) = original + FD_STEP;
                let plus = scratch_loss(&work, x, y);
                *param(&mut work, k, which, j) = original - FD_STEP;
                let minus = scratch_loss(&work, x, y);
                *param(&mut work, k, which, j) = original;
                out.push((plus - minus) / (2.0 * FD_STEP));
            }
        }
    }
    out
}

fn param(layers: &mut RawLayers, k: usize, which: usize, j: usize) -> &mut f64 {
    if which == 0 {
        &mut layers[k].2[j]
    } else {
        &mut layers[k].3[j]
    }
}

/// |a - n| / max(|a|, |n|), zero when both vanish.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

pub struct GradientCase {
    pub seed: u64,
    pub dims: Vec<usize>,
    pub model: Mlp,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// A seeded random network, count-like input and binary targets. Inputs are
/// redrawn until no pre-activation sits within `10 * FD_STEP` of a rectifier
/// kink, where finite differences are not meaningful.
pub fn gradient_case(seed: u64) -> GradientCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.random_range(0..=2);
    let mut dims = vec![rng.random_range(2..=8)];
    for _ in 0..depth {
        dims.push(rng.random_range(2..=6));
    }
    dims.push(rng.random_range(1..=3));
    let model = Mlp::random(&dims, &mut rng).expect("valid dims");
    let layers = raw_layers(&model);
    let y: Vec<f64> = (0..dims[dims.len() - 1]).map(|_| f64::from(rng.random_range(0..=1u8))).collect();
    loop {
        let x: Vec<f64> = (0..dims[0]).map(|_| f64::from(rng.random_range(0..=3u8))).collect();
        let (pre, _) = scratch_forward(&layers, &x);
        let near_kink = pre[..pre.len() - 1].iter().flatten().any(|z| z.abs() < 10.0 * FD_STEP);
        if !near_kink {
            return GradientCase { seed, dims, model, x, y };
        }
    }
}

/// Largest relative error between analytic and numeric gradients of one case.
pub fn max_gradient_error(case: &GradientCase) -> f64 {
    let (_, analytic) = case.model.backward(&case.x, &case.y).expect("shapes agree");
    let numeric = numeric_gradient(&raw_layers(&case.model), &case.x, &case.y);
    let analytic: Vec<f64> = analytic.flat().collect();
    assert_eq!(analytic.len(), numeric.len());
    analytic.iter().zip(&numeric).map(|(&a, &n)| relative_error(a, n)).fold(0.0, f64::max)
}
