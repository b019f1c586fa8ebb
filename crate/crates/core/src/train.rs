//! Mini-batch Adam training for [`Mlp`].

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mlp::{Gradients, Mlp, ShapeError};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub hidden_dims: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            hidden_dims: vec![64],
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        let bad = |what: &'static str| Err(TrainError::InvalidConfig(what));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("adam epsilon must be positive");
        }
        if self.hidden_dims.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("example {index}: {source}")]
    Shape { index: usize, source: ShapeError },
    #[error("input dimension must be at least 1 (empty vocabulary?)")]
    EmptyInput,
    #[error("training diverged in epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
}

/// A trained model with the mean loss of its final epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: Mlp,
    pub final_loss: f64,
    pub epochs: usize,
}

/// Trains a fresh model on `(input, target)` pairs. See [`train_with`].
pub fn train(dataset: &[(Vec<f64>, Vec<f64>)], config: &TrainConfig) -> Result<Trained, TrainError> {
    train_with(dataset, config, |_, _, _| {})
}

/// Trains a fresh model, calling `on_epoch(epoch, &model, mean_loss)` after every epoch.
///
/// Initialisation and the per-epoch shuffles draw from one ChaCha8 stream
/// seeded with `config.seed`, so identical inputs give identical parameters.
pub fn train_with<F>(
    dataset: &[(Vec<f64>, Vec<f64>)],
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<Trained, TrainError>
where
    F: FnMut(usize, &Mlp, f64),
{
    config.validate()?;
    let (first_x, first_y) = dataset.first().ok_or(TrainError::EmptyDataset)?;
    let (input_dim, output_dim) = (first_x.len(), first_y.len());
    if input_dim == 0 {
        return Err(TrainError::EmptyInput);
    }
    if output_dim == 0 {
        return Err(TrainError::Shape { index: 0, source: ShapeError::ZeroDim(config.hidden_dims.len()) });
    }
    for (index, (x, y)) in dataset.iter().enumerate() {
        if x.len() != input_dim {
            return Err(TrainError::Shape { index, source: ShapeError::Input { expected: input_dim, actual: x.len() } });
        }
        if y.len() != output_dim {
            return Err(TrainError::Shape { index, source: ShapeError::Targets { expected: output_dim, actual: y.len() } });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dims: Vec<usize> = core::iter::once(input_dim)
        .chain(config.hidden_dims.iter().copied())
        .chain(core::iter::once(output_dim))
        .collect();
    let mut model = Mlp::random(&dims, &mut rng).map_err(|source| TrainError::Shape { index: 0, source })?;
    let mut adam = Adam::new(model.parameter_count(), config);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut final_loss = f64::NAN;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads = Gradients::zeros_like(&model);
            for &i in batch {
                let (x, y) = &dataset[i];
                let (loss, g) = model.backward(x, y).map_err(|source| TrainError::Shape { index: i, source })?;
                loss_sum += loss;
                grads.add_assign(&g);
            }
            grads.scale(1.0 / batch.len() as f64);
            adam.step(&mut model, &grads);
        }
        final_loss = loss_sum / dataset.len() as f64;
        if !final_loss.is_finite() || !model.all_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        on_epoch(epoch, &model, final_loss);
    }
    Ok(Trained { model, final_loss, epochs: config.epochs })
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(n: usize, config: &TrainConfig) -> Self {
        Adam {
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn step(&mut self, model: &mut Mlp, grads: &Gradients) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        let flat: Vec<f64> = grads.flat().collect();
        let (m, v) = (&mut self.m, &mut self.v);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.epsilon);
        model.for_each_param_mut(|i, w| {
            let g = flat[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            *w -= lr * m_hat / (libm::sqrt(v_hat) + eps);
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_separable() -> Vec<(Vec<f64>, Vec<f64>)> {
        // Two tokens; label is 1 exactly when the first token outnumbers the second.
        (0..20)
            .map(|i| {
                let a = (i % 5) as f64;
                let b = ((i / 5) % 4) as f64 + if i % 2 == 0 { 0.5 } else { 0.0 };
                let y = if a > b { 1.0 } else { 0.0 };
                (vec![a, b], vec![y])
            })
            .collect()
    }

    #[test]
    fn empty_dataset_rejected() {
        assert_eq!(train(&[], &TrainConfig::default()), Err(TrainError::EmptyDataset));
    }

    #[test]
    fn invalid_config_rejected() {
        let data = vec![(vec![1.0], vec![1.0])];
        for cfg in [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { hidden_dims: vec![0], ..Default::default() },
        ] {
            assert!(matches!(train(&data, &cfg), Err(TrainError::InvalidConfig(_))));
        }
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let data = vec![(vec![1.0, 2.0], vec![1.0]), (vec![1.0], vec![0.0])];
        assert!(matches!(train(&data, &TrainConfig::default()), Err(TrainError::Shape { index: 1, .. })));
    }

    #[test]
    fn diverging_run_names_epoch() {
        // Opposite-signed infinite contributions produce NaN activations.
        let data = vec![(vec![f64::INFINITY, f64::INFINITY], vec![1.0])];
        let cfg = TrainConfig { epochs: 3, ..Default::default() };
        assert_eq!(train(&data, &cfg), Err(TrainError::Diverged { epoch: 1 }));
    }

    #[test]
    fn same_seed_same_trajectory() {
        let data = toy_separable();
        let cfg = TrainConfig { seed: 9, epochs: 5, batch_size: 4, ..Default::default() };
        let mut a = Vec::new();
        let mut b = Vec::new();
        train_with(&data, &cfg, |_, m, l| a.push((m.flat_parameters().map(f64::to_bits).collect::<Vec<_>>(), l.to_bits())))
            .unwrap();
        train_with(&data, &cfg, |_, m, l| b.push((m.flat_parameters().map(f64::to_bits).collect::<Vec<_>>(), l.to_bits())))
            .unwrap();
        assert_eq!(a, b);
        let other = train(&data, &TrainConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(other.model, train(&data, &TrainConfig { seed: 9, epochs: 5, batch_size: 4, ..Default::default() }).unwrap().model);
    }

    #[test]
    fn separable_toy_reaches_full_accuracy() {
        let data = toy_separable();
        // Oracle: the separator a - b > 0 classifies every example correctly.
        assert!(data.iter().all(|(x, y)| ((x[0] - x[1]) > 0.0) == (y[0] == 1.0)));
        let cfg = TrainConfig { seed: 1, epochs: 50, batch_size: 4, learning_rate: 0.05, ..Default::default() };
        let trained = train(&data, &cfg).unwrap();
        let correct = data
            .iter()
            .filter(|(x, y)| (trained.model.forward(x).unwrap()[0] > 0.5) == (y[0] == 1.0))
            .count();
        assert_eq!(correct, data.len());
    }

    #[test]
    fn memorises_single_example() {
        let data = vec![(vec![1.0, 0.0, 2.0], vec![1.0, 0.0])];
        let cfg = TrainConfig { epochs: 400, learning_rate: 0.01, ..Default::default() };
        let trained = train(&data, &cfg).unwrap();
        assert!(trained.final_loss < 0.01, "loss {}", trained.final_loss);
    }
}
