//! Mini-batch training with cross-entropy, AdamW and per-epoch cosine
//! annealing.

use alloc::vec::Vec;
use rand::seq::SliceRandom;

use crate::data::FrameDataset;
use crate::error::{invalid, Error, Result};
use crate::mlp::{cross_entropy_and_grad, ForwardMode, Gradients, MlpModel};
use crate::optim::{adamw_step, cosine_lr, AdamWConfig, AdamWState};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub dropout_rate: f64,
    pub adamw: AdamWConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 256,
            learning_rate: 5e-4,
            weight_decay: 0.01,
            seed: 0,
            dropout_rate: 0.0,
            adamw: AdamWConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid!("epochs and batch size must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            ));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(invalid!(
                "weight decay {} must be finite and non-negative",
                self.weight_decay
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(invalid!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Initialize a model from `cfg.seed` and train it on `dataset`.
pub fn train_new(
    hidden: &[usize],
    dataset: &FrameDataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(dataset.frame_len());
    dims.extend_from_slice(hidden);
    dims.push(dataset.num_classes());
    let model = MlpModel::init(&dims, cfg.dropout_rate, cfg.seed)?;
    train(model, dataset, cfg)
}

/// Train `model` in place. Shuffling and dropout masks are keyed from
/// `cfg.seed`, so the result is a pure function of the inputs.
pub fn train(
    mut model: MlpModel,
    dataset: &FrameDataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if dataset.frame_len() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            found: dataset.frame_len(),
        });
    }
    if dataset.num_classes() > model.num_classes() {
        return Err(invalid!(
            "dataset has {} classes, model outputs {}",
            dataset.num_classes(),
            model.num_classes()
        ));
    }
    model.set_dropout_rate(cfg.dropout_rate)?;

    let mut state = AdamWState::new(&model, cfg.adamw);
    let mut grads = Gradients::zeros_like(&model);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step: u64 = 0;

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg.epochs, cfg.learning_rate)?;
        order.shuffle(&mut rng::seeded(rng::derive(
            cfg.seed,
            rng::STREAM_SHUFFLE,
            epoch as u64,
        )));
        let mut loss_sum = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            grads.fill(0.0);
            let mut batch_loss = 0.0;
            for &i in chunk {
                let mask_seed = rng::derive(cfg.seed, rng::STREAM_DROPOUT, step);
                step += 1;
                let fwd =
                    model.forward(dataset.frame(i), ForwardMode::TrainWithDropout, mask_seed)?;
                let (loss, g) = cross_entropy_and_grad(&fwd.logits, dataset.label(i))?;
                batch_loss += loss;
                model.backward(&fwd.cache, &g, &mut grads);
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            loss_sum += batch_loss;
            grads.scale(1.0 / chunk.len() as f64);
            adamw_step(&mut model, &mut state, &grads, lr, cfg.weight_decay)?;
        }
        let mean = loss_sum / dataset.len() as f64;
        log::debug!("epoch {epoch}: lr {lr:.3e}, loss {mean:.5}");
        epoch_losses.push(mean);
    }
    Ok(TrainOutcome {
        model,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use rand::Rng as _;

    /// 100 points in [0,1]^2, class = [x + y > 1], with a margin of 0.1
    /// around the boundary.
    fn separable(seed: u64) -> FrameDataset {
        let mut r = rng::seeded(seed);
        let (mut labels, mut pixels) = (Vec::new(), Vec::new());
        while labels.len() < 100 {
            let (x, y): (f32, f32) = (r.random(), r.random());
            if (x + y - 1.0).abs() < 0.1 {
                continue;
            }
            labels.push(usize::from(x + y > 1.0));
            pixels.extend_from_slice(&[x, y]);
        }
        FrameDataset::new(
            1,
            2,
            1,
            vec!["a".to_string(), "b".to_string()],
            labels,
            pixels,
        )
        .unwrap()
    }

    /// Perceptron oracle: terminates with zero errors iff the set is
    /// linearly separable (bounded epochs are ample at this margin).
    fn perceptron_separates(ds: &FrameDataset) -> bool {
        let mut w = [0.0f64; 3];
        for _ in 0..1000 {
            let mut errors = 0;
            for i in 0..ds.len() {
                let f = ds.frame(i);
                let x = [f[0] as f64, f[1] as f64, 1.0];
                let y = if ds.label(i) == 1 { 1.0 } else { -1.0 };
                let s: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
                if y * s <= 0.0 {
                    errors += 1;
                    for k in 0..3 {
                        w[k] += y * x[k];
                    }
                }
            }
            if errors == 0 {
                return true;
            }
        }
        false
    }

    fn train_accuracy(model: &MlpModel, ds: &FrameDataset) -> f64 {
        let correct = (0..ds.len())
            .filter(|&i| {
                let z = model
                    .logits(ds.frame(i), ForwardMode::EvalDeterministic, 0)
                    .unwrap();
                crate::dist::softmax(&z).unwrap().argmax() == ds.label(i)
            })
            .count();
        correct as f64 / ds.len() as f64
    }

    fn toy_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 30,
            batch_size: 10,
            learning_rate: 0.02,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn learns_a_separable_set() {
        let ds = separable(1);
        assert!(perceptron_separates(&ds));
        let out = train_new(&[16], &ds, &toy_cfg()).unwrap();
        assert!(train_accuracy(&out.model, &ds) >= 0.99);
        assert!(out.epoch_losses.last().unwrap() < &out.epoch_losses[0]);
    }

    #[test]
    fn training_is_deterministic() {
        let ds = separable(2);
        let cfg = TrainConfig {
            dropout_rate: 0.2,
            epochs: 5,
            ..toy_cfg()
        };
        let a = train_new(&[8, 8], &ds, &cfg).unwrap();
        let b = train_new(&[8, 8], &ds, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn zero_learning_rate_leaves_weights() {
        let ds = separable(3);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            ..toy_cfg()
        };
        let init = MlpModel::init(&[2, 4, 2], 0.0, cfg.seed).unwrap();
        let out = train(init.clone(), &ds, &cfg).unwrap();
        // the decay term is lr * wd * theta = 0
        assert_eq!(out.model, init);
    }

    #[test]
    fn rejects_bad_inputs() {
        let ds = separable(4);
        let empty = ds.subset(&[]);
        let m = MlpModel::init(&[2, 2], 0.0, 0).unwrap();
        assert_eq!(
            train(m.clone(), &empty, &toy_cfg()).unwrap_err(),
            Error::Empty("training set")
        );
        assert!(train(
            m.clone(),
            &ds,
            &TrainConfig {
                epochs: 0,
                ..toy_cfg()
            }
        )
        .is_err());
        let wrong = MlpModel::init(&[3, 2], 0.0, 0).unwrap();
        assert!(train(wrong, &ds, &toy_cfg()).is_err());
    }

    #[test]
    fn diverging_training_aborts() {
        let ds = separable(5);
        let cfg = TrainConfig {
            learning_rate: 1e300,
            epochs: 3,
            ..toy_cfg()
        };
        let err = train_new(&[4], &ds, &cfg).unwrap_err();
        assert!(
            matches!(err, Error::NonFiniteLoss { .. } | Error::NonFinite(_)),
            "{err:?}"
        );
    }
}
