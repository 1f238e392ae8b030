use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Gradients, Input, Mlp, DEFAULT_DROPOUT};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
    Sgd,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub dropout_rate: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Stop after this many epochs without a lower training loss; 0
    /// disables early stopping.
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 500,
            dropout_rate: DEFAULT_DROPOUT,
            seed: 0,
            optimizer: Optimizer::default(),
            early_stop_patience: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Argument("learning rate must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Argument(
                "batch size and epoch count must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Argument("dropout rate must lie in [0, 1)".into()));
        }
        if let Optimizer::Adam {
            beta1,
            beta2,
            epsilon,
        } = self.optimizer
        {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon <= 0.0 {
                return Err(Error::Argument("invalid Adam hyperparameters".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SampleInput<T> {
    Dense(Vec<T>),
    OneHot(Option<usize>),
}

/// One training pair: network input and normalized 40-band target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub input: SampleInput<T>,
    pub target: Vec<T>,
}

impl<T> Sample<T> {
    pub fn as_input(&self) -> Input<'_, T> {
        match &self.input {
            SampleInput::Dense(v) => Input::Dense(v),
            SampleInput::OneHot(i) => Input::OneHot(*i),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean per-example training loss of every completed epoch.
    pub epoch_losses: Vec<f64>,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        *self.epoch_losses.last().expect("at least one epoch")
    }
}

struct AdamState<T> {
    m: Gradients<T>,
    v: Gradients<T>,
    t: i32,
}

/// Mini-batch training on `samples`. Shuffling and dropout masks both
/// draw from one generator seeded by `config.seed`, so a fixed
/// (seed, data, config) triple always produces the same weights.
pub fn train<T: Scalar>(
    model: &mut Mlp<T>,
    samples: &[Sample<T>],
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::Argument("no training samples".into()));
    }
    let out = model.output_width();
    if let Some(s) = samples.iter().find(|s| s.target.len() != out) {
        return Err(Error::Shape {
            expected: out,
            found: s.target.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut grads = model.gradients();
    let mut adam = match config.optimizer {
        Optimizer::Adam { .. } => Some(AdamState {
            m: model.gradients(),
            v: model.gradients(),
            t: 0,
        }),
        Optimizer::Sgd => None,
    };

    let mut losses = Vec::with_capacity(config.max_epochs);
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    let mut stopped_early = false;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.zero();
            for &i in batch {
                let sample = &samples[i];
                let cache =
                    model.forward_train(sample.as_input(), config.dropout_rate, &mut rng)?;
                let loss = model.backward(&cache, &sample.target, &mut grads)?;
                epoch_loss += loss.as_f64();
            }
            grads.scale(T::one() / T::from_usize(batch.len()).expect("batch size fits scalar"));
            apply_update(model, &grads, config, adam.as_mut());
            if !model.all_finite() {
                return Err(Error::Divergence {
                    epoch,
                    loss: f64::NAN,
                });
            }
        }
        let epoch_loss = epoch_loss / samples.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: epoch_loss,
            });
        }
        losses.push(epoch_loss);

        if epoch_loss < best {
            best = epoch_loss;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if config.early_stop_patience > 0 && since_best >= config.early_stop_patience {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainReport {
        epoch_losses: losses,
        stopped_early,
    })
}

fn apply_update<T: Scalar>(
    model: &mut Mlp<T>,
    grads: &Gradients<T>,
    config: &TrainConfig,
    adam: Option<&mut AdamState<T>>,
) {
    let lr = T::lit(config.learning_rate);
    let layers = model.layers_mut();
    match (config.optimizer, adam) {
        (
            Optimizer::Adam {
                beta1,
                beta2,
                epsilon,
            },
            Some(state),
        ) => {
            state.t += 1;
            let b1 = T::lit(beta1);
            let b2 = T::lit(beta2);
            let eps = T::lit(epsilon);
            let c1 = T::one() - b1.powi(state.t);
            let c2 = T::one() - b2.powi(state.t);
            let step = |p: &mut [T], g: &[T], m: &mut [T], v: &mut [T]| {
                for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *m = b1 * *m + (T::one() - b1) * g;
                    *v = b2 * *v + (T::one() - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            };
            for (l, layer) in layers.iter_mut().enumerate() {
                step(
                    layer.weights_mut(),
                    &grads.weights[l],
                    &mut state.m.weights[l],
                    &mut state.v.weights[l],
                );
                step(
                    layer.bias_mut(),
                    &grads.biases[l],
                    &mut state.m.biases[l],
                    &mut state.v.biases[l],
                );
            }
        }
        _ => {
            for (l, layer) in layers.iter_mut().enumerate() {
                for (p, &g) in layer.weights_mut().iter_mut().zip(&grads.weights[l]) {
                    *p -= lr * g;
                }
                for (p, &g) in layer.bias_mut().iter_mut().zip(&grads.biases[l]) {
                    *p -= lr * g;
                }
            }
        }
    }
}
