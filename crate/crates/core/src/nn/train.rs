use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{backward, forward, logits, Gradients, NetworkParams};
use crate::error::{LabError, Result};
use crate::scalar::{argmax, Scalar};
use crate::synth::LabeledDataset;

/// Mini-batch SGD with momentum and step decay of the learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Epoch indices (0-based) at which the learning rate is multiplied by `lr_decay_factor`.
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
            epochs: 60,
            batch_size: 32,
            seed: 0,
            lr_decay_epochs: Vec::new(),
            lr_decay_factor: 0.1,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(LabError::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(LabError::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size < 1 {
            return Err(LabError::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr_decay_factor > 0.0) {
            return Err(LabError::Config(format!(
                "lr_decay_factor must be positive, got {}",
                self.lr_decay_factor
            )));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let decays = self.lr_decay_epochs.iter().filter(|&&e| e <= epoch).count();
        self.learning_rate * self.lr_decay_factor.powi(decays as i32)
    }
}

/// A per-sample training objective over logits.
///
/// `sample` is the index of the example in the training set so objectives
/// can look up precomputed per-sample targets (e.g. teacher distributions).
pub trait Objective<S: Scalar>: Sync {
    fn loss_and_grad(&self, sample: usize, label: usize, logits: &[S]) -> Result<(S, Vec<S>)>;
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    pub net: NetworkParams<S>,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
}

/// `velocity ← momentum·velocity − lr·grad; params ← params + velocity`.
pub fn sgd_step<S: Scalar>(
    net: &mut NetworkParams<S>,
    grads: &Gradients<S>,
    velocity: &mut Gradients<S>,
    cfg: &SgdConfig,
) -> Result<()> {
    apply_update(net, grads, velocity, cfg.learning_rate, cfg.momentum)
}

fn apply_update<S: Scalar>(
    net: &mut NetworkParams<S>,
    grads: &Gradients<S>,
    velocity: &mut Gradients<S>,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if !grads.matches(net) || !velocity.matches(net) {
        return Err(LabError::Shape("gradient layout does not match the network".into()));
    }
    let (lr, mu) = (S::lit(lr), S::lit(momentum));
    for ((layer, g), v) in net.layers_mut().iter_mut().zip(&grads.layers).zip(&mut velocity.layers) {
        let params = layer.weights.as_mut_slice().iter_mut().chain(layer.bias.iter_mut());
        let gs = g.weights.as_slice().iter().chain(g.bias.iter());
        let vs = v.weights.as_mut_slice().iter_mut().chain(v.bias.iter_mut());
        for ((p, &gv), vel) in params.zip(gs).zip(vs) {
            *vel = mu * *vel - lr * gv;
            *p = *p + *vel;
        }
    }
    Ok(())
}

pub fn train<S: Scalar>(
    mut net: NetworkParams<S>,
    data: &LabeledDataset<S>,
    objective: &dyn Objective<S>,
    cfg: &SgdConfig,
) -> Result<TrainOutcome<S>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(LabError::Contract("training set is empty".into()));
    }
    if data.input_dim() != net.input_dim() {
        return Err(LabError::Shape(format!(
            "dataset has {} features but the network expects {}",
            data.input_dim(),
            net.input_dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut velocity = Gradients::zeros_like(&net);
    let mut loss_history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = Gradients::zeros_like(&net);
            for &i in batch {
                let trace = forward(&net, data.inputs.row(i))?;
                let (loss, d_logits) = objective.loss_and_grad(i, data.labels[i], trace.logits())?;
                let loss = loss.as_f64();
                if !loss.is_finite() {
                    return Err(LabError::Divergence { epoch, loss });
                }
                epoch_loss += loss;
                acc.add_assign(&backward(&net, &trace, &d_logits)?);
            }
            acc.scale(S::one() / S::from_usize_lossy(batch.len()));
            apply_update(&mut net, &acc, &mut velocity, lr, cfg.momentum)?;
        }
        let mean = epoch_loss / data.len() as f64;
        if !mean.is_finite() || !net.is_finite() {
            return Err(LabError::Divergence { epoch, loss: mean });
        }
        loss_history.push(mean);
    }
    Ok(TrainOutcome { net, loss_history })
}

pub fn predict<S: Scalar>(net: &NetworkParams<S>, input: &[S]) -> Result<usize> {
    Ok(argmax(&logits(net, input)?))
}

/// Fraction of samples whose argmax logit equals the label.
pub fn accuracy<S: Scalar>(net: &NetworkParams<S>, data: &LabeledDataset<S>) -> Result<f64> {
    if data.is_empty() {
        return Err(LabError::Contract("cannot score an empty dataset".into()));
    }
    let mut correct = 0usize;
    for (row, &label) in data.inputs.iter_rows().zip(&data.labels) {
        if predict(net, row)? == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_network;

    #[test]
    fn vanilla_sgd_step() {
        let mut net: NetworkParams<f64> = init_network(&[2, 2], 1).unwrap();
        let before = net.clone();
        let mut g = Gradients::zeros_like(&net);
        g.layers[0]
            .weights
            .as_mut_slice()
            .copy_from_slice(&[1.0, -2.0, 0.5, 4.0]);
        g.layers[0].bias = vec![0.25, -1.0];
        let mut v = Gradients::zeros_like(&net);
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            ..SgdConfig::default()
        };
        sgd_step(&mut net, &g, &mut v, &cfg).unwrap();
        let after = net.layers()[0].weights.as_slice();
        for ((a, b), gv) in after
            .iter()
            .zip(before.layers()[0].weights.as_slice())
            .zip(g.layers[0].weights.as_slice())
        {
            assert_eq!(*a, *b - 0.1 * gv);
        }
        assert_eq!(net.layers()[0].bias, vec![-0.025, 0.1]);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut net: NetworkParams<f64> = init_network(&[3, 4, 2], 5).unwrap();
        let before = net.clone();
        let g = Gradients::zeros_like(&net);
        let mut v = Gradients::zeros_like(&net);
        sgd_step(&mut net, &g, &mut v, &SgdConfig::default()).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn momentum_unrolled_two_steps() {
        // v1 = -lr g, v2 = 0.9 v1 - lr g => cumulative = -lr g (1 + 1.9)
        let mut net: NetworkParams<f64> = init_network(&[1, 1], 3).unwrap();
        let w0 = net.layers()[0].weights[(0, 0)];
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].weights[(0, 0)] = 2.0;
        let mut v = Gradients::zeros_like(&net);
        let cfg = SgdConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            ..SgdConfig::default()
        };
        sgd_step(&mut net, &g, &mut v, &cfg).unwrap();
        sgd_step(&mut net, &g, &mut v, &cfg).unwrap();
        let moved = w0 - net.layers()[0].weights[(0, 0)];
        assert!((moved - 0.01 * 2.0 * 2.9).abs() < 1e-15);
    }

    #[test]
    fn step_rejects_mismatched_gradients() {
        let mut net: NetworkParams<f64> = init_network(&[2, 3], 1).unwrap();
        let other: NetworkParams<f64> = init_network(&[2, 4], 1).unwrap();
        let g = Gradients::zeros_like(&other);
        let mut v = Gradients::zeros_like(&net);
        assert!(matches!(
            sgd_step(&mut net, &g, &mut v, &SgdConfig::default()),
            Err(LabError::Shape(_))
        ));
    }

    #[test]
    fn decay_schedule() {
        let cfg = SgdConfig {
            learning_rate: 1.0,
            lr_decay_epochs: vec![10, 20],
            lr_decay_factor: 0.1,
            ..SgdConfig::default()
        };
        assert_eq!(cfg.learning_rate_at(9), 1.0);
        assert!((cfg.learning_rate_at(10) - 0.1).abs() < 1e-15);
        assert!((cfg.learning_rate_at(25) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let bad = SgdConfig {
            learning_rate: 0.0,
            ..SgdConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SgdConfig {
            batch_size: 0,
            ..SgdConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SgdConfig {
            momentum: 1.0,
            ..SgdConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
