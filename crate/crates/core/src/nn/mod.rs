//! Dense feed-forward networks with analytic backpropagation.
//!
//! Hidden layers use ReLU, the final layer is linear and produces raw
//! logits. Rows of the final weight matrix (plus the matching bias entry)
//! act as class templates for the geometry routines.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use train::{accuracy, predict, sgd_step, train, Objective, SgdConfig, TrainOutcome};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{LabError, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<S: Scalar>(self, z: S) -> S {
        match self {
            Activation::Relu => z.max(S::zero()),
            Activation::Identity => z,
        }
    }

    #[inline]
    fn derivative<S: Scalar>(self, z: S) -> S {
        match self {
            Activation::Relu if z > S::zero() => S::one(),
            Activation::Relu => S::zero(),
            Activation::Identity => S::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<S> {
    /// `out_dim × in_dim`.
    pub weights: Matrix<S>,
    pub bias: Vec<S>,
    pub activation: Activation,
}

impl<S: Scalar> DenseLayer<S> {
    pub fn new(weights: Matrix<S>, bias: Vec<S>, activation: Activation) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(LabError::Shape(format!(
                "layer has {} weight rows but {} bias entries",
                weights.rows(),
                bias.len()
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    /// Full template of output `k`: the weight row with its bias appended.
    pub fn template(&self, k: usize) -> Result<Vec<S>> {
        if k >= self.out_dim() {
            return Err(LabError::Index {
                index: k,
                classes: self.out_dim(),
            });
        }
        let mut t = self.weights.row(k).to_vec();
        t.push(self.bias[k]);
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<S> {
    layers: Vec<DenseLayer<S>>,
}

impl<S: Scalar> NetworkParams<S> {
    /// Validates chaining and that the last layer emits raw logits.
    pub fn from_layers(layers: Vec<DenseLayer<S>>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(LabError::InvalidArchitecture("network needs at least one layer".into()));
        };
        if last.activation != Activation::Identity {
            return Err(LabError::InvalidArchitecture(
                "final layer must use the identity activation".into(),
            ));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.rows() != l.bias.len() {
                return Err(LabError::Shape(format!("layer {i}: weight rows != bias length")));
            }
            if l.in_dim() == 0 || l.out_dim() == 0 {
                return Err(LabError::InvalidArchitecture(format!("layer {i} has a zero dimension")));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(LabError::InvalidArchitecture(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseLayer<S>] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer<S>] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.final_layer().out_dim()
    }

    /// Width of the representation feeding the final layer.
    pub fn penultimate_dim(&self) -> usize {
        self.final_layer().in_dim()
    }

    pub fn final_layer(&self) -> &DenseLayer<S> {
        self.layers.last().expect("validated nonempty")
    }

    /// `[input_dim, hidden..., num_classes]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(DenseLayer::out_dim))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<S> {
    pub input: Vec<S>,
    pub pre_activations: Vec<Vec<S>>,
    pub activations: Vec<Vec<S>>,
}

impl<S: Scalar> ForwardTrace<S> {
    /// Input of the final layer (the raw input for a single-layer network).
    pub fn penultimate(&self) -> &[S] {
        match self.activations.len() {
            0 | 1 => &self.input,
            n => &self.activations[n - 2],
        }
    }

    pub fn logits(&self) -> &[S] {
        self.activations.last().map_or(&[], Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient<S> {
    pub weights: Matrix<S>,
    pub bias: Vec<S>,
}

/// Gradient (or velocity) with the same layout as a [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<S> {
    pub layers: Vec<LayerGradient<S>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn zeros_like(net: &NetworkParams<S>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![S::zero(); l.out_dim()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<S>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, &y) in a.weights.as_mut_slice().iter_mut().zip(b.weights.as_slice()) {
                *x = *x + y;
            }
            for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
                *x = *x + y;
            }
        }
    }

    pub fn scale(&mut self, factor: S) {
        for l in &mut self.layers {
            l.weights.as_mut_slice().iter_mut().for_each(|x| *x = *x * factor);
            l.bias.iter_mut().for_each(|x| *x = *x * factor);
        }
    }

    pub fn matches(&self, net: &NetworkParams<S>) -> bool {
        self.layers.len() == net.layers.len()
            && self.layers.iter().zip(&net.layers).all(|(g, l)| {
                g.weights.rows() == l.out_dim() && g.weights.cols() == l.in_dim() && g.bias.len() == l.out_dim()
            })
    }

    pub fn iter(&self) -> impl Iterator<Item = &S> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(l.bias.iter()))
    }
}

/// Builds a network with weights uniform in `±1/sqrt(in_dim)` and zero biases.
pub fn init_network<S: Scalar>(dims: &[usize], seed: u64) -> Result<NetworkParams<S>> {
    if dims.len() < 2 {
        return Err(LabError::InvalidArchitecture(format!(
            "need at least input and output dimensions, got {dims:?}"
        )));
    }
    if let Some(i) = dims.iter().position(|&d| d < 1) {
        return Err(LabError::InvalidArchitecture(format!(
            "dimension {i} of {dims:?} is zero"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_layers = dims.len() - 1;
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weights = (0..fan_in * fan_out)
                .map(|_| S::lit(rng.random_range(-bound..bound)))
                .collect();
            let activation = if i + 1 == n_layers {
                Activation::Identity
            } else {
                Activation::Relu
            };
            DenseLayer::new(
                Matrix::from_vec(fan_out, fan_in, weights)?,
                vec![S::zero(); fan_out],
                activation,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    NetworkParams::from_layers(layers)
}

pub fn forward<S: Scalar>(net: &NetworkParams<S>, input: &[S]) -> Result<ForwardTrace<S>> {
    if input.len() != net.input_dim() {
        return Err(LabError::Shape(format!(
            "input has length {} but the network expects {}",
            input.len(),
            net.input_dim()
        )));
    }
    let mut pre_activations = Vec::with_capacity(net.layers.len());
    let mut activations: Vec<Vec<S>> = Vec::with_capacity(net.layers.len());
    for layer in &net.layers {
        let x = activations.last().map_or(input, Vec::as_slice);
        let z: Vec<S> = layer
            .weights
            .iter_rows()
            .zip(&layer.bias)
            .map(|(row, &b)| crate::scalar::dot(row, x) + b)
            .collect();
        let a = z.iter().map(|&v| layer.activation.apply(v)).collect();
        pre_activations.push(z);
        activations.push(a);
    }
    Ok(ForwardTrace {
        input: input.to_vec(),
        pre_activations,
        activations,
    })
}

/// Logits only; skips storing intermediates.
pub fn logits<S: Scalar>(net: &NetworkParams<S>, input: &[S]) -> Result<Vec<S>> {
    Ok(forward(net, input)?.activations.pop().unwrap_or_default())
}

/// Penultimate activations only.
pub fn penultimate<S: Scalar>(net: &NetworkParams<S>, input: &[S]) -> Result<Vec<S>> {
    Ok(forward(net, input)?.penultimate().to_vec())
}

pub fn backward<S: Scalar>(net: &NetworkParams<S>, trace: &ForwardTrace<S>, d_logits: &[S]) -> Result<Gradients<S>> {
    if d_logits.len() != net.num_classes() {
        return Err(LabError::Shape(format!(
            "upstream gradient has length {} but the network has {} classes",
            d_logits.len(),
            net.num_classes()
        )));
    }
    let consistent = trace.input.len() == net.input_dim()
        && trace.activations.len() == net.layers.len()
        && trace.pre_activations.len() == net.layers.len()
        && net
            .layers
            .iter()
            .zip(&trace.activations)
            .all(|(l, a)| a.len() == l.out_dim());
    if !consistent {
        return Err(LabError::Shape("forward trace does not belong to this network".into()));
    }

    let mut grads = Gradients::zeros_like(net);
    // dL/da for the current layer's output
    let mut upstream = d_logits.to_vec();
    for idx in (0..net.layers.len()).rev() {
        let layer = &net.layers[idx];
        let input = if idx == 0 {
            &trace.input
        } else {
            &trace.activations[idx - 1]
        };
        let delta: Vec<S> = upstream
            .iter()
            .zip(&trace.pre_activations[idx])
            .map(|(&g, &z)| g * layer.activation.derivative(z))
            .collect();
        let g = &mut grads.layers[idx];
        for (o, &d) in delta.iter().enumerate() {
            g.bias[o] = d;
            if d == S::zero() {
                continue;
            }
            for (w, &x) in g.weights.row_mut(o).iter_mut().zip(input) {
                *w = d * x;
            }
        }
        if idx > 0 {
            let mut next = vec![S::zero(); layer.in_dim()];
            for (o, &d) in delta.iter().enumerate() {
                if d == S::zero() {
                    continue;
                }
                for (n, &w) in next.iter_mut().zip(layer.weights.row(o)) {
                    *n = *n + d * w;
                }
            }
            upstream = next;
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_net() -> NetworkParams<f64> {
        NetworkParams::from_layers(vec![DenseLayer::new(
            Matrix::identity(2),
            vec![0.0; 2],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let a: NetworkParams<f64> = init_network(&[4, 8, 3], 7).unwrap();
        let b: NetworkParams<f64> = init_network(&[4, 8, 3], 7).unwrap();
        assert_eq!(a, b);
        let bits = |n: &NetworkParams<f64>| {
            n.layers()[0]
                .weights
                .as_slice()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.dims(), vec![4, 8, 3]);
        assert_eq!(a.layers()[0].activation, Activation::Relu);
        assert_eq!(a.final_layer().activation, Activation::Identity);
        assert!(a.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        let bound = 1.0 / 2.0;
        assert!(a.layers()[0].weights.as_slice().iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn init_single_layer() {
        let n: NetworkParams<f64> = init_network(&[4, 3], 1).unwrap();
        assert_eq!(n.layers().len(), 1);
        assert_eq!(n.penultimate_dim(), 4);
        let t = forward(&n, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.penultimate(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn init_rejects_zero_width() {
        assert!(matches!(
            init_network::<f64>(&[4, 0, 3], 1),
            Err(LabError::InvalidArchitecture(_))
        ));
        assert!(matches!(
            init_network::<f64>(&[4], 1),
            Err(LabError::InvalidArchitecture(_))
        ));
    }

    #[test]
    fn forward_identity() {
        let t = forward(&identity_net(), &[1.0, 2.0]).unwrap();
        assert_eq!(t.logits(), &[1.0, 2.0]);
        assert!(matches!(forward(&identity_net(), &[1.0]), Err(LabError::Shape(_))));
    }

    #[test]
    fn forward_zero_input_gives_zero_logits() {
        let n: NetworkParams<f64> = init_network(&[5, 7, 6, 3], 3).unwrap();
        let t = forward(&n, &[0.0; 5]).unwrap();
        assert!(t.logits().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let n: NetworkParams<f64> = init_network(&[3, 4, 2], 9).unwrap();
        let t = forward(&n, &[0.3, -0.2, 0.9]).unwrap();
        let g = backward(&n, &t, &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_case_gradient_is_penultimate() {
        let n: NetworkParams<f64> = init_network(&[3, 4], 2).unwrap();
        let x = [0.5, -1.5, 2.0];
        let t = forward(&n, &x).unwrap();
        let g = backward(&n, &t, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(g.layers[0].weights.row(0), &x);
        for r in 1..4 {
            assert!(g.layers[0].weights.row(r).iter().all(|&v| v == 0.0));
        }
        assert_eq!(g.layers[0].bias, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn backward_rejects_foreign_trace() {
        let a: NetworkParams<f64> = init_network(&[3, 4, 2], 1).unwrap();
        let b: NetworkParams<f64> = init_network(&[3, 5, 2], 1).unwrap();
        let t = forward(&b, &[1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(backward(&a, &t, &[1.0, 0.0]), Err(LabError::Shape(_))));
        let t = forward(&a, &[1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(backward(&a, &t, &[1.0]), Err(LabError::Shape(_))));
    }

    #[test]
    fn hidden_activations_nonnegative() {
        let n: NetworkParams<f32> = init_network(&[6, 10, 10, 4], 11).unwrap();
        let t = forward(&n, &[1.0, -2.0, 0.5, 3.0, -0.1, 0.7]).unwrap();
        for a in &t.activations[..t.activations.len() - 1] {
            assert!(a.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn template_appends_bias() {
        let mut n: NetworkParams<f64> = init_network(&[2, 3], 1).unwrap();
        n.layers_mut()[0].bias[1] = 0.25;
        let t = n.final_layer().template(1).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t[2], 0.25);
        assert!(n.final_layer().template(3).is_err());
    }
}
