//! Fully-connected Q-network: Xavier-uniform init, rectifier hidden layers,
//! identity output, exact backpropagation of the squared TD loss.
//!
//! Matrices are stored `out × in` so a batch forward pass is
//! `A_next = relu(A · Wᵀ + b)` with one row per sample.

mod adam;
mod checkpoint;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_params, read_params, save_params, write_params, CheckpointMeta, FORMAT_VERSION};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::OBS_DIM;

/// Hidden widths of every Q-network in the hierarchy.
pub const Q_HIDDEN: [usize; 3] = [256, 256, 128];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_sizes: Vec<usize>,
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "network needs at least two non-empty layers, got {layer_sizes:?}"
            )));
        }
        Ok(Self { layer_sizes })
    }

    /// `[9, 256, 256, 128, n_out]`.
    pub fn q_network(n_out: usize) -> Self {
        Self::with_hidden(&Q_HIDDEN, n_out)
    }

    pub fn with_hidden(hidden: &[usize], n_out: usize) -> Self {
        let mut layer_sizes = Vec::with_capacity(hidden.len() + 2);
        layer_sizes.push(OBS_DIM);
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(n_out);
        Self { layer_sizes }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// One affine layer. `weights` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            weights: Array2::zeros((n_out, n_in)),
            bias: Array1::zeros(n_out),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            weights: Array2::zeros(self.weights.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }
}

/// Parameters of a network; gradients share the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    spec: NetworkSpec,
    layers: Vec<Dense>,
}

pub type Gradients = Vec<Dense>;

impl NetworkParams {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| Dense::zeros(w[0], w[1]))
            .collect();
        Self {
            spec: spec.clone(),
            layers,
        }
    }

    /// Weights ~ U(−b, b) with b = sqrt(6 / (fan_in + fan_out)); biases zero.
    pub fn xavier_init<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Self {
        let mut params = Self::zeros(spec);
        for layer in &mut params.layers {
            let (fan_out, fan_in) = layer.weights.dim();
            let bound = xavier_bound(fan_in, fan_out);
            layer
                .weights
                .mapv_inplace(|_| rng.random_range(-bound..=bound));
        }
        params
    }

    pub fn from_layers(spec: NetworkSpec, layers: Vec<Dense>) -> Result<Self> {
        let shapes_ok = layers.len() + 1 == spec.layer_sizes.len()
            && layers.iter().zip(spec.layer_sizes.windows(2)).all(|(l, w)| {
                l.weights.dim() == (w[1], w[0]) && l.bias.len() == w[1]
            });
        if !shapes_ok {
            return Err(Error::contract("layer shapes do not match network spec"));
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Q-values for one observation.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.spec.input_dim() {
            return Err(Error::contract(format!(
                "input has {} features, network expects {}",
                input.len(),
                self.spec.input_dim()
            )));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("non-finite network input"));
        }
        let mut act: Vec<f64> = input.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next = layer.bias.to_vec();
            for (o, row) in layer.weights.outer_iter().enumerate() {
                let s: f64 = row.iter().zip(&act).map(|(w, x)| w * x).sum();
                next[o] += s;
            }
            if i != last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            act = next;
        }
        Ok(act)
    }

    /// Q-values for a batch, one row per sample. Inputs are assumed finite.
    pub fn forward_batch(&self, inputs: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut act = inputs.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            act = affine(act.view(), layer);
            if i != last {
                act.mapv_inplace(|v| v.max(0.0));
            }
        }
        act
    }

    /// Mean squared TD loss `(1/P) Σ (yᵢ − Q(sᵢ)[aᵢ])²` and its exact gradient.
    pub fn td_gradient(
        &self,
        states: ArrayView2<'_, f64>,
        actions: &[usize],
        targets: &[f64],
    ) -> Result<(f64, Gradients)> {
        let batch = states.nrows();
        if batch == 0 || actions.len() != batch || targets.len() != batch {
            return Err(Error::contract("TD batch sizes disagree or batch is empty"));
        }
        let n_out = self.spec.output_dim();
        if let Some(&a) = actions.iter().find(|&&a| a >= n_out) {
            return Err(Error::contract(format!("action index {a} out of range for {n_out} outputs")));
        }
        if targets.iter().any(|y| !y.is_finite()) {
            return Err(Error::contract("non-finite TD target"));
        }

        // Forward pass keeping every post-activation.
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len() + 1);
        acts.push(states.to_owned());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = affine(acts[i].view(), layer);
            if i != last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }

        let q = &acts[self.layers.len()];
        let scale = 2.0 / batch as f64;
        let mut loss = 0.0;
        let mut delta = Array2::<f64>::zeros((batch, n_out));
        for (i, (&a, &y)) in actions.iter().zip(targets).enumerate() {
            let err = q[[i, a]] - y;
            loss += err * err;
            delta[[i, a]] = scale * err;
        }
        loss /= batch as f64;

        let mut grads: Gradients = self.layers.iter().map(Dense::zeros_like).collect();
        for l in (0..self.layers.len()).rev() {
            grads[l].weights = delta.t().dot(&acts[l]);
            grads[l].bias = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.layers[l].weights);
                Zip::from(&mut back)
                    .and(&acts[l])
                    .for_each(|d, &a| if a <= 0.0 { *d = 0.0 });
                delta = back;
            }
        }
        Ok((loss, grads))
    }
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn affine(input: ArrayView2<'_, f64>, layer: &Dense) -> Array2<f64> {
    let mut out = input.dot(&layer.weights.t());
    out += &layer.bias;
    out
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
