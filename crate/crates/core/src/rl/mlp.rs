use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::RlError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Linear,
    Tanh,
}

/// Fully connected net with tanh hidden layers. Parameters live in one flat
/// vector: per layer, the `out × in` weight matrix row-major, then biases.
/// This flat form is also the checkpoint format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub output: Activation,
    pub params: Vec<f64>,
}

/// Post-activation values of every layer, input first.
#[derive(Debug, Clone)]
pub struct Trace {
    pub layers: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("trace has the input layer")
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(sizes: &[usize], output: Activation) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "need at least input and output sizes");
        Self { sizes: sizes.to_vec(), output, params: vec![0.0; param_count(sizes)] }
    }

    /// He-style init: weights ~ N(0, 2/fan_in), biases zero.
    pub fn new(sizes: &[usize], output: Activation, rng: &mut impl Rng) -> Self {
        let mut net = Self::zeros(sizes, output);
        for l in 0..net.n_layers() {
            let (w, _, n_in, n_out) = net.layer(l);
            let normal = Normal::new(0.0, (2.0 / n_in as f64).sqrt()).expect("positive std");
            for p in &mut net.params[w..w + n_in * n_out] {
                *p = normal.sample(rng);
            }
        }
        net
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty sizes")
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// `(weight offset, bias offset, fan in, fan out)` of layer `l`.
    pub fn layer(&self, l: usize) -> (usize, usize, usize, usize) {
        let off: usize = self.sizes[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        (off, off + n_in * n_out, n_in, n_out)
    }

    /// Multiply the last layer's weights and biases by `k`.
    pub fn scale_last_layer(&mut self, k: f64) {
        let (w, _, n_in, n_out) = self.layer(self.n_layers() - 1);
        for p in &mut self.params[w..w + n_in * n_out + n_out] {
            *p *= k;
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<(), RlError> {
        if x.len() != self.input_dim() {
            return Err(RlError::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, RlError> {
        self.check_input(x)?;
        Ok(self.forward_trace(x).layers.pop().expect("output layer"))
    }

    /// Forward pass keeping every layer's activations. Panics on a
    /// dimension mismatch; use [`Mlp::forward`] for checked calls.
    pub fn forward_trace(&self, x: &[f64]) -> Trace {
        assert_eq!(x.len(), self.input_dim(), "input dimension");
        let mut layers = Vec::with_capacity(self.sizes.len());
        layers.push(x.to_vec());
        for l in 0..self.n_layers() {
            let (w, b, n_in, n_out) = self.layer(l);
            let input = &layers[l];
            let last = l + 1 == self.n_layers();
            let mut out = Vec::with_capacity(n_out);
            for j in 0..n_out {
                let row = &self.params[w + j * n_in..w + (j + 1) * n_in];
                let z: f64 = self.params[b + j] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                out.push(if !last || self.output == Activation::Tanh { z.tanh() } else { z });
            }
            layers.push(out);
        }
        Trace { layers }
    }

    /// Back-propagate `dy` (gradient of the loss w.r.t. the output), adding
    /// parameter gradients into `grad`. Returns the gradient w.r.t. the input.
    pub fn backward(&self, trace: &Trace, dy: &[f64], grad: &mut [f64]) -> Vec<f64> {
        assert_eq!(dy.len(), self.output_dim(), "upstream dimension");
        assert_eq!(grad.len(), self.n_params(), "gradient buffer");
        let mut delta = dy.to_vec();
        for l in (0..self.n_layers()).rev() {
            let (w, b, n_in, n_out) = self.layer(l);
            let out = &trace.layers[l + 1];
            let last = l + 1 == self.n_layers();
            if !last || self.output == Activation::Tanh {
                for j in 0..n_out {
                    delta[j] *= 1.0 - out[j] * out[j];
                }
            }
            let input = &trace.layers[l];
            let mut dx = vec![0.0; n_in];
            for j in 0..n_out {
                let d = delta[j];
                if d == 0.0 {
                    continue;
                }
                grad[b + j] += d;
                let row = w + j * n_in;
                for i in 0..n_in {
                    grad[row + i] += d * input[i];
                    dx[i] += d * self.params[row + i];
                }
            }
            delta = dx;
        }
        delta
    }

    /// Parameter gradient of `dy · f(x)`.
    pub fn param_gradient(&self, x: &[f64], dy: &[f64]) -> Result<Vec<f64>, RlError> {
        self.check_input(x)?;
        if dy.len() != self.output_dim() {
            return Err(RlError::DimensionMismatch { expected: self.output_dim(), got: dy.len() });
        }
        let mut g = vec![0.0; self.n_params()];
        self.backward(&self.forward_trace(x), dy, &mut g);
        Ok(g)
    }

    /// `self ← tau·other + (1 − tau)·self`.
    pub fn soft_update(&mut self, other: &Mlp, tau: f64) {
        for (p, q) in self.params.iter_mut().zip(&other.params) {
            *p = tau * q + (1.0 - tau) * *p;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

/// Worst relative error between an analytic gradient and central finite
/// differences of `loss` over every parameter. Both are compared with
/// `|a − n| / max(|a|, |n|, floor)`.
pub fn gradient_check(
    params: &mut [f64],
    analytic: &[f64],
    h: f64,
    floor: f64,
    mut loss: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let p = params[i];
        params[i] = p + h;
        let up = loss(params);
        params[i] = p - h;
        let down = loss(params);
        params[i] = p;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        worst = worst.max(err);
    }
    worst
}
