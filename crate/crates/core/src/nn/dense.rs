use rand::Rng;
use serde::{Deserialize, Serialize};

use super::param::Param;
use super::tensor::Tensor;
use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fully connected layer `y = act(x W + b)` with `W: [input, output]`.
///
/// Gradient buffers: `[weight, bias]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
    pub activation: Activation,
}

impl Dense {
    pub fn new(name: &str, input: usize, output: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        Self {
            weight: Param::glorot(format!("{name}.weight"), &[input, output], input, output, rng),
            bias: Param::zeros(format!("{name}.bias"), &[output]),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }

    /// Pre-activation `x W + b` for one input vector.
    pub fn affine(&self, x: &[f64]) -> Vec<f64> {
        let out = self.output_dim();
        let w = self.weight.values();
        let mut y = self.bias.values().to_vec();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &w[i * out..(i + 1) * out];
            for (yj, wij) in y.iter_mut().zip(row) {
                *yj += xi * wij;
            }
        }
        y
    }

    pub fn forward_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.affine(x);
        for v in &mut y {
            *v = self.activation.apply(*v);
        }
        y
    }

    /// Back-propagates `dy` (gradient w.r.t. the activated output `y`).
    /// Accumulates into `grads` and returns the gradient w.r.t. `x`.
    pub fn backward_vec(&self, x: &[f64], y: &[f64], dy: &[f64], grads: &mut [Vec<f64>]) -> Vec<f64> {
        let dpre: Vec<f64> = dy
            .iter()
            .zip(y)
            .map(|(&d, &yv)| d * self.activation.derivative_from_output(yv))
            .collect();
        self.backward_affine(x, &dpre, grads)
    }

    /// Back-propagates a gradient taken w.r.t. the pre-activation.
    pub fn backward_affine(&self, x: &[f64], dpre: &[f64], grads: &mut [Vec<f64>]) -> Vec<f64> {
        let out = self.output_dim();
        let w = self.weight.values();
        let (gw, rest) = grads.split_at_mut(1);
        let gw = &mut gw[0];
        let gb = &mut rest[0];
        for (b, d) in gb.iter_mut().zip(dpre) {
            *b += d;
        }
        let mut dx = vec![0.0; x.len()];
        for (i, &xi) in x.iter().enumerate() {
            let row = &w[i * out..(i + 1) * out];
            let grow = &mut gw[i * out..(i + 1) * out];
            let mut acc = 0.0;
            for j in 0..out {
                grow[j] += xi * dpre[j];
                acc += row[j] * dpre[j];
            }
            dx[i] = acc;
        }
        dx
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        ensure!(
            x.shape().len() == 2 && x.shape()[1] == self.input_dim(),
            Shape,
            "input {:?} against weight {:?}",
            x.shape(),
            self.weight.value.shape()
        );
        Ok(())
    }

    /// Row-wise forward over `[n, input]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let n = x.shape()[0];
        let data = (0..n).flat_map(|i| self.forward_vec(x.row(i))).collect();
        Tensor::new(&[n, self.output_dim()], data)
    }

    /// Row-wise backward; returns `dx` and accumulates parameter gradients.
    pub fn backward(&self, x: &Tensor, y: &Tensor, dy: &Tensor, grads: &mut [Vec<f64>]) -> Result<Tensor> {
        self.check_input(x)?;
        ensure!(
            y.shape() == dy.shape() && y.shape() == [x.shape()[0], self.output_dim()],
            Shape,
            "output {:?} and upstream gradient {:?}",
            y.shape(),
            dy.shape()
        );
        let n = x.shape()[0];
        let data = (0..n)
            .flat_map(|i| self.backward_vec(x.row(i), y.row(i), dy.row(i), grads))
            .collect();
        Tensor::new(x.shape(), data)
    }
}

/// Functional form of [`Dense::forward`].
pub fn dense(x: &Tensor, layer: &Dense) -> Result<Tensor> {
    layer.forward(x)
}
