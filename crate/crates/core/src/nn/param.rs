use rand::Rng;

use super::tensor::Tensor;

/// A named trainable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self {
            name: name.into(),
            value: Tensor::zeros(shape),
            grad: Tensor::zeros(shape),
        }
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot(name: impl Into<String>, shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(name, shape);
        p.reinit(fan_in, fan_out, rng);
        p
    }

    pub fn reinit(&mut self, fan_in: usize, fan_out: usize, rng: &mut impl Rng) {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in self.value.data_mut() {
            *v = rng.random_range(-limit..=limit);
        }
    }

    pub fn values(&self) -> &[f64] {
        self.value.data()
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        self.value.data_mut()
    }
}

/// Gradient buffers laid out in the same order as a model's parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Vec<f64>>);

impl Grads {
    pub fn zeros_like<'a>(params: impl IntoIterator<Item = &'a Param>) -> Self {
        Self(params.into_iter().map(|p| vec![0.0; p.value.len()]).collect())
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.0.iter_mut().flatten().for_each(|x| *x *= k);
    }

    /// Copies the buffers into the `grad` fields of `params`.
    pub fn store_into<'a>(&self, params: impl IntoIterator<Item = &'a mut Param>) {
        for (p, g) in params.into_iter().zip(&self.0) {
            p.grad.data_mut().copy_from_slice(g);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}
