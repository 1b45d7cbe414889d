use serde::{Deserialize, Serialize};

use super::param::Param;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Adam with bias correction, `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

impl Adam {
    pub fn step(&mut self, params: &mut [&mut Param], lr: f64) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "optimizer state does not match parameters");
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let Param { value, grad, .. } = &mut **p;
            for (((x, &g), mi), vi) in value.data_mut().iter_mut().zip(grad.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *x -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Adam(Adam),
    Sgd,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam(Adam::default()),
            OptimizerKind::Sgd => Optimizer::Sgd,
        }
    }

    pub fn step(&mut self, params: &mut [&mut Param], lr: f64) {
        match self {
            Optimizer::Adam(a) => a.step(params, lr),
            Optimizer::Sgd => {
                for p in params.iter_mut() {
                    let Param { value, grad, .. } = &mut **p;
                    for (x, g) in value.data_mut().iter_mut().zip(grad.data()) {
                        *x -= lr * g;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(values: &[f64], grad: &[f64]) -> Param {
        let mut p = Param::zeros("p", &[values.len()]);
        p.values_mut().copy_from_slice(values);
        p.grad.data_mut().copy_from_slice(grad);
        p
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = param(&[1.0, -2.0], &[0.0, 0.0]);
        let mut adam = Adam::default();
        for _ in 0..3 {
            adam.step(&mut [&mut p], 1e-3);
        }
        assert_eq!(p.values(), [1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        for g in [0.5, -3.0, 1e-2] {
            let mut p = param(&[1.0], &[g]);
            Adam::default().step(&mut [&mut p], 1e-3);
            let moved = 1.0 - p.values()[0];
            let expected = 1e-3 * g / (g.abs() + 1e-8);
            assert!((moved - expected).abs() < 1e-15);
            assert!((moved.abs() - 1e-3).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_runs_identical_trajectories() {
        let run = || {
            let mut p = param(&[0.3, 0.7], &[0.0, 0.0]);
            let mut adam = Adam::default();
            let mut traj = Vec::new();
            for k in 0..10 {
                let x = p.values().to_vec();
                p.grad.data_mut().copy_from_slice(&[x[0] - 1.0 + k as f64 * 0.01, 2.0 * x[1]]);
                adam.step(&mut [&mut p], 1e-2);
                traj.push(p.values().to_vec());
            }
            traj
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn sgd_step() {
        let mut p = param(&[1.0], &[2.0]);
        Optimizer::new(OptimizerKind::Sgd).step(&mut [&mut p], 0.1);
        assert!((p.values()[0] - 0.8).abs() < 1e-15);
    }
}
