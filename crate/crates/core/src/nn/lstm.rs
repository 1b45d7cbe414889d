use rand::Rng;

use super::dense::sigmoid;
use super::param::Param;
use super::tensor::{MaskedBatch, Tensor};
use crate::error::{ensure, Result};

/// Single-direction LSTM with gate order `i, f, g, o`.
///
/// Gradient buffers: `[w_x, w_h, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    /// `[4H, input]`
    pub w_x: Param,
    /// `[4H, H]`
    pub w_h: Param,
    /// `[4H]`
    pub b: Param,
}

#[derive(Debug, Clone)]
struct StepCache {
    t: usize,
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    h_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Everything the backward pass needs from one directional run.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    steps: Vec<StepCache>,
    /// `[time * hidden]`, zero on masked steps.
    pub hidden: Vec<f64>,
}

impl Lstm {
    pub fn new(name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            w_x: Param::glorot(format!("{name}.w_x"), &[4 * hidden, input], input, 4 * hidden, rng),
            w_h: Param::glorot(format!("{name}.w_h"), &[4 * hidden, hidden], hidden, 4 * hidden, rng),
            b: Param::zeros(format!("{name}.b"), &[4 * hidden]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.value.shape()[1]
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_h.value.shape()[1]
    }

    pub fn params(&self) -> [&Param; 3] {
        [&self.w_x, &self.w_h, &self.b]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 3] {
        [&mut self.w_x, &mut self.w_h, &mut self.b]
    }

    /// Runs over `xs` (`[time * input]`), visiting steps in reverse when `reverse`.
    /// Masked steps emit zeros and leave the recurrent state untouched.
    pub fn run(&self, xs: &[f64], mask: &[bool], reverse: bool) -> LstmTrace {
        let (n_in, h) = (self.input_dim(), self.hidden_dim());
        let t_len = mask.len();
        let (wx, wh, b) = (self.w_x.values(), self.w_h.values(), self.b.values());
        let mut hidden = vec![0.0; t_len * h];
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        let mut steps = Vec::new();
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..t_len).rev())
        } else {
            Box::new(0..t_len)
        };
        for t in order {
            if !mask[t] {
                continue;
            }
            let x = &xs[t * n_in..(t + 1) * n_in];
            let mut gates = b.to_vec();
            for (r, g) in gates.iter_mut().enumerate() {
                let rx = &wx[r * n_in..(r + 1) * n_in];
                let rh = &wh[r * h..(r + 1) * h];
                *g += rx.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                    + rh.iter().zip(&h_prev).map(|(a, b)| a * b).sum::<f64>();
            }
            for (k, g) in gates.iter_mut().enumerate() {
                *g = if (2 * h..3 * h).contains(&k) {
                    g.tanh()
                } else {
                    sigmoid(*g)
                };
            }
            let mut c = vec![0.0; h];
            let mut tanh_c = vec![0.0; h];
            let out = &mut hidden[t * h..(t + 1) * h];
            for j in 0..h {
                let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                c[j] = f * c_prev[j] + i * g;
                tanh_c[j] = c[j].tanh();
                out[j] = o * tanh_c[j];
            }
            let h_new = out.to_vec();
            steps.push(StepCache {
                t,
                gates,
                c_prev: std::mem::replace(&mut c_prev, c),
                h_prev: std::mem::replace(&mut h_prev, h_new),
                tanh_c,
            });
        }
        LstmTrace { steps, hidden }
    }

    /// Back-propagates `dhidden` (`[time * hidden]`) through a trace from [`Lstm::run`].
    /// Accumulates into `grads` and returns `dxs` (`[time * input]`).
    pub fn backward(&self, xs: &[f64], trace: &LstmTrace, dhidden: &[f64], grads: &mut [Vec<f64>]) -> Vec<f64> {
        let (n_in, h) = (self.input_dim(), self.hidden_dim());
        let (wx, wh) = (self.w_x.values(), self.w_h.values());
        let mut dxs = vec![0.0; xs.len()];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dpre = vec![0.0; 4 * h];
        let [gwx, gwh, gb] = grads else {
            panic!("lstm expects three gradient buffers")
        };
        for step in trace.steps.iter().rev() {
            let t = step.t;
            let g = &step.gates;
            for j in 0..h {
                let dh = dhidden[t * h + j] + dh_next[j];
                let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                let tc = step.tanh_c[j];
                let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
                dpre[j] = dc * gg * i * (1.0 - i);
                dpre[h + j] = dc * step.c_prev[j] * f * (1.0 - f);
                dpre[2 * h + j] = dc * i * (1.0 - gg * gg);
                dpre[3 * h + j] = dh * tc * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            let x = &xs[t * n_in..(t + 1) * n_in];
            let dx = &mut dxs[t * n_in..(t + 1) * n_in];
            dh_next.fill(0.0);
            for (r, &d) in dpre.iter().enumerate() {
                gb[r] += d;
                if d == 0.0 {
                    continue;
                }
                let rx = &wx[r * n_in..(r + 1) * n_in];
                let grx = &mut gwx[r * n_in..(r + 1) * n_in];
                for k in 0..n_in {
                    grx[k] += d * x[k];
                    dx[k] += d * rx[k];
                }
                let rh = &wh[r * h..(r + 1) * h];
                let grh = &mut gwh[r * h..(r + 1) * h];
                for k in 0..h {
                    grh[k] += d * step.h_prev[k];
                    dh_next[k] += d * rh[k];
                }
            }
        }
        dxs
    }
}

/// Forward and backward LSTMs whose hidden states are concatenated per step.
///
/// Gradient buffers: forward `[w_x, w_h, b]` then backward `[w_x, w_h, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

#[derive(Debug, Clone)]
pub struct BiLstmTrace {
    fwd: LstmTrace,
    bwd: LstmTrace,
    /// `[time * 2 * hidden]`
    pub output: Vec<f64>,
}

impl BiLstm {
    pub fn new(name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            forward: Lstm::new(&format!("{name}.fwd"), input, hidden, rng),
            backward: Lstm::new(&format!("{name}.bwd"), input, hidden, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden_dim()
    }

    pub fn params(&self) -> Vec<&Param> {
        self.forward.params().into_iter().chain(self.backward.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let Self { forward, backward } = self;
        forward.params_mut().into_iter().chain(backward.params_mut()).collect()
    }

    pub fn run(&self, xs: &[f64], mask: &[bool]) -> BiLstmTrace {
        let h = self.forward.hidden_dim();
        let fwd = self.forward.run(xs, mask, false);
        let bwd = self.backward.run(xs, mask, true);
        let mut output = vec![0.0; mask.len() * 2 * h];
        for t in 0..mask.len() {
            let o = &mut output[t * 2 * h..(t + 1) * 2 * h];
            o[..h].copy_from_slice(&fwd.hidden[t * h..(t + 1) * h]);
            o[h..].copy_from_slice(&bwd.hidden[t * h..(t + 1) * h]);
        }
        BiLstmTrace { fwd, bwd, output }
    }

    pub fn backward_pass(&self, xs: &[f64], trace: &BiLstmTrace, doutput: &[f64], grads: &mut [Vec<f64>]) -> Vec<f64> {
        let h = self.forward.hidden_dim();
        let t_len = doutput.len() / (2 * h);
        let mut dfwd = vec![0.0; t_len * h];
        let mut dbwd = vec![0.0; t_len * h];
        for t in 0..t_len {
            let d = &doutput[t * 2 * h..(t + 1) * 2 * h];
            dfwd[t * h..(t + 1) * h].copy_from_slice(&d[..h]);
            dbwd[t * h..(t + 1) * h].copy_from_slice(&d[h..]);
        }
        let (gf, gbk) = grads.split_at_mut(3);
        let mut dx = self.forward.backward(xs, &trace.fwd, &dfwd, gf);
        let dxb = self.backward.backward(xs, &trace.bwd, &dbwd, gbk);
        for (a, b) in dx.iter_mut().zip(dxb) {
            *a += b;
        }
        dx
    }
}

/// Batch form: hidden states for every sequence, with the input mask carried through.
pub fn bilstm(seq: &MaskedBatch, layer: &BiLstm) -> Result<MaskedBatch> {
    ensure!(
        seq.features() == layer.input_dim(),
        Shape,
        "sequence features {} against BiLSTM input {}",
        seq.features(),
        layer.input_dim()
    );
    let (b, t, out) = (seq.batch(), seq.time(), layer.output_dim());
    let data = (0..b)
        .flat_map(|i| {
            let (xs, mask) = seq.sequence(i);
            layer.run(xs, mask).output
        })
        .collect();
    MaskedBatch::new(Tensor::new(&[b, t, out], data)?, seq.mask.clone())
}
