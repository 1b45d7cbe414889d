use rand::Rng;

use super::param::Param;
use super::tensor::{MaskedBatch, Tensor};
use crate::error::{ensure, Error, Result};

/// Softmax over the unmasked entries; masked entries are exactly zero.
pub fn masked_softmax(scores: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    ensure!(
        scores.len() == mask.len(),
        Shape,
        "{} scores with {} mask bits",
        scores.len(),
        mask.len()
    );
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Degenerate("attention over a fully masked row".into()));
    }
    let mut out: Vec<f64> = scores
        .iter()
        .zip(mask)
        .map(|(&s, &m)| if m { (s - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= z);
    Ok(out)
}

/// `pooled = sum_i w_i h_i` for caller-supplied weights over the unmasked steps.
/// `hs` is `[time * dim]`.
pub fn average_pool(hs: &[f64], weights: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    ensure!(
        weights.len() == mask.len() && !mask.is_empty() && hs.len().is_multiple_of(mask.len()),
        Shape,
        "{} weights, {} mask bits, {} values",
        weights.len(),
        mask.len(),
        hs.len()
    );
    let dim = hs.len() / mask.len();
    let mut total = 0.0;
    for (&w, &m) in weights.iter().zip(mask) {
        ensure!(w >= 0.0 && w.is_finite(), Validation, "negative or non-finite pooling weight {w}");
        if m {
            total += w;
        }
    }
    ensure!(
        (total - 1.0).abs() <= 1e-9,
        Validation,
        "pooling weights sum to {total} over unmasked steps"
    );
    let mut pooled = vec![0.0; dim];
    for (t, (&w, &m)) in weights.iter().zip(mask).enumerate() {
        if m {
            for (p, h) in pooled.iter_mut().zip(&hs[t * dim..(t + 1) * dim]) {
                *p += w * h;
            }
        }
    }
    Ok(pooled)
}

/// Additive self-attention: `z_i = tanh(W h_i + b)`, `alpha = softmax(z_i . u)`,
/// `pooled = sum_i alpha_i h_i`.
///
/// Gradient buffers: `[w, b, u]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveAttention {
    /// `[attn, dim]`
    pub w: Param,
    pub b: Param,
    pub u: Param,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub pooled: Vec<f64>,
    pub alpha: Vec<f64>,
    /// `[time * attn]` keys; zero on masked steps.
    z: Vec<f64>,
}

impl AdditiveAttention {
    pub fn new(name: &str, dim: usize, attn: usize, rng: &mut impl Rng) -> Self {
        Self {
            w: Param::glorot(format!("{name}.w"), &[attn, dim], dim, attn, rng),
            b: Param::zeros(format!("{name}.b"), &[attn]),
            u: Param::glorot(format!("{name}.u"), &[attn], attn, 1, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.w.value.shape()[1]
    }

    pub fn attn_dim(&self) -> usize {
        self.w.value.shape()[0]
    }

    pub fn params(&self) -> [&Param; 3] {
        [&self.w, &self.b, &self.u]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 3] {
        [&mut self.w, &mut self.b, &mut self.u]
    }

    pub fn forward(&self, hs: &[f64], mask: &[bool]) -> Result<AttentionOutput> {
        let (d, a) = (self.dim(), self.attn_dim());
        ensure!(
            hs.len() == mask.len() * d,
            Shape,
            "hidden states of length {} for {} steps of width {d}",
            hs.len(),
            mask.len()
        );
        let (w, b, u) = (self.w.values(), self.b.values(), self.u.values());
        let mut z = vec![0.0; mask.len() * a];
        let mut scores = vec![0.0; mask.len()];
        for (t, &m) in mask.iter().enumerate() {
            if !m {
                continue;
            }
            let h = &hs[t * d..(t + 1) * d];
            let zt = &mut z[t * a..(t + 1) * a];
            for k in 0..a {
                let row = &w[k * d..(k + 1) * d];
                zt[k] = (b[k] + row.iter().zip(h).map(|(x, y)| x * y).sum::<f64>()).tanh();
            }
            scores[t] = zt.iter().zip(u).map(|(x, y)| x * y).sum();
        }
        let alpha = masked_softmax(&scores, mask)?;
        let pooled = average_pool(hs, &alpha, mask)?;
        Ok(AttentionOutput { pooled, alpha, z })
    }

    /// Gradient w.r.t. `hs` given `dpooled`; accumulates parameter gradients.
    pub fn backward(&self, hs: &[f64], mask: &[bool], out: &AttentionOutput, dpooled: &[f64], grads: &mut [Vec<f64>]) -> Vec<f64> {
        let (d, a) = (self.dim(), self.attn_dim());
        let (w, u) = (self.w.values(), self.u.values());
        let [gw, gb, gu] = grads else {
            panic!("attention expects three gradient buffers")
        };
        let mut dhs = vec![0.0; hs.len()];
        let dalpha: Vec<f64> = (0..mask.len())
            .map(|t| {
                if mask[t] {
                    hs[t * d..(t + 1) * d].iter().zip(dpooled).map(|(h, g)| h * g).sum()
                } else {
                    0.0
                }
            })
            .collect();
        let mean: f64 = out.alpha.iter().zip(&dalpha).map(|(a, g)| a * g).sum();
        for t in 0..mask.len() {
            if !mask[t] {
                continue;
            }
            let alpha = out.alpha[t];
            let dscore = alpha * (dalpha[t] - mean);
            let h = &hs[t * d..(t + 1) * d];
            let dh = &mut dhs[t * d..(t + 1) * d];
            for (x, g) in dh.iter_mut().zip(dpooled) {
                *x += alpha * g;
            }
            let zt = &out.z[t * a..(t + 1) * a];
            for k in 0..a {
                gu[k] += dscore * zt[k];
                let dpre = dscore * u[k] * (1.0 - zt[k] * zt[k]);
                gb[k] += dpre;
                let row = &w[k * d..(k + 1) * d];
                let grow = &mut gw[k * d..(k + 1) * d];
                for j in 0..d {
                    grow[j] += dpre * h[j];
                    dh[j] += dpre * row[j];
                }
            }
        }
        dhs
    }
}

/// Batch form: pooled vectors `[batch, dim]` and weights `[batch, time]`.
pub fn additive_attention(h: &MaskedBatch, layer: &AdditiveAttention) -> Result<(Tensor, Tensor)> {
    ensure!(
        h.features() == layer.dim(),
        Shape,
        "hidden width {} against attention width {}",
        h.features(),
        layer.dim()
    );
    let mut pooled = Vec::new();
    let mut alpha = Vec::new();
    for b in 0..h.batch() {
        let (hs, mask) = h.sequence(b);
        let out = layer.forward(hs, mask)?;
        pooled.extend(out.pooled);
        alpha.extend(out.alpha);
    }
    Ok((
        Tensor::new(&[h.batch(), layer.dim()], pooled)?,
        Tensor::new(&[h.batch(), h.time()], alpha)?,
    ))
}
