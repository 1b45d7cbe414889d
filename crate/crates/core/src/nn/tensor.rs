use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Dense row-major `f64` array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        ensure!(
            data.len() == n,
            Shape,
            "data of length {} does not fit shape {shape:?}",
            data.len()
        );
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        ensure!(
            rows.iter().all(|r| r.len() == cols),
            Shape,
            "ragged rows"
        );
        Self::new(&[rows.len(), cols], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row `i` of a tensor viewed as `[shape[0], rest]`.
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.row_width();
        &self.data[i * w..(i + 1) * w]
    }

    fn row_width(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `[batch, time, features]` values with a `[batch, time]` validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedBatch {
    pub values: Tensor,
    pub mask: Vec<bool>,
}

impl MaskedBatch {
    pub fn new(values: Tensor, mask: Vec<bool>) -> Result<Self> {
        ensure!(
            values.shape().len() == 3,
            Shape,
            "masked batch needs [batch, time, features], got {:?}",
            values.shape()
        );
        let (b, t) = (values.shape()[0], values.shape()[1]);
        ensure!(
            mask.len() == b * t,
            Shape,
            "mask of length {} for [batch={b}, time={t}]",
            mask.len()
        );
        Ok(Self { values, mask })
    }

    /// Pads variable-length sequences to `max_len` (truncating longer ones).
    pub fn from_sequences(seqs: &[Vec<Vec<f64>>], max_len: usize, features: usize) -> Result<Self> {
        let mut data = vec![0.0; seqs.len() * max_len * features];
        let mut mask = vec![false; seqs.len() * max_len];
        for (b, seq) in seqs.iter().enumerate() {
            for (t, v) in seq.iter().take(max_len).enumerate() {
                ensure!(
                    v.len() == features,
                    Shape,
                    "step of width {} where {features} expected",
                    v.len()
                );
                let at = (b * max_len + t) * features;
                data[at..at + features].copy_from_slice(v);
                mask[b * max_len + t] = true;
            }
        }
        Self::new(Tensor::new(&[seqs.len(), max_len, features], data)?, mask)
    }

    pub fn batch(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn time(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn features(&self) -> usize {
        self.values.shape()[2]
    }

    /// Flat `[time * features]` view of one sequence and its mask.
    pub fn sequence(&self, b: usize) -> (&[f64], &[bool]) {
        let (t, f) = (self.time(), self.features());
        (
            &self.values.data()[b * t * f..(b + 1) * t * f],
            &self.mask[b * t..(b + 1) * t],
        )
    }
}
