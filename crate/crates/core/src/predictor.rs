//! Session-level scorer: BiLSTM over segment embeddings, additive
//! self-attention pooling, and a dense head (linear for regression, sigmoid
//! for classification).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{classification_metrics, regression_metrics, MetricsRecord};
use crate::corpus::{binarize, unrescale, BinaryLabel, ScoreScale};
use crate::error::{ensure, Error, Result};
use crate::nn::{
    class_weights, fit, split_validation, weighted_cross_entropy, Activation, AdditiveAttention, BiLstm, Checkpoint, Dense, Grads, MaskedBatch, Param,
    TrainConfig, TrainHistory, Trainable,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub hidden: usize,
    pub attention_dim: usize,
    /// Sequences are padded (or truncated) to this many segments.
    pub max_segments: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            attention_dim: 32,
            max_segments: 40,
        }
    }
}

/// One session: segment embeddings in order and its training target
/// (normalized score for regression, `1.0`/`0.0` for high/low).
#[derive(Debug, Clone, PartialEq)]
pub struct SessionExample {
    pub session_id: String,
    pub embeddings: Vec<Vec<f64>>,
    pub target: Option<f64>,
}

/// Padded model input for one session.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedSequence {
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPrediction {
    pub session_id: String,
    /// Normalized score (regression only).
    pub score_normalized: Option<f64>,
    /// Probability of the high class (classification only).
    pub probability_high: Option<f64>,
    /// Weights over the session's real segments.
    pub attention: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    pub bilstm: BiLstm,
    pub attention: AdditiveAttention,
    pub head: Dense,
    pub task: Task,
    pub max_segments: usize,
    /// `(low, high)` loss weights for classification.
    pub class_weights: (f64, f64),
}

struct Forward {
    trace: crate::nn::lstm::BiLstmTrace,
    attn: crate::nn::attention::AttentionOutput,
    /// Head pre-activation (the logit for classification).
    pre: f64,
}

impl PredictorModel {
    pub const KIND: &'static str = "predictor";

    pub fn new(input_dim: usize, cfg: &PredictorConfig, task: Task, seed: u64) -> Result<Self> {
        ensure!(
            input_dim > 0 && cfg.hidden > 0 && cfg.attention_dim > 0 && cfg.max_segments > 0,
            Validation,
            "predictor dimensions must be positive"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bilstm = BiLstm::new("predictor.bilstm", input_dim, cfg.hidden, &mut rng);
        let attention = AdditiveAttention::new("predictor.attention", 2 * cfg.hidden, cfg.attention_dim, &mut rng);
        let activation = match task {
            Task::Regression => Activation::Linear,
            Task::Classification => Activation::Sigmoid,
        };
        let head = Dense::new("predictor.head", 2 * cfg.hidden, 1, activation, &mut rng);
        Ok(Self {
            bilstm,
            attention,
            head,
            task,
            max_segments: cfg.max_segments,
            class_weights: (1.0, 1.0),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.bilstm.input_dim()
    }

    pub fn config(&self) -> PredictorConfig {
        PredictorConfig {
            hidden: self.bilstm.output_dim() / 2,
            attention_dim: self.attention.attn_dim(),
            max_segments: self.max_segments,
        }
    }

    pub fn pad(&self, embeddings: &[Vec<f64>]) -> Result<PaddedSequence> {
        ensure!(!embeddings.is_empty(), Validation, "session has no segment embeddings");
        let d = self.input_dim();
        let mut values = vec![0.0; self.max_segments * d];
        let mut mask = vec![false; self.max_segments];
        for (t, e) in embeddings.iter().take(self.max_segments).enumerate() {
            ensure!(
                e.len() == d,
                Shape,
                "embedding of dimension {} for a predictor expecting {d}",
                e.len()
            );
            values[t * d..(t + 1) * d].copy_from_slice(e);
            mask[t] = true;
        }
        Ok(PaddedSequence { values, mask })
    }

    fn forward(&self, xs: &[f64], mask: &[bool]) -> Result<Forward> {
        let trace = self.bilstm.run(xs, mask);
        let attn = self.attention.forward(&trace.output, mask)?;
        let pre = self.head.affine(&attn.pooled)[0];
        Ok(Forward { trace, attn, pre })
    }

    /// Head output (score or probability) and attention weights on a padded sequence.
    pub fn predict_masked(&self, xs: &[f64], mask: &[bool]) -> Result<(f64, Vec<f64>)> {
        ensure!(
            xs.len() == mask.len() * self.input_dim(),
            Shape,
            "input of length {} for {} steps of width {}",
            xs.len(),
            mask.len(),
            self.input_dim()
        );
        let f = self.forward(xs, mask)?;
        Ok((self.head.activation.apply(f.pre), f.attn.alpha))
    }

    /// Batch form over a [`MaskedBatch`]: outputs `[batch]` and weights `[batch * time]`.
    pub fn predict_batch(&self, batch: &MaskedBatch) -> Result<(Vec<f64>, Vec<f64>)> {
        ensure!(
            batch.features() == self.input_dim(),
            Shape,
            "batch features {} for a predictor expecting {}",
            batch.features(),
            self.input_dim()
        );
        let mut outputs = Vec::with_capacity(batch.batch());
        let mut alphas = Vec::new();
        for b in 0..batch.batch() {
            let (xs, mask) = batch.sequence(b);
            let (y, a) = self.predict_masked(xs, mask)?;
            outputs.push(y);
            alphas.extend(a);
        }
        Ok((outputs, alphas))
    }

    pub fn predict_session(&self, session_id: &str, embeddings: &[Vec<f64>]) -> Result<SessionPrediction> {
        let p = self.pad(embeddings)?;
        let (y, alpha) = self.predict_masked(&p.values, &p.mask)?;
        let n_real = embeddings.len().min(self.max_segments);
        let (score_normalized, probability_high) = match self.task {
            Task::Regression => (Some(y), None),
            Task::Classification => (None, Some(y)),
        };
        Ok(SessionPrediction {
            session_id: session_id.to_string(),
            score_normalized,
            probability_high,
            attention: alpha[..n_real].to_vec(),
        })
    }

    fn example_loss(&self, ex: &PaddedExample, grads: Option<&mut Grads>) -> Result<f64> {
        let f = self.forward(&ex.seq.values, &ex.seq.mask)?;
        let (loss, dpre) = match self.task {
            Task::Regression => {
                let r = f.pre - ex.target;
                (r * r, 2.0 * r)
            }
            Task::Classification => weighted_cross_entropy(f.pre, ex.target >= 0.5, self.class_weights)?,
        };
        if let Some(g) = grads {
            let (g_lstm, rest) = g.0.split_at_mut(6);
            let (g_attn, g_head) = rest.split_at_mut(3);
            let dpooled = self.head.backward_affine(&f.attn.pooled, &[dpre], g_head);
            let dh = self.attention.backward(&f.trace.output, &ex.seq.mask, &f.attn, &dpooled, g_attn);
            self.bilstm.backward_pass(&ex.seq.values, &f.trace, &dh, g_lstm);
        }
        Ok(loss)
    }

    pub fn to_checkpoint(&self, meta: serde_json::Value) -> Checkpoint {
        let mut train_meta = serde_json::json!({
            "config": self.config(),
            "task": self.task,
            "input_dim": self.input_dim(),
            "class_weights": [self.class_weights.0, self.class_weights.1],
        });
        if let (Some(obj), serde_json::Value::Object(extra)) = (train_meta.as_object_mut(), meta) {
            obj.extend(extra);
        }
        Checkpoint::from_params(Self::KIND, self.params(), train_meta)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(Self::KIND)?;
        let get = |k: &str| {
            ck.train_meta
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("predictor {k} missing")))
        };
        let cfg: PredictorConfig = serde_json::from_value(get("config")?)?;
        let task: Task = serde_json::from_value(get("task")?)?;
        let input_dim: usize = serde_json::from_value(get("input_dim")?)?;
        let cw: (f64, f64) = serde_json::from_value(get("class_weights")?)?;
        let mut m = Self::new(input_dim, &cfg, task, 0)?;
        m.class_weights = cw;
        ck.restore(m.params_mut())?;
        Ok(m)
    }
}

pub struct PaddedExample {
    seq: PaddedSequence,
    target: f64,
}

impl PaddedExample {
    /// Pairs an already padded sequence with its target (normalized score, or 0/1).
    pub fn new(seq: PaddedSequence, target: f64) -> Self {
        Self { seq, target }
    }
}

impl Trainable for PredictorModel {
    type Example = PaddedExample;

    fn params(&self) -> Vec<&Param> {
        let mut v = self.bilstm.params();
        v.extend(self.attention.params());
        v.extend(self.head.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let Self { bilstm, attention, head, .. } = self;
        let mut v = bilstm.params_mut();
        v.extend(attention.params_mut());
        v.extend(head.params_mut());
        v
    }

    fn loss_and_grad(&self, ex: &PaddedExample, grads: &mut Grads) -> Result<f64> {
        self.example_loss(ex, Some(grads))
    }

    fn loss(&self, ex: &PaddedExample) -> Result<f64> {
        self.example_loss(ex, None)
    }
}

/// Trains a fresh predictor; 20% (per `train.validation_fraction`) of the
/// sessions are held out for early stopping.
pub fn train_predictor(sessions: &[SessionExample], cfg: &PredictorConfig, task: Task, train: &TrainConfig) -> Result<(PredictorModel, TrainHistory)> {
    ensure!(!sessions.is_empty(), Validation, "no training sessions");
    let dim = sessions[0]
        .embeddings
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Validation(format!("session {} has no segments", sessions[0].session_id)))?;
    let mut model = PredictorModel::new(dim, cfg, task, train.seed)?;
    let mut examples = Vec::with_capacity(sessions.len());
    for s in sessions {
        let target = s
            .target
            .ok_or_else(|| Error::Validation(format!("session {} has no label", s.session_id)))?;
        ensure!(target.is_finite(), Validation, "non-finite label for session {}", s.session_id);
        examples.push(PaddedExample {
            seq: model.pad(&s.embeddings)?,
            target,
        });
    }
    if task == Task::Classification {
        let high = examples.iter().filter(|e| e.target >= 0.5).count();
        model.class_weights = class_weights(examples.len() - high, high)?;
    }
    let (train_idx, val_idx) = split_validation(examples.len(), train.validation_fraction, train.seed);
    let mut slots: Vec<Option<PaddedExample>> = examples.into_iter().map(Some).collect();
    let take = |idx: &[usize], slots: &mut Vec<Option<PaddedExample>>| -> Vec<PaddedExample> {
        idx.iter().map(|&i| slots[i].take().expect("index used once")).collect()
    };
    let val = take(&val_idx, &mut slots);
    let tr = take(&train_idx, &mut slots);
    let history = fit(&mut model, &tr, &val, train)?;
    Ok((model, history))
}

/// Metrics on labeled sessions in original score units. `labels` are raw scores.
pub fn evaluate(model: &PredictorModel, sessions: &[SessionExample], labels: &[u32], scale: ScoreScale) -> Result<(MetricsRecord, Vec<SessionPrediction>, usize)> {
    ensure!(!sessions.is_empty(), Validation, "empty evaluation set");
    ensure!(sessions.len() == labels.len(), Shape, "{} sessions against {} labels", sessions.len(), labels.len());
    let preds: Vec<SessionPrediction> = sessions
        .par_iter()
        .map(|s| model.predict_session(&s.session_id, &s.embeddings))
        .collect::<Result<_>>()?;
    let mut clamped = 0;
    let record = match model.task {
        Task::Regression => {
            let scores: Vec<f64> = preds
                .iter()
                .map(|p| {
                    let (s, c) = unrescale(p.score_normalized.expect("regression output"), scale);
                    clamped += usize::from(c);
                    s
                })
                .collect();
            let truth: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
            regression_metrics(&scores, &truth)?
        }
        Task::Classification => {
            let predicted: Vec<BinaryLabel> = preds
                .iter()
                .map(|p| {
                    if p.probability_high.expect("classification output") >= 0.5 {
                        BinaryLabel::High
                    } else {
                        BinaryLabel::Low
                    }
                })
                .collect();
            let truth = labels.iter().map(|&l| binarize(l, scale)).collect::<Result<Vec<_>>>()?;
            classification_metrics(&predicted, &truth)?
        }
    };
    Ok((record, preds, clamped))
}

#[derive(Serialize)]
struct ReportRow<'a> {
    session_id: &'a str,
    score: Option<f64>,
    probability_high: Option<f64>,
    attention: &'a [f64],
}

/// Writes the prediction report; regression scores are reported in original units.
pub fn write_predictions(path: impl AsRef<Path>, preds: &[SessionPrediction], scale: ScoreScale) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for p in preds {
        let row = ReportRow {
            session_id: &p.session_id,
            score: p.score_normalized.map(|s| unrescale(s, scale).0),
            probability_high: p.probability_high,
            attention: &p.attention,
        };
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
