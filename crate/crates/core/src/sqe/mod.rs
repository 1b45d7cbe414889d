//! Segment quality estimator and the iterative label refinement loop.
//!
//! The estimator pools BiLSTM states with weights `α` and applies a linear
//! head. Because the head is affine and `Σα = 1`, the session estimate splits
//! exactly into per-segment estimates `ŝ_i = head(h_i)`.

mod refine;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Segment;
use crate::error::{ensure, Error, Result};
use crate::nn::attention::AttentionOutput;
use crate::nn::lstm::BiLstmTrace;
use crate::nn::{fit, split_validation, Activation, AdditiveAttention, BiLstm, Checkpoint, Dense, Grads, Param, TrainConfig, TrainHistory, Trainable};

pub use refine::{run_refinement, IterationDiagnostics, RefinementConfig, RefinementOutput};

/// How segment weights are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SqeMode {
    /// Proportional to utterance counts.
    #[default]
    Even,
    /// Learned additive attention.
    Uneven,
}

impl std::str::FromStr for SqeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "even" => Ok(Self::Even),
            "uneven" => Ok(Self::Uneven),
            other => Err(Error::Validation(format!("unknown sqe mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SqeConfig {
    pub hidden: usize,
    pub attention_dim: usize,
}

impl Default for SqeConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            attention_dim: 32,
        }
    }
}

/// One session as seen by the estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct SqeSession {
    pub session_id: String,
    pub embeddings: Vec<Vec<f64>>,
    pub utterance_counts: Vec<usize>,
    /// Normalized session score.
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalEstimates {
    pub session_id: String,
    pub alpha: Vec<f64>,
    pub s_hat_i: Vec<f64>,
    pub s_hat: f64,
    pub s_bar_i: Vec<f64>,
}

/// Weights proportional to utterance counts.
pub fn segment_weights_even(segments: &[Segment]) -> Result<Vec<f64>> {
    let counts: Vec<usize> = segments.iter().map(Segment::utterance_count).collect();
    weights_from_counts(&counts)
}

pub fn weights_from_counts(counts: &[usize]) -> Result<Vec<f64>> {
    ensure!(!counts.is_empty(), Validation, "no segments");
    let total: usize = counts.iter().sum();
    ensure!(total > 0, Validation, "segments contain no utterances");
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// `s̄_i = ŝ_i + s − ŝ`, so that `Σ α_i s̄_i = s` whenever `Σ α_i = 1`.
pub fn shift_correct(s_hat_i: &[f64], s_true: f64, s_hat: f64) -> Vec<f64> {
    let shift = s_true - s_hat;
    s_hat_i.iter().map(|&v| v + shift).collect()
}

/// Forward pass result for one session.
#[derive(Debug, Clone)]
pub struct SqeForward {
    pub s_hat: f64,
    pub alpha: Vec<f64>,
    /// BiLSTM states, `[T, 2H]` row-major.
    pub hidden: Vec<f64>,
    pub pooled: Vec<f64>,
    trace: BiLstmTrace,
    attn: Option<AttentionOutput>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqeModel {
    pub bilstm: BiLstm,
    pub attention: Option<AdditiveAttention>,
    pub head: Dense,
    pub mode: SqeMode,
}

impl SqeModel {
    pub const KIND: &'static str = "sqe";

    pub fn new(input_dim: usize, cfg: &SqeConfig, mode: SqeMode, seed: u64) -> Result<Self> {
        ensure!(
            input_dim > 0 && cfg.hidden > 0 && cfg.attention_dim > 0,
            Validation,
            "sqe dimensions must be positive"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bilstm = BiLstm::new("sqe.bilstm", input_dim, cfg.hidden, &mut rng);
        let attention = match mode {
            SqeMode::Even => None,
            SqeMode::Uneven => Some(AdditiveAttention::new("sqe.attention", 2 * cfg.hidden, cfg.attention_dim, &mut rng)),
        };
        let head = Dense::new("sqe.head", 2 * cfg.hidden, 1, Activation::Linear, &mut rng);
        Ok(Self { bilstm, attention, head, mode })
    }

    pub fn input_dim(&self) -> usize {
        self.bilstm.input_dim()
    }

    pub fn config(&self) -> SqeConfig {
        SqeConfig {
            hidden: self.bilstm.output_dim() / 2,
            attention_dim: self.attention.as_ref().map_or(SqeConfig::default().attention_dim, AdditiveAttention::attn_dim),
        }
    }

    /// Runs one session. Even mode takes its weights from `alpha_override`;
    /// uneven mode computes them and rejects an override.
    pub fn forward(&self, embeddings: &[Vec<f64>], alpha_override: Option<&[f64]>) -> Result<SqeForward> {
        ensure!(!embeddings.is_empty(), Validation, "empty segment sequence");
        let d = self.input_dim();
        let mut xs = Vec::with_capacity(embeddings.len() * d);
        for e in embeddings {
            ensure!(e.len() == d, Shape, "embedding of dimension {} for an estimator expecting {d}", e.len());
            xs.extend_from_slice(e);
        }
        self.forward_flat(&xs, embeddings.len(), alpha_override)
    }

    fn forward_flat(&self, xs: &[f64], steps: usize, alpha_override: Option<&[f64]>) -> Result<SqeForward> {
        let mask = vec![true; steps];
        let trace = self.bilstm.run(xs, &mask);
        let width = self.bilstm.output_dim();
        let (alpha, pooled, attn) = match (self.mode, &self.attention) {
            (SqeMode::Even, _) => {
                let alpha = alpha_override
                    .ok_or_else(|| Error::Contract("even mode needs utterance-count weights".into()))?
                    .to_vec();
                ensure!(alpha.len() == steps, Shape, "{} weights for {steps} segments", alpha.len());
                ensure!(
                    alpha.iter().all(|a| *a >= 0.0) && (alpha.iter().sum::<f64>() - 1.0).abs() <= 1e-9,
                    Validation,
                    "segment weights must be non-negative and sum to 1"
                );
                let mut pooled = vec![0.0; width];
                for (t, a) in alpha.iter().enumerate() {
                    for (p, h) in pooled.iter_mut().zip(&trace.output[t * width..(t + 1) * width]) {
                        *p += a * h;
                    }
                }
                (alpha, pooled, None)
            }
            (SqeMode::Uneven, Some(layer)) => {
                ensure!(alpha_override.is_none(), Contract, "uneven mode computes its own weights");
                let out = layer.forward(&trace.output, &mask)?;
                (out.alpha.clone(), out.pooled.clone(), Some(out))
            }
            (SqeMode::Uneven, None) => return Err(Error::Contract("uneven estimator without attention layer".into())),
        };
        let s_hat = self.head.forward_vec(&pooled)[0];
        Ok(SqeForward {
            s_hat,
            alpha,
            hidden: trace.output.clone(),
            pooled,
            trace,
            attn,
        })
    }

    /// Per-segment estimates `ŝ_i = head(h_i)` and the reconstruction `Σ α_i ŝ_i`.
    pub fn decompose(&self, hidden: &[f64], alpha: &[f64]) -> Result<(Vec<f64>, f64)> {
        ensure!(
            self.head.activation == Activation::Linear,
            Contract,
            "decomposition requires a linear head, found {:?}",
            self.head.activation
        );
        let width = self.head.input_dim();
        ensure!(
            hidden.len() == alpha.len() * width,
            Shape,
            "hidden states of length {} for {} weights of width {width}",
            hidden.len(),
            alpha.len()
        );
        let s_hat_i: Vec<f64> = hidden.chunks(width).map(|h| self.head.affine(h)[0]).collect();
        let recon = s_hat_i.iter().zip(alpha).map(|(s, a)| s * a).sum();
        Ok((s_hat_i, recon))
    }

    /// Local and shift-corrected estimates for one session.
    pub fn local_estimates(&self, session: &SqeSession) -> Result<LocalEstimates> {
        let even = match self.mode {
            SqeMode::Even => Some(weights_from_counts(&session.utterance_counts)?),
            SqeMode::Uneven => None,
        };
        let f = self.forward(&session.embeddings, even.as_deref())?;
        let (s_hat_i, _) = self.decompose(&f.hidden, &f.alpha)?;
        let s_bar_i = shift_correct(&s_hat_i, session.target, f.s_hat);
        Ok(LocalEstimates {
            session_id: session.session_id.clone(),
            alpha: f.alpha,
            s_hat_i,
            s_hat: f.s_hat,
            s_bar_i,
        })
    }

    pub fn local_estimates_all(&self, sessions: &[SqeSession]) -> Result<Vec<LocalEstimates>> {
        sessions.par_iter().map(|s| self.local_estimates(s)).collect()
    }

    fn example_loss(&self, ex: &SqeExample, grads: Option<&mut Grads>) -> Result<f64> {
        let f = self.forward_flat(&ex.xs, ex.steps, ex.alpha.as_deref())?;
        let r = f.s_hat - ex.target;
        if let Some(g) = grads {
            let width = self.bilstm.output_dim();
            let (g_lstm, rest) = g.0.split_at_mut(6);
            let dpooled = match (&self.attention, &f.attn) {
                (Some(layer), Some(out)) => {
                    let (g_attn, g_head) = rest.split_at_mut(3);
                    let dpooled = self.head.backward_affine(&f.pooled, &[2.0 * r], g_head);
                    let dh = layer.backward(&f.hidden, &vec![true; ex.steps], out, &dpooled, g_attn);
                    self.bilstm.backward_pass(&ex.xs, &f.trace, &dh, g_lstm);
                    return Ok(r * r);
                }
                _ => self.head.backward_affine(&f.pooled, &[2.0 * r], rest),
            };
            let mut dh = vec![0.0; ex.steps * width];
            for (t, a) in f.alpha.iter().enumerate() {
                for (d, p) in dh[t * width..(t + 1) * width].iter_mut().zip(&dpooled) {
                    *d = a * p;
                }
            }
            self.bilstm.backward_pass(&ex.xs, &f.trace, &dh, g_lstm);
        }
        Ok(r * r)
    }

    pub fn to_checkpoint(&self, meta: serde_json::Value) -> Checkpoint {
        let mut train_meta = serde_json::json!({
            "config": self.config(),
            "mode": self.mode,
            "input_dim": self.input_dim(),
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
                .ok_or_else(|| Error::Checkpoint(format!("sqe {k} missing")))
        };
        let cfg: SqeConfig = serde_json::from_value(get("config")?)?;
        let mode: SqeMode = serde_json::from_value(get("mode")?)?;
        let input_dim: usize = serde_json::from_value(get("input_dim")?)?;
        let mut m = Self::new(input_dim, &cfg, mode, 0)?;
        ck.restore(m.params_mut())?;
        Ok(m)
    }
}

pub struct SqeExample {
    xs: Vec<f64>,
    steps: usize,
    alpha: Option<Vec<f64>>,
    target: f64,
}

impl SqeExample {
    pub fn new(model: &SqeModel, session: &SqeSession) -> Result<Self> {
        ensure!(!session.embeddings.is_empty(), Validation, "session {} has no segments", session.session_id);
        ensure!(
            session.target.is_finite(),
            Validation,
            "non-finite label for session {}",
            session.session_id
        );
        let d = model.input_dim();
        let mut xs = Vec::with_capacity(session.embeddings.len() * d);
        for e in &session.embeddings {
            ensure!(e.len() == d, Shape, "embedding of dimension {} for an estimator expecting {d}", e.len());
            xs.extend_from_slice(e);
        }
        let alpha = match model.mode {
            SqeMode::Even => {
                ensure!(
                    session.utterance_counts.len() == session.embeddings.len(),
                    Shape,
                    "session {}: {} counts for {} segments",
                    session.session_id,
                    session.utterance_counts.len(),
                    session.embeddings.len()
                );
                Some(weights_from_counts(&session.utterance_counts)?)
            }
            SqeMode::Uneven => None,
        };
        Ok(Self {
            xs,
            steps: session.embeddings.len(),
            alpha,
            target: session.target,
        })
    }
}

impl Trainable for SqeModel {
    type Example = SqeExample;

    fn params(&self) -> Vec<&Param> {
        let mut v = self.bilstm.params();
        if let Some(a) = &self.attention {
            v.extend(a.params());
        }
        v.extend(self.head.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let Self { bilstm, attention, head, .. } = self;
        let mut v = bilstm.params_mut();
        if let Some(a) = attention {
            v.extend(a.params_mut());
        }
        v.extend(head.params_mut());
        v
    }

    fn loss_and_grad(&self, ex: &SqeExample, grads: &mut Grads) -> Result<f64> {
        self.example_loss(ex, Some(grads))
    }

    fn loss(&self, ex: &SqeExample) -> Result<f64> {
        self.example_loss(ex, None)
    }
}

/// Trains a fresh estimator against session labels with a session-level validation split.
pub fn train_sqe(sessions: &[SqeSession], cfg: &SqeConfig, mode: SqeMode, train: &TrainConfig) -> Result<(SqeModel, TrainHistory)> {
    ensure!(!sessions.is_empty(), Validation, "no training sessions");
    let dim = sessions[0]
        .embeddings
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Validation(format!("session {} has no segments", sessions[0].session_id)))?;
    let mut model = SqeModel::new(dim, cfg, mode, train.seed)?;
    let (train_idx, val_idx) = split_validation(sessions.len(), train.validation_fraction, train.seed);
    let build = |idx: &[usize]| idx.iter().map(|&i| SqeExample::new(&model, &sessions[i])).collect::<Result<Vec<_>>>();
    let tr = build(&train_idx)?;
    let val = build(&val_idx)?;
    let history = fit(&mut model, &tr, &val, train)?;
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::corpus::{Speaker, Utterance};
    use crate::nn::gradcheck::max_relative_error;

    fn randomized(mode: SqeMode, seed: u64) -> SqeModel {
        let cfg = SqeConfig { hidden: 3, attention_dim: 2 };
        let mut m = SqeModel::new(2, &cfg, mode, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for p in m.params_mut() {
            for v in p.values_mut() {
                *v = rng.random_range(-0.8..0.8);
            }
        }
        m
    }

    fn session(n: usize, seed: u64) -> SqeSession {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SqeSession {
            session_id: format!("s{seed}"),
            embeddings: (0..n).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect(),
            utterance_counts: (0..n).map(|i| if i + 1 == n { 20 } else { 40 }).collect(),
            target: rng.random_range(-1.0..1.0),
        }
    }

    fn seg(n: usize) -> Segment {
        Segment {
            session_id: "s".into(),
            index: 0,
            utterances: vec![Utterance::new(Speaker::Patient, vec!["x".into()]).unwrap(); n],
        }
    }

    #[test]
    fn even_weights_follow_counts() {
        let w = segment_weights_even(&[seg(40), seg(40), seg(20)]).unwrap();
        assert_eq!(w, [0.4, 0.4, 0.2]);
        assert_eq!(segment_weights_even(&[seg(40)]).unwrap(), [1.0]);
        assert_eq!(segment_weights_even(&[seg(40), seg(40), seg(40), seg(40)]).unwrap(), [0.25; 4]);
        assert!(segment_weights_even(&[]).is_err());
    }

    #[test]
    fn shift_correction_examples() {
        let s = shift_correct(&[0.2, 0.6], 0.5, 0.4);
        assert!((s[0] - 0.3).abs() < 1e-15 && (s[1] - 0.7).abs() < 1e-15);
        assert!((0.5 * s[0] + 0.5 * s[1] - 0.5).abs() < 1e-15);
        assert_eq!(shift_correct(&[0.2, 0.6], 0.4, 0.4), [0.2, 0.6]);
    }

    #[test]
    fn single_segment_estimate() {
        for mode in [SqeMode::Even, SqeMode::Uneven] {
            let m = randomized(mode, 1);
            let est = m.local_estimates(&session(1, 5)).unwrap();
            assert_eq!(est.alpha, [1.0]);
            assert!((est.s_hat - est.s_hat_i[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_embeddings_pool_to_any_state() {
        // No recurrence and a closed forget gate make each state a function of its input alone.
        let mut m = randomized(SqeMode::Even, 2);
        for p in m.bilstm.params_mut() {
            if p.name.ends_with("w_h") {
                p.values_mut().iter_mut().for_each(|v| *v = 0.0);
            }
            if p.name.ends_with(".b") {
                p.values_mut()[3..6].iter_mut().for_each(|v| *v = -1e3);
            }
        }
        let f = m.forward(&vec![vec![0.3, -0.4]; 3], Some(&[0.4, 0.4, 0.2])).unwrap();
        for t in 0..3 {
            for (p, h) in f.pooled.iter().zip(&f.hidden[t * 6..(t + 1) * 6]) {
                assert!((p - h).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_head_decomposition() {
        let mut m = randomized(SqeMode::Uneven, 3);
        m.head.params_mut()[0].values_mut().iter_mut().for_each(|v| *v = 0.0);
        m.head.params_mut()[1].values_mut()[0] = 0.37;
        let est = m.local_estimates(&session(4, 9)).unwrap();
        assert!(est.s_hat_i.iter().all(|&v| v == 0.37));
        assert_eq!(est.s_hat, 0.37);
    }

    #[test]
    fn selection_weights_pick_first_segment() {
        let m = randomized(SqeMode::Even, 4);
        let s = session(2, 11);
        let f = m.forward(&s.embeddings, Some(&[1.0, 0.0])).unwrap();
        let (parts, recon) = m.decompose(&f.hidden, &f.alpha).unwrap();
        assert!((f.s_hat - parts[0]).abs() < 1e-12);
        assert!((recon - f.s_hat).abs() < 1e-12);
    }

    #[test]
    fn nonlinear_head_rejected() {
        let mut m = randomized(SqeMode::Even, 5);
        m.head.activation = Activation::Tanh;
        let f = m.forward(&[vec![0.1, 0.2]], Some(&[1.0])).unwrap();
        assert!(matches!(m.decompose(&f.hidden, &f.alpha), Err(Error::Contract(_))));
    }

    #[test]
    fn decomposition_and_identity_on_random_models() {
        for seed in 0..20 {
            for mode in [SqeMode::Even, SqeMode::Uneven] {
                let m = randomized(mode, seed);
                let s = session(5, seed + 50);
                let est = m.local_estimates(&s).unwrap();
                let recon: f64 = est.alpha.iter().zip(&est.s_hat_i).map(|(a, v)| a * v).sum();
                assert!((recon - est.s_hat).abs() < 1e-9);
                let corrected: f64 = est.alpha.iter().zip(&est.s_bar_i).map(|(a, v)| a * v).sum();
                assert!((corrected - s.target).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn mode_contract_on_weights() {
        let even = randomized(SqeMode::Even, 6);
        assert!(matches!(even.forward(&[vec![0.1, 0.2]], None), Err(Error::Contract(_))));
        assert!(even.forward(&vec![vec![0.1, 0.2]; 2], Some(&[0.7, 0.7])).is_err());
        let uneven = randomized(SqeMode::Uneven, 6);
        assert!(uneven.forward(&[vec![0.1, 0.2]], Some(&[1.0])).is_err());
        assert!(uneven.forward(&[], None).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        for mode in [SqeMode::Even, SqeMode::Uneven] {
            for seed in 0..3 {
                let m = randomized(mode, 20 + seed);
                let ex = SqeExample::new(&m, &session(3, seed)).unwrap();
                let mut g = Grads::zeros_like(m.params());
                m.loss_and_grad(&ex, &mut g).unwrap();
                for (k, analytic) in g.0.iter().enumerate() {
                    let base = m.params()[k].values().to_vec();
                    let err = max_relative_error(
                        |v| {
                            let mut probe = m.clone();
                            probe.params_mut()[k].values_mut().copy_from_slice(v);
                            probe.loss(&ex).unwrap()
                        },
                        &base,
                        analytic,
                    );
                    assert!(err < 1e-4, "{mode:?} seed {seed} param {k}: {err}");
                }
            }
        }
    }

    #[test]
    fn constant_labels_are_fitted() {
        let sessions: Vec<SqeSession> = (0..30)
            .map(|i| SqeSession {
                target: 0.4,
                ..session(1 + i % 4, i as u64)
            })
            .collect();
        let train = TrainConfig {
            learning_rate: 0.01,
            batch_size: 8,
            max_epochs: 40,
            ..TrainConfig::default()
        };
        let (m, h) = train_sqe(&sessions, &SqeConfig { hidden: 4, attention_dim: 4 }, SqeMode::Even, &train).unwrap();
        assert!(h.final_train_loss() < h.initial_train_loss);
        let est = m.local_estimates(&sessions[0]).unwrap();
        assert!((est.s_hat - 0.4).abs() < 0.1, "{}", est.s_hat);
        let (again, _) = train_sqe(&sessions, &SqeConfig { hidden: 4, attention_dim: 4 }, SqeMode::Even, &train).unwrap();
        assert_eq!(
            m.to_checkpoint(serde_json::json!({})).to_json().unwrap(),
            again.to_checkpoint(serde_json::json!({})).to_json().unwrap()
        );
    }

    #[test]
    fn checkpoint_roundtrip() {
        for mode in [SqeMode::Even, SqeMode::Uneven] {
            let m = randomized(mode, 7);
            assert_eq!(SqeModel::from_checkpoint(&m.to_checkpoint(serde_json::json!({}))).unwrap(), m);
        }
    }
}
