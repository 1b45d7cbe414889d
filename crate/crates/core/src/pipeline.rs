//! End-to-end training: refinement, then a predictor trained from scratch on
//! embeddings from the final encoder.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::MetricsRecord;
use crate::corpus::{binarize, rescale, segment_session, BinaryLabel, SegmentationConfig, Session, Target};
use crate::encoder::{EncoderModel, SegmentEmbedding};
use crate::error::{ensure, Error, Result};
use crate::nn::{split_validation, TrainConfig, TrainHistory};
use crate::predictor::{evaluate, train_predictor, PredictorConfig, PredictorModel, SessionExample, SessionPrediction, Task};
use crate::sqe::{run_refinement, RefinementConfig, RefinementOutput};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub refinement: RefinementConfig,
    pub task: Task,
    pub predictor: PredictorConfig,
    pub predictor_train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            refinement: RefinementConfig::default(),
            task: Task::Regression,
            predictor: PredictorConfig::default(),
            predictor_train: TrainConfig {
                learning_rate: 3e-3,
                batch_size: 16,
                max_epochs: 60,
                early_stop_patience: 8,
                ..TrainConfig::default()
            },
        }
    }
}

pub struct PipelineOutput {
    pub refinement: RefinementOutput,
    pub predictor: PredictorModel,
    pub predictor_history: TrainHistory,
}

/// Training target of one session in model space.
pub fn session_target(session: &Session, target: Target, task: Task) -> Result<f64> {
    let score = session.score(target)?;
    Ok(match task {
        Task::Regression => rescale(f64::from(score), target.scale())?,
        Task::Classification => match binarize(score, target.scale())? {
            BinaryLabel::High => 1.0,
            BinaryLabel::Low => 0.0,
        },
    })
}

/// Segment embeddings per session; targets are filled for labeled sessions.
pub fn session_examples(encoder: &EncoderModel, sessions: &[Session], seg: &SegmentationConfig, target: Target, task: Task) -> Result<Vec<SessionExample>> {
    sessions
        .iter()
        .map(|s| {
            let segments = segment_session(s, seg)?;
            let embeddings = encoder.encode_all(&segments)?.into_iter().map(|e| e.vector).collect();
            let label = match &s.labels {
                Some(_) => Some(session_target(s, target, task)?),
                None => None,
            };
            Ok(SessionExample {
                session_id: s.id.clone(),
                embeddings,
                target: label,
            })
        })
        .collect()
}

/// Refinement followed by predictor training. With `out_dir` the run
/// directory also receives `predictor.ckpt.json`.
pub fn run_pipeline(sessions: &[Session], cfg: &PipelineConfig, out_dir: Option<&Path>) -> Result<PipelineOutput> {
    let refinement = run_refinement(sessions, &cfg.refinement, out_dir)?;
    let r = &cfg.refinement;
    let examples = session_examples(&refinement.encoder, sessions, &r.segmentation, r.target, cfg.task)?;
    let (predictor, predictor_history) = train_predictor(&examples, &cfg.predictor, cfg.task, &cfg.predictor_train)?;
    if let Some(dir) = out_dir {
        let meta = serde_json::json!({ "target": r.target, "m": r.segmentation.m });
        predictor.to_checkpoint(meta).save(dir.join("predictor.ckpt.json"))?;
        let path = dir.join("predictor_history.json");
        let mut text = serde_json::to_string_pretty(&predictor_history)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(PipelineOutput {
        refinement,
        predictor,
        predictor_history,
    })
}

/// Session-level train/test split; both halves keep corpus order.
pub fn split_sessions(sessions: &[Session], test_fraction: f64, seed: u64) -> Result<(Vec<Session>, Vec<Session>)> {
    ensure!(
        (0.0..1.0).contains(&test_fraction) && test_fraction > 0.0,
        Validation,
        "test fraction must lie in (0, 1)"
    );
    ensure!(sessions.len() >= 2, Validation, "need at least 2 sessions to split");
    let (train, test) = split_validation(sessions.len(), test_fraction, seed);
    let pick = |idx: &[usize]| idx.iter().map(|&i| sessions[i].clone()).collect();
    Ok((pick(&train), pick(&test)))
}

/// Largest segment count over `sessions`, the padding length that avoids truncation.
pub fn max_segment_count(sessions: &[Session], seg: &SegmentationConfig) -> Result<usize> {
    seg.validate()?;
    Ok(sessions.iter().map(|s| s.utterances.len().div_ceil(seg.m)).max().unwrap_or(1).max(1))
}

pub struct Evaluation {
    pub metrics: MetricsRecord,
    pub predictions: Vec<SessionPrediction>,
    /// Regression outputs clamped to the score range.
    pub clamped: usize,
}

/// Scores labeled `sessions` with an encoder and predictor.
pub fn evaluate_sessions(
    encoder: &EncoderModel,
    predictor: &PredictorModel,
    sessions: &[Session],
    seg: &SegmentationConfig,
    target: Target,
) -> Result<Evaluation> {
    let examples = session_examples(encoder, sessions, seg, target, predictor.task)?;
    let labels = sessions.iter().map(|s| s.score(target)).collect::<Result<Vec<_>>>()?;
    let (metrics, predictions, clamped) = evaluate(predictor, &examples, &labels, target.scale())?;
    Ok(Evaluation {
        metrics,
        predictions,
        clamped,
    })
}

/// Predictor inputs from precomputed embeddings (static-embedding mode).
/// Every session needs embeddings for the contiguous indices `0..n`.
pub fn examples_from_embeddings(embeddings: &[SegmentEmbedding], sessions: &[Session], target: Target, task: Task) -> Result<Vec<SessionExample>> {
    let mut by_session: BTreeMap<&str, BTreeMap<usize, &Vec<f64>>> = BTreeMap::new();
    for e in embeddings {
        by_session.entry(e.session_id.as_str()).or_default().insert(e.segment_index, &e.vector);
    }
    sessions
        .iter()
        .map(|s| {
            let segs = by_session
                .get(s.id.as_str())
                .ok_or_else(|| Error::Validation(format!("no embeddings for session {}", s.id)))?;
            ensure!(
                segs.keys().copied().eq(0..segs.len()),
                Validation,
                "embedding indices of session {} are not contiguous from 0",
                s.id
            );
            let label = match &s.labels {
                Some(_) => Some(session_target(s, target, task)?),
                None => None,
            };
            Ok(SessionExample {
                session_id: s.id.clone(),
                embeddings: segs.values().map(|v| (*v).clone()).collect(),
                target: label,
            })
        })
        .collect()
}
