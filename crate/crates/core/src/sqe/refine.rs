use std::fs;
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use super::{train_sqe, LocalEstimates, SqeConfig, SqeMode, SqeSession};
use crate::corpus::{augment_segmentations, rescale, segment_session, Segment, SegmentationConfig, Session, Target};
use crate::encoder::{finetune_encoder_pairs, EncoderConfig, EncoderModel, SegmentLabelSet, Vocabulary, LABEL_BOUND};
use crate::error::{ensure, Error, Result};
use crate::nn::{TrainConfig, TrainHistory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinementConfig {
    /// Number of label-update passes; the encoder is fine-tuned `k + 1` times.
    pub k: usize,
    pub segmentation: SegmentationConfig,
    /// Also fine-tune on shifted segmentations.
    pub augment: bool,
    pub mode: SqeMode,
    pub target: Target,
    pub encoder: EncoderConfig,
    pub encoder_train: TrainConfig,
    pub sqe: SqeConfig,
    pub sqe_train: TrainConfig,
    pub seed: u64,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            k: 1,
            segmentation: SegmentationConfig::with_default_offsets(40).expect("40 is a valid segment length"),
            augment: false,
            mode: SqeMode::Even,
            target: Target::Total,
            encoder: EncoderConfig::default(),
            encoder_train: TrainConfig {
                learning_rate: 3e-3,
                batch_size: 32,
                max_epochs: 30,
                ..TrainConfig::default()
            },
            sqe: SqeConfig::default(),
            sqe_train: TrainConfig {
                learning_rate: 3e-3,
                batch_size: 16,
                max_epochs: 60,
                early_stop_patience: 8,
                ..TrainConfig::default()
            },
            seed: 0,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        self.segmentation.validate()?;
        self.encoder_train.validate()?;
        self.sqe_train.validate()?;
        if self.augment {
            ensure!(
                !self.segmentation.augmentation_offsets.is_empty(),
                Validation,
                "augmentation requested without offsets"
            );
        }
        Ok(())
    }
}

/// What happened at one iteration `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    pub k: usize,
    pub encoder: TrainHistory,
    pub sqe: Option<TrainHistory>,
    /// `‖y^{k+1} − y^k‖` over all training segments.
    pub label_delta_norm: Option<f64>,
    /// Corrected labels clamped to the fine-tuning bound.
    pub clamped: usize,
    /// Largest `|Σ α_i s̄_i − s|` (unclamped labels).
    pub max_identity_residual: Option<f64>,
    /// Largest `|ŝ − Σ α_i ŝ_i|`.
    pub max_decomposition_residual: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RefinementOutput {
    /// Encoder after the last fine-tuning pass.
    pub encoder: EncoderModel,
    /// `y^0`: the normalized session score on every segment.
    pub initial_labels: SegmentLabelSet,
    /// `y^K`: labels used for the last fine-tuning pass.
    pub labels: SegmentLabelSet,
    pub diagnostics: Vec<IterationDiagnostics>,
    /// Local estimates of every label-update pass, in session order.
    pub estimates: Vec<Vec<LocalEstimates>>,
}

struct Prepared {
    canonical: Vec<Vec<Segment>>,
    /// Per session: every shifted segment and the first utterance it covers.
    augmented: Vec<Vec<(Segment, usize)>>,
    targets: Vec<f64>,
}

fn prepare(sessions: &[Session], cfg: &RefinementConfig) -> Result<Prepared> {
    let mut canonical = Vec::with_capacity(sessions.len());
    let mut augmented = Vec::with_capacity(sessions.len());
    let mut targets = Vec::with_capacity(sessions.len());
    for s in sessions {
        targets.push(rescale(f64::from(s.score(cfg.target)?), cfg.target.scale())?);
        canonical.push(segment_session(s, &cfg.segmentation)?);
        let mut shifted = Vec::new();
        if cfg.augment {
            for &offset in &cfg.segmentation.augmentation_offsets {
                let single = SegmentationConfig {
                    m: cfg.segmentation.m,
                    augmentation_offsets: vec![offset],
                };
                let mut start = 0;
                for seg in augment_segmentations(s, &single)? {
                    let n = seg.utterance_count();
                    shifted.push((seg, start));
                    start += n;
                }
            }
        }
        augmented.push(shifted);
    }
    Ok(Prepared {
        canonical,
        augmented,
        targets,
    })
}

/// Utterance-weighted mean of canonical labels over `[start, start + len)`.
fn overlap_label(labels: &[f64], m: usize, start: usize, len: usize) -> f64 {
    let end = start + len;
    let mut acc = 0.0;
    for (i, y) in labels.iter().enumerate() {
        let (a, b) = (i * m, (i + 1) * m);
        let overlap = end.min(b).saturating_sub(start.max(a));
        acc += overlap as f64 * y;
    }
    acc / len as f64
}

fn labels_of(set: &SegmentLabelSet, segments: &[Segment]) -> Vec<f64> {
    segments
        .iter()
        .map(|s| set.get(&s.session_id, s.index).expect("every canonical segment is labeled"))
        .collect()
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Alternates encoder fine-tuning on segment labels with estimator training
/// and shift-corrected relabeling. Label updates use only `sessions`; pass
/// training sessions. When `out_dir` is given the run directory is written.
pub fn run_refinement(sessions: &[Session], cfg: &RefinementConfig, out_dir: Option<&Path>) -> Result<RefinementOutput> {
    cfg.validate()?;
    ensure!(!sessions.is_empty(), Validation, "no training sessions");
    let prep = prepare(sessions, cfg)?;
    let all: Vec<Segment> = prep.canonical.iter().flatten().cloned().collect();
    let mut encoder = EncoderModel::new(Vocabulary::build(&all), &cfg.encoder, cfg.seed)?;

    let mut labels = SegmentLabelSet::default();
    for (segs, &s) in prep.canonical.iter().zip(&prep.targets) {
        for seg in segs {
            labels.insert(&seg.session_id, seg.index, s);
        }
    }
    let initial_labels = labels.clone();
    let mut diagnostics = Vec::with_capacity(cfg.k + 1);
    let mut estimates = Vec::with_capacity(cfg.k);

    for k in 0..=cfg.k {
        let wrap = |e: Error| Error::Iteration {
            iteration: k,
            source: Box::new(e),
        };
        let iter_dir = match out_dir {
            Some(dir) => {
                let d = dir.join(format!("iter_{k}"));
                fs::create_dir_all(&d).map_err(|e| wrap(Error::io(&d, e)))?;
                Some(d)
            }
            None => None,
        };
        let step = run_iteration(k, cfg, &prep, &all, &mut encoder, &labels, iter_dir.as_deref()).map_err(wrap)?;
        if let Some((next, est)) = step.next {
            labels = next;
            estimates.push(est);
        }
        diagnostics.push(step.diagnostics);
    }
    if let Some(dir) = out_dir {
        write_json(&dir.join("diagnostics.json"), &diagnostics)?;
    }
    Ok(RefinementOutput {
        encoder,
        initial_labels,
        labels,
        diagnostics,
        estimates,
    })
}

struct Step {
    diagnostics: IterationDiagnostics,
    next: Option<(SegmentLabelSet, Vec<LocalEstimates>)>,
}

fn run_iteration(
    k: usize,
    cfg: &RefinementConfig,
    prep: &Prepared,
    all: &[Segment],
    encoder: &mut EncoderModel,
    labels: &SegmentLabelSet,
    dir: Option<&Path>,
) -> Result<Step> {
    ensure!(
        labels.0.values().all(|y| y.is_finite()),
        Validation,
        "non-finite segment label before fine-tuning"
    );
    if k > 0 {
        encoder.reset_head(cfg.seed.wrapping_add(k as u64));
    }
    let mut pairs: Vec<(&Segment, f64)> = all.iter().map(|s| (s, labels.get(&s.session_id, s.index).expect("labeled"))).collect();
    for (segs, shifted) in prep.canonical.iter().zip(&prep.augmented) {
        let ys = labels_of(labels, segs);
        for (seg, start) in shifted {
            pairs.push((seg, overlap_label(&ys, cfg.segmentation.m, *start, seg.utterance_count())));
        }
    }
    let enc_train = TrainConfig {
        seed: cfg.encoder_train.seed.wrapping_add(k as u64),
        ..cfg.encoder_train.clone()
    };
    let enc_hist = finetune_encoder_pairs(encoder, &pairs, &enc_train)?;
    info!(
        "iteration {k}: encoder train mse {:.4}, best val {:?}",
        enc_hist.final_train_loss(),
        enc_hist.best_val_loss()
    );
    let meta = serde_json::json!({ "iteration": k, "head_reinitialized": k > 0, "warm_start": k > 0 });
    if let Some(d) = dir {
        encoder.to_checkpoint(meta.clone()).save(d.join("encoder.ckpt.json"))?;
        labels.save(d.join("labels.jsonl"))?;
    }
    let mut diagnostics = IterationDiagnostics {
        k,
        encoder: enc_hist,
        sqe: None,
        label_delta_norm: None,
        clamped: 0,
        max_identity_residual: None,
        max_decomposition_residual: None,
    };
    if k == cfg.k {
        return Ok(Step { diagnostics, next: None });
    }

    let sqe_sessions = prep
        .canonical
        .iter()
        .zip(&prep.targets)
        .map(|(segs, &target)| {
            Ok(SqeSession {
                session_id: segs[0].session_id.clone(),
                embeddings: encoder.encode_all(segs)?.into_iter().map(|e| e.vector).collect(),
                utterance_counts: segs.iter().map(Segment::utterance_count).collect(),
                target,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sqe_train = TrainConfig {
        seed: cfg.sqe_train.seed.wrapping_add(k as u64),
        ..cfg.sqe_train.clone()
    };
    let (sqe, sqe_hist) = train_sqe(&sqe_sessions, &cfg.sqe, cfg.mode, &sqe_train)?;
    let est = sqe.local_estimates_all(&sqe_sessions)?;
    if let Some(d) = dir {
        sqe.to_checkpoint(meta).save(d.join("sqe.ckpt.json"))?;
    }

    let mut next = SegmentLabelSet::default();
    let (mut identity, mut decomposition, mut delta2) = (0.0f64, 0.0f64, 0.0);
    for ((e, segs), s) in est.iter().zip(&prep.canonical).zip(&sqe_sessions) {
        let weighted = |v: &[f64]| e.alpha.iter().zip(v).map(|(a, x)| a * x).sum::<f64>();
        identity = identity.max((weighted(&e.s_bar_i) - s.target).abs());
        decomposition = decomposition.max((weighted(&e.s_hat_i) - e.s_hat).abs());
        for (seg, &y) in segs.iter().zip(&e.s_bar_i) {
            ensure!(y.is_finite(), Validation, "non-finite corrected label in session {}", seg.session_id);
            let clamped = y.clamp(-LABEL_BOUND, LABEL_BOUND);
            diagnostics.clamped += usize::from(clamped != y);
            let old = labels.get(&seg.session_id, seg.index).expect("labeled");
            delta2 += (clamped - old).powi(2);
            next.insert(&seg.session_id, seg.index, clamped);
        }
    }
    info!(
        "iteration {k}: sqe train mse {:.4}, label delta {:.4}, clamped {}",
        sqe_hist.final_train_loss(),
        delta2.sqrt(),
        diagnostics.clamped
    );
    diagnostics.sqe = Some(sqe_hist);
    diagnostics.label_delta_norm = Some(delta2.sqrt());
    diagnostics.max_identity_residual = Some(identity);
    diagnostics.max_decomposition_residual = Some(decomposition);
    Ok(Step {
        diagnostics,
        next: Some((next, est)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_weights_by_utterances() {
        // Canonical segments of 4 utterances labeled 1 and 3; a shifted segment
        // covering utterances 2..6 overlaps each by half.
        assert_eq!(overlap_label(&[1.0, 3.0], 4, 2, 4), 2.0);
        assert_eq!(overlap_label(&[1.0, 3.0], 4, 0, 2), 1.0);
        assert_eq!(overlap_label(&[1.0, 3.0, 5.0], 4, 7, 2), 4.0);
    }
}
