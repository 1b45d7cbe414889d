use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use hierseg::analysis::{attention_trace, emit_report, group_reports, group_segments, tf_rows, term_frequency_compare, top_correlated_words, GroupBy, ReportInputs, SegmentGroups};
use hierseg::baselines::backward_selection;
use hierseg::corpus::{load_planted, segment_session, Segment, Session};
use hierseg::encoder::EncoderModel;
use hierseg::nn::Checkpoint;
use hierseg::pipeline::session_target;
use hierseg::predictor::Task;
use hierseg::sqe::{SqeMode, SqeModel, SqeSession};
use serde::{Deserialize, Serialize};

use super::train::evaluate_run;
use crate::config::{load_section, write_resolved};
use crate::run::{create_out, held_out, read_json, require_path, training, write_json, RunManifest, MANIFEST};
use crate::AnalyzeArgs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub run: PathBuf,
    /// Defaults to `<run>/analysis`.
    pub out: PathBuf,
    pub planted: Option<PathBuf>,
    /// Segment count of sessions entering the traces; the most common count when unset.
    pub n_segments: Option<usize>,
    /// Words compared between groups; the selection candidates when empty.
    pub words: Vec<String>,
    pub group_by: GroupBy,
    /// Words kept by backward selection.
    pub select_k: usize,
    /// Most score-correlated words offered to backward selection.
    pub n_candidates: usize,
    pub lambda: f64,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            run: PathBuf::new(),
            out: PathBuf::new(),
            planted: None,
            n_segments: None,
            words: Vec::new(),
            group_by: GroupBy::Corrected,
            select_k: 5,
            n_candidates: 20,
            lambda: 1.0,
        }
    }
}

/// Most frequent length; ties go to the longer one.
fn most_common_len(alphas: &[Vec<f64>]) -> Option<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for a in alphas {
        *counts.entry(a.len()).or_default() += 1;
    }
    counts.into_iter().max_by_key(|&(len, c)| (c, len)).map(|(len, _)| len)
}

#[derive(Serialize)]
struct PlantedGroups {
    mean_q_low: f64,
    mean_q_high: f64,
}

pub fn analyze(a: AnalyzeArgs) -> Result<()> {
    let mut cfg: AnalyzeConfig = load_section(a.config.as_deref(), "analyze")?;
    if let Some(r) = a.run {
        cfg.run = r;
    }
    if let Some(o) = a.out {
        cfg.out = o;
    }
    if let Some(p) = a.planted {
        cfg.planted = Some(p);
    }
    if let Some(n) = a.n_segments {
        cfg.n_segments = Some(n);
    }
    if let Some(w) = a.words {
        cfg.words = w;
    }
    if let Some(g) = a.group_by {
        cfg.group_by = g;
    }
    require_path(&cfg.run, "--run")?;
    if cfg.out.as_os_str().is_empty() {
        cfg.out = cfg.run.join("analysis");
    }
    create_out(&cfg.out)?;
    let manifest: RunManifest = read_json(&cfg.run.join(MANIFEST))?;
    let train = training(&cfg.run, &manifest)?;
    let test = held_out(&cfg.run, &manifest)?;
    let label = manifest.target.to_string();
    let mut inputs = ReportInputs::default();

    let eval = evaluate_run(&cfg.run, &manifest, &test)?;
    let name = match manifest.k {
        Some(k) => format!("hierarchical_k{k}"),
        None => "predictor".to_string(),
    };
    inputs.metrics.push((name, eval.metrics));
    let alphas: Vec<Vec<f64>> = eval.predictions.into_iter().map(|p| p.attention).collect();
    let n_segments = cfg.n_segments.or_else(|| most_common_len(&alphas)).context("no predictions")?;
    cfg.n_segments = Some(n_segments);
    inputs.traces.push(attention_trace(&label, &alphas, n_segments)?);

    let docs: Vec<Vec<&str>> = train
        .iter()
        .map(|s| s.utterances.iter().flat_map(|u| u.tokens.iter().map(String::as_str)).collect())
        .collect();
    let scores = train.iter().map(|s| s.score(manifest.target).map(f64::from)).collect::<hierseg::Result<Vec<_>>>()?;
    let candidates = top_correlated_words(&docs, &scores, cfg.n_candidates)?;
    let words: Vec<String> = candidates.iter().map(|(w, _)| w.clone()).collect();
    if cfg.select_k > 0 && cfg.select_k <= words.len() {
        let rows = tf_rows(&docs, &words)?;
        let selected = backward_selection(&words, &rows, &scores, cfg.select_k, cfg.lambda)?;
        write_json(
            &cfg.out.join("selection.json"),
            &serde_json::json!({ "candidates": candidates, "selected": selected }),
        )?;
    }
    if cfg.words.is_empty() {
        cfg.words = words;
    }

    if let Some((sqe_path, enc_path)) = &manifest.sqe {
        let sqe = SqeModel::from_checkpoint(&Checkpoint::load(cfg.run.join(sqe_path))?)?;
        let encoder = EncoderModel::from_checkpoint(&Checkpoint::load(cfg.run.join(enc_path))?)?;
        let mut segments: Vec<Segment> = Vec::new();
        let mut sessions = Vec::with_capacity(train.len());
        for s in &train {
            let segs = segment_session(s, &manifest.segmentation)?;
            sessions.push(SqeSession {
                session_id: s.id.clone(),
                embeddings: encoder.encode_all(&segs)?.into_iter().map(|e| e.vector).collect(),
                utterance_counts: segs.iter().map(Segment::utterance_count).collect(),
                target: session_target(s, manifest.target, Task::Regression)?,
            });
            segments.extend(segs);
        }
        let estimates = sqe.local_estimates_all(&sessions)?;
        if sqe.mode == SqeMode::Uneven {
            let sqe_alphas: Vec<Vec<f64>> = estimates.iter().map(|e| e.alpha.clone()).collect();
            match attention_trace(&format!("{label}_sqe"), &sqe_alphas, n_segments) {
                Ok(t) => inputs.traces.push(t),
                Err(e) => log::warn!("no estimator trace: {e}"),
            }
        }
        let groups = group_segments(&estimates, cfg.group_by);
        let (low, high) = group_reports(&groups, &segments)?;
        inputs.words = term_frequency_compare(&low, &high, &cfg.words)?;
        if let Some(path) = &cfg.planted {
            let truth = load_planted(path).with_context(|| format!("loading planted truth {}", path.display()))?;
            write_json(&cfg.out.join("planted_groups.json"), &planted_groups(&groups, &train, &truth, manifest.segmentation.m)?)?;
        }
    } else {
        log::warn!("run has no segment quality estimator (K = 0); segment grouping skipped");
    }
    let files = emit_report(&cfg.out, &inputs)?;
    write_resolved(&cfg.out, "analyze", &cfg)?;
    println!("wrote {} report files to {}", files.len(), cfg.out.display());
    Ok(())
}

/// Mean planted quality of the segments in each group.
fn planted_groups(groups: &SegmentGroups, sessions: &[Session], truth: &[hierseg::corpus::PlantedTruth], m: usize) -> Result<PlantedGroups> {
    let by_id: BTreeMap<&str, &hierseg::corpus::PlantedTruth> = truth.iter().map(|t| (t.session_id.as_str(), t)).collect();
    let lengths: BTreeMap<&str, usize> = sessions.iter().map(|s| (s.id.as_str(), s.utterances.len())).collect();
    let mean = |members: &[(String, usize)]| -> Result<f64> {
        let mut acc = 0.0;
        for (sid, idx) in members {
            let t = by_id.get(sid.as_str()).with_context(|| format!("no planted truth for session {sid}"))?;
            let n = lengths[sid.as_str()];
            let (start, end) = (idx * m, ((idx + 1) * m).min(n));
            acc += (start..end).map(|p| t.quality_at(p)).sum::<f64>() / (end - start) as f64;
        }
        Ok(acc / members.len().max(1) as f64)
    };
    Ok(PlantedGroups {
        mean_q_low: mean(&groups.low)?,
        mean_q_high: mean(&groups.high)?,
    })
}
