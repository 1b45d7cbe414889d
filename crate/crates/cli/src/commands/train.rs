use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hierseg::corpus::{SegmentationConfig, Session, Target};
use hierseg::encoder::{import_embeddings, EncoderModel};
use hierseg::nn::{Checkpoint, TrainConfig};
use hierseg::pipeline::{evaluate_sessions, examples_from_embeddings, max_segment_count, run_pipeline, session_examples, Evaluation, PipelineConfig};
use hierseg::predictor::{evaluate as evaluate_examples, train_predictor as fit_predictor, write_predictions, PredictorConfig, PredictorModel, Task};
use serde::{Deserialize, Serialize};

use super::{apply_data, apply_model, default_test_fraction, seed_all, target_task};
use crate::config::{load_section, write_resolved};
use crate::run::{create_out, held_out, read_json, require_path, train_test, write_json, write_split, RunManifest, MANIFEST};
use crate::{EvaluateArgs, RefineArgs, SweepArgs, TrainPredictorArgs};

const PREDICTOR: &str = "predictor.ckpt.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub corpus: PathBuf,
    pub test: Option<PathBuf>,
    pub test_fraction: f64,
    /// Split seed; also copied into every nested training seed.
    pub seed: u64,
    pub out: PathBuf,
    pub pipeline: PipelineConfig,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            corpus: PathBuf::new(),
            test: None,
            test_fraction: default_test_fraction(),
            seed: 0,
            out: PathBuf::new(),
            pipeline: PipelineConfig::default(),
        }
    }
}

fn iter_file(k: usize, name: &str) -> PathBuf {
    PathBuf::from(format!("iter_{k}")).join(name)
}

fn refinement_manifest(cfg: &PipelineConfig, corpus: &Path, test: Option<&Path>) -> RunManifest {
    let k = cfg.refinement.k;
    let (target, task) = target_task(cfg);
    RunManifest {
        corpus: corpus.to_path_buf(),
        test_corpus: test.map(Path::to_path_buf),
        target,
        task,
        segmentation: cfg.refinement.segmentation.clone(),
        encoder: Some(iter_file(k, "encoder.ckpt.json")),
        embeddings: None,
        predictor: PathBuf::from(PREDICTOR),
        sqe: (k > 0).then(|| (iter_file(k - 1, "sqe.ckpt.json"), iter_file(k - 1, "encoder.ckpt.json"))),
        k: Some(k),
    }
}

pub fn refine(a: RefineArgs) -> Result<()> {
    let mut cfg: RefineConfig = load_section(a.common.config.as_deref(), "refine")?;
    apply_data(&a.common, &a.data, &mut cfg.corpus, &mut cfg.test, &mut cfg.test_fraction, &mut cfg.out, &mut cfg.seed);
    apply_model(&a.model, &mut cfg.pipeline)?;
    if let Some(k) = a.k {
        cfg.pipeline.refinement.k = k;
    }
    if let Some(m) = a.mode {
        cfg.pipeline.refinement.mode = m;
    }
    if let Some(g) = a.augment {
        cfg.pipeline.refinement.augment = g;
    }
    seed_all(&mut cfg.pipeline, cfg.seed);
    create_out(&cfg.out)?;
    let (train, test) = train_test(&cfg.corpus, cfg.test.as_deref(), cfg.test_fraction, cfg.seed)?;
    let output = run_pipeline(&train, &cfg.pipeline, Some(&cfg.out)).context("refinement run failed")?;
    write_split(&cfg.out, &train, &test)?;
    write_json(&cfg.out.join(MANIFEST), &refinement_manifest(&cfg.pipeline, &cfg.corpus, cfg.test.as_deref()))?;
    write_resolved(&cfg.out, "refine", &cfg)?;
    for d in &output.refinement.diagnostics {
        println!(
            "k={} encoder train mse {:.5} label delta {} clamped {}",
            d.k,
            d.encoder.final_train_loss(),
            d.label_delta_norm.map_or("-".to_string(), |v| format!("{v:.5}")),
            d.clamped
        );
    }
    println!("run written to {}", cfg.out.display());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainPredictorConfig {
    pub corpus: PathBuf,
    pub test: Option<PathBuf>,
    pub test_fraction: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub target: Target,
    pub task: Task,
    pub segmentation: SegmentationConfig,
    /// Encoder checkpoint; exclusive with `embeddings`.
    pub encoder: Option<PathBuf>,
    /// Embedding JSONL; exclusive with `encoder`.
    pub embeddings: Option<PathBuf>,
    pub predictor: PredictorConfig,
    pub predictor_train: TrainConfig,
}

impl Default for TrainPredictorConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            corpus: PathBuf::new(),
            test: None,
            test_fraction: default_test_fraction(),
            seed: 0,
            out: PathBuf::new(),
            target: p.refinement.target,
            task: p.task,
            segmentation: p.refinement.segmentation,
            encoder: None,
            embeddings: None,
            predictor: p.predictor,
            predictor_train: p.predictor_train,
        }
    }
}

pub fn train_predictor(a: TrainPredictorArgs) -> Result<()> {
    let mut cfg: TrainPredictorConfig = load_section(a.common.config.as_deref(), "train-predictor")?;
    apply_data(&a.common, &a.data, &mut cfg.corpus, &mut cfg.test, &mut cfg.test_fraction, &mut cfg.out, &mut cfg.seed);
    let mut p = PipelineConfig::default();
    p.refinement.target = cfg.target;
    p.task = cfg.task;
    p.refinement.segmentation = cfg.segmentation.clone();
    apply_model(&a.model, &mut p)?;
    (cfg.target, cfg.task, cfg.segmentation) = (p.refinement.target, p.task, p.refinement.segmentation);
    if let Some(e) = a.encoder {
        cfg.encoder = Some(e);
    }
    if let Some(e) = a.embeddings {
        cfg.embeddings = Some(e);
    }
    cfg.predictor_train.seed = cfg.seed;
    create_out(&cfg.out)?;
    let (train, test) = train_test(&cfg.corpus, cfg.test.as_deref(), cfg.test_fraction, cfg.seed)?;
    let mut manifest = RunManifest {
        corpus: cfg.corpus.clone(),
        test_corpus: cfg.test.clone(),
        target: cfg.target,
        task: cfg.task,
        segmentation: cfg.segmentation.clone(),
        encoder: None,
        embeddings: None,
        predictor: PathBuf::from(PREDICTOR),
        sqe: None,
        k: None,
    };
    let examples = match (&cfg.encoder, &cfg.embeddings) {
        (Some(path), None) => {
            let encoder = EncoderModel::from_checkpoint(&Checkpoint::load(path).with_context(|| format!("loading encoder {}", path.display()))?)?;
            copy_into(path, &cfg.out, "encoder.ckpt.json")?;
            manifest.encoder = Some(PathBuf::from("encoder.ckpt.json"));
            session_examples(&encoder, &train, &cfg.segmentation, cfg.target, cfg.task)?
        }
        (None, Some(path)) => {
            let embeddings = import_embeddings(path).with_context(|| format!("loading embeddings {}", path.display()))?;
            copy_into(path, &cfg.out, "embeddings.jsonl")?;
            manifest.embeddings = Some(PathBuf::from("embeddings.jsonl"));
            examples_from_embeddings(&embeddings, &train, cfg.target, cfg.task)?
        }
        _ => bail!("exactly one of --encoder and --embeddings is required"),
    };
    let (model, history) = fit_predictor(&examples, &cfg.predictor, cfg.task, &cfg.predictor_train)?;
    model
        .to_checkpoint(serde_json::json!({ "target": cfg.target, "m": cfg.segmentation.m }))
        .save(cfg.out.join(PREDICTOR))?;
    write_json(&cfg.out.join("diagnostics.json"), &history)?;
    write_split(&cfg.out, &train, &test)?;
    write_json(&cfg.out.join(MANIFEST), &manifest)?;
    write_resolved(&cfg.out, "train-predictor", &cfg)?;
    println!("predictor written to {}", cfg.out.join(PREDICTOR).display());
    Ok(())
}

fn copy_into(src: &Path, dir: &Path, name: &str) -> Result<()> {
    let dst = dir.join(name);
    if fs::canonicalize(src).ok() != fs::canonicalize(&dst).ok() {
        fs::copy(src, &dst).with_context(|| format!("copying {} into the run", src.display()))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub run: PathBuf,
    /// Defaults to the run's held-out sessions.
    pub corpus: Option<PathBuf>,
    /// Defaults to `<run>/eval`.
    pub out: PathBuf,
}

/// Scores `sessions` with the models of a run directory.
pub fn evaluate_run(run: &Path, manifest: &RunManifest, sessions: &[Session]) -> Result<Evaluation> {
    let predictor = PredictorModel::from_checkpoint(&Checkpoint::load(run.join(&manifest.predictor))?)?;
    match (&manifest.encoder, &manifest.embeddings) {
        (Some(enc), _) => {
            let encoder = EncoderModel::from_checkpoint(&Checkpoint::load(run.join(enc))?)?;
            Ok(evaluate_sessions(&encoder, &predictor, sessions, &manifest.segmentation, manifest.target)?)
        }
        (None, Some(emb)) => {
            let embeddings = import_embeddings(run.join(emb))?;
            let examples = examples_from_embeddings(&embeddings, sessions, manifest.target, manifest.task)?;
            let labels = sessions.iter().map(|s| s.score(manifest.target)).collect::<hierseg::Result<Vec<_>>>()?;
            let (metrics, predictions, clamped) = evaluate_examples(&predictor, &examples, &labels, manifest.target.scale())?;
            Ok(Evaluation {
                metrics,
                predictions,
                clamped,
            })
        }
        (None, None) => bail!("run {} names neither an encoder nor embeddings", run.display()),
    }
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut cfg: EvaluateConfig = load_section(a.config.as_deref(), "evaluate")?;
    if let Some(r) = a.run {
        cfg.run = r;
    }
    if let Some(c) = a.corpus {
        cfg.corpus = Some(c);
    }
    if let Some(o) = a.out {
        cfg.out = o;
    }
    require_path(&cfg.run, "--run")?;
    if cfg.out.as_os_str().is_empty() {
        cfg.out = cfg.run.join("eval");
    }
    let manifest: RunManifest = read_json(&cfg.run.join(MANIFEST))?;
    let sessions = match &cfg.corpus {
        Some(c) => crate::run::load(c)?,
        None => held_out(&cfg.run, &manifest)?,
    };
    create_out(&cfg.out)?;
    let eval = evaluate_run(&cfg.run, &manifest, &sessions)?;
    if eval.clamped > 0 {
        log::warn!("{} predictions clamped to the score range", eval.clamped);
    }
    write_json(&cfg.out.join("metrics.json"), &eval.metrics)?;
    write_json(
        &cfg.out.join("diagnostics.json"),
        &serde_json::json!({ "n_sessions": sessions.len(), "clamped": eval.clamped }),
    )?;
    write_predictions(cfg.out.join("predictions.jsonl"), &eval.predictions, manifest.target.scale())?;
    write_resolved(&cfg.out, "evaluate", &cfg)?;
    println!("{}", serde_json::to_string(&eval.metrics)?);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub corpus: PathBuf,
    pub test: Option<PathBuf>,
    pub test_fraction: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub m_list: Vec<usize>,
    /// Shared settings; segmentation and padding length are set per `M`.
    pub pipeline: PipelineConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let mut pipeline = PipelineConfig::default();
        pipeline.refinement.k = 0;
        Self {
            corpus: PathBuf::new(),
            test: None,
            test_fraction: default_test_fraction(),
            seed: 0,
            out: PathBuf::new(),
            m_list: vec![1, 5, 20, 40, 80],
            pipeline,
        }
    }
}

pub const SWEEP_CSV: &str = "sweep.csv";

pub fn sweep_m(a: SweepArgs) -> Result<()> {
    let mut cfg: SweepConfig = load_section(a.common.config.as_deref(), "sweep-m")?;
    apply_data(&a.common, &a.data, &mut cfg.corpus, &mut cfg.test, &mut cfg.test_fraction, &mut cfg.out, &mut cfg.seed);
    if let Some(c) = a.code {
        cfg.pipeline.refinement.target = c;
    }
    if let Some(t) = a.task {
        cfg.pipeline.task = t;
    }
    if let Some(list) = a.m_list {
        cfg.m_list = list;
    }
    if let Some(k) = a.k {
        cfg.pipeline.refinement.k = k;
    }
    if let Some(m) = a.mode {
        cfg.pipeline.refinement.mode = m;
    }
    if cfg.m_list.is_empty() {
        bail!("--m-list is empty");
    }
    seed_all(&mut cfg.pipeline, cfg.seed);
    create_out(&cfg.out)?;
    let (train, test) = train_test(&cfg.corpus, cfg.test.as_deref(), cfg.test_fraction, cfg.seed)?;
    let all: Vec<Session> = train.iter().chain(&test).cloned().collect();
    let mut csv = String::from("m,n_train,n_test,rmse,mae,macro_f1,clamped\n");
    for &m in &cfg.m_list {
        let mut p = cfg.pipeline.clone();
        p.refinement.segmentation = SegmentationConfig::with_default_offsets(m)?;
        p.predictor.max_segments = max_segment_count(&all, &p.refinement.segmentation)?;
        let dir = cfg.out.join(format!("m_{m}"));
        create_out(&dir)?;
        let output = run_pipeline(&train, &p, Some(&dir)).with_context(|| format!("run with M = {m}"))?;
        let eval = evaluate_sessions(&output.refinement.encoder, &output.predictor, &test, &p.refinement.segmentation, p.refinement.target)?;
        write_split(&dir, &train, &test)?;
        write_json(&dir.join(MANIFEST), &refinement_manifest(&p, &cfg.corpus, cfg.test.as_deref()))?;
        write_json(&dir.join("metrics.json"), &eval.metrics)?;
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            csv,
            "{m},{},{},{},{},{},{}",
            train.len(),
            test.len(),
            f(eval.metrics.rmse),
            f(eval.metrics.mae),
            f(eval.metrics.macro_f1),
            eval.clamped
        )
        .expect("string write");
        println!("M={m}: {}", serde_json::to_string(&eval.metrics)?);
    }
    let path = cfg.out.join(SWEEP_CSV);
    fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    write_resolved(&cfg.out, "sweep-m", &cfg)?;
    Ok(())
}
