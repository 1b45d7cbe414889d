mod analyze;
mod baseline;
mod gen;
mod train;

use std::path::PathBuf;

use hierseg::corpus::Target;
use hierseg::pipeline::PipelineConfig;
use hierseg::predictor::Task;

pub use analyze::{analyze, AnalyzeConfig};
pub use baseline::{train_baseline, BaselineConfig};
pub use gen::{gen_corpus, GenCorpusConfig};
pub use train::{evaluate, refine, sweep_m, train_predictor, EvaluateConfig, RefineConfig, SweepConfig, TrainPredictorConfig};

use crate::{Common, Data, ModelArgs};

const DEFAULT_TEST_FRACTION: f64 = 0.2;

fn default_test_fraction() -> f64 {
    DEFAULT_TEST_FRACTION
}

/// Applies `--seed` and data flags shared by training commands.
fn apply_data(
    common: &Common,
    data: &Data,
    corpus: &mut PathBuf,
    test: &mut Option<PathBuf>,
    test_fraction: &mut f64,
    out: &mut PathBuf,
    seed: &mut u64,
) {
    if let Some(c) = &data.corpus {
        *corpus = c.clone();
    }
    if let Some(t) = &data.test {
        *test = Some(t.clone());
    }
    if let Some(f) = data.test_fraction {
        *test_fraction = f;
    }
    if let Some(o) = &common.out {
        *out = o.clone();
    }
    if let Some(s) = common.seed {
        *seed = s;
    }
}

/// Flags shared by model-training commands, then the top-level seed fanned
/// out to every nested seed so a resolved config states them all.
fn apply_model(model: &ModelArgs, pipeline: &mut PipelineConfig) -> anyhow::Result<()> {
    if let Some(code) = model.code {
        pipeline.refinement.target = code;
    }
    if let Some(task) = model.task {
        pipeline.task = task;
    }
    if let Some(m) = model.m {
        pipeline.refinement.segmentation = hierseg::corpus::SegmentationConfig::with_default_offsets(m)?;
    }
    Ok(())
}

fn seed_all(pipeline: &mut PipelineConfig, seed: u64) {
    let r = &mut pipeline.refinement;
    r.seed = seed;
    r.encoder_train.seed = seed;
    r.sqe_train.seed = seed;
    pipeline.predictor_train.seed = seed;
}

fn target_task(p: &PipelineConfig) -> (Target, Task) {
    (p.refinement.target, p.task)
}
