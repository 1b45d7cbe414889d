use std::path::PathBuf;

use anyhow::{Context, Result};
use hierseg::baselines::{classification_metrics, regression_metrics, IdfVariant, LinearClassifier, RidgeRegression, TfidfModel};
use hierseg::corpus::{binarize, Session, Target};
use hierseg::nn::class_weights;
use hierseg::predictor::Task;
use serde::{Deserialize, Serialize};

use super::{apply_data, default_test_fraction};
use crate::config::{load_section, write_resolved};
use crate::run::{create_out, train_test, write_json, write_split};
use crate::BaselineArgs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub corpus: PathBuf,
    pub test: Option<PathBuf>,
    pub test_fraction: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub target: Target,
    pub task: Task,
    pub idf: IdfVariant,
    /// Ridge penalty (regression).
    pub ridge_lambda: f64,
    /// L2 penalty of the hinge-loss classifier.
    pub hinge_lambda: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            corpus: PathBuf::new(),
            test: None,
            test_fraction: default_test_fraction(),
            seed: 0,
            out: PathBuf::new(),
            target: Target::Total,
            task: Task::Regression,
            idf: IdfVariant::Plain,
            ridge_lambda: 1.0,
            hinge_lambda: 0.01,
        }
    }
}

fn documents(sessions: &[Session]) -> Vec<Vec<&str>> {
    sessions
        .iter()
        .map(|s| s.utterances.iter().flat_map(|u| u.tokens.iter().map(String::as_str)).collect())
        .collect()
}

pub fn train_baseline(a: BaselineArgs) -> Result<()> {
    let mut cfg: BaselineConfig = load_section(a.common.config.as_deref(), "train-baseline")?;
    apply_data(&a.common, &a.data, &mut cfg.corpus, &mut cfg.test, &mut cfg.test_fraction, &mut cfg.out, &mut cfg.seed);
    if let Some(c) = a.code {
        cfg.target = c;
    }
    if let Some(t) = a.task {
        cfg.task = t;
    }
    if let Some(i) = a.idf {
        cfg.idf = i;
    }
    if let Some(l) = a.lambda {
        match cfg.task {
            Task::Regression => cfg.ridge_lambda = l,
            Task::Classification => cfg.hinge_lambda = l,
        }
    }
    create_out(&cfg.out)?;
    let (train, test) = train_test(&cfg.corpus, cfg.test.as_deref(), cfg.test_fraction, cfg.seed)?;
    let train_docs = documents(&train);
    let tfidf = TfidfModel::fit(&train_docs, cfg.idf)?;
    let features = |docs: &[Vec<&str>]| docs.iter().map(|d| tfidf.transform_dense(d)).collect::<Vec<_>>();
    let x_train = features(&train_docs);
    let x_test = features(&documents(&test));
    let scale = cfg.target.scale();
    let y_train = train.iter().map(|s| s.score(cfg.target)).collect::<hierseg::Result<Vec<_>>>()?;
    let y_test = test.iter().map(|s| s.score(cfg.target)).collect::<hierseg::Result<Vec<_>>>()?;

    let record = match cfg.task {
        Task::Regression => {
            let targets: Vec<f64> = y_train.iter().map(|&y| f64::from(y)).collect();
            let model = RidgeRegression::fit(&x_train, &targets, cfg.ridge_lambda, true).context("fitting ridge regression")?;
            write_json(&cfg.out.join("model.json"), &serde_json::json!({ "tfidf": tfidf, "ridge": model }))?;
            let preds: Vec<f64> = x_test.iter().map(|x| model.predict(x).clamp(0.0, f64::from(scale.full))).collect();
            let truth: Vec<f64> = y_test.iter().map(|&y| f64::from(y)).collect();
            regression_metrics(&preds, &truth)?
        }
        Task::Classification => {
            let labels = y_train.iter().map(|&y| binarize(y, scale)).collect::<hierseg::Result<Vec<_>>>()?;
            let high = labels.iter().filter(|l| **l == hierseg::corpus::BinaryLabel::High).count();
            let weights = class_weights(labels.len() - high, high)?;
            let model = LinearClassifier::fit(&x_train, &labels, weights, cfg.hinge_lambda).context("fitting linear classifier")?;
            write_json(&cfg.out.join("model.json"), &serde_json::json!({ "tfidf": tfidf, "classifier": model }))?;
            let preds: Vec<_> = x_test.iter().map(|x| model.predict(x)).collect();
            let truth = y_test.iter().map(|&y| binarize(y, scale)).collect::<hierseg::Result<Vec<_>>>()?;
            classification_metrics(&preds, &truth)?
        }
    };
    write_split(&cfg.out, &train, &test)?;
    write_json(&cfg.out.join("metrics.json"), &record)?;
    write_resolved(&cfg.out, "train-baseline", &cfg)?;
    println!("{}", serde_json::to_string(&record)?);
    Ok(())
}
