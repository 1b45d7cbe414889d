//! Run-directory plumbing shared by commands.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hierseg::corpus::{load_sessions, SegmentationConfig, Session, Target};
use hierseg::pipeline::split_sessions;
use hierseg::predictor::Task;
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "run.json";
pub const SPLIT: &str = "split.json";

/// What a trained run directory contains; artifact paths are relative to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub corpus: PathBuf,
    pub test_corpus: Option<PathBuf>,
    pub target: Target,
    pub task: Task,
    pub segmentation: SegmentationConfig,
    pub encoder: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub predictor: PathBuf,
    /// Estimator and the encoder whose embeddings it was trained on (last label-update pass).
    pub sqe: Option<(PathBuf, PathBuf)>,
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn require_path(p: &Path, flag: &str) -> Result<()> {
    if p.as_os_str().is_empty() {
        bail!("{flag} is required");
    }
    Ok(())
}

pub fn create_out(out: &Path) -> Result<()> {
    require_path(out, "--out")?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

pub fn load(path: &Path) -> Result<Vec<Session>> {
    require_path(path, "--corpus")?;
    load_sessions(path).with_context(|| format!("loading corpus {}", path.display()))
}

/// Train and test sessions: an explicit test file, else a seeded split of the corpus.
pub fn train_test(corpus: &Path, test: Option<&Path>, test_fraction: f64, seed: u64) -> Result<(Vec<Session>, Vec<Session>)> {
    let sessions = load(corpus)?;
    match test {
        Some(t) => Ok((sessions, load(t)?)),
        None => Ok(split_sessions(&sessions, test_fraction, seed)?),
    }
}

pub fn write_split(dir: &Path, train: &[Session], test: &[Session]) -> Result<()> {
    let ids = |s: &[Session]| s.iter().map(|x| x.id.clone()).collect();
    write_json(
        &dir.join(SPLIT),
        &Split {
            train: ids(train),
            test: ids(test),
        },
    )
}

/// Sessions of the run's held-out part.
pub fn held_out(run: &Path, manifest: &RunManifest) -> Result<Vec<Session>> {
    if let Some(t) = &manifest.test_corpus {
        return load(t);
    }
    let split: Split = read_json(&run.join(SPLIT))?;
    let wanted: BTreeSet<&str> = split.test.iter().map(String::as_str).collect();
    let sessions: Vec<Session> = load(&manifest.corpus)?.into_iter().filter(|s| wanted.contains(s.id.as_str())).collect();
    if sessions.len() != wanted.len() {
        bail!("corpus {} no longer contains every test session of the run", manifest.corpus.display());
    }
    Ok(sessions)
}

/// Sessions of the run's training part.
pub fn training(run: &Path, manifest: &RunManifest) -> Result<Vec<Session>> {
    let split: Split = read_json(&run.join(SPLIT))?;
    let wanted: BTreeSet<&str> = split.train.iter().map(String::as_str).collect();
    Ok(load(&manifest.corpus)?.into_iter().filter(|s| wanted.contains(s.id.as_str())).collect())
}
