use std::path::PathBuf;

use anyhow::{Context, Result};
use hierseg::corpus::{generate_synthetic_corpus, save_planted, save_sessions, SyntheticSpec};
use serde::{Deserialize, Serialize};

use crate::config::{load_section, write_resolved};
use crate::run::create_out;
use crate::GenCorpusArgs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct GenCorpusConfig {
    pub out: PathBuf,
    pub spec: SyntheticSpec,
}

pub fn gen_corpus(a: GenCorpusArgs) -> Result<()> {
    let mut cfg: GenCorpusConfig = load_section(a.common.config.as_deref(), "gen-corpus")?;
    if let Some(o) = a.common.out {
        cfg.out = o;
    }
    if let Some(s) = a.common.seed {
        cfg.spec.seed = s;
    }
    if let Some(n) = a.n_sessions {
        cfg.spec.n_sessions = n;
    }
    if let Some(p) = a.profile {
        cfg.spec.quality_profile = p;
    }
    if let Some(n) = a.noise_std {
        cfg.spec.noise_std = n;
    }
    if let Some(m) = a.m {
        cfg.spec.utterances_per_segment = m;
    }
    create_out(&cfg.out)?;
    let corpus = generate_synthetic_corpus(&cfg.spec).context("generating corpus")?;
    save_sessions(cfg.out.join("corpus.jsonl"), &corpus.sessions)?;
    save_planted(cfg.out.join("planted.jsonl"), &corpus.truth)?;
    write_resolved(&cfg.out, "gen-corpus", &cfg)?;
    println!("wrote {} sessions to {}", corpus.sessions.len(), cfg.out.display());
    Ok(())
}
