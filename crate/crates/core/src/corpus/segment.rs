use serde::{Deserialize, Serialize};

use super::types::{Segment, Session};
use crate::error::{ensure, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    /// Utterances per segment.
    pub m: usize,
    /// First-segment lengths used for augmentation.
    #[serde(default)]
    pub augmentation_offsets: Vec<usize>,
}

impl SegmentationConfig {
    pub fn new(m: usize) -> Result<Self> {
        let cfg = Self {
            m,
            augmentation_offsets: Vec::new(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The eight first-segment offsets `5, 10, ..., 40` scaled to `m`.
    pub fn with_default_offsets(m: usize) -> Result<Self> {
        let mut cfg = Self::new(m)?;
        let mut offsets: Vec<usize> = (1..=8).map(|k| (k * m).div_ceil(8).max(1)).collect();
        offsets.dedup();
        cfg.augmentation_offsets = offsets;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.m >= 1, Validation, "segment length M must be at least 1");
        for &o in &self.augmentation_offsets {
            ensure!(
                (1..=self.m).contains(&o),
                Validation,
                "augmentation offset {o} outside [1, {}]",
                self.m
            );
        }
        Ok(())
    }
}

/// Splits a session into consecutive chunks of `m` utterances; the last one keeps the remainder.
pub fn segment_session(session: &Session, cfg: &SegmentationConfig) -> Result<Vec<Segment>> {
    cfg.validate()?;
    ensure!(
        !session.utterances.is_empty(),
        Validation,
        "session {} has no utterances",
        session.id
    );
    Ok(chunk(session, 0, cfg.m))
}

fn chunk(session: &Session, first: usize, m: usize) -> Vec<Segment> {
    let utts = &session.utterances;
    let mut bounds = Vec::new();
    let mut start = 0;
    if first > 0 {
        let end = first.min(utts.len());
        bounds.push((0, end));
        start = end;
    }
    while start < utts.len() {
        let end = (start + m).min(utts.len());
        bounds.push((start, end));
        start = end;
    }
    bounds
        .into_iter()
        .enumerate()
        .map(|(index, (a, b))| Segment {
            session_id: session.id.clone(),
            index,
            utterances: utts[a..b].to_vec(),
        })
        .collect()
}

/// One segmentation per offset, with the first segment shortened to that offset.
/// Returns the union of all resulting segments.
pub fn augment_segmentations(session: &Session, cfg: &SegmentationConfig) -> Result<Vec<Segment>> {
    cfg.validate()?;
    ensure!(
        !cfg.augmentation_offsets.is_empty(),
        Validation,
        "no augmentation offsets configured"
    );
    ensure!(
        !session.utterances.is_empty(),
        Validation,
        "session {} has no utterances",
        session.id
    );
    Ok(cfg
        .augmentation_offsets
        .iter()
        .flat_map(|&o| chunk(session, o, cfg.m))
        .collect())
}
