use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Range and high/low cut-off of a session score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreScale {
    pub full: u32,
    pub threshold: u32,
}

impl ScoreScale {
    pub const CODE: ScoreScale = ScoreScale { full: 6, threshold: 4 };
    pub const TOTAL: ScoreScale = ScoreScale { full: 66, threshold: 40 };

    pub fn new(full: u32, threshold: u32) -> Result<Self> {
        ensure!(full > 0, Validation, "full-scale value must be positive");
        ensure!(
            threshold > 0 && threshold < full,
            Validation,
            "threshold {threshold} outside (0, {full})"
        );
        Ok(Self { full, threshold })
    }

    fn half(self) -> f64 {
        f64::from(self.full) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryLabel {
    Low,
    High,
}

pub fn binarize(score: u32, scale: ScoreScale) -> Result<BinaryLabel> {
    ensure!(
        score <= scale.full,
        Validation,
        "score {score} outside [0, {}]",
        scale.full
    );
    Ok(if score >= scale.threshold {
        BinaryLabel::High
    } else {
        BinaryLabel::Low
    })
}

/// Maps `[0, A]` onto `[-1, 1]` via `(s - A/2) / (A/2)`.
pub fn rescale(score: f64, scale: ScoreScale) -> Result<f64> {
    ensure!(
        score.is_finite() && (0.0..=f64::from(scale.full)).contains(&score),
        Validation,
        "score {score} outside [0, {}]",
        scale.full
    );
    Ok((score - scale.half()) / scale.half())
}

/// Inverse of [`rescale`]. Inputs outside `[-1, 1]` are clamped; the flag reports it.
pub fn unrescale(normalized: f64, scale: ScoreScale) -> (f64, bool) {
    let clamped = normalized.clamp(-1.0, 1.0);
    let was_clamped = clamped != normalized;
    if was_clamped {
        log::warn!("normalized score {normalized} clamped to [-1, 1]");
    }
    (clamped * scale.half() + scale.half(), was_clamped)
}
