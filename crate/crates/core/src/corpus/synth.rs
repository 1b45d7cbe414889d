//! Synthetic transcripts with planted per-segment quality.
//!
//! Every session is built from planted segments of `utterances_per_segment`
//! utterances (the last may be shorter). Each planted segment has a quality
//! `q` in `[0, 6]`; tokens are keywords with a probability that rises linearly
//! in `q`, otherwise uniform background words. Code labels are the
//! utterance-weighted mean of `q` plus Gaussian noise, rounded half-to-even and
//! clamped; the total is the sum of the eleven codes.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::types::{Code, CtrsLabels, Session, Speaker, Utterance};
use crate::error::{ensure, Result};

const MAX_QUALITY: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityProfile {
    /// Independent draws per segment.
    Flat,
    /// Quality concentrated at the start of the session.
    EarlyPeaked,
    /// Quality concentrated at the end of the session.
    LatePeaked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_sessions: usize,
    /// Inclusive range of planted segments per session.
    pub segments_per_session: (usize, usize),
    pub utterances_per_segment: usize,
    /// Inclusive range of tokens per utterance.
    pub tokens_per_utterance: (usize, usize),
    pub background_vocab_size: usize,
    pub keywords: Vec<String>,
    /// Per-token keyword probability at `q = 0` and at `q = 6`.
    pub keyword_rate: (f64, f64),
    pub quality_profile: QualityProfile,
    /// Planted qualities are drawn inside this sub-range of `[0, 6]`.
    pub quality_range: (f64, f64),
    /// Standard deviation of per-segment quality jitter.
    pub segment_jitter: f64,
    /// Label noise standard deviation, in normalized `[-1, 1]` units.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_sessions: 200,
            segments_per_session: (6, 10),
            utterances_per_segment: 40,
            tokens_per_utterance: (4, 8),
            background_vocab_size: 400,
            keywords: [
                "agenda", "homework", "feedback", "evidence", "summary", "helpful", "feeling",
                "practice",
            ]
            .map(String::from)
            .to_vec(),
            keyword_rate: (0.01, 0.15),
            quality_profile: QualityProfile::Flat,
            quality_range: (0.0, MAX_QUALITY),
            segment_jitter: 0.3,
            noise_std: 0.1,
            seed: 0,
        }
    }
}

/// Planted per-segment qualities of one generated session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub session_id: String,
    pub segment_qualities: Vec<f64>,
    #[serde(rename = "M")]
    pub m: usize,
}

impl PlantedTruth {
    /// Planted quality of the utterance at `position` within the session.
    pub fn quality_at(&self, position: usize) -> f64 {
        let i = (position / self.m).min(self.segment_qualities.len() - 1);
        self.segment_qualities[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub sessions: Vec<Session>,
    pub truth: Vec<PlantedTruth>,
}

pub fn background_word(i: usize) -> String {
    format!("w{i:04}")
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let (smin, smax) = self.segments_per_session;
        ensure!(smin >= 1 && smin <= smax, Validation, "bad segments_per_session {smin}..{smax}");
        let (tmin, tmax) = self.tokens_per_utterance;
        ensure!(tmin >= 1 && tmin <= tmax, Validation, "bad tokens_per_utterance {tmin}..{tmax}");
        ensure!(self.utterances_per_segment >= 1, Validation, "utterances_per_segment must be positive");
        ensure!(self.background_vocab_size >= 1, Validation, "background vocabulary is empty");
        ensure!(self.noise_std >= 0.0 && self.noise_std.is_finite(), Validation, "noise_std must be >= 0");
        ensure!(self.segment_jitter >= 0.0 && self.segment_jitter.is_finite(), Validation, "segment_jitter must be >= 0");
        let (r0, r1) = self.keyword_rate;
        ensure!(
            (0.0..=1.0).contains(&r0) && (0.0..=1.0).contains(&r1) && r0 <= r1,
            Validation,
            "keyword_rate must satisfy 0 <= low <= high <= 1"
        );
        let (lo, hi) = self.quality_range;
        ensure!(
            (0.0..=MAX_QUALITY).contains(&lo) && (0.0..=MAX_QUALITY).contains(&hi) && lo <= hi,
            Validation,
            "quality_range must lie inside [0, 6]"
        );
        let background: HashSet<String> = (0..self.background_vocab_size).map(background_word).collect();
        let mut seen = HashSet::new();
        for k in &self.keywords {
            ensure!(
                !k.is_empty() && k.chars().all(|c| c.is_alphanumeric() && !c.is_uppercase()),
                Validation,
                "keyword {k:?} is not a lowercase token"
            );
            ensure!(!background.contains(k), Validation, "keyword {k:?} collides with the background vocabulary");
            ensure!(seen.insert(k), Validation, "duplicate keyword {k:?}");
        }
        Ok(())
    }

    fn keyword_prob(&self, q: f64) -> f64 {
        let (r0, r1) = self.keyword_rate;
        r0 + (r1 - r0) * q / MAX_QUALITY
    }

    fn plant(&self, n: usize, rng: &mut ChaCha8Rng, jitter: &Normal<f64>) -> Vec<f64> {
        let (lo, hi) = self.quality_range;
        let draw = |rng: &mut ChaCha8Rng, a: f64, b: f64| if b > a { rng.random_range(a..=b) } else { a };
        let amplitude = draw(rng, 0.0, 1.0);
        (0..n)
            .map(|i| {
                let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
                let base = match self.quality_profile {
                    QualityProfile::Flat => draw(rng, lo, hi),
                    QualityProfile::EarlyPeaked => lo + (hi - lo) * amplitude * (1.0 - t).powi(2),
                    QualityProfile::LatePeaked => lo + (hi - lo) * amplitude * t.powi(2),
                };
                (base + jitter.sample(rng)).clamp(lo, hi)
            })
            .collect()
    }
}

pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let jitter = Normal::new(0.0, spec.segment_jitter).expect("validated jitter");
    let label_noise = Normal::new(0.0, spec.noise_std * MAX_QUALITY / 2.0).expect("validated noise");
    let ups = spec.utterances_per_segment;
    let mut sessions = Vec::with_capacity(spec.n_sessions);
    let mut truth = Vec::with_capacity(spec.n_sessions);

    for s in 0..spec.n_sessions {
        let id = format!("s{s:05}");
        let n_seg = rng.random_range(spec.segments_per_session.0..=spec.segments_per_session.1);
        let qualities = spec.plant(n_seg, &mut rng, &jitter);
        let last_len = rng.random_range(ups.div_ceil(2)..=ups);

        let mut utterances = Vec::new();
        let mut weighted = 0.0;
        for (i, &q) in qualities.iter().enumerate() {
            let len = if i + 1 == n_seg { last_len } else { ups };
            weighted += q * len as f64;
            let p_kw = spec.keyword_prob(q);
            for _ in 0..len {
                let n_tok = rng.random_range(spec.tokens_per_utterance.0..=spec.tokens_per_utterance.1);
                let tokens = (0..n_tok)
                    .map(|_| {
                        if !spec.keywords.is_empty() && rng.random::<f64>() < p_kw {
                            spec.keywords[rng.random_range(0..spec.keywords.len())].clone()
                        } else {
                            background_word(rng.random_range(0..spec.background_vocab_size))
                        }
                    })
                    .collect();
                let speaker = if utterances.len() % 2 == 0 {
                    Speaker::Therapist
                } else {
                    Speaker::Patient
                };
                utterances.push(Utterance { speaker, tokens });
            }
        }
        let mean_q = weighted / utterances.len() as f64;
        let codes: BTreeMap<Code, u32> = Code::ALL
            .into_iter()
            .map(|c| {
                let noisy = (mean_q + label_noise.sample(&mut rng)).round_ties_even();
                (c, noisy.clamp(0.0, MAX_QUALITY) as u32)
            })
            .collect();
        let labels = CtrsLabels::new(codes, None)?;
        truth.push(PlantedTruth {
            session_id: id.clone(),
            segment_qualities: qualities,
            m: ups,
        });
        sessions.push(Session {
            id,
            utterances,
            labels: Some(labels),
        });
    }
    Ok(SyntheticCorpus { sessions, truth })
}
