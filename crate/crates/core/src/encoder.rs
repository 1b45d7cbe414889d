//! Segment encoder: mean of token embeddings, a tanh projection, and a scalar
//! regression head used only while fine-tuning.
//!
//! This stands in for a pretrained transformer. What the refinement loop needs
//! from it is the contract "segment in, vector out, trainable on segment
//! scores", which a bag-of-embeddings model provides at desk scale.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Segment;
use crate::error::{ensure, Error, Result};
use crate::nn::{fit, split_validation, Activation, Checkpoint, Dense, Grads, Param, TrainConfig, TrainHistory, Trainable};

pub const UNKNOWN_TOKEN: &str = "<unk>";
/// Refined labels are clamped to this bound before fine-tuning.
pub const LABEL_BOUND: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub token_dim: usize,
    pub embedding_dim: usize,
    pub max_tokens: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            token_dim: 32,
            embedding_dim: 32,
            max_tokens: 512,
        }
    }
}

/// Token-to-index map; index 0 is reserved for unknown tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<&str> = tokens.into_iter().filter(|t| *t != UNKNOWN_TOKEN).collect();
        let tokens: Vec<String> = std::iter::once(UNKNOWN_TOKEN)
            .chain(set)
            .map(String::from)
            .collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }

    pub fn build(segments: &[Segment]) -> Self {
        Self::from_tokens(segments.iter().flat_map(Segment::tokens))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEmbedding {
    pub session_id: String,
    pub segment_index: usize,
    pub vector: Vec<f64>,
}

/// Normalized segment labels keyed by `(session_id, segment_index)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SegmentLabelSet(pub BTreeMap<(String, usize), f64>);

#[derive(Serialize, Deserialize)]
struct LabelRecord {
    session_id: String,
    segment_index: usize,
    y: f64,
}

impl SegmentLabelSet {
    pub fn get(&self, session_id: &str, index: usize) -> Option<f64> {
        self.0.get(&(session_id.to_string(), index)).copied()
    }

    pub fn insert(&mut self, session_id: &str, index: usize, y: f64) {
        self.0.insert((session_id.to_string(), index), y);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        for ((session_id, segment_index), &y) in &self.0 {
            let rec = LabelRecord {
                session_id: session_id.clone(),
                segment_index: *segment_index,
                y,
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut out = Self::default();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LabelRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            out.insert(&rec.session_id, rec.segment_index, rec.y);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub vocab: Vocabulary,
    /// `[vocab, token_dim]`
    pub embedding: Param,
    pub projection: Dense,
    pub head: Dense,
    pub max_tokens: usize,
}

/// Token ids of one segment paired with its label.
pub struct EncoderExample {
    ids: Vec<usize>,
    label: f64,
}

struct Activations {
    mean: Vec<f64>,
    embedding: Vec<f64>,
    score: f64,
}

impl EncoderModel {
    pub const KIND: &'static str = "encoder";

    pub fn new(vocab: Vocabulary, cfg: &EncoderConfig, seed: u64) -> Result<Self> {
        ensure!(
            cfg.token_dim > 0 && cfg.embedding_dim > 0 && cfg.max_tokens > 0,
            Validation,
            "encoder dimensions must be positive"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = vocab.len();
        Ok(Self {
            embedding: Param::glorot("encoder.embedding", &[v, cfg.token_dim], v, cfg.token_dim, &mut rng),
            projection: Dense::new("encoder.projection", cfg.token_dim, cfg.embedding_dim, Activation::Tanh, &mut rng),
            head: Dense::new("encoder.head", cfg.embedding_dim, 1, Activation::Linear, &mut rng),
            vocab,
            max_tokens: cfg.max_tokens,
        })
    }

    pub fn config(&self) -> EncoderConfig {
        EncoderConfig {
            token_dim: self.token_dim(),
            embedding_dim: self.embedding_dim(),
            max_tokens: self.max_tokens,
        }
    }

    pub fn token_dim(&self) -> usize {
        self.embedding.value.shape()[1]
    }

    pub fn embedding_dim(&self) -> usize {
        self.projection.output_dim()
    }

    /// Fresh regression head; the embedding table and projection are kept.
    pub fn reset_head(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.head = Dense::new("encoder.head", self.embedding_dim(), 1, Activation::Linear, &mut rng);
    }

    /// Vocabulary ids of the first `max_tokens` tokens.
    pub fn token_ids(&self, segment: &Segment) -> Result<Vec<usize>> {
        let ids: Vec<usize> = segment
            .tokens()
            .take(self.max_tokens)
            .map(|t| self.vocab.id(t))
            .collect();
        ensure!(
            !ids.is_empty(),
            Validation,
            "segment {} of session {} is empty",
            segment.index,
            segment.session_id
        );
        Ok(ids)
    }

    fn activations(&self, ids: &[usize]) -> Activations {
        let d = self.token_dim();
        let table = self.embedding.values();
        let mut mean = vec![0.0; d];
        for &id in ids {
            for (m, e) in mean.iter_mut().zip(&table[id * d..(id + 1) * d]) {
                *m += e;
            }
        }
        let n = ids.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        let embedding = self.projection.forward_vec(&mean);
        let score = self.head.forward_vec(&embedding)[0];
        Activations { mean, embedding, score }
    }

    pub fn encode(&self, segment: &Segment) -> Result<SegmentEmbedding> {
        let ids = self.token_ids(segment)?;
        Ok(SegmentEmbedding {
            session_id: segment.session_id.clone(),
            segment_index: segment.index,
            vector: self.activations(&ids).embedding,
        })
    }

    pub fn encode_all(&self, segments: &[Segment]) -> Result<Vec<SegmentEmbedding>> {
        segments.par_iter().map(|s| self.encode(s)).collect()
    }

    /// Output of the scalar regression head.
    pub fn score(&self, segment: &Segment) -> Result<f64> {
        Ok(self.activations(&self.token_ids(segment)?).score)
    }

    pub fn to_checkpoint(&self, meta: serde_json::Value) -> Checkpoint {
        let mut train_meta = serde_json::json!({
            "config": self.config(),
            "vocabulary": self.vocab.tokens(),
        });
        if let (Some(obj), serde_json::Value::Object(extra)) = (train_meta.as_object_mut(), meta) {
            obj.extend(extra);
        }
        Checkpoint::from_params(Self::KIND, self.params(), train_meta)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(Self::KIND)?;
        let cfg: EncoderConfig = serde_json::from_value(
            ck.train_meta
                .get("config")
                .cloned()
                .ok_or_else(|| Error::Checkpoint("encoder config missing".into()))?,
        )?;
        let tokens: Vec<String> = serde_json::from_value(
            ck.train_meta
                .get("vocabulary")
                .cloned()
                .ok_or_else(|| Error::Checkpoint("vocabulary missing".into()))?,
        )?;
        ensure!(
            tokens.first().map(String::as_str) == Some(UNKNOWN_TOKEN),
            Checkpoint,
            "vocabulary does not start with {UNKNOWN_TOKEN}"
        );
        let vocab = Vocabulary::from_tokens(tokens.iter().map(String::as_str));
        ensure!(vocab.tokens() == tokens.as_slice(), Checkpoint, "vocabulary is not sorted and unique");
        let mut model = Self::new(vocab, &cfg, 0)?;
        ck.restore(model.params_mut())?;
        Ok(model)
    }
}

impl Trainable for EncoderModel {
    type Example = EncoderExample;

    fn params(&self) -> Vec<&Param> {
        let mut v = vec![&self.embedding];
        v.extend(self.projection.params());
        v.extend(self.head.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let Self { embedding, projection, head, .. } = self;
        let mut v = vec![embedding];
        v.extend(projection.params_mut());
        v.extend(head.params_mut());
        v
    }

    fn loss_and_grad(&self, ex: &EncoderExample, grads: &mut Grads) -> Result<f64> {
        let a = self.activations(&ex.ids);
        let r = a.score - ex.label;
        let (g_table, rest) = grads.0.split_at_mut(1);
        let (g_proj, g_head) = rest.split_at_mut(2);
        let demb = self.head.backward_affine(&a.embedding, &[2.0 * r], g_head);
        let dmean = self.projection.backward_vec(&a.mean, &a.embedding, &demb, g_proj);
        let d = self.token_dim();
        let n = ex.ids.len() as f64;
        let g_table = &mut g_table[0];
        for &id in &ex.ids {
            for (g, dm) in g_table[id * d..(id + 1) * d].iter_mut().zip(&dmean) {
                *g += dm / n;
            }
        }
        Ok(r * r)
    }

    fn loss(&self, ex: &EncoderExample) -> Result<f64> {
        Ok((self.activations(&ex.ids).score - ex.label).powi(2))
    }
}

/// Regression fine-tuning of the whole encoder against segment labels.
///
/// Validation segments are taken from whole sessions so no session straddles the split.
pub fn finetune_encoder(model: &mut EncoderModel, segments: &[Segment], labels: &SegmentLabelSet, cfg: &TrainConfig) -> Result<TrainHistory> {
    let pairs = segments
        .iter()
        .map(|s| {
            labels
                .get(&s.session_id, s.index)
                .map(|y| (s, y))
                .ok_or_else(|| Error::Validation(format!("segment {} of session {} has no label", s.index, s.session_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    finetune_encoder_pairs(model, &pairs, cfg)
}

/// Like [`finetune_encoder`] but with labels attached to each segment, which
/// admits several segmentations of the same session.
pub fn finetune_encoder_pairs(model: &mut EncoderModel, pairs: &[(&Segment, f64)], cfg: &TrainConfig) -> Result<TrainHistory> {
    let mut examples = Vec::with_capacity(pairs.len());
    for &(s, y) in pairs {
        ensure!(
            y.is_finite() && y.abs() <= LABEL_BOUND,
            Validation,
            "label {y} of segment {} in session {} outside [-{LABEL_BOUND}, {LABEL_BOUND}]",
            s.index,
            s.session_id
        );
        examples.push((s.session_id.as_str(), EncoderExample { ids: model.token_ids(s)?, label: y }));
    }
    let sessions: Vec<&str> = examples
        .iter()
        .map(|(id, _)| *id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let (_, val_idx) = split_validation(sessions.len(), cfg.validation_fraction, cfg.seed);
    let val_sessions: HashSet<&str> = val_idx.iter().map(|&i| sessions[i]).collect();
    let (val, train): (Vec<_>, Vec<_>) = examples.into_iter().partition(|(id, _)| val_sessions.contains(id));
    let train: Vec<EncoderExample> = train.into_iter().map(|(_, e)| e).collect();
    let val: Vec<EncoderExample> = val.into_iter().map(|(_, e)| e).collect();
    fit(model, &train, &val, cfg)
}

pub fn export_embeddings(path: impl AsRef<Path>, embeddings: &[SegmentEmbedding]) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for e in embeddings {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads externally computed embeddings; all vectors must share one dimension.
pub fn import_embeddings(path: impl AsRef<Path>) -> Result<Vec<SegmentEmbedding>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<SegmentEmbedding> = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let e: SegmentEmbedding = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if let Some(first) = out.first() {
            if first.vector.len() != e.vector.len() {
                return Err(parse_err(format!(
                    "dimension {} differs from {}",
                    e.vector.len(),
                    first.vector.len()
                )));
            }
        }
        if e.vector.is_empty() || !e.vector.iter().all(|v| v.is_finite()) {
            return Err(parse_err("empty or non-finite vector".into()));
        }
        if !seen.insert((e.session_id.clone(), e.segment_index)) {
            return Err(parse_err(format!(
                "duplicate embedding for segment {} of {}",
                e.segment_index, e.session_id
            )));
        }
        out.push(e);
    }
    Ok(out)
}
