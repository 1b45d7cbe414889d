use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// `(column, value)` pairs sorted by column.
pub type SparseVector = Vec<(usize, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum IdfVariant {
    /// `ln(N / df)`
    #[default]
    Plain,
    /// `ln((1 + N) / (1 + df)) + 1`; words present in every document keep weight 1.
    Smooth,
    /// Constant 1: plain term frequency.
    #[serde(rename = "tf")]
    TermFrequency,
}

/// Unigram tf-idf with `tf = count / document length`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub vocabulary: BTreeMap<String, usize>,
    pub document_frequency: Vec<usize>,
    pub idf: Vec<f64>,
    pub n_documents: usize,
    pub variant: IdfVariant,
}

impl TfidfModel {
    pub fn fit<D: AsRef<[S]>, S: AsRef<str>>(documents: &[D], variant: IdfVariant) -> Result<Self> {
        ensure!(!documents.is_empty(), Validation, "cannot fit tf-idf on an empty corpus");
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in documents {
            let mut words: Vec<&str> = doc.as_ref().iter().map(AsRef::as_ref).collect();
            words.sort_unstable();
            words.dedup();
            for w in words {
                *df.entry(w.to_string()).or_default() += 1;
            }
        }
        let n = documents.len();
        let vocabulary: BTreeMap<String, usize> = df.keys().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        let document_frequency: Vec<usize> = df.into_values().collect();
        let idf = document_frequency
            .iter()
            .map(|&d| match variant {
                IdfVariant::Plain => (n as f64 / d as f64).ln(),
                IdfVariant::Smooth => ((1.0 + n as f64) / (1.0 + d as f64)).ln() + 1.0,
                IdfVariant::TermFrequency => 1.0,
            })
            .collect();
        Ok(Self {
            vocabulary,
            document_frequency,
            idf,
            n_documents: n,
            variant,
        })
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.len()
    }

    /// Features of one document; tokens unseen at fit time are dropped.
    pub fn transform<S: AsRef<str>>(&self, document: &[S]) -> SparseVector {
        if document.is_empty() {
            log::warn!("tf-idf of an empty document is the zero vector");
            return Vec::new();
        }
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for w in document {
            if let Some(&col) = self.vocabulary.get(w.as_ref()) {
                *counts.entry(col).or_default() += 1;
            }
        }
        let len = document.len() as f64;
        let mut v: SparseVector = counts
            .into_iter()
            .map(|(col, c)| (col, c as f64 / len * self.idf[col]))
            .collect();
        v.sort_unstable_by_key(|&(c, _)| c);
        v
    }

    pub fn transform_dense<S: AsRef<str>>(&self, document: &[S]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (c, v) in self.transform(document) {
            out[c] = v;
        }
        out
    }

    pub fn value(&self, features: &SparseVector, word: &str) -> f64 {
        self.vocabulary
            .get(word)
            .and_then(|&col| features.iter().find(|(c, _)| *c == col))
            .map_or(0.0, |&(_, v)| v)
    }
}
