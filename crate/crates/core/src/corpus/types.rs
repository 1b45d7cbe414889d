use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::scale::ScoreScale;
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    #[serde(rename = "T")]
    Therapist,
    #[serde(rename = "P")]
    Patient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub speaker: Speaker,
    pub tokens: Vec<String>,
}

impl Utterance {
    pub fn new(speaker: Speaker, tokens: Vec<String>) -> Result<Self> {
        ensure!(!tokens.is_empty(), Validation, "utterance has no tokens");
        Ok(Self { speaker, tokens })
    }
}

/// The eleven CTRS items, in the order they are listed on the rating form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Code {
    Ag,
    At,
    Co,
    Fb,
    Gd,
    Hw,
    Ip,
    Cb,
    Pt,
    Sc,
    Un,
}

impl Code {
    pub const ALL: [Code; 11] = [
        Code::Ag,
        Code::At,
        Code::Co,
        Code::Fb,
        Code::Gd,
        Code::Hw,
        Code::Ip,
        Code::Cb,
        Code::Pt,
        Code::Sc,
        Code::Un,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Code::Ag => "ag",
            Code::At => "at",
            Code::Co => "co",
            Code::Fb => "fb",
            Code::Gd => "gd",
            Code::Hw => "hw",
            Code::Ip => "ip",
            Code::Cb => "cb",
            Code::Pt => "pt",
            Code::Sc => "sc",
            Code::Un => "un",
        }
    }
}

impl FromStr for Code {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Code::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown CTRS code {s:?}")))
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which session score a model is trained against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Code(Code),
    Total,
}

impl Target {
    pub fn scale(self) -> ScoreScale {
        match self {
            Target::Code(_) => ScoreScale::CODE,
            Target::Total => ScoreScale::TOTAL,
        }
    }

    pub fn score(self, labels: &CtrsLabels) -> Option<u32> {
        match self {
            Target::Code(c) => labels.codes.get(&c).copied(),
            Target::Total => Some(labels.total),
        }
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "total" {
            Ok(Target::Total)
        } else {
            s.parse().map(Target::Code)
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Code(c) => c.fmt(f),
            Target::Total => f.write_str("total"),
        }
    }
}

impl Serialize for Target {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Target {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CtrsLabels {
    pub codes: BTreeMap<Code, u32>,
    pub total: u32,
}

impl CtrsLabels {
    /// Validates ranges and, when every code is present, that the total is their sum.
    /// A missing total is filled in from a complete set of codes.
    pub fn new(codes: BTreeMap<Code, u32>, total: Option<u32>) -> Result<Self> {
        for (code, &score) in &codes {
            ensure!(
                score <= ScoreScale::CODE.full,
                Validation,
                "score {score} for code {code} outside [0, {}]",
                ScoreScale::CODE.full
            );
        }
        let complete = codes.len() == Code::ALL.len();
        let sum: u32 = codes.values().sum();
        let total = match total {
            Some(t) => t,
            None if complete => sum,
            None => {
                return Err(Error::Validation(
                    "total missing and not all codes present".into(),
                ))
            }
        };
        ensure!(
            total <= ScoreScale::TOTAL.full,
            Validation,
            "total {total} outside [0, {}]",
            ScoreScale::TOTAL.full
        );
        ensure!(
            !complete || total == sum,
            Validation,
            "total {total} differs from the sum of codes {sum}"
        );
        Ok(Self { codes, total })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub id: String,
    pub utterances: Vec<Utterance>,
    pub labels: Option<CtrsLabels>,
}

impl Session {
    pub fn token_count(&self) -> usize {
        self.utterances.iter().map(|u| u.tokens.len()).sum()
    }

    /// Label for `target`, or an error naming the session when it is unlabeled.
    pub fn score(&self, target: Target) -> Result<u32> {
        self.labels
            .as_ref()
            .and_then(|l| target.score(l))
            .ok_or_else(|| Error::Validation(format!("session {} has no {target} label", self.id)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub session_id: String,
    pub index: usize,
    pub utterances: Vec<Utterance>,
}

impl Segment {
    pub fn utterance_count(&self) -> usize {
        self.utterances.len()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.utterances
            .iter()
            .flat_map(|u| u.tokens.iter().map(String::as_str))
    }
}
