use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::synth::PlantedTruth;
use super::types::{Code, CtrsLabels, Session, Speaker, Utterance};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct UtteranceRecord {
    speaker: Speaker,
    text: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct SessionRecord {
    session_id: String,
    utterances: Vec<UtteranceRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ctrs: Option<BTreeMap<String, i64>>,
}

/// Lowercases, strips punctuation, and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

fn labels_from_record(ctrs: BTreeMap<String, i64>) -> Result<CtrsLabels> {
    let mut codes = BTreeMap::new();
    let mut total = None;
    for (key, value) in ctrs {
        let score = u32::try_from(value)
            .map_err(|_| Error::Validation(format!("negative score {value} for {key}")))?;
        if key == "total" {
            total = Some(score);
        } else {
            codes.insert(key.parse::<Code>()?, score);
        }
    }
    CtrsLabels::new(codes, total)
}

fn session_from_record(rec: SessionRecord) -> Result<Session> {
    if rec.utterances.is_empty() {
        return Err(Error::Validation(format!(
            "session {} has no utterances",
            rec.session_id
        )));
    }
    let utterances = rec
        .utterances
        .into_iter()
        .map(|u| Utterance::new(u.speaker, tokenize(&u.text)))
        .collect::<Result<Vec<_>>>()?;
    let labels = rec.ctrs.map(labels_from_record).transpose()?;
    Ok(Session {
        id: rec.session_id,
        utterances,
        labels,
    })
}

/// Parses transcript JSONL. `origin` is only used in error messages.
pub fn parse_sessions(reader: impl BufRead, origin: &Path) -> Result<Vec<Session>> {
    let mut sessions = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SessionRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        let session = session_from_record(rec).map_err(|e| match e {
            Error::Validation(msg) => {
                Error::Validation(format!("{}:{lineno}: {msg}", origin.display()))
            }
            other => other,
        })?;
        if !seen.insert(session.id.clone()) {
            return Err(Error::Validation(format!(
                "{}:{lineno}: duplicate session id {}",
                origin.display(),
                session.id
            )));
        }
        sessions.push(session);
    }
    Ok(sessions)
}

pub fn load_sessions(path: impl AsRef<Path>) -> Result<Vec<Session>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_sessions(BufReader::new(file), path)
}

fn record_from_session(s: &Session) -> SessionRecord {
    SessionRecord {
        session_id: s.id.clone(),
        utterances: s
            .utterances
            .iter()
            .map(|u| UtteranceRecord {
                speaker: u.speaker,
                text: u.tokens.join(" "),
            })
            .collect(),
        ctrs: s.labels.as_ref().map(|l| {
            let mut m: BTreeMap<String, i64> = l
                .codes
                .iter()
                .map(|(c, &v)| (c.as_str().to_string(), i64::from(v)))
                .collect();
            m.insert("total".into(), i64::from(l.total));
            m
        }),
    }
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl Iterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn save_sessions(path: impl AsRef<Path>, sessions: &[Session]) -> Result<()> {
    write_jsonl(path.as_ref(), sessions.iter().map(record_from_session))
}

pub fn save_planted(path: impl AsRef<Path>, truth: &[PlantedTruth]) -> Result<()> {
    write_jsonl(path.as_ref(), truth.iter())
}

pub fn load_planted(path: impl AsRef<Path>) -> Result<Vec<PlantedTruth>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<Session>> {
        parse_sessions(text.as_bytes(), Path::new("mem.jsonl"))
    }

    const LINE_A: &str = r#"{"session_id": "a", "utterances": [{"speaker": "T", "text": "Let's set the Agenda."}, {"speaker": "P", "text": "ok"}]}"#;
    const LINE_B: &str = r#"{"session_id": "b", "utterances": [{"speaker": "P", "text": "hi"}], "ctrs": {"ag": 4, "total": 30}}"#;

    #[test]
    fn two_lines_in_order() {
        let s = parse(&format!("{LINE_A}\n{LINE_B}\n")).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].id, "a");
        assert_eq!(s[0].utterances[0].tokens, ["lets", "set", "the", "agenda"]);
        assert_eq!(s[0].utterances[1].speaker, Speaker::Patient);
        assert!(s[0].labels.is_none());
        let l = s[1].labels.as_ref().unwrap();
        assert_eq!(l.codes[&Code::Ag], 4);
        assert_eq!(l.total, 30);
    }

    #[test]
    fn missing_utterances_names_line() {
        let err = parse(&format!("{LINE_A}\n{{\"session_id\": \"x\"}}\n")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_code_rejected() {
        let line = r#"{"session_id": "a", "utterances": [{"speaker": "T", "text": "x"}], "ctrs": {"ag": 7, "total": 7}}"#;
        assert!(matches!(parse(line), Err(Error::Validation(_))));
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(matches!(
            parse(&format!("{LINE_A}\n{LINE_A}\n")),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn total_must_match_complete_codes() {
        let codes: Vec<String> = Code::ALL.iter().map(|c| format!("\"{c}\": 2")).collect();
        let ok = format!(
            r#"{{"session_id": "a", "utterances": [{{"speaker": "T", "text": "x"}}], "ctrs": {{{}}}}}"#,
            codes.join(",")
        );
        assert_eq!(parse(&ok).unwrap()[0].labels.as_ref().unwrap().total, 22);
        let bad = ok.replace("}}", ", \"total\": 21}}");
        assert!(parse(&bad).is_err());
    }

    #[test]
    fn punctuation_only_utterance_rejected() {
        let line = r#"{"session_id": "a", "utterances": [{"speaker": "T", "text": "..."}]}"#;
        assert!(parse(line).is_err());
    }

    #[test]
    fn save_then_load() {
        let sessions = parse(&format!("{LINE_A}\n{LINE_B}\n")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        save_sessions(&p, &sessions).unwrap();
        assert_eq!(load_sessions(&p).unwrap(), sessions);
    }
}
