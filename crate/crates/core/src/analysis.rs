//! Post-hoc analyses: attention traces over session time, low/high grouping
//! of segments by estimated quality, keyword frequency comparison, and
//! report files.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::baselines::{spearman, IdfVariant, MetricsRecord, TfidfModel};
use crate::corpus::Segment;
use crate::error::{ensure, Error, Result};
use crate::sqe::LocalEstimates;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    /// Code id (or any label) the trace belongs to.
    pub code: String,
    pub n_segments: usize,
    pub mean_alpha: Vec<f64>,
    pub n_sessions: usize,
}

/// Positionwise mean of `α` over sessions with exactly `n_segments` segments.
pub fn attention_trace(code: &str, alphas: &[Vec<f64>], n_segments: usize) -> Result<AttentionTrace> {
    ensure!(n_segments > 0, Validation, "n_segments must be positive");
    let selected: Vec<&Vec<f64>> = alphas.iter().filter(|a| a.len() == n_segments).collect();
    ensure!(
        !selected.is_empty(),
        Validation,
        "no session has exactly {n_segments} segments"
    );
    let mut mean_alpha = vec![0.0; n_segments];
    for a in &selected {
        for (m, v) in mean_alpha.iter_mut().zip(a.iter()) {
            *m += v;
        }
    }
    let n = selected.len() as f64;
    mean_alpha.iter_mut().for_each(|m| *m /= n);
    Ok(AttentionTrace {
        code: code.to_string(),
        n_segments,
        mean_alpha,
        n_sessions: selected.len(),
    })
}

/// Which per-segment estimate ranks segments within a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    /// Shift-corrected `s̄_i`.
    #[default]
    Corrected,
    /// Raw `ŝ_i`. Ranks agree with `s̄_i` since the shift is constant per session.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "low50")]
    Low50,
    #[serde(rename = "high50")]
    High50,
}

/// `(session_id, segment_index)` members of each half.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SegmentGroups {
    pub low: Vec<(String, usize)>,
    pub high: Vec<(String, usize)>,
    pub skipped_sessions: usize,
}

/// Splits each session's segments at its median estimate. With an odd count
/// the median segment goes to the low half; equal estimates keep segment order.
pub fn group_segments(estimates: &[LocalEstimates], by: GroupBy) -> SegmentGroups {
    let mut groups = SegmentGroups::default();
    for e in estimates {
        let values = match by {
            GroupBy::Corrected => &e.s_bar_i,
            GroupBy::Raw => &e.s_hat_i,
        };
        if values.len() < 2 {
            warn!("session {} has a single segment; skipped in grouping", e.session_id);
            groups.skipped_sessions += 1;
            continue;
        }
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        let n_low = values.len().div_ceil(2);
        for (rank, &i) in order.iter().enumerate() {
            let slot = if rank < n_low { &mut groups.low } else { &mut groups.high };
            slot.push((e.session_id.clone(), i));
        }
    }
    groups.low.sort();
    groups.high.sort();
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentGroupReport {
    pub group: Group,
    /// Occurrences over total tokens in the group, for every word seen.
    pub term_frequency: BTreeMap<String, f64>,
    pub segment_count: usize,
    pub token_count: usize,
}

/// Term frequencies of both halves; `segments` must contain every grouped segment.
pub fn group_reports(groups: &SegmentGroups, segments: &[Segment]) -> Result<(SegmentGroupReport, SegmentGroupReport)> {
    let lookup: HashMap<(&str, usize), &Segment> = segments.iter().map(|s| ((s.session_id.as_str(), s.index), s)).collect();
    let report = |group: Group, members: &[(String, usize)]| -> Result<SegmentGroupReport> {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut total = 0usize;
        for (sid, idx) in members {
            let seg = lookup
                .get(&(sid.as_str(), *idx))
                .ok_or_else(|| Error::Validation(format!("segment {idx} of session {sid} not provided")))?;
            for t in seg.tokens() {
                *counts.entry(t.to_string()).or_default() += 1;
                total += 1;
            }
        }
        Ok(SegmentGroupReport {
            group,
            term_frequency: counts.into_iter().map(|(w, c)| (w, c as f64 / total.max(1) as f64)).collect(),
            segment_count: members.len(),
            token_count: total,
        })
    };
    Ok((report(Group::Low50, &groups.low)?, report(Group::High50, &groups.high)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ratio {
    Finite(f64),
    /// Present only in the high group.
    Infinite,
    /// Absent from both groups.
    Undefined,
}

impl std::fmt::Display for Ratio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Ratio::Finite(r) => write!(f, "{r}"),
            Ratio::Infinite => f.write_str("inf"),
            Ratio::Undefined => f.write_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordComparison {
    pub word: String,
    pub freq_low: f64,
    pub freq_high: f64,
    /// `freq_high / freq_low`.
    pub ratio: Ratio,
}

pub fn term_frequency_compare(low: &SegmentGroupReport, high: &SegmentGroupReport, words: &[String]) -> Result<Vec<WordComparison>> {
    ensure!(!words.is_empty(), Validation, "no words to compare");
    ensure!(
        low.segment_count > 0 && high.segment_count > 0,
        Validation,
        "both groups need segments"
    );
    Ok(words
        .iter()
        .map(|w| {
            let freq_low = low.term_frequency.get(w).copied().unwrap_or(0.0);
            let freq_high = high.term_frequency.get(w).copied().unwrap_or(0.0);
            let ratio = match (freq_low > 0.0, freq_high > 0.0) {
                (true, _) => Ratio::Finite(freq_high / freq_low),
                (false, true) => Ratio::Infinite,
                (false, false) => Ratio::Undefined,
            };
            WordComparison {
                word: w.clone(),
                freq_low,
                freq_high,
                ratio,
            }
        })
        .collect())
}

/// Term-frequency features of `documents` over `words`, one row per document.
pub fn tf_rows<D: AsRef<[S]>, S: AsRef<str>>(documents: &[D], words: &[String]) -> Result<Vec<Vec<f64>>> {
    let model = TfidfModel::fit(documents, IdfVariant::TermFrequency)?;
    Ok(documents
        .iter()
        .map(|d| {
            let f = model.transform(d.as_ref());
            words.iter().map(|w| model.value(&f, w)).collect()
        })
        .collect())
}

/// The `n` words whose term frequency has the largest absolute Spearman
/// correlation with `targets`; ties go to the lexicographically smaller word.
/// Words with constant frequency are skipped.
pub fn top_correlated_words<D: AsRef<[S]>, S: AsRef<str>>(documents: &[D], targets: &[f64], n: usize) -> Result<Vec<(String, f64)>> {
    ensure!(documents.len() == targets.len(), Shape, "{} documents for {} targets", documents.len(), targets.len());
    let model = TfidfModel::fit(documents, IdfVariant::TermFrequency)?;
    let words: Vec<String> = model.vocabulary.keys().cloned().collect();
    let rows: Vec<Vec<f64>> = documents.iter().map(|d| model.transform_dense(d.as_ref())).collect();
    let mut scored = Vec::new();
    for (j, w) in words.iter().enumerate() {
        let column: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        if let Ok(rho) = spearman(&column, targets) {
            scored.push((w.clone(), rho));
        }
    }
    scored.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(n);
    Ok(scored)
}

/// Everything a report directory is built from.
#[derive(Debug, Clone, Default)]
pub struct ReportInputs {
    /// `(approach, metrics)` rows.
    pub metrics: Vec<(String, MetricsRecord)>,
    pub traces: Vec<AttentionTrace>,
    pub words: Vec<WordComparison>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn file_stem(code: &str) -> String {
    code.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

/// Writes `metrics.csv`, `groups.csv`, and per trace `trace_<code>.csv` plus
/// `trace_<code>.svg`. Output depends only on the inputs.
pub fn emit_report(out_dir: impl AsRef<Path>, inputs: &ReportInputs) -> Result<Vec<String>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let mut csv = String::from("approach,n_examples,rmse,mae,macro_f1\n");
    for (name, m) in &inputs.metrics {
        writeln!(csv, "{name},{},{},{},{}", m.n_examples, opt(m.rmse), opt(m.mae), opt(m.macro_f1)).expect("string write");
    }
    write(&dir.join("metrics.csv"), &csv)?;
    written.push("metrics.csv".to_string());

    let mut csv = String::from("word,freq_low,freq_high,ratio\n");
    for w in &inputs.words {
        writeln!(csv, "{},{},{},{}", w.word, w.freq_low, w.freq_high, w.ratio).expect("string write");
    }
    write(&dir.join("groups.csv"), &csv)?;
    written.push("groups.csv".to_string());

    for t in &inputs.traces {
        let stem = format!("trace_{}", file_stem(&t.code));
        let mut csv = String::from("position,mean_alpha,n_sessions\n");
        for (i, a) in t.mean_alpha.iter().enumerate() {
            writeln!(csv, "{},{a},{}", i + 1, t.n_sessions).expect("string write");
        }
        write(&dir.join(format!("{stem}.csv")), &csv)?;
        write(&dir.join(format!("{stem}.svg")), &trace_svg(t))?;
        written.push(format!("{stem}.csv"));
        written.push(format!("{stem}.svg"));
    }
    Ok(written)
}

/// Line chart of a trace with the uniform level dashed.
pub fn trace_svg(trace: &AttentionTrace) -> String {
    const W: f64 = 480.0;
    const H: f64 = 300.0;
    const PAD: f64 = 40.0;
    let n = trace.mean_alpha.len();
    let top = trace.mean_alpha.iter().copied().fold(1.0 / n as f64, f64::max) * 1.1;
    let x = |i: usize| PAD + if n > 1 { i as f64 / (n - 1) as f64 * (W - 2.0 * PAD) } else { (W - 2.0 * PAD) / 2.0 };
    let y = |a: f64| H - PAD - a / top * (H - 2.0 * PAD);
    let points: Vec<String> = trace
        .mean_alpha
        .iter()
        .enumerate()
        .map(|(i, &a)| format!("{:.2},{:.2}", x(i), y(a)))
        .collect();
    let mut svg = String::new();
    writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#).unwrap();
    writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(
        svg,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{} ({} sessions, {} segments)</text>"#,
        W / 2.0,
        trace.code,
        trace.n_sessions,
        n
    )
    .unwrap();
    writeln!(svg, r#"<line x1="{PAD}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#, H - PAD, W - PAD).unwrap();
    writeln!(svg, r#"<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}" stroke="black"/>"#, H - PAD).unwrap();
    let u = y(1.0 / n as f64);
    writeln!(svg, r#"<line x1="{PAD}" y1="{u:.2}" x2="{}" y2="{u:.2}" stroke="gray" stroke-dasharray="4 4"/>"#, W - PAD).unwrap();
    writeln!(svg, r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#, points.join(" ")).unwrap();
    for (i, p) in points.iter().enumerate() {
        let (px, py) = p.split_once(',').expect("formatted pair");
        writeln!(svg, r#"<circle cx="{px}" cy="{py}" r="3" fill="steelblue"/>"#).unwrap();
        writeln!(
            svg,
            r#"<text x="{px}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
            H - PAD + 14.0,
            i + 1
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}
