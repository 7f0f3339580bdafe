//! Structured temporal-segment output: parsing, formatting, metrics.
//!
//! The model answers grounding queries with the fixed template
//! `There are X relevant segments: [[start1, end1], [start2, end2], ...]`.
//! This module parses that text back into segments and scores
//! predictions with recall-at-tIoU and mean tIoU.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// A temporal interval in seconds. `start <= end`, both finite, >= 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    start: f64,
    end: f64,
}

impl Segment {
    /// Panics when the invariants are violated; use [`Segment::try_new`]
    /// for data coming from outside the process.
    pub fn new(start: f64, end: f64) -> Self {
        Segment::try_new(start, end)
            .unwrap_or_else(|e| panic!("invalid segment [{start}, {end}]: {e}"))
    }

    pub fn try_new(start: f64, end: f64) -> Result<Self, String> {
        if !start.is_finite() || !end.is_finite() {
            return Err("endpoints must be finite".into());
        }
        if start < 0.0 || end < 0.0 {
            return Err("endpoints must be >= 0".into());
        }
        if start > end {
            return Err(format!("start {start} exceeds end {end}"));
        }
        Ok(Segment { start, end })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

impl Serialize for Segment {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.start, self.end].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Segment {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [start, end] = <[f64; 2]>::deserialize(d)?;
        Segment::try_new(start, end).map_err(D::Error::custom)
    }
}

/// Temporal intersection over union.
///
/// Zero-length union with differing segments scores 0; two identical
/// point segments score 1.
pub fn tiou(a: Segment, b: Segment) -> f64 {
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    let union = a.length() + b.length() - inter;
    if union <= 0.0 {
        return if a.start == b.start && a.end == b.end { 1.0 } else { 0.0 };
    }
    inter / union
}

// ─── Parsing ───────────────────────────────────────────────────────────────

/// Parse failure; `offset` is the byte position in the input text.
#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: usize, msg: String },
    #[error("segment error at byte {offset}: {msg}")]
    Segment { offset: usize, msg: String },
}

struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn new(text: &'a str) -> Self {
        Scanner { bytes: text.as_bytes(), pos: 0 }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn fail(&self, msg: impl Into<String>) -> ParseError {
        ParseError::Format { offset: self.pos, msg: msg.into() }
    }

    /// Case-insensitive ASCII word match, whitespace before it allowed.
    fn expect_word(&mut self, word: &str) -> Result<(), ParseError> {
        self.skip_ws();
        let w = word.as_bytes();
        if self.pos + w.len() > self.bytes.len()
            || !self.bytes[self.pos..self.pos + w.len()].eq_ignore_ascii_case(w)
        {
            return Err(self.fail(format!("expected '{word}'")));
        }
        self.pos += w.len();
        Ok(())
    }

    fn expect_byte(&mut self, b: u8) -> Result<(), ParseError> {
        self.skip_ws();
        if self.pos >= self.bytes.len() || self.bytes[self.pos] != b {
            return Err(self.fail(format!("expected '{}'", b as char)));
        }
        self.pos += 1;
        Ok(())
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn parse_usize(&mut self) -> Result<usize, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.fail("expected a count"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| ParseError::Format { offset: start, msg: "count overflow".into() })
    }

    /// A float token: optional sign, digits, optional fraction/exponent.
    fn parse_f64(&mut self) -> Result<(f64, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        if self.peek_raw() == Some(b'+') || self.peek_raw() == Some(b'-') {
            self.pos += 1;
        }
        let mut saw_digit = false;
        while let Some(c) = self.peek_raw() {
            if c.is_ascii_digit() {
                saw_digit = true;
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.peek_raw() == Some(b'.') {
            self.pos += 1;
            while let Some(c) = self.peek_raw() {
                if c.is_ascii_digit() {
                    saw_digit = true;
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        if saw_digit && matches!(self.peek_raw(), Some(b'e') | Some(b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.peek_raw(), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            let mut exp_digit = false;
            while let Some(c) = self.peek_raw() {
                if c.is_ascii_digit() {
                    exp_digit = true;
                    self.pos += 1;
                } else {
                    break;
                }
            }
            if !exp_digit {
                self.pos = mark;
            }
        }
        if !saw_digit {
            return Err(ParseError::Format { offset: start, msg: "expected a number".into() });
        }
        let tok = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        let v: f64 = tok
            .parse()
            .map_err(|_| ParseError::Format { offset: start, msg: format!("bad number '{tok}'") })?;
        Ok((v, start))
    }

    fn peek_raw(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }
}

/// Parse `There are X relevant segments: [[a, b], ...]`.
///
/// Whitespace-tolerant and case-insensitive on the keywords;
/// "segment" and "segments" are both accepted. The declared count must
/// equal the list length. Errors carry the byte offset of the problem.
pub fn parse_segments(text: &str) -> Result<Vec<Segment>, ParseError> {
    let mut sc = Scanner::new(text);
    sc.expect_word("There")?;
    sc.expect_word("are")?;
    let count = sc.parse_usize()?;
    sc.expect_word("relevant")?;
    sc.expect_word("segment")?;
    // optional plural 's'
    if sc.peek_raw() == Some(b's') {
        sc.pos += 1;
    }
    sc.expect_byte(b':')?;
    sc.expect_byte(b'[')?;
    let mut segments = Vec::new();
    if sc.peek() != Some(b']') {
        loop {
            sc.expect_byte(b'[')?;
            let (start, start_off) = sc.parse_f64()?;
            sc.expect_byte(b',')?;
            let (end, _) = sc.parse_f64()?;
            sc.expect_byte(b']')?;
            let seg = Segment::try_new(start, end)
                .map_err(|msg| ParseError::Segment { offset: start_off, msg })?;
            segments.push(seg);
            match sc.peek() {
                Some(b',') => {
                    sc.pos += 1;
                }
                Some(b']') => break,
                _ => return Err(sc.fail("expected ',' or ']'")),
            }
        }
    }
    sc.expect_byte(b']')?;
    sc.skip_ws();
    if sc.pos != sc.bytes.len() {
        return Err(sc.fail("trailing content after segment list"));
    }
    if segments.len() != count {
        return Err(ParseError::Format {
            offset: sc.pos,
            msg: format!("declared {count} segments but listed {}", segments.len()),
        });
    }
    Ok(segments)
}

/// Canonical rendering; [`parse_segments`] of the result returns the
/// same list. Endpoints print with at least one decimal place.
pub fn format_segments(segments: &[Segment]) -> String {
    let body = segments
        .iter()
        .map(|s| format!("[{:?}, {:?}]", s.start, s.end))
        .collect::<Vec<_>>()
        .join(", ");
    format!("There are {} relevant segments: [{}]", segments.len(), body)
}

// ─── Metrics ───────────────────────────────────────────────────────────────

pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.3, 0.5, 0.7];

/// Recall at each tIoU threshold plus mean top-1 tIoU.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GroundingMetrics {
    /// Threshold (rendered as a string key) → fraction of queries whose
    /// top prediction reaches it. Non-increasing in the threshold.
    pub recall_at: BTreeMap<String, f64>,
    pub miou: f64,
    pub n: usize,
}

impl GroundingMetrics {
    pub fn recall(&self, tau: f64) -> Option<f64> {
        self.recall_at.get(&threshold_key(tau)).copied()
    }
}

pub fn threshold_key(tau: f64) -> String {
    format!("{tau:?}")
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction/ground-truth length mismatch: {preds} vs {gts}")]
    LengthMismatch { preds: usize, gts: usize },
    #[error("no thresholds given")]
    NoThresholds,
    #[error("id '{0}' missing from ground truth")]
    MissingGroundTruth(String),
    #[error("id '{0}' duplicated")]
    DuplicateId(String),
    #[error("prediction ids and ground-truth ids do not cover each other")]
    IdMismatch,
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Score predictions against single ground-truth segments.
///
/// The top-1 prediction is the first listed segment; an empty
/// prediction scores tIoU 0.
pub fn evaluate_grounding(
    preds: &[Vec<Segment>],
    gts: &[Segment],
    thresholds: &[f64],
) -> Result<GroundingMetrics, EvalError> {
    if preds.len() != gts.len() {
        return Err(EvalError::LengthMismatch { preds: preds.len(), gts: gts.len() });
    }
    if thresholds.is_empty() {
        return Err(EvalError::NoThresholds);
    }
    let ious: Vec<f64> = preds
        .iter()
        .zip(gts)
        .map(|(p, gt)| p.first().map_or(0.0, |top| tiou(*top, *gt)))
        .collect();
    let n = ious.len();
    let mut recall_at = BTreeMap::new();
    for &tau in thresholds {
        let hits = ious.iter().filter(|&&v| v >= tau).count();
        let r = if n == 0 { 0.0 } else { hits as f64 / n as f64 };
        recall_at.insert(threshold_key(tau), r);
    }
    let miou = if n == 0 { 0.0 } else { ious.iter().sum::<f64>() / n as f64 };
    Ok(GroundingMetrics { recall_at, miou, n })
}

// ─── JSONL interface ───────────────────────────────────────────────────────

/// One model output line: `{"id": ..., "prediction_text": ...}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub prediction_text: String,
}

/// One reference line: `{"id": ..., "segment": [start, end]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub id: String,
    pub segment: Segment,
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec =
            serde_json::from_str(&line).map_err(|source| EvalError::Json { line: i + 1, source })?;
        out.push(rec);
    }
    Ok(out)
}

/// Pair records by id (pred order), parse prediction text, evaluate.
///
/// Unparseable prediction text counts as an empty prediction (tIoU 0);
/// each such case is reported in the returned warnings.
pub fn evaluate_records(
    preds: &[PredictionRecord],
    gts: &[GroundTruthRecord],
    thresholds: &[f64],
) -> Result<(GroundingMetrics, Vec<String>), EvalError> {
    if preds.len() != gts.len() {
        return Err(EvalError::LengthMismatch { preds: preds.len(), gts: gts.len() });
    }
    let mut gt_map = BTreeMap::new();
    for g in gts {
        if gt_map.insert(g.id.as_str(), g.segment).is_some() {
            return Err(EvalError::DuplicateId(g.id.clone()));
        }
    }
    let mut warnings = Vec::new();
    let mut pred_segments = Vec::with_capacity(preds.len());
    let mut gt_segments = Vec::with_capacity(preds.len());
    let mut seen = std::collections::BTreeSet::new();
    for p in preds {
        if !seen.insert(p.id.as_str()) {
            return Err(EvalError::DuplicateId(p.id.clone()));
        }
        let gt = gt_map
            .get(p.id.as_str())
            .copied()
            .ok_or_else(|| EvalError::MissingGroundTruth(p.id.clone()))?;
        let segs = match parse_segments(&p.prediction_text) {
            Ok(s) => s,
            Err(e) => {
                warnings.push(format!("id '{}': unparseable prediction ({e}); scored 0", p.id));
                Vec::new()
            }
        };
        pred_segments.push(segs);
        gt_segments.push(gt);
    }
    if seen.len() != gt_map.len() {
        return Err(EvalError::IdMismatch);
    }
    let metrics = evaluate_grounding(&pred_segments, &gt_segments, thresholds)?;
    Ok((metrics, warnings))
}
