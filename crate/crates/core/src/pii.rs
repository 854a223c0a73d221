//! Regex-based detection and redaction of structured PII.
//!
//! Each category has its own pattern. Candidate matches from all categories
//! are resolved into a non-overlapping set: longest first, then leftmost,
//! then category order.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PiiCategory {
    Email,
    Phone,
    Ssn,
    Url,
    IpAddress,
    CreditCard,
    Currency,
    Date,
}

impl PiiCategory {
    pub const ALL: [PiiCategory; 8] = [
        PiiCategory::Email,
        PiiCategory::Phone,
        PiiCategory::Ssn,
        PiiCategory::Url,
        PiiCategory::IpAddress,
        PiiCategory::CreditCard,
        PiiCategory::Currency,
        PiiCategory::Date,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PiiCategory::Email => "EMAIL",
            PiiCategory::Phone => "PHONE",
            PiiCategory::Ssn => "SSN",
            PiiCategory::Url => "URL",
            PiiCategory::IpAddress => "IP_ADDRESS",
            PiiCategory::CreditCard => "CREDIT_CARD",
            PiiCategory::Currency => "CURRENCY",
            PiiCategory::Date => "DATE",
        }
    }

    pub fn token(self) -> String {
        format!("[{}]", self.name())
    }

    fn pattern(self) -> &'static str {
        match self {
            PiiCategory::Email => r"[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)*\.[A-Za-z]{2,}\b",
            PiiCategory::Phone => {
                r"(?:\+1[-. ]?)?(?:\(\d{3}\)[-. ]?|\b\d{3}[-. ])\d{3}[-. ]\d{4}\b|\+[1-9]\d{7,14}\b"
            }
            PiiCategory::Ssn => r"\b\d{3}-\d{2}-\d{4}\b",
            PiiCategory::Url => r#"\b(?:https?://|www\.)[^\s<>"'\[\]]*[^\s<>"'\[\].,;:!?)]"#,
            PiiCategory::IpAddress => {
                r"\b(?:(?:25[0-5]|2[0-4]\d|1\d\d|[1-9]?\d)\.){3}(?:25[0-5]|2[0-4]\d|1\d\d|[1-9]?\d)\b"
            }
            PiiCategory::CreditCard => r"\b\d(?:[ -]?\d){12,18}\b",
            PiiCategory::Currency => r"[$€£¥]\s?\d{1,3}(?:,\d{3})+(?:\.\d+)?|[$€£¥]\s?\d+(?:\.\d+)?",
            PiiCategory::Date => {
                r"\b\d{4}-(?:0[1-9]|1[0-2])-(?:0[1-9]|[12]\d|3[01])\b|\b(?:0?[1-9]|1[0-2])/(?:0?[1-9]|[12]\d|3[01])/(?:\d{4}|\d{2})\b"
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PiiEntity {
    pub category: PiiCategory,
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RedactionResult {
    pub text: String,
    pub entities: Vec<PiiEntity>,
    pub counts: BTreeMap<PiiCategory, usize>,
}

/// Anything that can find PII entities in a text.
pub trait PiiDetector: Send + Sync {
    fn detect(&self, text: &str) -> Vec<PiiEntity>;
}

pub struct RegexDetector {
    patterns: Vec<(PiiCategory, Regex)>,
}

impl RegexDetector {
    pub fn new() -> Self {
        let patterns = PiiCategory::ALL
            .iter()
            .map(|&c| (c, Regex::new(c.pattern()).expect("built-in PII pattern")))
            .collect();
        Self { patterns }
    }

    /// Shared default instance.
    pub fn global() -> &'static RegexDetector {
        static DETECTOR: OnceLock<RegexDetector> = OnceLock::new();
        DETECTOR.get_or_init(RegexDetector::new)
    }
}

impl Default for RegexDetector {
    fn default() -> Self {
        Self::new()
    }
}

impl RegexDetector {
    fn candidates(&self, text: &str) -> Vec<PiiEntity> {
        let mut out = Vec::new();
        for (cat, re) in &self.patterns {
            for m in re.find_iter(text) {
                if *cat == PiiCategory::CreditCard && !luhn_valid(m.as_str()) {
                    continue;
                }
                out.push(PiiEntity {
                    category: *cat,
                    start: m.start(),
                    end: m.end(),
                    surface: m.as_str().to_string(),
                });
            }
        }
        out
    }

    /// Longest, then leftmost, then category order; greedy non-overlapping.
    fn resolve(mut candidates: Vec<PiiEntity>) -> Vec<PiiEntity> {
        candidates.sort_by(|a, b| {
            (b.end - b.start)
                .cmp(&(a.end - a.start))
                .then(a.start.cmp(&b.start))
                .then(a.category.cmp(&b.category))
        });
        let mut accepted: Vec<PiiEntity> = Vec::new();
        for c in candidates {
            if accepted.iter().all(|a| c.end <= a.start || c.start >= a.end) {
                accepted.push(c);
            }
        }
        accepted
    }
}

impl PiiDetector for RegexDetector {
    /// A rejected overlapping candidate can leave a shorter match behind once
    /// the winner is masked, so detection repeats on the masked text until
    /// nothing new appears. No pattern matches across a `[` or `]`, so every
    /// later match sits inside one untouched gap and maps back to the
    /// original text.
    fn detect(&self, text: &str) -> Vec<PiiEntity> {
        let mut accepted = Self::resolve(self.candidates(text));
        loop {
            accepted.sort_by_key(|e| e.start);
            // (offset in masked text, offset in original, length) per gap.
            let mut gaps = Vec::with_capacity(accepted.len() + 1);
            let mut masked = String::with_capacity(text.len());
            let mut cursor = 0;
            for e in &accepted {
                gaps.push((masked.len(), cursor, e.start - cursor));
                masked.push_str(&text[cursor..e.start]);
                masked.push_str(&e.category.token());
                cursor = e.end;
            }
            gaps.push((masked.len(), cursor, text.len() - cursor));
            masked.push_str(&text[cursor..]);

            let extra = Self::resolve(self.candidates(&masked));
            let mut added = false;
            for e in extra {
                let gap = gaps
                    .iter()
                    .find(|(m, _, len)| e.start >= *m && e.end <= m + len);
                if let Some(&(m, o, _)) = gap {
                    accepted.push(PiiEntity {
                        start: e.start - m + o,
                        end: e.end - m + o,
                        ..e
                    });
                    added = true;
                }
            }
            if !added {
                return accepted;
            }
        }
    }
}

fn luhn_valid(s: &str) -> bool {
    let digits: Vec<u32> = s.chars().filter_map(|c| c.to_digit(10)).collect();
    if !(13..=19).contains(&digits.len()) {
        return false;
    }
    let sum: u32 = digits
        .iter()
        .rev()
        .enumerate()
        .map(|(i, &d)| {
            if i % 2 == 1 {
                let x = d * 2;
                if x > 9 {
                    x - 9
                } else {
                    x
                }
            } else {
                d
            }
        })
        .sum();
    sum.is_multiple_of(10)
}

pub fn detect(text: &str) -> Vec<PiiEntity> {
    RegexDetector::global().detect(text)
}

/// Mask token style.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskStyle {
    #[default]
    Category,
    Generic,
}

pub fn redact(text: &str) -> RedactionResult {
    redact_with(RegexDetector::global(), text, MaskStyle::Category)
}

pub fn redact_with(detector: &dyn PiiDetector, text: &str, style: MaskStyle) -> RedactionResult {
    let entities = detector.detect(text);
    let mut out = String::with_capacity(text.len());
    let mut counts = BTreeMap::new();
    let mut cursor = 0;
    for e in &entities {
        out.push_str(&text[cursor..e.start]);
        match style {
            MaskStyle::Category => out.push_str(&e.category.token()),
            MaskStyle::Generic => out.push_str("[MASK]"),
        }
        *counts.entry(e.category).or_insert(0) += 1;
        cursor = e.end;
    }
    out.push_str(&text[cursor..]);
    RedactionResult {
        text: out,
        entities,
        counts,
    }
}

/// Fraction of records with at least one detected entity.
pub fn leak_rate(corpus: &Corpus) -> Result<f64> {
    leak_rate_with(RegexDetector::global(), corpus)
}

pub fn leak_rate_with(detector: &dyn PiiDetector, corpus: &Corpus) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::invalid("leak rate of an empty corpus"));
    }
    let leaked = corpus.iter().filter(|r| !detector.detect(&r.text).is_empty()).count();
    Ok(leaked as f64 / corpus.len() as f64)
}

/// Per-category record counts and the leak rate, as emitted by `pii-scan`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub records: usize,
    pub leaked_records: usize,
    pub leak_rate: f64,
    pub entities_per_category: BTreeMap<String, usize>,
}

pub fn scan(corpus: &Corpus) -> Result<ScanReport> {
    let det = RegexDetector::global();
    let mut per = BTreeMap::new();
    for c in PiiCategory::ALL {
        per.insert(c.name().to_string(), 0);
    }
    let mut leaked = 0;
    for r in corpus {
        let ents = det.detect(&r.text);
        if !ents.is_empty() {
            leaked += 1;
        }
        for e in ents {
            *per.get_mut(e.category.name()).expect("all categories present") += 1;
        }
    }
    Ok(ScanReport {
        records: corpus.len(),
        leaked_records: leaked,
        leak_rate: leak_rate_with(det, corpus)?,
        entities_per_category: per,
    })
}
