//! Records, corpora, JSONL/CSV IO and seed sampling.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Positive,
    Negative,
}

impl Sentiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Sentiment::Positive => "positive",
            Sentiment::Negative => "negative",
        }
    }
}

impl std::str::FromStr for Sentiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" => Ok(Sentiment::Positive),
            "negative" => Ok(Sentiment::Negative),
            other => Err(Error::invalid(format!("unknown sentiment {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    #[default]
    PrivateSeed,
    AbstractionCandidate,
    DpCandidate,
    Variant,
    Synthetic,
    Refined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentiment: Option<Sentiment>,
    #[serde(default)]
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lineage: Option<String>,
}

impl CorpusRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            sentiment: None,
            role: Role::PrivateSeed,
            lineage: None,
        }
    }

    pub fn with_sentiment(mut self, s: Option<Sentiment>) -> Self {
        self.sentiment = s;
        self
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn with_lineage(mut self, parent: impl Into<String>) -> Self {
        self.lineage = Some(parent.into());
        self
    }
}

/// An ordered collection of records with unique ids and non-blank texts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    records: Vec<CorpusRecord>,
}

impl Corpus {
    pub fn new(records: Vec<CorpusRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if r.text.trim().is_empty() {
                return Err(Error::invalid(format!("record {:?} has empty text", r.id)));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[CorpusRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<CorpusRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, CorpusRecord> {
        self.records.iter()
    }

    pub fn texts(&self) -> Vec<String> {
        self.records.iter().map(|r| r.text.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&CorpusRecord> {
        self.records.iter().find(|r| r.id == id)
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a CorpusRecord;
    type IntoIter = std::slice::Iter<'a, CorpusRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(Error::invalid(format!("unknown corpus format {other:?}"))),
        }
    }
}

/// Id given to the record at `index` when the file omits one.
pub fn default_id(index: usize) -> String {
    format!("{index:08}")
}

#[derive(Deserialize)]
struct RawRecord {
    #[serde(default)]
    id: Option<String>,
    text: String,
    #[serde(default)]
    sentiment: Option<Sentiment>,
    #[serde(default)]
    role: Option<Role>,
    #[serde(default)]
    lineage: Option<String>,
}

pub fn load_corpus(path: &Path, format: Format) -> Result<Corpus> {
    let raw = match format {
        Format::Jsonl => read_jsonl(path)?,
        Format::Csv => read_csv(path)?,
    };
    let mut records = Vec::with_capacity(raw.len());
    let mut seen = HashSet::new();
    for (index, (line, r)) in raw.into_iter().enumerate() {
        if r.text.trim().is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "text is empty".into(),
            });
        }
        let id = r.id.unwrap_or_else(|| default_id(index));
        if !seen.insert(id.clone()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("duplicate id {id:?}"),
            });
        }
        records.push(CorpusRecord {
            id,
            text: r.text,
            sentiment: r.sentiment,
            role: r.role.unwrap_or_default(),
            lineage: r.lineage,
        });
    }
    Corpus::new(records)
}

fn read_jsonl(path: &Path) -> Result<Vec<(usize, RawRecord)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        out.push((line_no, rec));
    }
    Ok(out)
}

fn read_csv(path: &Path) -> Result<Vec<(usize, RawRecord)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<RawRecord>().enumerate() {
        // Header is line 1.
        let line_no = i + 2;
        let mut rec = row.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        if rec.id.as_deref().is_some_and(|s| s.is_empty()) {
            rec.id = None;
        }
        out.push((line_no, rec));
    }
    Ok(out)
}

pub fn save_jsonl(corpus: &Corpus, path: &Path) -> Result<()> {
    write_jsonl(corpus.records(), path)
}

pub fn write_jsonl(records: &[CorpusRecord], path: &Path) -> Result<()> {
    write_json_lines(records, path)
}

/// Parses one JSON value per non-blank line.
pub fn read_json_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(v);
    }
    Ok(out)
}

/// One JSON value per line.
pub fn write_json_lines<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in items {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Uniform sample of `n` distinct records, without replacement, in draw order.
pub fn sample_seeds(corpus: &Corpus, n: usize, rng: &mut RngStream) -> Result<Corpus> {
    if n == 0 || n > corpus.len() {
        return Err(Error::invalid(format!(
            "cannot sample {n} seeds from a corpus of {}",
            corpus.len()
        )));
    }
    let picked = rand::seq::index::sample(rng, corpus.len(), n);
    let records = picked.iter().map(|i| corpus.records[i].clone()).collect();
    Ok(Corpus { records })
}
