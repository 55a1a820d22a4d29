//! Inverted index over a passage corpus, scored with BM25.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{distinct, tokenize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub text: String,
}

impl Passage {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Passage {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// BM25 free parameters. The defaults are the values tuned on MS MARCO passage retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Bm25Params {
    pub const DEFAULT_K1: f64 = 0.82;
    pub const DEFAULT_B: f64 = 0.68;

    pub fn new(k1: f64, b: f64) -> Result<Self> {
        let params = Bm25Params { k1, b };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k1 >= 0.0 && self.k1.is_finite()) {
            return Err(Error::InvalidParameter(format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidParameter(format!("b must be in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params {
            k1: Self::DEFAULT_K1,
            b: Self::DEFAULT_B,
        }
    }
}

/// A single posting: internal document number and term frequency (always >= 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

/// Immutable once built; safe to share across threads for concurrent searches.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    ids: Vec<String>,
    lookup: HashMap<String, u32>,
    doc_lengths: Vec<u32>,
    postings: HashMap<String, Vec<Posting>>,
    total_length: u64,
}

/// Non-negative BM25 idf: `ln((N - df + 0.5) / (df + 0.5) + 1)`.
pub fn idf(total_docs: usize, doc_freq: usize) -> f64 {
    let n = total_docs as f64;
    let df = doc_freq as f64;
    ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.chars().any(char::is_whitespace) {
        return Err(Error::InvalidPassageId(id.to_string()));
    }
    Ok(())
}

impl InvertedIndex {
    pub fn build<I>(passages: I) -> Result<Self>
    where
        I: IntoIterator,
        I::Item: std::borrow::Borrow<Passage>,
    {
        let mut index = InvertedIndex {
            ids: Vec::new(),
            lookup: HashMap::new(),
            doc_lengths: Vec::new(),
            postings: HashMap::new(),
            total_length: 0,
        };
        for passage in passages {
            let passage: &Passage = std::borrow::Borrow::borrow(&passage);
            check_id(&passage.id)?;
            if index.lookup.contains_key(&passage.id) {
                return Err(Error::DuplicatePassage(passage.id.clone()));
            }
            let doc = u32::try_from(index.ids.len())
                .map_err(|_| Error::InvalidParameter("corpus exceeds u32::MAX passages".into()))?;
            let terms = tokenize(&passage.text);

            let mut counts: Vec<(String, u32)> = Vec::new();
            let mut slot: HashMap<&str, usize> = HashMap::new();
            for term in &terms {
                match slot.get(term.as_str()) {
                    Some(&i) => counts[i].1 += 1,
                    None => {
                        slot.insert(term, counts.len());
                        counts.push((term.clone(), 1));
                    }
                }
            }
            for (term, tf) in counts {
                index.postings.entry(term).or_default().push(Posting { doc, tf });
            }

            index.ids.push(passage.id.clone());
            index.lookup.insert(passage.id.clone(), doc);
            index.doc_lengths.push(terms.len() as u32);
            index.total_length += terms.len() as u64;
        }
        Ok(index)
    }

    pub fn total_docs(&self) -> usize {
        self.ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        if self.ids.is_empty() {
            0.0
        } else {
            self.total_length as f64 / self.ids.len() as f64
        }
    }

    pub fn passage_ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, pid: &str) -> bool {
        self.lookup.contains_key(pid)
    }

    pub fn doc_length(&self, pid: &str) -> Option<u32> {
        self.lookup.get(pid).map(|&d| self.doc_lengths[d as usize])
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Postings resolved to passage ids.
    pub fn postings_by_id(&self, term: &str) -> Vec<(&str, u32)> {
        self.postings(term)
            .iter()
            .map(|p| (self.ids[p.doc as usize].as_str(), p.tf))
            .collect()
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn idf(&self, term: &str) -> f64 {
        idf(self.total_docs(), self.doc_freq(term))
    }

    pub fn num_terms(&self) -> usize {
        self.postings.len()
    }

    fn term_weight(&self, idf: f64, tf: u32, doc: u32, params: &Bm25Params) -> f64 {
        let tf = f64::from(tf);
        let len = f64::from(self.doc_lengths[doc as usize]);
        let norm = 1.0 - params.b + params.b * len / self.avg_doc_length();
        idf * tf * (params.k1 + 1.0) / (tf + params.k1 * norm)
    }

    /// BM25 score of one passage. Repeated query terms count once.
    pub fn bm25_score(&self, query_terms: &[String], pid: &str, params: &Bm25Params) -> Result<f64> {
        let doc = *self
            .lookup
            .get(pid)
            .ok_or_else(|| Error::UnknownPassage(pid.to_string()))?;
        let mut score = 0.0;
        for term in distinct(query_terms) {
            let postings = self.postings(term);
            if let Ok(i) = postings.binary_search_by_key(&doc, |p| p.doc) {
                let idf = idf(self.total_docs(), postings.len());
                score += self.term_weight(idf, postings[i].tf, doc, params);
            }
        }
        Ok(score)
    }

    /// Top-`depth` passages with a positive score, by score descending then id ascending.
    pub fn search(&self, query_terms: &[String], params: &Bm25Params, depth: usize) -> Vec<(String, f64)> {
        if depth == 0 || self.ids.is_empty() {
            return Vec::new();
        }
        let mut acc = vec![0.0f64; self.ids.len()];
        let mut touched: Vec<u32> = Vec::new();
        for term in distinct(query_terms) {
            let postings = self.postings(term);
            if postings.is_empty() {
                continue;
            }
            let idf = idf(self.total_docs(), postings.len());
            for p in postings {
                let slot = &mut acc[p.doc as usize];
                if *slot == 0.0 {
                    touched.push(p.doc);
                }
                *slot += self.term_weight(idf, p.tf, p.doc, params);
            }
        }
        touched.sort_unstable();
        touched.dedup();

        let mut hits: Vec<(u32, f64)> = touched
            .into_iter()
            .map(|d| (d, acc[d as usize]))
            .filter(|&(_, s)| s > 0.0)
            .collect();
        hits.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.ids[a.0 as usize].cmp(&self.ids[b.0 as usize]))
        });
        hits.truncate(depth);
        hits.into_iter()
            .map(|(d, s)| (self.ids[d as usize].clone(), s))
            .collect()
    }

    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        let mut terms: Vec<&String> = self.postings.keys().collect();
        terms.sort();
        let snapshot = Snapshot {
            format: SNAPSHOT_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            passages: self
                .ids
                .iter()
                .zip(&self.doc_lengths)
                .map(|(id, &length)| SnapshotPassage { id: id.clone(), length })
                .collect(),
            postings: terms
                .into_iter()
                .map(|t| (t.clone(), self.postings[t].iter().map(|p| (p.doc, p.tf)).collect()))
                .collect(),
        };
        serde_json::to_writer(writer, &snapshot)?;
        Ok(())
    }

    pub fn load<R: std::io::Read>(reader: R) -> Result<Self> {
        let snapshot: Snapshot = serde_json::from_reader(reader)?;
        if snapshot.format != SNAPSHOT_FORMAT || snapshot.version != SNAPSHOT_VERSION {
            return Err(Error::InvalidParameter(format!(
                "unsupported index snapshot {} v{}",
                snapshot.format, snapshot.version
            )));
        }
        let n = snapshot.passages.len();
        let mut index = InvertedIndex {
            ids: Vec::with_capacity(n),
            lookup: HashMap::with_capacity(n),
            doc_lengths: Vec::with_capacity(n),
            postings: HashMap::with_capacity(snapshot.postings.len()),
            total_length: 0,
        };
        for (doc, p) in snapshot.passages.into_iter().enumerate() {
            check_id(&p.id)?;
            if index.lookup.insert(p.id.clone(), doc as u32).is_some() {
                return Err(Error::DuplicatePassage(p.id));
            }
            index.ids.push(p.id);
            index.doc_lengths.push(p.length);
            index.total_length += u64::from(p.length);
        }
        for (term, list) in snapshot.postings {
            let mut postings = Vec::with_capacity(list.len());
            for (doc, tf) in list {
                if doc as usize >= n || tf == 0 || postings.last().is_some_and(|p: &Posting| p.doc >= doc) {
                    return Err(Error::InvalidParameter(format!("corrupt postings for term `{term}`")));
                }
                postings.push(Posting { doc, tf });
            }
            index.postings.insert(term, postings);
        }
        Ok(index)
    }
}

const SNAPSHOT_FORMAT: &str = "convrank-index";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Snapshot {
    format: String,
    version: u32,
    passages: Vec<SnapshotPassage>,
    postings: Vec<(String, Vec<(u32, u32)>)>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotPassage {
    id: String,
    length: u32,
}

/// Reads `id<TAB>text` lines. Blank lines are skipped.
pub fn read_corpus_tsv<R: BufRead>(reader: R) -> Result<Vec<Passage>> {
    let mut passages = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(i + 1, "expected `id<TAB>text`"))?;
        passages.push(Passage::new(id, text));
    }
    Ok(passages)
}

/// Reads one `{"id": ..., "text": ...}` object per line.
pub fn read_corpus_jsonl<R: BufRead>(reader: R) -> Result<Vec<Passage>> {
    let mut passages = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let passage: Passage =
            serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        passages.push(passage);
    }
    Ok(passages)
}

/// Loads a corpus, choosing JSON-lines for `.jsonl`/`.json` paths and TSV otherwise.
pub fn load_corpus(path: &Path) -> Result<Vec<Passage>> {
    let file = std::fs::File::open(path).map_err(|e| Error::from(e).in_file(path))?;
    let reader = std::io::BufReader::new(file);
    let jsonl = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl") | Some("json")
    );
    let parsed = if jsonl {
        read_corpus_jsonl(reader)
    } else {
        read_corpus_tsv(reader)
    };
    parsed.map_err(|e| e.in_file(path))
}
