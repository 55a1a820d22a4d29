//! TREC run files and qrels.
//!
//! Run lines are `qid Q0 pid rank score tag`; qrels lines are
//! `qid 0 pid grade`. Parsing accepts any mix of spaces and tabs as well as
//! CRLF line endings. Emission uses single spaces and LF.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// One ranked passage. Its rank is its 1-based position in the owning [`RankedList`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub pid: String,
    pub score: f64,
    /// Score as it appeared in a parsed file, re-emitted verbatim.
    score_text: Option<String>,
}

impl RunEntry {
    pub fn new(pid: impl Into<String>, score: f64) -> Self {
        RunEntry {
            pid: pid.into(),
            score,
            score_text: None,
        }
    }

    pub fn score_text(&self) -> Option<&str> {
        self.score_text.as_deref()
    }

    fn render_score(&self, out: &mut String) {
        match &self.score_text {
            Some(text) => out.push_str(text),
            None => {
                let _ = write!(out, "{:.6}", self.score);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub qid: String,
    pub entries: Vec<RunEntry>,
}

impl RankedList {
    pub fn new(qid: impl Into<String>) -> Self {
        RankedList {
            qid: qid.into(),
            entries: Vec::new(),
        }
    }

    pub fn from_scores<I, S>(qid: impl Into<String>, scores: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        RankedList {
            qid: qid.into(),
            entries: scores.into_iter().map(|(pid, s)| RunEntry::new(pid, s)).collect(),
        }
    }

    pub fn pids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.pid.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn truncate(&mut self, n: usize) {
        self.entries.truncate(n);
    }

    /// Unique pids and non-increasing scores.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if !seen.insert(e.pid.as_str()) {
                return Err(Error::InvalidParameter(format!(
                    "query `{}`: duplicate passage `{}`",
                    self.qid, e.pid
                )));
            }
            if i > 0 && e.score > self.entries[i - 1].score {
                return Err(Error::InvalidParameter(format!(
                    "query `{}`: score increases at rank {}",
                    self.qid,
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Ranked lists in first-appearance qid order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
    lists: Vec<RankedList>,
    positions: HashMap<String, usize>,
    tag: Option<String>,
}

impl Run {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a list. A qid already present is replaced in place.
    pub fn push(&mut self, list: RankedList) {
        match self.positions.get(&list.qid) {
            Some(&i) => self.lists[i] = list,
            None => {
                self.positions.insert(list.qid.clone(), self.lists.len());
                self.lists.push(list);
            }
        }
    }

    pub fn lists(&self) -> &[RankedList] {
        &self.lists
    }

    pub fn get(&self, qid: &str) -> Option<&RankedList> {
        self.positions.get(qid).map(|&i| &self.lists[i])
    }

    pub fn qids(&self) -> impl Iterator<Item = &str> {
        self.lists.iter().map(|l| l.qid.as_str())
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    /// Tag of the first line of a parsed file.
    pub fn tag(&self) -> Option<&str> {
        self.tag.as_deref()
    }

    /// Checks every list, optionally bounding the entries per query.
    pub fn validate(&self, max_per_query: Option<usize>) -> Result<()> {
        for list in &self.lists {
            list.validate()?;
            if let Some(max) = max_per_query {
                if list.len() > max {
                    return Err(Error::InvalidParameter(format!(
                        "query `{}` has {} entries (max {max})",
                        list.qid,
                        list.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

impl FromIterator<RankedList> for Run {
    fn from_iter<T: IntoIterator<Item = RankedList>>(iter: T) -> Self {
        let mut run = Run::new();
        for list in iter {
            run.push(list);
        }
        run
    }
}

pub fn parse_run(input: &str) -> Result<Run> {
    let mut run = Run::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split([' ', '\t']).filter(|f| !f.is_empty()).collect();
        let [qid, q0, pid, rank, score, tag] = fields[..] else {
            return Err(Error::parse(lineno, format!("expected 6 fields, found {}", fields.len())));
        };
        if q0 != "Q0" && q0 != "0" {
            return Err(Error::parse(lineno, format!("expected `Q0` in column 2, found `{q0}`")));
        }
        let rank: usize = rank
            .parse()
            .map_err(|_| Error::parse(lineno, format!("invalid rank `{rank}`")))?;
        if rank == 0 {
            return Err(Error::parse(lineno, "rank must be >= 1"));
        }
        let value: f64 = score
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::parse(lineno, format!("invalid score `{score}`")))?;

        match &run.tag {
            None => run.tag = Some(tag.to_string()),
            Some(first) if first != tag => {
                log::warn!("line {lineno}: run tag `{tag}` differs from `{first}`");
            }
            Some(_) => {}
        }
        if !seen.insert((qid.to_string(), pid.to_string())) {
            return Err(Error::parse(lineno, format!("duplicate passage `{pid}` for query `{qid}`")));
        }

        let idx = match run.positions.get(qid) {
            Some(&idx) => idx,
            None => {
                run.push(RankedList::new(qid));
                run.lists.len() - 1
            }
        };
        let list = &mut run.lists[idx];
        if rank != list.entries.len() + 1 {
            return Err(Error::parse(
                lineno,
                format!(
                    "non-contiguous rank {rank} for query `{qid}` (expected {})",
                    list.entries.len() + 1
                ),
            ));
        }
        if let Some(prev) = list.entries.last() {
            if value > prev.score {
                return Err(Error::parse(lineno, format!("score increases at rank {rank} for query `{qid}`")));
            }
        }
        list.entries.push(RunEntry {
            pid: pid.to_string(),
            score: value,
            score_text: Some(score.to_string()),
        });
    }
    Ok(run)
}

/// One line per entry in list order; scores computed in-process get six decimals.
pub fn emit_run(run: &Run, tag: &str) -> String {
    let mut out = String::new();
    for list in run.lists() {
        for (i, entry) in list.entries.iter().enumerate() {
            let _ = write!(out, "{} Q0 {} {} ", list.qid, entry.pid, i + 1);
            entry.render_score(&mut out);
            out.push(' ');
            out.push_str(tag);
            out.push('\n');
        }
    }
    out
}

pub fn load_run(path: &Path) -> Result<Run> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    parse_run(&text).map_err(|e| e.in_file(path))
}

/// Graded judgments; absent pairs have grade 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: HashMap<String, HashMap<String, u32>>,
    order: Vec<String>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the previous grade when the pair was already judged.
    pub fn insert(&mut self, qid: impl Into<String>, pid: impl Into<String>, grade: u32) -> Option<u32> {
        let qid = qid.into();
        if !self.judgments.contains_key(&qid) {
            self.order.push(qid.clone());
        }
        self.judgments.entry(qid).or_default().insert(pid.into(), grade)
    }

    pub fn grade(&self, qid: &str, pid: &str) -> u32 {
        self.judgments
            .get(qid)
            .and_then(|j| j.get(pid))
            .copied()
            .unwrap_or(0)
    }

    pub fn judgments(&self, qid: &str) -> Option<&HashMap<String, u32>> {
        self.judgments.get(qid)
    }

    /// Query ids in first-appearance order.
    pub fn qids(&self) -> impl Iterator<Item = &str> {
        self.order.iter().map(String::as_str)
    }

    pub fn contains_query(&self, qid: &str) -> bool {
        self.judgments.contains_key(qid)
    }

    /// Number of judged pairs.
    pub fn len(&self) -> usize {
        self.judgments.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }
}

pub fn parse_qrels(input: &str) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split([' ', '\t']).filter(|f| !f.is_empty()).collect();
        let [qid, _, pid, grade] = fields[..] else {
            return Err(Error::parse(lineno, format!("expected 4 fields, found {}", fields.len())));
        };
        let grade: i64 = grade
            .parse()
            .map_err(|_| Error::parse(lineno, format!("invalid grade `{grade}`")))?;
        if grade < 0 {
            return Err(Error::parse(lineno, format!("negative grade {grade}")));
        }
        let grade = u32::try_from(grade).map_err(|_| Error::parse(lineno, "grade too large"))?;
        if let Some(old) = qrels.insert(qid, pid, grade) {
            log::warn!("line {lineno}: duplicate judgment for ({qid}, {pid}), {old} replaced by {grade}");
        }
    }
    Ok(qrels)
}

pub fn load_qrels(path: &Path) -> Result<Qrels> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    parse_qrels(&text).map_err(|e| e.in_file(path))
}
