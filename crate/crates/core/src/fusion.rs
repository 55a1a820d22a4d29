//! Re-ranking by interpolating a re-ranker score with a reading-comprehension score.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate_run, EvalParams, Metric};
use crate::text::tokenize;
use crate::trec::{Qrels, RankedList, Run};

/// Start and end span logits of a reading-comprehension model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcLogits {
    pub start: f64,
    pub end: f64,
}

impl RcLogits {
    pub fn new(start: f64, end: f64) -> Self {
        RcLogits { start, end }
    }
}

/// Reading-comprehension score: `start + end`.
pub fn rc_score(logits: RcLogits) -> f64 {
    logits.start + logits.end
}

/// Scores keyed by `(qid, pid)`. Absent pairs are `None`, never zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Table<T> {
    rows: HashMap<String, HashMap<String, T>>,
}

impl<T> Default for Table<T> {
    fn default() -> Self {
        Table { rows: HashMap::new() }
    }
}

pub type ScoreTable = Table<f64>;
pub type LogitTable = Table<RcLogits>;

impl<T: Copy> Table<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, qid: impl Into<String>, pid: impl Into<String>, value: T) -> Option<T> {
        self.rows.entry(qid.into()).or_default().insert(pid.into(), value)
    }

    pub fn get(&self, qid: &str, pid: &str) -> Option<T> {
        self.rows.get(qid).and_then(|r| r.get(pid)).copied()
    }

    pub fn len(&self) -> usize {
        self.rows.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn split_fields(line: &str) -> Vec<&str> {
    line.split('\t').map(str::trim).collect()
}

fn parse_real(field: &str, lineno: usize) -> Result<f64> {
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::parse(lineno, format!("invalid number `{field}`")))
}

fn data_lines(input: &str) -> impl Iterator<Item = (usize, &str)> {
    input
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Parses `qid<TAB>pid<TAB>score`.
pub fn parse_score_table(input: &str) -> Result<ScoreTable> {
    let mut table = ScoreTable::new();
    for (lineno, line) in data_lines(input) {
        let [qid, pid, score] = split_fields(line)[..] else {
            return Err(Error::parse(lineno, "expected `qid<TAB>pid<TAB>score`"));
        };
        table.insert(qid, pid, parse_real(score, lineno)?);
    }
    Ok(table)
}

/// Parses `qid<TAB>pid<TAB>start_logit<TAB>end_logit`.
pub fn parse_logit_table(input: &str) -> Result<LogitTable> {
    let mut table = LogitTable::new();
    for (lineno, line) in data_lines(input) {
        let [qid, pid, start, end] = split_fields(line)[..] else {
            return Err(Error::parse(lineno, "expected `qid<TAB>pid<TAB>start_logit<TAB>end_logit`"));
        };
        let logits = RcLogits::new(parse_real(start, lineno)?, parse_real(end, lineno)?);
        table.insert(qid, pid, logits);
    }
    Ok(table)
}

pub fn load_score_table(path: &Path) -> Result<ScoreTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    parse_score_table(&text).map_err(|e| e.in_file(path))
}

pub fn load_logit_table(path: &Path) -> Result<LogitTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    parse_logit_table(&text).map_err(|e| e.in_file(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Weight of the re-ranker score; `1 - weight` goes to the RC score.
    pub weight: f64,
    /// Per-query min-max normalization of each stream before fusing.
    #[serde(default)]
    pub normalize: bool,
}

impl FusionConfig {
    pub fn new(weight: f64) -> Result<Self> {
        let config = FusionConfig {
            weight,
            normalize: false,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.weight) {
            return Err(Error::InvalidParameter(format!(
                "fusion weight must be in [0, 1], got {}",
                self.weight
            )));
        }
        Ok(())
    }
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            weight: 0.5,
            normalize: false,
        }
    }
}

pub fn fuse(rerank: f64, rc: f64, config: &FusionConfig) -> f64 {
    config.weight * rerank + (1.0 - config.weight) * rc
}

/// What to do when a candidate has no score in one of the streams.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingScore {
    #[default]
    Strict,
    /// Substitute the minimum score of that stream among the query's candidates.
    Min,
}

impl FromStr for MissingScore {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(MissingScore::Strict),
            "min" => Ok(MissingScore::Min),
            other => Err(Error::InvalidParameter(format!("unknown missing-score policy `{other}`"))),
        }
    }
}

fn fill_missing(
    values: Vec<Option<f64>>,
    policy: MissingScore,
    stream: &'static str,
    list: &RankedList,
) -> Result<Vec<f64>> {
    let floor = values.iter().flatten().copied().reduce(f64::min);
    values
        .into_iter()
        .zip(&list.entries)
        .map(|(v, e)| match (v, policy, floor) {
            (Some(v), _, _) => Ok(v),
            (None, MissingScore::Min, Some(min)) => Ok(min),
            (None, _, _) => Err(Error::MissingScore {
                stream,
                qid: list.qid.clone(),
                pid: e.pid.clone(),
            }),
        })
        .collect()
}

fn min_max(values: &mut [f64]) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    for v in values.iter_mut() {
        *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
    }
}

/// Sorts by score descending, ties by pid ascending.
pub fn sort_scored(scored: &mut [(String, f64)]) {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

/// Precomputed score streams used to re-rank an initial run.
#[derive(Debug, Clone, Copy)]
pub struct Reranker<'a> {
    pub rerank_scores: &'a ScoreTable,
    pub rc_logits: &'a LogitTable,
    pub missing: MissingScore,
}

impl<'a> Reranker<'a> {
    pub fn new(rerank_scores: &'a ScoreTable, rc_logits: &'a LogitTable) -> Self {
        Reranker {
            rerank_scores,
            rc_logits,
            missing: MissingScore::Strict,
        }
    }

    pub fn with_missing(mut self, missing: MissingScore) -> Self {
        self.missing = missing;
        self
    }

    /// Fused scores for one query's candidates, in candidate order.
    pub fn fused_scores(&self, list: &RankedList, config: &FusionConfig) -> Result<Vec<f64>> {
        config.validate()?;
        let qid = list.qid.as_str();
        let rr = list.pids().map(|p| self.rerank_scores.get(qid, p)).collect();
        let rc = list
            .pids()
            .map(|p| self.rc_logits.get(qid, p).map(rc_score))
            .collect();
        let mut rr = fill_missing(rr, self.missing, "rerank", list)?;
        let mut rc = fill_missing(rc, self.missing, "reading-comprehension", list)?;
        if config.normalize {
            min_max(&mut rr);
            min_max(&mut rc);
        }
        Ok(rr.iter().zip(&rc).map(|(&a, &b)| fuse(a, b, config)).collect())
    }

    pub fn rerank_list(&self, list: &RankedList, config: &FusionConfig, cutoff: usize) -> Result<RankedList> {
        if cutoff == 0 {
            return Err(Error::InvalidParameter("cutoff must be >= 1".into()));
        }
        let fused = self.fused_scores(list, config)?;
        let mut scored: Vec<(String, f64)> = list.pids().map(str::to_string).zip(fused).collect();
        sort_scored(&mut scored);
        scored.truncate(cutoff);
        Ok(RankedList::from_scores(list.qid.clone(), scored))
    }

    /// Re-ranks every query of `initial`. Never introduces passages.
    pub fn rerank(&self, initial: &Run, config: &FusionConfig, cutoff: usize) -> Result<Run> {
        initial
            .lists()
            .iter()
            .map(|l| self.rerank_list(l, config, cutoff))
            .collect()
    }

    /// Grid search for the weight maximizing the mean of `metric`; ties go to the smaller weight.
    pub fn tune(&self, initial: &Run, qrels: &Qrels, request: &TuneRequest) -> Result<Tuning> {
        if qrels.is_empty() {
            return Err(Error::EmptyQrels);
        }
        if request.grid.is_empty() {
            return Err(Error::InvalidParameter("empty weight grid".into()));
        }
        let mut grid = request.grid.clone();
        for &w in &grid {
            FusionConfig { weight: w, normalize: false }.validate()?;
        }
        grid.sort_by(f64::total_cmp);
        grid.dedup();

        let mut curve = Vec::with_capacity(grid.len());
        for w in grid {
            let config = FusionConfig {
                weight: w,
                normalize: request.normalize,
            };
            let fused = self.rerank(initial, &config, request.cutoff)?;
            let report = evaluate_run(&fused, qrels, &[request.metric], &request.params)?;
            let score = report.mean(request.metric).unwrap_or(0.0);
            curve.push((w, score));
        }
        let (best_weight, best_score) = curve
            .iter()
            .copied()
            .fold(None, |best: Option<(f64, f64)>, (w, s)| match best {
                Some((_, bs)) if s <= bs => best,
                _ => Some((w, s)),
            })
            .expect("grid is non-empty");
        Ok(Tuning {
            best_weight,
            best_score,
            curve,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TuneRequest {
    pub metric: Metric,
    pub grid: Vec<f64>,
    pub normalize: bool,
    pub cutoff: usize,
    pub params: EvalParams,
}

impl TuneRequest {
    pub fn new(metric: Metric) -> Self {
        TuneRequest {
            metric,
            grid: default_grid(),
            normalize: false,
            cutoff: 100,
            params: EvalParams::default(),
        }
    }
}

/// 0.0, 0.05, ..., 1.0.
pub fn default_grid() -> Vec<f64> {
    (0..=20).map(|i| f64::from(i) / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tuning {
    pub best_weight: f64,
    pub best_score: f64,
    /// Mean metric for every evaluated weight, ascending by weight.
    pub curve: Vec<(f64, f64)>,
}

/// Built-in scorer: number of distinct query terms present in the passage.
///
/// Used when no precomputed score files are supplied. The re-ranker stream
/// is the overlap count; the RC stream uses the fraction of query terms
/// covered as start logit and `0` as end logit.
#[derive(Debug, Clone, Default)]
pub struct OverlapScorer {
    passages: HashMap<String, HashSet<String>>,
}

impl OverlapScorer {
    pub fn new<'p, I>(passages: I) -> Self
    where
        I: IntoIterator<Item = &'p crate::index::Passage>,
    {
        OverlapScorer {
            passages: passages
                .into_iter()
                .map(|p| (p.id.clone(), tokenize(&p.text).into_iter().collect()))
                .collect(),
        }
    }

    pub fn overlap(&self, query_terms: &[String], pid: &str) -> Option<usize> {
        let terms = self.passages.get(pid)?;
        let distinct: HashSet<&String> = query_terms.iter().collect();
        Some(distinct.into_iter().filter(|t| terms.contains(*t)).count())
    }

    /// Score streams for every candidate of `initial`; `queries` maps qid to query terms.
    pub fn tables(&self, initial: &Run, queries: &HashMap<String, Vec<String>>) -> (ScoreTable, LogitTable) {
        let mut rr = ScoreTable::new();
        let mut rc = LogitTable::new();
        for list in initial.lists() {
            let terms = queries.get(&list.qid).map(Vec::as_slice).unwrap_or(&[]);
            let distinct = terms.iter().collect::<HashSet<_>>().len().max(1) as f64;
            for pid in list.pids() {
                if let Some(n) = self.overlap(terms, pid) {
                    rr.insert(list.qid.clone(), pid, n as f64);
                    rc.insert(list.qid.clone(), pid, RcLogits::new(n as f64 / distinct, 0.0));
                }
            }
        }
        (rr, rc)
    }
}
