//! trec_eval-style effectiveness metrics: NDCG@k, MAP, MRR and Recall@k.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trec::{Qrels, Run};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Ndcg { k: usize },
    Map,
    Mrr,
    Recall { k: usize },
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Ndcg { k } => write!(f, "ndcg@{k}"),
            Metric::Map => f.write_str("map"),
            Metric::Mrr => f.write_str("mrr"),
            Metric::Recall { k } => write!(f, "recall@{k}"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let invalid = || Error::InvalidParameter(format!("unknown metric `{s}`"));
        let cutoff = |rest: &str| -> Result<usize> {
            rest.parse::<usize>().ok().filter(|&k| k >= 1).ok_or_else(invalid)
        };
        match lower.split_once('@') {
            Some(("ndcg", k)) => Ok(Metric::Ndcg { k: cutoff(k)? }),
            Some(("recall", k)) => Ok(Metric::Recall { k: cutoff(k)? }),
            None if lower == "map" => Ok(Metric::Map),
            None if lower == "mrr" => Ok(Metric::Mrr),
            _ => Err(invalid()),
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Gain applied to a relevance grade in DCG.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gain {
    /// `grade` (trec_eval `ndcg_cut`).
    #[default]
    Linear,
    /// `2^grade - 1`.
    Exponential,
}

impl Gain {
    fn apply(self, grade: u32) -> f64 {
        match self {
            Gain::Linear => f64::from(grade),
            Gain::Exponential => 2f64.powi(grade as i32) - 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalParams {
    /// Minimum grade counted as relevant by MAP, MRR and Recall.
    pub binarize_at: u32,
    pub gain: Gain,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            binarize_at: 1,
            gain: Gain::Linear,
        }
    }
}

fn discount(rank: usize) -> f64 {
    ((rank + 1) as f64).log2()
}

fn relevant_set<'a>(qrels: &'a Qrels, qid: &str, binarize_at: u32) -> HashSet<&'a str> {
    qrels
        .judgments(qid)
        .map(|j| {
            j.iter()
                .filter(|(_, &g)| g >= binarize_at.max(1))
                .map(|(p, _)| p.as_str())
                .collect()
        })
        .unwrap_or_default()
}

/// `None` when the query has no positively graded passage.
pub fn ndcg_at_k<S: AsRef<str>>(ranking: &[S], qrels: &Qrels, qid: &str, k: usize, gain: Gain) -> Option<f64> {
    let mut ideal: Vec<u32> = qrels
        .judgments(qid)?
        .values()
        .copied()
        .filter(|&g| g > 0)
        .collect();
    if ideal.is_empty() || k == 0 {
        return None;
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain.apply(g) / discount(i + 1))
        .sum();
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, pid)| gain.apply(qrels.grade(qid, pid.as_ref())) / discount(i + 1))
        .sum();
    Some(dcg / idcg)
}

/// AP over the whole ranking; the denominator counts every relevant judged passage.
pub fn average_precision<S: AsRef<str>>(ranking: &[S], qrels: &Qrels, qid: &str, binarize_at: u32) -> Option<f64> {
    let relevant = relevant_set(qrels, qid, binarize_at);
    if relevant.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, pid) in ranking.iter().enumerate() {
        if relevant.contains(pid.as_ref()) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / relevant.len() as f64)
}

pub fn reciprocal_rank<S: AsRef<str>>(ranking: &[S], qrels: &Qrels, qid: &str, binarize_at: u32) -> Option<f64> {
    let relevant = relevant_set(qrels, qid, binarize_at);
    if relevant.is_empty() {
        return None;
    }
    Some(
        ranking
            .iter()
            .position(|p| relevant.contains(p.as_ref()))
            .map_or(0.0, |i| 1.0 / (i + 1) as f64),
    )
}

pub fn recall_at_k<S: AsRef<str>>(ranking: &[S], qrels: &Qrels, qid: &str, k: usize, binarize_at: u32) -> Option<f64> {
    let relevant = relevant_set(qrels, qid, binarize_at);
    if relevant.is_empty() {
        return None;
    }
    let found = ranking
        .iter()
        .take(k)
        .filter(|p| relevant.contains(p.as_ref()))
        .count();
    Some(found as f64 / relevant.len() as f64)
}

pub fn metric_value<S: AsRef<str>>(metric: Metric, ranking: &[S], qrels: &Qrels, qid: &str, params: &EvalParams) -> Option<f64> {
    match metric {
        Metric::Ndcg { k } => ndcg_at_k(ranking, qrels, qid, k, params.gain),
        Metric::Map => average_precision(ranking, qrels, qid, params.binarize_at),
        Metric::Mrr => reciprocal_rank(ranking, qrels, qid, params.binarize_at),
        Metric::Recall { k } => recall_at_k(ranking, qrels, qid, k, params.binarize_at),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricReport {
    /// Defined metric values per query.
    pub per_query: BTreeMap<String, BTreeMap<Metric, f64>>,
    /// Mean over the queries where the metric is defined.
    pub means: BTreeMap<Metric, f64>,
    /// Number of queries contributing to each mean.
    pub counts: BTreeMap<Metric, usize>,
    pub evaluated_query_count: usize,
}

impl MetricReport {
    pub fn mean(&self, metric: Metric) -> Option<f64> {
        self.means.get(&metric).copied()
    }

    pub fn value(&self, qid: &str, metric: Metric) -> Option<f64> {
        self.per_query.get(qid).and_then(|m| m.get(&metric)).copied()
    }

    /// Per-query values of one metric.
    pub fn values(&self, metric: Metric) -> BTreeMap<String, f64> {
        self.per_query
            .iter()
            .filter_map(|(q, m)| m.get(&metric).map(|&v| (q.clone(), v)))
            .collect()
    }

    /// `metric<TAB>qid<TAB>value` with per-query rows then `all` rows.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "metric\tqid\tvalue")?;
        for (qid, values) in &self.per_query {
            for (metric, value) in values {
                writeln!(out, "{metric}\t{qid}\t{value:.4}")?;
            }
        }
        for (metric, value) in &self.means {
            writeln!(out, "{metric}\tall\t{value:.4}")?;
        }
        Ok(())
    }
}

/// Evaluates every judged query. Queries judged but absent from the run get an
/// empty ranking; queries only in the run are ignored.
pub fn evaluate_run(run: &Run, qrels: &Qrels, metrics: &[Metric], params: &EvalParams) -> Result<MetricReport> {
    if qrels.is_empty() {
        return Err(Error::EmptyQrels);
    }
    if !run.qids().any(|q| qrels.contains_query(q)) {
        return Err(Error::NoEvaluatedQueries);
    }
    let mut report = MetricReport::default();
    let mut sums: BTreeMap<Metric, f64> = BTreeMap::new();
    for qid in qrels.qids() {
        let ranking: Vec<&str> = run.get(qid).map(|l| l.pids().collect()).unwrap_or_default();
        let values: BTreeMap<Metric, f64> = metrics
            .iter()
            .filter_map(|&m| metric_value(m, &ranking, qrels, qid, params).map(|v| (m, v)))
            .collect();
        if values.is_empty() {
            continue;
        }
        for (&m, &v) in &values {
            *sums.entry(m).or_default() += v;
            *report.counts.entry(m).or_default() += 1;
        }
        report.per_query.insert(qid.to_string(), values);
    }
    report.evaluated_query_count = report.per_query.len();
    report.means = sums
        .into_iter()
        .map(|(m, s)| (m, s / report.counts[&m] as f64))
        .collect();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trec::RankedList;

    fn qrels(rows: &[(&str, &str, u32)]) -> Qrels {
        let mut q = Qrels::new();
        for &(qid, pid, g) in rows {
            q.insert(qid, pid, g);
        }
        q
    }

    #[test]
    fn metric_names() {
        for s in ["ndcg@3", "ndcg@5", "map", "mrr", "recall@100"] {
            assert_eq!(s.parse::<Metric>().unwrap().to_string(), s);
        }
        assert_eq!("NDCG@3".parse::<Metric>().unwrap(), Metric::Ndcg { k: 3 });
        for s in ["ndcg", "ndcg@0", "p@5", "recall@x", ""] {
            assert!(s.parse::<Metric>().is_err(), "{s}");
        }
    }

    #[test]
    fn ndcg_cases() {
        let q = qrels(&[("q", "a", 1)]);
        assert_eq!(ndcg_at_k(&["a", "b"], &q, "q", 3, Gain::Linear), Some(1.0));
        assert_eq!(ndcg_at_k(&["b", "c", "d", "a"], &q, "q", 3, Gain::Linear), Some(0.0));
        assert_eq!(ndcg_at_k(&["a"], &q, "other", 3, Gain::Linear), None);

        // grades (0, 2, 1) against ideal (2, 1)
        let q = qrels(&[("q", "x", 2), ("q", "y", 1), ("q", "z", 0)]);
        let dcg = 2.0 / 3f64.log2() + 1.0 / 4f64.log2();
        let idcg = 2.0 + 1.0 / 3f64.log2();
        let got = ndcg_at_k(&["z", "x", "y"], &q, "q", 3, Gain::Linear).unwrap();
        assert!((got - dcg / idcg).abs() < 1e-12);

        let dcg = 3.0 / 3f64.log2() + 1.0 / 4f64.log2();
        let idcg = 3.0 + 1.0 / 3f64.log2();
        let got = ndcg_at_k(&["z", "x", "y"], &q, "q", 3, Gain::Exponential).unwrap();
        assert!((got - dcg / idcg).abs() < 1e-12);
    }

    #[test]
    fn zero_graded_only_is_undefined() {
        let q = qrels(&[("q", "a", 0)]);
        assert_eq!(ndcg_at_k(&["a"], &q, "q", 3, Gain::Linear), None);
        assert_eq!(average_precision(&["a"], &q, "q", 1), None);
        assert_eq!(reciprocal_rank(&["a"], &q, "q", 1), None);
        assert_eq!(recall_at_k(&["a"], &q, "q", 10, 1), None);
    }

    #[test]
    fn ap_rr_recall() {
        let q = qrels(&[("q", "a", 1), ("q", "b", 2)]);
        assert_eq!(average_precision(&["a", "b", "c"], &q, "q", 1), Some(1.0));
        let single = qrels(&[("q", "a", 1)]);
        assert_eq!(average_precision(&["x", "a"], &single, "q", 1), Some(0.5));

        assert_eq!(reciprocal_rank(&["a"], &q, "q", 1), Some(1.0));
        assert_eq!(reciprocal_rank(&["x", "b"], &q, "q", 1), Some(0.5));
        assert_eq!(reciprocal_rank(&["x", "y"], &q, "q", 1), Some(0.0));
        // binarize at 2: only b counts
        assert_eq!(reciprocal_rank(&["a", "b"], &q, "q", 2), Some(0.5));

        assert_eq!(recall_at_k(&["a", "b"], &q, "q", 100, 1), Some(1.0));
        assert_eq!(recall_at_k(&["a", "x", "b"], &q, "q", 2, 1), Some(0.5));
    }

    #[test]
    fn report_means_and_missing_queries() {
        let q = qrels(&[("q1", "a", 1), ("q1", "b", 1), ("q2", "c", 1), ("q3", "d", 0)]);
        let run: Run = [
            RankedList::from_scores("q1", [("a", 3.0), ("x", 2.0), ("b", 1.0)]),
            RankedList::from_scores("extra", [("a", 1.0)]),
        ]
        .into_iter()
        .collect();
        let m = [Metric::Mrr, Metric::Recall { k: 2 }];
        let report = evaluate_run(&run, &q, &m, &EvalParams::default()).unwrap();
        // q2 missing from run scores 0; q3 has no relevant passage; extra is unjudged
        assert_eq!(report.evaluated_query_count, 2);
        assert_eq!(report.value("q2", Metric::Mrr), Some(0.0));
        assert_eq!(report.mean(Metric::Mrr), Some(0.5));
        assert_eq!(report.mean(Metric::Recall { k: 2 }), Some(0.25));
        assert!(report.value("extra", Metric::Mrr).is_none());

        let mut out = Vec::new();
        report.write_tsv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("metric\tqid\tvalue\n"));
        assert!(text.contains("mrr\tall\t0.5000\n"));
    }

    #[test]
    fn report_errors() {
        let run: Run = [RankedList::from_scores("q1", [("a", 1.0)])].into_iter().collect();
        assert!(matches!(
            evaluate_run(&run, &Qrels::new(), &[Metric::Map], &EvalParams::default()),
            Err(Error::EmptyQrels)
        ));
        let q = qrels(&[("other", "a", 1)]);
        assert!(matches!(
            evaluate_run(&run, &q, &[Metric::Map], &EvalParams::default()),
            Err(Error::NoEvaluatedQueries)
        ));
    }
}
