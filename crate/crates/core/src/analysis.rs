//! Attribution of per-query failures to ranking or to query resolution.
//!
//! Each query is evaluated three times: with its original query, with the
//! resolved query and with the human rewrite. A run "passes" a query when its
//! metric value reaches the threshold `t` (strictly positive when `t = 0`).
//! The human rewrite is assumed well specified, so a human failure is a
//! ranking error; a human pass with a resolved failure is a query resolution
//! error; a pass on both is no error. The original-query outcome only selects
//! the pattern row.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::Metric;

/// `m > 0` at `t = 0`, otherwise `m >= t`.
pub fn pass_predicate(value: f64, threshold: f64) -> bool {
    if threshold == 0.0 {
        value > 0.0
    } else {
        value >= threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    RankingError,
    QueryResolutionError,
    NoError,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 3] = [
        ErrorClass::RankingError,
        ErrorClass::QueryResolutionError,
        ErrorClass::NoError,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ErrorClass::RankingError => "ranking_error",
            ErrorClass::QueryResolutionError => "query_resolution_error",
            ErrorClass::NoError => "no_error",
        }
    }
}

/// Pass flags for the (original, resolved, human) queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Pattern {
    pub original: bool,
    pub resolved: bool,
    pub human: bool,
}

impl Pattern {
    pub fn new(original: bool, resolved: bool, human: bool) -> Self {
        Pattern {
            original,
            resolved,
            human,
        }
    }

    /// Row index in table order: ×××, ✓××, ×✓×, ✓✓×, ××✓, ✓×✓, ×✓✓, ✓✓✓.
    pub fn index(self) -> usize {
        usize::from(self.original) | usize::from(self.resolved) << 1 | usize::from(self.human) << 2
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < 8, "pattern index {i} out of range");
        Pattern::new(i & 1 != 0, i & 2 != 0, i & 4 != 0)
    }

    pub fn all() -> impl Iterator<Item = Pattern> {
        (0..8).map(Pattern::from_index)
    }

    pub fn class(self) -> ErrorClass {
        match (self.resolved, self.human) {
            (_, false) => ErrorClass::RankingError,
            (false, true) => ErrorClass::QueryResolutionError,
            (true, true) => ErrorClass::NoError,
        }
    }

    /// `o`/`v` code per flag, e.g. `ovv` for ×✓✓.
    pub fn code(self) -> String {
        [self.original, self.resolved, self.human]
            .iter()
            .map(|&p| if p { 'v' } else { 'o' })
            .collect()
    }

    fn marks(self) -> [&'static str; 3] {
        [self.original, self.resolved, self.human].map(|p| if p { "✓" } else { "×" })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalysisConfig {
    pub metric: Metric,
    pub threshold: f64,
}

impl AnalysisConfig {
    pub fn new(metric: Metric, threshold: f64) -> Result<Self> {
        check_threshold(threshold)?;
        Ok(AnalysisConfig { metric, threshold })
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!("threshold must be in [0, 1], got {t}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryClassification {
    pub qid: String,
    pub pattern: Pattern,
    pub error_class: ErrorClass,
}

pub fn classify_query(original: f64, resolved: f64, human: f64, threshold: f64) -> (Pattern, ErrorClass) {
    let pattern = Pattern::new(
        pass_predicate(original, threshold),
        pass_predicate(resolved, threshold),
        pass_predicate(human, threshold),
    );
    (pattern, pattern.class())
}

/// `count / total * 100` rounded half-up to one decimal, computed exactly.
pub fn percentage(count: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let (count, total) = (count as u128, total as u128);
    let tenths = (2000 * count + total) / (2 * total);
    tenths as f64 / 10.0
}

/// Pattern counts at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisTable {
    pub threshold: f64,
    pub counts: [usize; 8],
}

impl AnalysisTable {
    pub fn from_counts(threshold: f64, counts: [usize; 8]) -> Self {
        AnalysisTable { threshold, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn count(&self, pattern: Pattern) -> usize {
        self.counts[pattern.index()]
    }

    pub fn row_percentages(&self) -> [f64; 8] {
        let total = self.total();
        self.counts.map(|c| percentage(c, total))
    }

    /// Counts ordered ranking, query resolution, no error.
    pub fn class_counts(&self) -> [usize; 3] {
        let mut out = [0; 3];
        for p in Pattern::all() {
            let slot = ErrorClass::ALL.iter().position(|&c| c == p.class()).unwrap();
            out[slot] += self.count(p);
        }
        out
    }

    pub fn class_percentages(&self) -> [f64; 3] {
        let total = self.total();
        self.class_counts().map(|c| percentage(c, total))
    }

    pub fn class_percentage(&self, class: ErrorClass) -> f64 {
        let i = ErrorClass::ALL.iter().position(|&c| c == class).unwrap();
        self.class_percentages()[i]
    }
}

/// Absent qids in one of the three runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum MissingQueries {
    #[default]
    Error,
    AsZero,
}

/// Per-query metric values of the original, resolved and human runs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryValues {
    pub original: BTreeMap<String, f64>,
    pub resolved: BTreeMap<String, f64>,
    pub human: BTreeMap<String, f64>,
}

impl QueryValues {
    /// Aligned `(qid, original, resolved, human)` rows over the shared qids.
    pub fn rows(&self, missing: MissingQueries) -> Result<Vec<(String, [f64; 3])>> {
        let maps = [&self.original, &self.resolved, &self.human];
        let union: BTreeSet<&String> = maps.iter().flat_map(|m| m.keys()).collect();
        let partial: Vec<String> = union
            .iter()
            .filter(|q| maps.iter().any(|m| !m.contains_key(**q)))
            .map(|q| q.to_string())
            .collect();
        if !partial.is_empty() && missing == MissingQueries::Error {
            return Err(Error::MismatchedQueries(partial));
        }
        union
            .into_iter()
            .map(|qid| {
                let values = maps.map(|m| m.get(qid).copied().unwrap_or(0.0));
                if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::InvalidParameter(format!(
                        "metric values for `{qid}` must lie in [0, 1]: {values:?}"
                    )));
                }
                Ok((qid.clone(), values))
            })
            .collect()
    }
}

pub fn classify_queries(values: &QueryValues, threshold: f64, missing: MissingQueries) -> Result<Vec<QueryClassification>> {
    check_threshold(threshold)?;
    Ok(values
        .rows(missing)?
        .into_iter()
        .map(|(qid, [o, r, h])| {
            let (pattern, error_class) = classify_query(o, r, h, threshold);
            QueryClassification {
                qid,
                pattern,
                error_class,
            }
        })
        .collect())
}

fn tally(threshold: f64, rows: &[(String, [f64; 3])]) -> AnalysisTable {
    let mut counts = [0; 8];
    for (_, [o, r, h]) in rows {
        counts[classify_query(*o, *r, *h, threshold).0.index()] += 1;
    }
    AnalysisTable { threshold, counts }
}

pub fn analyze(values: &QueryValues, threshold: f64, missing: MissingQueries) -> Result<AnalysisTable> {
    check_threshold(threshold)?;
    Ok(tally(threshold, &values.rows(missing)?))
}

/// One table per threshold, ascending.
pub fn sweep(values: &QueryValues, thresholds: &[f64], missing: MissingQueries) -> Result<Vec<AnalysisTable>> {
    if thresholds.is_empty() {
        return Err(Error::InvalidParameter("empty threshold list".into()));
    }
    for &t in thresholds {
        check_threshold(t)?;
    }
    let mut thresholds = thresholds.to_vec();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let rows = values.rows(missing)?;
    Ok(thresholds.into_iter().map(|t| tally(t, &rows)).collect())
}

/// `0` followed by `step, 2 step, ..., 1`; `step` must divide 1.
pub fn threshold_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidParameter(format!("sweep step must be in (0, 1], got {step}")));
    }
    let n = (1.0 / step).round();
    if (n * step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("sweep step {step} does not divide 1")));
    }
    let n = n as u32;
    Ok(std::iter::once(0.0)
        .chain((1..=n).map(|i| f64::from(i) / f64::from(n)))
        .collect())
}

/// `0, 0.02, 0.04, ..., 1.00`.
pub fn default_thresholds() -> Vec<f64> {
    threshold_grid(0.02).expect("0.02 divides 1")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Table,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(OutputFormat::Table),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(Error::InvalidParameter(format!("unknown output format `{other}`"))),
        }
    }
}

pub fn csv_header() -> String {
    let mut cols = vec!["threshold".to_string()];
    cols.extend(Pattern::all().map(|p| format!("pattern_{}", p.code())));
    cols.extend(["pct_ranking", "pct_qr", "pct_no_error"].map(String::from));
    cols.join(",")
}

pub fn emit_analysis(tables: &[AnalysisTable], format: OutputFormat, metric: Option<Metric>) -> String {
    match format {
        OutputFormat::Csv => emit_csv(tables),
        OutputFormat::Table => tables.iter().map(|t| render_table(t, metric)).collect::<Vec<_>>().join("\n"),
    }
}

fn emit_csv(tables: &[AnalysisTable]) -> String {
    let mut out = csv_header();
    out.push('\n');
    for table in tables {
        let _ = write!(out, "{}", table.threshold);
        for c in table.counts {
            let _ = write!(out, ",{c}");
        }
        for p in table.class_percentages() {
            let _ = write!(out, ",{p:.1}");
        }
        out.push('\n');
    }
    out
}

fn render_table(table: &AnalysisTable, metric: Option<Metric>) -> String {
    let rule = if table.threshold == 0.0 {
        "> 0".to_string()
    } else {
        format!(">= {}", table.threshold)
    };
    let metric = metric.map_or_else(|| "m".to_string(), |m| m.to_string());
    let mut out = format!("{metric} {rule} ({} queries)\n", table.total());
    let _ = writeln!(
        out,
        "{:<24} {:>8} {:>8} {:>6} {:>6} {:>6} {:>7}",
        "error_type", "original", "resolved", "human", "#", "%", "class%"
    );
    let pct = table.row_percentages();
    let class_pct = table.class_percentages();
    for (ci, class) in ErrorClass::ALL.iter().enumerate() {
        let rows: Vec<Pattern> = Pattern::all().filter(|p| p.class() == *class).collect();
        for (ri, p) in rows.iter().enumerate() {
            let [o, r, h] = p.marks();
            let class_col = if ri == 0 { format!("{:.1}", class_pct[ci]) } else { String::new() };
            let _ = writeln!(
                out,
                "{:<24} {:>8} {:>8} {:>6} {:>6} {:>6.1} {:>7}",
                if ri == 0 { class.label() } else { "" },
                o,
                r,
                h,
                table.count(*p),
                pct[p.index()],
                class_col
            );
        }
    }
    out
}

/// A parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub threshold: f64,
    pub counts: [usize; 8],
    pub class_percentages: [f64; 3],
}

pub fn parse_analysis_csv(input: &str) -> Result<Vec<SweepRow>> {
    let mut lines = input.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == csv_header() => {}
        _ => return Err(Error::parse(1, "missing analysis csv header")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 12 {
            return Err(Error::parse(i + 1, format!("expected 12 columns, found {}", fields.len())));
        }
        let bad = |f: &str| Error::parse(i + 1, format!("invalid value `{f}`"));
        let threshold = fields[0].parse::<f64>().map_err(|_| bad(fields[0]))?;
        let mut counts = [0; 8];
        for (slot, f) in counts.iter_mut().zip(&fields[1..9]) {
            *slot = f.parse().map_err(|_| bad(f))?;
        }
        let mut class_percentages = [0.0; 3];
        for (slot, f) in class_percentages.iter_mut().zip(&fields[9..]) {
            *slot = f.parse().map_err(|_| bad(f))?;
        }
        rows.push(SweepRow {
            threshold,
            counts,
            class_percentages,
        });
    }
    Ok(rows)
}
