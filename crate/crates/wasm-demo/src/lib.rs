//! Browser bindings over the bundled 50-passage fixture.
//!
//! Every exported function returns a JSON string; errors come back as
//! `{"error": "..."}` so the page never has to catch exceptions.

use std::collections::HashMap;
use std::sync::OnceLock;

use convrank::analysis::{sweep, threshold_grid, MissingQueries, QueryValues};
use convrank::conversation::parse_conversations;
use convrank::eval::{evaluate_run, metric_value};
use convrank::fusion::{default_grid, OverlapScorer, Reranker};
use convrank::index::read_corpus_tsv;
use convrank::pipeline::{run_pipeline, PipelineConfig, PipelineInputs};
use convrank::trec::parse_qrels;
use convrank::{
    tokenize, Bm25Params, EvalParams, FusionConfig, LogitTable, Metric, Qrels, RankedList, Resolver, Run,
    ScoreTable,
};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

const PASSAGES: &str = include_str!("../../core/fixtures/passages.tsv");
const CONVERSATIONS: &str = include_str!("../../core/fixtures/conversations.json");
const QRELS: &str = include_str!("../../core/fixtures/qrels.txt");

struct Fixture {
    inputs: PipelineInputs,
    qrels: Qrels,
    /// qid and resolved query text, in conversation order.
    queries: Vec<(String, String)>,
    /// Heuristic-resolved BM25 lists.
    initial: Run,
    /// BM25 scores as the re-ranker stream, keyword coverage as the RC stream.
    streams: (ScoreTable, LogitTable),
}

fn config(resolver: Resolver) -> PipelineConfig {
    let mut c = PipelineConfig::new("passages.tsv", "conversations.json");
    c.resolver = resolver;
    c
}

fn load() -> convrank::Result<Fixture> {
    let passages = read_corpus_tsv(PASSAGES.as_bytes())?;
    let conversations = parse_conversations(CONVERSATIONS)?;
    let qrels = parse_qrels(QRELS)?;
    let inputs = PipelineInputs::new(passages, conversations)?;
    let out = run_pipeline(&config(Resolver::Heuristic), &inputs)?;
    let terms: HashMap<String, Vec<String>> = out.queries.iter().map(|(q, r)| (q.clone(), r.terms())).collect();
    let (_, coverage) = OverlapScorer::new(&inputs.passages).tables(&out.initial, &terms);
    let mut bm25 = ScoreTable::new();
    for list in out.initial.lists() {
        for e in &list.entries {
            bm25.insert(list.qid.clone(), e.pid.clone(), e.score);
        }
    }
    Ok(Fixture {
        queries: out.queries.iter().map(|(q, r)| (q.clone(), r.render())).collect(),
        initial: out.initial,
        streams: (bm25, coverage),
        inputs,
        qrels,
    })
}

fn fixture() -> Result<&'static Fixture, String> {
    static FIXTURE: OnceLock<Result<Fixture, String>> = OnceLock::new();
    FIXTURE.get_or_init(|| load().map_err(|e| e.to_string())).as_ref().map_err(Clone::clone)
}

fn respond(result: Result<serde_json::Value, String>) -> String {
    match result {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

#[derive(Serialize)]
struct Hit<'a> {
    pid: &'a str,
    score: f64,
    grade: u32,
    text: &'a str,
}

fn hits<'a>(f: &'a Fixture, qid: &str, list: &'a RankedList) -> Vec<Hit<'a>> {
    let text: HashMap<&str, &str> = f.inputs.passages.iter().map(|p| (p.id.as_str(), p.text.as_str())).collect();
    list.entries
        .iter()
        .map(|e| Hit {
            pid: &e.pid,
            score: e.score,
            grade: f.qrels.grade(qid, &e.pid),
            text: text.get(e.pid.as_str()).copied().unwrap_or(""),
        })
        .collect()
}

/// The resolved queries of the fixture: `[{qid, query}]`.
#[wasm_bindgen]
pub fn queries() -> String {
    respond(fixture().map(|f| {
        json!(f
            .queries
            .iter()
            .map(|(qid, q)| json!({ "qid": qid, "query": q }))
            .collect::<Vec<_>>())
    }))
}

/// BM25 over the fixture corpus with free k1 and b.
#[wasm_bindgen]
pub fn bm25_search(query: &str, k1: f64, b: f64, depth: usize) -> String {
    respond(fixture().and_then(|f| {
        let params = Bm25Params::new(k1, b).map_err(|e| e.to_string())?;
        let terms = tokenize(query);
        let list = RankedList::from_scores("q", f.inputs.index.search(&terms, &params, depth));
        let idf: Vec<_> = terms
            .iter()
            .map(|t| json!({ "term": t, "df": f.inputs.index.doc_freq(t), "idf": f.inputs.index.idf(t) }))
            .collect();
        Ok(json!({ "terms": idf, "hits": hits(f, "", &list) }))
    }))
}

/// Fuses BM25 (re-ranker stream) with keyword coverage (RC stream) for one
/// query at `weight`, and reports mean NDCG@3 over the whole weight grid.
#[wasm_bindgen]
pub fn fusion_rerank(qid: &str, weight: f64, normalize: bool) -> String {
    respond(fixture().and_then(|f| {
        let err = |e: convrank::Error| e.to_string();
        let list = f.initial.get(qid).ok_or_else(|| format!("unknown query `{qid}`"))?;
        let reranker = Reranker::new(&f.streams.0, &f.streams.1);
        let fused = reranker
            .rerank_list(list, &FusionConfig { weight, normalize }, 100)
            .map_err(err)?;
        let ndcg = Metric::Ndcg { k: 3 };
        let params = EvalParams::default();
        let value = |l: &RankedList| metric_value(ndcg, &l.pids().collect::<Vec<_>>(), &f.qrels, qid, &params);
        let mut curve = Vec::new();
        for w in default_grid() {
            let run = reranker
                .rerank(&f.initial, &FusionConfig { weight: w, normalize }, 100)
                .map_err(err)?;
            let report = evaluate_run(&run, &f.qrels, &[ndcg], &params).map_err(err)?;
            curve.push([w, report.mean(ndcg).unwrap_or(0.0)]);
        }
        Ok(json!({
            "qid": qid,
            "initial": hits(f, qid, list),
            "fused": hits(f, qid, &fused),
            "ndcg3": { "initial": value(list), "fused": value(&fused) },
            "curve": curve,
        }))
    }))
}

/// Error-class percentages over thresholds 0, step, ..., 1 for the raw,
/// heuristic-resolved and manually rewritten runs.
#[wasm_bindgen]
pub fn error_sweep(metric: &str, step: f64) -> String {
    respond(fixture().and_then(|f| {
        let err = |e: convrank::Error| e.to_string();
        let metric: Metric = metric.parse().map_err(err)?;
        let params = EvalParams::default();
        let mut maps = Vec::new();
        for resolver in [Resolver::Null, Resolver::Heuristic, Resolver::Manual] {
            let out = run_pipeline(&config(resolver), &f.inputs).map_err(err)?;
            let report = evaluate_run(&out.run, &f.qrels, &[metric], &params).map_err(err)?;
            maps.push(report.values(metric));
        }
        let [original, resolved, human]: [_; 3] = maps.try_into().expect("three runs");
        let values = QueryValues { original, resolved, human };
        let grid = threshold_grid(step).map_err(err)?;
        let tables = sweep(&values, &grid, MissingQueries::Error).map_err(err)?;
        let rows: Vec<_> = tables
            .iter()
            .map(|t| json!({ "threshold": t.threshold, "counts": t.counts, "classes": t.class_percentages() }))
            .collect();
        Ok(json!({ "metric": metric.to_string(), "queries": tables[0].total(), "rows": rows }))
    }))
}
