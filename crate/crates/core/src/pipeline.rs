//! End-to-end pipeline: resolve each turn, retrieve with BM25, optionally
//! re-rank with score fusion, and cut to the final depth.
//!
//! A pipeline is described by a TOML file:
//!
//! ```toml
//! corpus = "passages.tsv"          # TSV or JSON-lines
//! conversations = "topics.json"
//! resolver = "heuristic"           # null | oracle | heuristic | manual | automatic | file
//! # rewrite_file = "rewrites.tsv"  # qid<TAB>text, for resolver = "file"
//! depth = 100
//! cutoff = 100
//! tag = "quretecQR"
//!
//! [bm25]
//! k1 = 0.82
//! b = 0.68
//!
//! [rerank]
//! enabled = true
//! weight = 0.5
//! normalize = false
//! missing = "strict"               # strict | min
//! # rerank_scores = "rerank.tsv"   # qid<TAB>pid<TAB>score
//! # rc_logits = "rc.tsv"           # qid<TAB>pid<TAB>start<TAB>end
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::conversation::{
    build_history, load_conversations, parse_rewrites, resolve_query, Conversation,
    HeuristicClassifier, NullClassifier, OracleClassifier, ResolvedQuery, TermClassifier, Turn,
};
use crate::error::{Error, Result};
use crate::fusion::{
    load_logit_table, load_score_table, FusionConfig, LogitTable, MissingScore, OverlapScorer,
    Reranker, ScoreTable,
};
use crate::index::{load_corpus, Bm25Params, InvertedIndex, Passage};
use crate::trec::{RankedList, Run};

/// How the query sent to retrieval is obtained from a turn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolver {
    /// Raw query.
    #[default]
    Null,
    /// Gold-rewrite term oracle.
    Oracle,
    /// Stopword and idf rule.
    Heuristic,
    /// Organizer manual rewrite, used verbatim.
    Manual,
    /// Organizer automatic rewrite, used verbatim.
    Automatic,
    /// Rewrites read from `rewrite_file`.
    #[serde(alias = "external-rewrite-file")]
    File,
}

impl FromStr for Resolver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "null" => Ok(Resolver::Null),
            "oracle" => Ok(Resolver::Oracle),
            "heuristic" => Ok(Resolver::Heuristic),
            "manual" => Ok(Resolver::Manual),
            "automatic" => Ok(Resolver::Automatic),
            "file" | "external-rewrite-file" => Ok(Resolver::File),
            other => Err(Error::InvalidParameter(format!("unknown resolver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RerankConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_weight")]
    pub weight: f64,
    #[serde(default)]
    pub normalize: bool,
    #[serde(default)]
    pub missing: MissingScore,
    #[serde(default)]
    pub rerank_scores: Option<PathBuf>,
    #[serde(default)]
    pub rc_logits: Option<PathBuf>,
}

fn default_weight() -> f64 {
    0.5
}

impl Default for RerankConfig {
    fn default() -> Self {
        RerankConfig {
            enabled: false,
            weight: default_weight(),
            normalize: false,
            missing: MissingScore::Strict,
            rerank_scores: None,
            rc_logits: None,
        }
    }
}

impl RerankConfig {
    pub fn fusion(&self) -> FusionConfig {
        FusionConfig {
            weight: self.weight,
            normalize: self.normalize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub conversations: PathBuf,
    #[serde(default)]
    pub resolver: Resolver,
    #[serde(default)]
    pub rewrite_file: Option<PathBuf>,
    /// Overrides the heuristic resolver's idf threshold.
    #[serde(default)]
    pub heuristic_min_idf: Option<f64>,
    #[serde(default)]
    pub bm25: Bm25Params,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_depth")]
    pub cutoff: usize,
    #[serde(default = "default_tag")]
    pub tag: String,
    #[serde(default)]
    pub rerank: RerankConfig,
}

fn default_depth() -> usize {
    100
}

fn default_tag() -> String {
    "convrank".to_string()
}

impl PipelineConfig {
    pub fn new(corpus: impl Into<PathBuf>, conversations: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            corpus: corpus.into(),
            conversations: conversations.into(),
            resolver: Resolver::Null,
            rewrite_file: None,
            heuristic_min_idf: None,
            bm25: Bm25Params::default(),
            depth: default_depth(),
            cutoff: default_depth(),
            tag: default_tag(),
            rerank: RerankConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses a config file and resolves its relative paths against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        let mut config = Self::from_toml(&text).map_err(|e| e.in_file(path))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        config.rebase(base);
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.conversations);
        for p in [
            &mut self.rewrite_file,
            &mut self.rerank.rerank_scores,
            &mut self.rerank.rc_logits,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bm25.validate()?;
        if self.depth == 0 || self.cutoff == 0 {
            return Err(Error::Config("depth and cutoff must be >= 1".into()));
        }
        if self.cutoff > self.depth {
            return Err(Error::Config(format!(
                "cutoff {} exceeds retrieval depth {}",
                self.cutoff, self.depth
            )));
        }
        if self.resolver == Resolver::File && self.rewrite_file.is_none() {
            return Err(Error::Config("resolver `file` requires rewrite_file".into()));
        }
        if self.tag.is_empty() || self.tag.chars().any(char::is_whitespace) {
            return Err(Error::Config("tag must be non-empty without whitespace".into()));
        }
        if self.rerank.rerank_scores.is_some() != self.rerank.rc_logits.is_some() {
            return Err(Error::Config("rerank_scores and rc_logits must be given together".into()));
        }
        self.rerank.fusion().validate()
    }
}

/// Everything the pipeline reads, already parsed.
#[derive(Debug, Clone)]
pub struct PipelineInputs {
    pub passages: Vec<Passage>,
    pub index: InvertedIndex,
    pub conversations: Vec<Conversation>,
    pub rewrites: HashMap<String, String>,
    /// Precomputed re-ranker and RC streams; the overlap scorer is used when absent.
    pub scores: Option<(ScoreTable, LogitTable)>,
}

impl PipelineInputs {
    pub fn new(passages: Vec<Passage>, conversations: Vec<Conversation>) -> Result<Self> {
        let index = InvertedIndex::build(&passages)?;
        Ok(PipelineInputs {
            passages,
            index,
            conversations,
            rewrites: HashMap::new(),
            scores: None,
        })
    }

    pub fn load(config: &PipelineConfig) -> Result<Self> {
        let passages = load_corpus(&config.corpus)?;
        let conversations = load_conversations(&config.conversations)?;
        let mut inputs = Self::new(passages, conversations).map_err(|e| e.in_file(&config.corpus))?;
        if let Some(path) = &config.rewrite_file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
            inputs.rewrites = parse_rewrites(&text)
                .map_err(|e| e.in_file(path))?
                .into_iter()
                .collect();
        }
        if let (Some(rr), Some(rc)) = (&config.rerank.rerank_scores, &config.rerank.rc_logits) {
            inputs.scores = Some((load_score_table(rr)?, load_logit_table(rc)?));
        }
        Ok(inputs)
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Resolved query per qid, in conversation then turn order.
    pub queries: Vec<(String, ResolvedQuery)>,
    /// BM25 lists at retrieval depth.
    pub initial: Run,
    /// Final lists at the cutoff.
    pub run: Run,
}

fn rewrite(turn: &Turn, resolver: Resolver, qid: &str, rewrites: &HashMap<String, String>) -> Result<ResolvedQuery> {
    let text = match resolver {
        Resolver::Manual => turn.manual_rewrite.as_ref(),
        Resolver::Automatic => turn.auto_rewrite.as_ref(),
        Resolver::File => rewrites.get(qid),
        _ => unreachable!("classifier resolvers are handled by the caller"),
    };
    text.map(ResolvedQuery::verbatim)
        .ok_or_else(|| Error::InvalidParameter(format!("no {resolver:?} rewrite available").to_lowercase()))
}

/// Resolves every turn of every conversation with the configured resolver.
pub fn resolve_all(config: &PipelineConfig, inputs: &PipelineInputs) -> Result<Vec<(String, ResolvedQuery)>> {
    let heuristic = match config.heuristic_min_idf {
        Some(min_idf) => HeuristicClassifier::with_min_idf(&inputs.index, min_idf),
        None => HeuristicClassifier::new(&inputs.index),
    };
    let classifier: Option<&dyn TermClassifier> = match config.resolver {
        Resolver::Null => Some(&NullClassifier),
        Resolver::Oracle => Some(&OracleClassifier),
        Resolver::Heuristic => Some(&heuristic),
        Resolver::Manual | Resolver::Automatic | Resolver::File => None,
    };
    let mut queries = Vec::new();
    for conversation in &inputs.conversations {
        for turn in conversation.turns() {
            let qid = conversation.qid(turn.turn_number);
            let resolved = match classifier {
                Some(c) => build_history(conversation, turn.turn_number)
                    .map(|history| resolve_query(turn, &history, c)),
                None => rewrite(turn, config.resolver, &qid, &inputs.rewrites),
            }
            .map_err(|e| e.at_stage("resolve", &qid))?;
            queries.push((qid, resolved));
        }
    }
    Ok(queries)
}

/// Stage timer for the log. `wasm32-unknown-unknown` has no clock, so there it reads zero.
struct Stopwatch(#[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))] std::time::Instant);

impl Stopwatch {
    fn start() -> Self {
        Stopwatch(
            #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
            std::time::Instant::now(),
        )
    }

    fn elapsed(&self) -> Duration {
        #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
        return self.0.elapsed();
        #[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
        Duration::ZERO
    }
}

pub fn run_pipeline(config: &PipelineConfig, inputs: &PipelineInputs) -> Result<PipelineOutput> {
    config.validate()?;

    let started = Stopwatch::start();
    let queries = resolve_all(config, inputs)?;
    log::info!("resolve: {} queries in {:?}", queries.len(), started.elapsed());

    let started = Stopwatch::start();
    let initial: Run = queries
        .iter()
        .map(|(qid, q)| {
            RankedList::from_scores(qid.clone(), inputs.index.search(&q.terms(), &config.bm25, config.depth))
        })
        .collect();
    log::info!(
        "retrieve: {} candidates in {:?}",
        initial.lists().iter().map(RankedList::len).sum::<usize>(),
        started.elapsed()
    );

    let run = if config.rerank.enabled {
        let started = Stopwatch::start();
        let built;
        let (rr, rc) = match &inputs.scores {
            Some((rr, rc)) => (rr, rc),
            None => {
                let terms: HashMap<String, Vec<String>> =
                    queries.iter().map(|(qid, q)| (qid.clone(), q.terms())).collect();
                built = OverlapScorer::new(&inputs.passages).tables(&initial, &terms);
                (&built.0, &built.1)
            }
        };
        let reranker = Reranker::new(rr, rc).with_missing(config.rerank.missing);
        let fusion = config.rerank.fusion();
        let run = initial
            .lists()
            .iter()
            .map(|l| {
                reranker
                    .rerank_list(l, &fusion, config.cutoff)
                    .map_err(|e| e.at_stage("rerank", &l.qid))
            })
            .collect::<Result<Run>>()?;
        log::info!("rerank: {} queries in {:?}", run.len(), started.elapsed());
        run
    } else {
        initial
            .lists()
            .iter()
            .map(|l| {
                let mut l = l.clone();
                l.truncate(config.cutoff);
                l
            })
            .collect()
    };

    Ok(PipelineOutput {
        queries,
        initial,
        run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conversation::Turn;

    fn inputs() -> PipelineInputs {
        let passages = vec![
            Passage::new("p1", "social security is a federal program"),
            Passage::new("p2", "the program is funded by payroll taxes"),
            Passage::new("p3", "social security trust fund owed money"),
            Passage::new("p4", "almond recipes vegetarian"),
        ];
        let conv = Conversation::new(
            "7",
            vec![
                Turn::new(1, "What is social security?"),
                Turn::new(2, "How much is owed?")
                    .with_manual("How much money is owed to social security?")
                    .with_auto("How much is owed to social security?"),
            ],
        )
        .unwrap();
        PipelineInputs::new(passages, vec![conv]).unwrap()
    }

    fn config() -> PipelineConfig {
        PipelineConfig::new("corpus.tsv", "conv.json")
    }

    #[test]
    fn null_without_rerank_is_bm25() {
        let inputs = inputs();
        let out = run_pipeline(&config(), &inputs).unwrap();
        let direct = inputs
            .index
            .search(&crate::tokenize("How much is owed?"), &Bm25Params::default(), 100);
        let got: Vec<(String, f64)> = out
            .run
            .get("7_2")
            .unwrap()
            .entries
            .iter()
            .map(|e| (e.pid.clone(), e.score))
            .collect();
        assert_eq!(got, direct);
        assert_eq!(out.queries[1].1.render(), "How much is owed?");
    }

    #[test]
    fn rewrite_resolvers() {
        let inputs = inputs();
        let mut c = config();
        c.resolver = Resolver::Manual;
        let err = run_pipeline(&c, &inputs).unwrap_err();
        assert!(matches!(&err, Error::Stage { stage: "resolve", qid, .. } if qid == "7_1"));

        let mut inputs = inputs;
        inputs.rewrites.insert("7_1".into(), "social security".into());
        inputs.rewrites.insert("7_2".into(), "social security owed".into());
        c.resolver = Resolver::File;
        c.rewrite_file = Some("x".into());
        let out = run_pipeline(&c, &inputs).unwrap();
        assert_eq!(out.queries[1].1.render(), "social security owed");
        assert_eq!(out.run.get("7_2").unwrap().entries[0].pid, "p3");
    }

    #[test]
    fn oracle_resolution_in_pipeline() {
        let mut c = config();
        c.resolver = Resolver::Oracle;
        let out = run_pipeline(&c, &inputs()).unwrap();
        assert_eq!(out.queries[1].1.render(), "How much is owed? social security");
    }

    #[test]
    fn rerank_with_builtin_scorer_respects_cutoff() {
        let mut c = config();
        c.resolver = Resolver::Oracle;
        c.rerank.enabled = true;
        c.cutoff = 1;
        c.depth = 3;
        let out = run_pipeline(&c, &inputs()).unwrap();
        for list in out.run.lists() {
            assert!(list.len() <= 1);
            for pid in list.pids() {
                assert!(out.initial.get(&list.qid).unwrap().pids().any(|p| p == pid));
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut c = config();
        c.cutoff = 200;
        assert!(c.validate().is_err());
        let mut c = config();
        c.resolver = Resolver::File;
        assert!(c.validate().is_err());
        let mut c = config();
        c.rerank.weight = 2.0;
        assert!(c.validate().is_err());
        let mut c = config();
        c.tag = "two words".into();
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_round_trip_and_rebase() {
        let text = r#"
            corpus = "passages.tsv"
            conversations = "/abs/topics.json"
            resolver = "external-rewrite-file"
            rewrite_file = "rw.tsv"
            tag = "HumanQR"
            [bm25]
            k1 = 1.2
            b = 0.75
            [rerank]
            enabled = true
            missing = "min"
        "#;
        let mut c = PipelineConfig::from_toml(text).unwrap();
        assert_eq!(c.resolver, Resolver::File);
        assert_eq!(c.depth, 100);
        assert_eq!(c.rerank.weight, 0.5);
        assert_eq!(c.rerank.missing, MissingScore::Min);
        assert_eq!(PipelineConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        c.rebase(Path::new("/data/exp"));
        assert_eq!(c.corpus, PathBuf::from("/data/exp/passages.tsv"));
        assert_eq!(c.conversations, PathBuf::from("/abs/topics.json"));
        assert_eq!(c.rewrite_file, Some(PathBuf::from("/data/exp/rw.tsv")));
        assert!(PipelineConfig::from_toml("corpus = 'a'\nconversations = 'b'\nbogus = 1").is_err());
    }
}
