//! Conversational passage retrieval.
//!
//! The crate implements a retrieval pipeline for multi-turn conversational
//! search: the current-turn query is resolved against the conversation
//! history by classifying history terms and appending the relevant ones,
//! passages are retrieved with BM25 over an inverted index, and the
//! candidates are re-ranked by interpolating a re-ranker score with a
//! reading-comprehension score. Runs are written in TREC format and
//! evaluated with the usual trec_eval metrics. The [`analysis`] module
//! attributes per-query failures to ranking or to query resolution.

pub mod analysis;
pub mod conversation;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod index;
pub mod pipeline;
pub mod text;
pub mod trec;

pub use analysis::{AnalysisConfig, AnalysisTable, ErrorClass, Pattern, QueryClassification};
pub use conversation::{
    Conversation, HeuristicClassifier, HistoryContext, NullClassifier, OracleClassifier,
    ResolvedQuery, TermClassifier, Turn,
};
pub use error::{Error, Result};
pub use eval::{EvalParams, Gain, Metric, MetricReport};
pub use fusion::{FusionConfig, LogitTable, MissingScore, RcLogits, ScoreTable};
pub use index::{Bm25Params, InvertedIndex, Passage};
pub use pipeline::{PipelineConfig, Resolver};
pub use text::tokenize;
pub use trec::{Qrels, RankedList, Run, RunEntry};
