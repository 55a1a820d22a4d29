//! Conversations, history construction and term-classification query resolution.
//!
//! The history of turn `n` holds every previous raw query followed by the
//! canonical response of turn `n - 1` only. A [`TermClassifier`] marks each
//! history term occurrence as relevant or not; the relevant terms are
//! appended, case-folded and deduplicated among themselves, to the raw query.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{idf, InvertedIndex};
use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub turn_number: usize,
    pub raw_query: String,
    pub auto_rewrite: Option<String>,
    pub manual_rewrite: Option<String>,
    pub canonical_response: Option<String>,
}

impl Turn {
    pub fn new(turn_number: usize, raw_query: impl Into<String>) -> Self {
        Turn {
            turn_number,
            raw_query: raw_query.into(),
            auto_rewrite: None,
            manual_rewrite: None,
            canonical_response: None,
        }
    }

    pub fn with_manual(mut self, text: impl Into<String>) -> Self {
        self.manual_rewrite = Some(text.into());
        self
    }

    pub fn with_auto(mut self, text: impl Into<String>) -> Self {
        self.auto_rewrite = Some(text.into());
        self
    }

    pub fn with_response(mut self, text: impl Into<String>) -> Self {
        self.canonical_response = Some(text.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    id: String,
    turns: Vec<Turn>,
}

impl Conversation {
    /// Turn numbers must be exactly `1..=n` in order and raw queries non-empty.
    pub fn new(id: impl Into<String>, turns: Vec<Turn>) -> Result<Self> {
        let id = id.into();
        let invalid = |message: String| Error::InvalidConversation {
            id: id.clone(),
            message,
        };
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(invalid("conversation id must be non-empty without whitespace".into()));
        }
        for (i, turn) in turns.iter().enumerate() {
            if turn.turn_number != i + 1 {
                return Err(invalid(format!(
                    "turn numbers must be contiguous from 1, found {} at position {}",
                    turn.turn_number,
                    i + 1
                )));
            }
            if turn.raw_query.trim().is_empty() {
                return Err(invalid(format!("turn {} has an empty raw query", i + 1)));
            }
        }
        Ok(Conversation { id, turns })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn turn(&self, turn_number: usize) -> Result<&Turn> {
        turn_number
            .checked_sub(1)
            .and_then(|i| self.turns.get(i))
            .ok_or_else(|| Error::TurnOutOfRange {
                id: self.id.clone(),
                turn: turn_number,
                len: self.turns.len(),
            })
    }

    /// `<conversation_id>_<turn_number>`.
    pub fn qid(&self, turn_number: usize) -> String {
        format!("{}_{}", self.id, turn_number)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistorySource {
    PreviousQuery,
    PreviousResponse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub source: HistorySource,
    pub turn_number: usize,
    pub terms: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryContext {
    pub entries: Vec<HistoryEntry>,
}

impl HistoryContext {
    /// Every term occurrence, in history order.
    pub fn terms(&self) -> impl Iterator<Item = &String> {
        self.entries.iter().flat_map(|e| e.terms.iter())
    }

    pub fn len(&self) -> usize {
        self.entries.iter().map(|e| e.terms.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn build_history(conversation: &Conversation, turn_number: usize) -> Result<HistoryContext> {
    conversation.turn(turn_number)?;
    let previous = &conversation.turns()[..turn_number - 1];
    let mut entries: Vec<HistoryEntry> = previous
        .iter()
        .map(|t| HistoryEntry {
            source: HistorySource::PreviousQuery,
            turn_number: t.turn_number,
            terms: tokenize(&t.raw_query),
        })
        .collect();
    if let Some(last) = previous.last() {
        if let Some(response) = &last.canonical_response {
            entries.push(HistoryEntry {
                source: HistorySource::PreviousResponse,
                turn_number: last.turn_number,
                terms: tokenize(response),
            });
        }
    }
    Ok(HistoryContext { entries })
}

/// Binary relevance classifier over history term occurrences.
///
/// Implementations must return exactly one verdict per term yielded by
/// [`HistoryContext::terms`], in the same order.
pub trait TermClassifier {
    fn classify(&self, history: &HistoryContext, turn: &Turn) -> Vec<bool>;
}

impl<T: TermClassifier + ?Sized> TermClassifier for &T {
    fn classify(&self, history: &HistoryContext, turn: &Turn) -> Vec<bool> {
        (**self).classify(history, turn)
    }
}

/// Never relevant: resolution reduces to the raw query.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullClassifier;

impl TermClassifier for NullClassifier {
    fn classify(&self, history: &HistoryContext, _turn: &Turn) -> Vec<bool> {
        vec![false; history.len()]
    }
}

/// Relevant iff the term occurs in the turn's gold rewrite (manual, falling
/// back to automatic) but not in its raw query.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleClassifier;

impl TermClassifier for OracleClassifier {
    fn classify(&self, history: &HistoryContext, turn: &Turn) -> Vec<bool> {
        let Some(gold) = turn.manual_rewrite.as_ref().or(turn.auto_rewrite.as_ref()) else {
            return vec![false; history.len()];
        };
        let original: HashSet<String> = tokenize(&turn.raw_query).into_iter().collect();
        let targets: HashSet<String> = tokenize(gold)
            .into_iter()
            .filter(|t| !original.contains(t))
            .collect();
        history.terms().map(|t| targets.contains(t)).collect()
    }
}

/// Function words never appended by [`HeuristicClassifier`].
pub const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been",
    "but", "by", "can", "could", "did", "do", "does", "for", "from", "had", "has", "have", "he",
    "her", "him", "his", "how", "i", "if", "in", "into", "is", "it", "its", "me", "more", "most",
    "my", "no", "not", "of", "on", "or", "other", "our", "she", "so", "some", "such", "tell",
    "than", "that", "the", "their", "them", "then", "there", "these", "they", "this", "those",
    "to", "us", "was", "we", "were", "what", "when", "where", "which", "who", "why", "will",
    "with", "would", "you", "your",
];

/// Relevant iff the term is not a stopword, is not already in the current
/// query, and has corpus idf at least `min_idf`.
#[derive(Debug, Clone)]
pub struct HeuristicClassifier<'a> {
    index: &'a InvertedIndex,
    min_idf: f64,
}

impl<'a> HeuristicClassifier<'a> {
    /// Fraction of passages used for the default idf threshold.
    pub const DEFAULT_MAX_DF_FRACTION: f64 = 0.1;

    /// Threshold set to the idf of a term found in 10% of the passages.
    pub fn new(index: &'a InvertedIndex) -> Self {
        let min_idf = Self::idf_at_fraction(index.total_docs(), Self::DEFAULT_MAX_DF_FRACTION);
        HeuristicClassifier { index, min_idf }
    }

    pub fn with_min_idf(index: &'a InvertedIndex, min_idf: f64) -> Self {
        HeuristicClassifier { index, min_idf }
    }

    /// idf of a term whose document frequency is `fraction * total_docs`.
    pub fn idf_at_fraction(total_docs: usize, fraction: f64) -> f64 {
        let n = total_docs as f64;
        let df = fraction * n;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    pub fn min_idf(&self) -> f64 {
        self.min_idf
    }

    pub fn is_relevant(&self, term: &str, query_terms: &HashSet<String>) -> bool {
        !STOPWORDS.contains(&term)
            && !query_terms.contains(term)
            && idf(self.index.total_docs(), self.index.doc_freq(term)) >= self.min_idf
    }
}

impl TermClassifier for HeuristicClassifier<'_> {
    fn classify(&self, history: &HistoryContext, turn: &Turn) -> Vec<bool> {
        let query: HashSet<String> = tokenize(&turn.raw_query).into_iter().collect();
        history.terms().map(|t| self.is_relevant(t, &query)).collect()
    }
}

/// One verdict per history term occurrence, order-preserving.
pub fn classify_terms<C: TermClassifier + ?Sized>(
    history: &HistoryContext,
    turn: &Turn,
    classifier: &C,
) -> Vec<(String, bool)> {
    let verdicts = classifier.classify(history, turn);
    assert_eq!(
        verdicts.len(),
        history.len(),
        "classifier returned {} verdicts for {} history terms",
        verdicts.len(),
        history.len()
    );
    history.terms().cloned().zip(verdicts).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedQuery {
    pub original_text: String,
    pub original_terms: Vec<String>,
    pub appended_terms: Vec<String>,
}

impl ResolvedQuery {
    /// A query used verbatim, with nothing appended.
    pub fn verbatim(text: impl Into<String>) -> Self {
        let original_text = text.into();
        ResolvedQuery {
            original_terms: tokenize(&original_text),
            original_text,
            appended_terms: Vec::new(),
        }
    }

    /// Original text followed by the appended terms separated by spaces.
    pub fn render(&self) -> String {
        if self.appended_terms.is_empty() {
            return self.original_text.clone();
        }
        let mut out = self.original_text.clone();
        for term in &self.appended_terms {
            out.push(' ');
            out.push_str(term);
        }
        out
    }

    /// Retrieval terms: original terms then appended terms.
    pub fn terms(&self) -> Vec<String> {
        self.original_terms
            .iter()
            .chain(&self.appended_terms)
            .cloned()
            .collect()
    }
}

pub fn resolve_query<C: TermClassifier + ?Sized>(
    turn: &Turn,
    history: &HistoryContext,
    classifier: &C,
) -> ResolvedQuery {
    let mut seen = HashSet::new();
    let appended_terms = classify_terms(history, turn, classifier)
        .into_iter()
        .filter(|(_, relevant)| *relevant)
        .map(|(term, _)| term)
        .filter(|term| seen.insert(term.clone()))
        .collect();
    ResolvedQuery {
        original_text: turn.raw_query.clone(),
        original_terms: tokenize(&turn.raw_query),
        appended_terms,
    }
}

/// Builds the history for `turn_number` and resolves that turn.
pub fn resolve_turn<C: TermClassifier + ?Sized>(
    conversation: &Conversation,
    turn_number: usize,
    classifier: &C,
) -> Result<ResolvedQuery> {
    let history = build_history(conversation, turn_number)?;
    Ok(resolve_query(conversation.turn(turn_number)?, &history, classifier))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum IdField {
    Text(String),
    Number(u64),
}

impl IdField {
    fn into_string(self) -> String {
        match self {
            IdField::Text(s) => s,
            IdField::Number(n) => n.to_string(),
        }
    }
}

#[derive(Deserialize)]
struct RawConversation {
    number: IdField,
    turns: Vec<RawTurn>,
}

#[derive(Deserialize)]
struct RawTurn {
    number: usize,
    raw_utterance: String,
    #[serde(default)]
    automatic_rewritten_utterance: Option<String>,
    #[serde(default)]
    manual_rewritten_utterance: Option<String>,
    #[serde(default)]
    canonical_response_text: Option<String>,
}

impl RawConversation {
    fn into_conversation(self) -> Result<Conversation> {
        let turns = self
            .turns
            .into_iter()
            .map(|t| Turn {
                turn_number: t.number,
                raw_query: t.raw_utterance,
                auto_rewrite: t.automatic_rewritten_utterance,
                manual_rewrite: t.manual_rewritten_utterance,
                canonical_response: t.canonical_response_text,
            })
            .collect();
        Conversation::new(self.number.into_string(), turns)
    }
}

/// Parses either a JSON array of conversations or a stream of conversation
/// objects (JSON-lines).
pub fn parse_conversations(input: &str) -> Result<Vec<Conversation>> {
    let raw: Vec<RawConversation> = if input.trim_start().starts_with('[') {
        serde_json::from_str(input)?
    } else {
        serde_json::Deserializer::from_str(input)
            .into_iter::<RawConversation>()
            .collect::<std::result::Result<_, _>>()?
    };
    raw.into_iter().map(RawConversation::into_conversation).collect()
}

pub fn load_conversations(path: &Path) -> Result<Vec<Conversation>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    parse_conversations(&text).map_err(|e| e.in_file(path))
}

/// Writes `qid<TAB>resolved_text` lines.
pub fn write_resolved<'a, W, I>(mut out: W, rows: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a ResolvedQuery)>,
{
    for (qid, query) in rows {
        writeln!(out, "{}\t{}", qid, query.render().replace(['\t', '\n', '\r'], " "))?;
    }
    Ok(())
}

/// Reads `qid<TAB>text` rewrite files.
pub fn parse_rewrites(input: &str) -> Result<Vec<(String, String)>> {
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (qid, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(i + 1, "expected `qid<TAB>text`"))?;
        rows.push((qid.to_string(), text.to_string()));
    }
    Ok(rows)
}
