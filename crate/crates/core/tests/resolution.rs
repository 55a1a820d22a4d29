use std::collections::HashSet;

use convrank::conversation::{build_history, classify_terms, resolve_query, resolve_turn, HistorySource};
use convrank::{tokenize, Conversation, HistoryContext, NullClassifier, OracleClassifier, TermClassifier, Turn};
use proptest::prelude::*;

/// Marks a fixed set of surface forms relevant.
struct Chosen(HashSet<String>);

impl Chosen {
    fn new(terms: &[&str]) -> Self {
        Chosen(terms.iter().map(|t| t.to_string()).collect())
    }
}

impl TermClassifier for Chosen {
    fn classify(&self, history: &HistoryContext, _turn: &Turn) -> Vec<bool> {
        history.terms().map(|t| self.0.contains(t)).collect()
    }
}

fn resolve(turns: Vec<Turn>, chosen: &[&str]) -> String {
    let n = turns.len();
    let conv = Conversation::new("x", turns).unwrap();
    resolve_turn(&conv, n, &Chosen::new(chosen)).unwrap().render()
}

#[test]
fn owed_to_social_security() {
    let turns = vec![
        Turn::new(1, "Tell me about the program").with_response("ignored"),
        Turn::new(2, "Is social security going broke?"),
        Turn::new(3, "How much is owed?"),
    ];
    assert_eq!(
        resolve(turns, &["program", "social", "security"]),
        "How much is owed? program social security"
    );
}

#[test]
fn distinct_surfaces_are_both_appended() {
    let turns = vec![
        Turn::new(1, "When do checks arrive?"),
        Turn::new(2, "Does a social check need security?"),
        Turn::new(3, "Can it be fixed?"),
    ];
    assert_eq!(
        resolve(turns, &["checks", "social", "check", "security"]),
        "Can it be fixed? checks social check security"
    );
}

#[test]
fn query_term_may_be_appended_again() {
    let turns = vec![
        Turn::new(1, "What are healthy snacks made with nuts?").with_response("Almonds and walnuts make healthy snacks."),
        Turn::new(2, "Oh almonds? Can you show me recipes with it?"),
    ];
    assert_eq!(
        resolve(turns, &["almonds"]),
        "Oh almonds? Can you show me recipes with it? almonds"
    );
}

#[test]
fn appended_terms_are_deduplicated_and_case_folded() {
    let turns = vec![
        Turn::new(1, "Who is Melania TRUMP?"),
        Turn::new(2, "Melania Trump, also spelled Melanija?").with_response("Melania Trump is the First Lady."),
        Turn::new(3, "What about Ivanka?"),
    ];
    assert_eq!(
        resolve(turns, &["melania", "melanija", "trump"]),
        "What about Ivanka? melania trump melanija"
    );
}

#[test]
fn null_resolver_is_identity() {
    let conv = Conversation::new(
        "105",
        vec![
            Turn::new(1, "Who is George Zimmerman?").with_response("Zimmerman shot Trayvon Martin."),
            Turn::new(2, "Why was he acquitted?"),
        ],
    )
    .unwrap();
    for n in 1..=2 {
        let q = resolve_turn(&conv, n, &NullClassifier).unwrap();
        assert_eq!(q.render(), conv.turns()[n - 1].raw_query);
    }
}

#[test]
fn oracle_uses_the_manual_rewrite() {
    let conv = Conversation::new(
        "102",
        vec![
            Turn::new(1, "What is social security?").with_response("A federal program."),
            Turn::new(2, "How much is owed?").with_manual("How much money is owed to social security?"),
        ],
    )
    .unwrap();
    let history = build_history(&conv, 2).unwrap();
    let verdicts = classify_terms(&history, &conv.turns()[1], &OracleClassifier);
    assert_eq!(verdicts.len(), history.len());
    for (term, relevant) in verdicts {
        assert_eq!(relevant, term == "social" || term == "security", "{term}");
    }
}

fn arb_conversation() -> impl Strategy<Value = Conversation> {
    let word = "(social|security|fund|lady|pay|almonds|the|it|is|trump)";
    let pattern = format!("{word}( {word}){{0,5}}");
    let text = || proptest::string::string_regex(&pattern).unwrap();
    prop::collection::vec(
        (text(), prop::option::of(text()), prop::option::of(text())),
        1..6,
    )
    .prop_map(|turns| {
        let turns = turns
            .into_iter()
            .enumerate()
            .map(|(i, (q, manual, response))| Turn {
                turn_number: i + 1,
                raw_query: q,
                auto_rewrite: None,
                manual_rewrite: manual,
                canonical_response: response,
            })
            .collect();
        Conversation::new("c", turns).unwrap()
    })
}

proptest! {
    #[test]
    fn resolution_properties(conv in arb_conversation()) {
        for turn in conv.turns() {
            let history = build_history(&conv, turn.turn_number).unwrap();
            let history_terms: HashSet<&String> = history.terms().collect();

            let null = resolve_query(turn, &history, &NullClassifier);
            prop_assert_eq!(null.render(), turn.raw_query.clone());

            let q = resolve_query(turn, &history, &OracleClassifier);
            let rendered = q.render();
            prop_assert!(rendered.starts_with(&turn.raw_query));
            prop_assert_eq!(&q.original_terms, &tokenize(&turn.raw_query));
            let unique: HashSet<&String> = q.appended_terms.iter().collect();
            prop_assert_eq!(unique.len(), q.appended_terms.len());
            for t in &q.appended_terms {
                prop_assert!(history_terms.contains(t));
                let manual = tokenize(turn.manual_rewrite.as_deref().unwrap_or(""));
                prop_assert!(manual.contains(t));
            }
        }
    }

    #[test]
    fn history_is_monotone(conv in arb_conversation()) {
        for n in 1..conv.turns().len() {
            let now = build_history(&conv, n).unwrap();
            let next = build_history(&conv, n + 1).unwrap();
            let queries = |h: &HistoryContext| -> Vec<_> {
                h.entries.iter().filter(|e| e.source == HistorySource::PreviousQuery).cloned().collect()
            };
            let (a, b) = (queries(&now), queries(&next));
            prop_assert_eq!(&b[..a.len()], &a[..]);
            // nothing but previous queries and the last response
            let responses: Vec<_> = next.entries.iter().filter(|e| e.source == HistorySource::PreviousResponse).collect();
            prop_assert!(responses.len() <= 1);
            for r in responses {
                prop_assert_eq!(r.turn_number, n);
            }
        }
    }
}
