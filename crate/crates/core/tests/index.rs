mod common;

use std::collections::HashSet;

use convrank::index::{read_corpus_jsonl, read_corpus_tsv};
use convrank::{tokenize, Bm25Params, InvertedIndex, Passage};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn build(corpus: &[(String, String)]) -> InvertedIndex {
    InvertedIndex::build(corpus.iter().map(|(id, t)| Passage::new(id.clone(), t.clone()))).unwrap()
}

#[test]
fn doc_freqs_match_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut corpus = common::random_corpus(&mut rng, 1000);
    while corpus.len() < 1000 {
        let i = corpus.len();
        corpus.push((format!("extra{i}"), "fund tax owed".into()));
    }
    let index = build(&corpus);
    assert_eq!(index.total_docs(), 1000);
    let docs: Vec<HashSet<String>> = corpus.iter().map(|(_, t)| common::tokens(t).into_iter().collect()).collect();
    let vocab: HashSet<&String> = docs.iter().flatten().collect();
    assert_eq!(index.num_terms(), vocab.len());
    for term in vocab {
        let df = docs.iter().filter(|d| d.contains(term)).count();
        assert_eq!(index.doc_freq(term), df, "{term}");
    }
    let total: usize = corpus.iter().map(|(_, t)| common::tokens(t).len()).sum();
    assert!((index.avg_doc_length() - total as f64 / 1000.0).abs() < 1e-12);
}

#[test]
fn search_equals_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let corpus = common::random_corpus(&mut rng, 80);
        let index = build(&corpus);
        let params = Bm25Params::new(rng.gen_range(0.0..2.0), rng.gen_range(0.0..=1.0)).unwrap();
        for _ in 0..5 {
            let query = common::random_query(&mut rng);
            let depth = rng.gen_range(1..=100);
            let got = index.search(&query, &params, depth);
            let want = common::bm25_scan(&corpus, &query, params.k1, params.b, depth);
            assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(&want) {
                assert_eq!(g.0, w.0);
                assert!((g.1 - w.1).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn snapshot_reproduces_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let corpus = common::random_corpus(&mut rng, 200);
    let index = build(&corpus);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("index.json");
    index.save(std::fs::File::create(&path).unwrap()).unwrap();
    let loaded = InvertedIndex::load(std::fs::File::open(&path).unwrap()).unwrap();
    for _ in 0..20 {
        let q = common::random_query(&mut rng);
        let p = Bm25Params::default();
        assert_eq!(index.search(&q, &p, 50), loaded.search(&q, &p, 50));
    }
}

#[test]
fn tsv_and_jsonl_corpora_agree() {
    let tsv = "a\tSocial security\nb\tFirst Lady\n";
    let jsonl = "{\"id\":\"a\",\"text\":\"Social security\"}\n{\"id\":\"b\",\"text\":\"First Lady\"}\n";
    let x = InvertedIndex::build(read_corpus_tsv(tsv.as_bytes()).unwrap()).unwrap();
    let y = InvertedIndex::build(read_corpus_jsonl(jsonl.as_bytes()).unwrap()).unwrap();
    assert_eq!(x, y);
}

fn arb_corpus() -> impl Strategy<Value = Vec<(String, String)>> {
    prop::collection::vec("(a|b|c|d|e)( (a|b|c|d|e)){0,6}", 1..20).prop_map(|texts| {
        texts
            .into_iter()
            .enumerate()
            .map(|(i, t)| (format!("p{i:02}"), t))
            .collect()
    })
}

proptest! {
    #[test]
    fn absent_term_never_changes_score(corpus in arb_corpus(), q in "(a|b|c)( (a|b|c)){0,3}") {
        let index = build(&corpus);
        let p = Bm25Params::default();
        let base = tokenize(&q);
        let mut extended = base.clone();
        extended.push("zzz".into());
        for (id, _) in &corpus {
            prop_assert_eq!(index.bm25_score(&base, id, &p).unwrap(), index.bm25_score(&extended, id, &p).unwrap());
        }
    }

    #[test]
    fn additive_over_distinct_terms(corpus in arb_corpus()) {
        let index = build(&corpus);
        let p = Bm25Params::default();
        let terms = tokenize("a b c d e");
        for (id, _) in &corpus {
            let whole = index.bm25_score(&terms, id, &p).unwrap();
            let parts: f64 = terms.iter().map(|t| index.bm25_score(std::slice::from_ref(t), id, &p).unwrap()).sum();
            prop_assert!((whole - parts).abs() < 1e-12);
        }
    }

    #[test]
    fn shorter_document_scores_at_least_as_high(pad in 1usize..10, tf in 1usize..4, k1 in 0.0f64..3.0, b in 0.01f64..=1.0) {
        let short = vec!["q"; tf].join(" ");
        let long = format!("{short} {}", vec!["x"; pad].join(" "));
        let index = InvertedIndex::build([Passage::new("long", long), Passage::new("short", short), Passage::new("other", "y")]).unwrap();
        let p = Bm25Params::new(k1, b).unwrap();
        let q = tokenize("q");
        prop_assert!(index.bm25_score(&q, "short", &p).unwrap() >= index.bm25_score(&q, "long", &p).unwrap());
    }

    #[test]
    fn b_zero_is_length_independent(pad in 0usize..10, tf in 1usize..4, k1 in 0.0f64..3.0) {
        let short = vec!["q"; tf].join(" ");
        let long = format!("{short} {}", vec!["x"; pad].join(" "));
        let index = InvertedIndex::build([Passage::new("long", long), Passage::new("short", short)]).unwrap();
        let p = Bm25Params::new(k1, 0.0).unwrap();
        let q = tokenize("q");
        let diff = index.bm25_score(&q, "short", &p).unwrap() - index.bm25_score(&q, "long", &p).unwrap();
        prop_assert!(diff.abs() < 1e-12);
    }

    #[test]
    fn build_and_search_are_deterministic(corpus in arb_corpus(), q in "(a|b|c)( (a|b|c)){0,3}", depth in 1usize..30) {
        let p = Bm25Params::default();
        let terms = tokenize(&q);
        let first = build(&corpus).search(&terms, &p, depth);
        prop_assert_eq!(first, build(&corpus).search(&terms, &p, depth));
    }

    #[test]
    fn postings_hold_positive_frequencies(corpus in arb_corpus()) {
        let index = build(&corpus);
        for term in ["a", "b", "c", "d", "e"] {
            for (pid, tf) in index.postings_by_id(term) {
                prop_assert!(tf >= 1);
                prop_assert!(index.doc_length(pid).is_some());
            }
        }
    }
}
