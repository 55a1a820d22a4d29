//! Brute-force reference implementations used as test oracles.
//!
//! Nothing here calls into the library's scoring, indexing or metric code.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;

pub fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Scores every passage with the BM25 formula evaluated from raw text, then
/// sorts by (-score, id) and truncates.
pub fn bm25_scan(corpus: &[(String, String)], query: &[String], k1: f64, b: f64, depth: usize) -> Vec<(String, f64)> {
    let docs: Vec<Vec<String>> = corpus.iter().map(|(_, t)| tokens(t)).collect();
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut distinct: Vec<&String> = Vec::new();
    for q in query {
        if !distinct.contains(&q) {
            distinct.push(q);
        }
    }
    let mut scored: Vec<(String, f64)> = corpus
        .iter()
        .zip(&docs)
        .map(|((id, _), doc)| {
            let mut s = 0.0;
            for q in &distinct {
                let tf = doc.iter().filter(|t| t == q).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = docs.iter().filter(|d| d.contains(q)).count() as f64;
                let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
                let len = doc.len() as f64;
                s += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avgdl));
            }
            (id.clone(), s)
        })
        .filter(|(_, s)| *s > 0.0)
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored.truncate(depth);
    scored
}

pub type Grades = HashMap<String, u32>;

pub fn ndcg(ranking: &[String], grades: &Grades, k: usize) -> Option<f64> {
    let mut ideal: Vec<u32> = grades.values().copied().filter(|&g| g > 0).collect();
    if ideal.is_empty() {
        return None;
    }
    ideal.sort();
    ideal.reverse();
    let mut dcg = 0.0;
    for (i, pid) in ranking.iter().enumerate().take(k) {
        dcg += *grades.get(pid).unwrap_or(&0) as f64 / ((i + 2) as f64).log2();
    }
    let mut idcg = 0.0;
    for (i, g) in ideal.iter().enumerate().take(k) {
        idcg += *g as f64 / ((i + 2) as f64).log2();
    }
    Some(dcg / idcg)
}

fn relevant(grades: &Grades, at: u32) -> HashSet<&String> {
    grades.iter().filter(|(_, &g)| g >= at).map(|(p, _)| p).collect()
}

pub fn ap(ranking: &[String], grades: &Grades, at: u32) -> Option<f64> {
    let rel = relevant(grades, at);
    if rel.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    for k in 1..=ranking.len() {
        if rel.contains(&ranking[k - 1]) {
            let hits = ranking[..k].iter().filter(|p| rel.contains(p)).count();
            sum += hits as f64 / k as f64;
        }
    }
    Some(sum / rel.len() as f64)
}

pub fn rr(ranking: &[String], grades: &Grades, at: u32) -> Option<f64> {
    let rel = relevant(grades, at);
    if rel.is_empty() {
        return None;
    }
    for (i, p) in ranking.iter().enumerate() {
        if rel.contains(p) {
            return Some(1.0 / (i + 1) as f64);
        }
    }
    Some(0.0)
}

pub fn recall(ranking: &[String], grades: &Grades, k: usize, at: u32) -> Option<f64> {
    let rel = relevant(grades, at);
    if rel.is_empty() {
        return None;
    }
    let top: HashSet<&String> = ranking.iter().take(k).collect();
    Some(rel.intersection(&top).count() as f64 / rel.len() as f64)
}

/// A random ranking over a pool of at most 50 passages with at most 10 graded ones.
pub fn random_instance<R: Rng>(rng: &mut R) -> (Vec<String>, Grades) {
    let pool: Vec<String> = (0..rng.gen_range(1..=50)).map(|i| format!("p{i}")).collect();
    let mut grades = Grades::new();
    let judged = rng.gen_range(0..=10.min(pool.len()));
    for pid in pool.choose_multiple(rng, judged) {
        grades.insert(pid.clone(), rng.gen_range(0..=4));
    }
    // judged passages that may not be retrieved
    if rng.gen_bool(0.3) {
        grades.insert("unretrieved".into(), rng.gen_range(1..=4));
    }
    let mut ranking = pool.clone();
    ranking.shuffle(rng);
    ranking.truncate(rng.gen_range(0..=pool.len()));
    (ranking, grades)
}

/// (original, resolved, human) classification by the written rules.
pub fn class_by_rules(o: f64, r: f64, h: f64, t: f64) -> (usize, &'static str) {
    let pass = |v: f64| if t == 0.0 { v > 0.0 } else { v >= t };
    let row = pass(o) as usize + 2 * pass(r) as usize + 4 * pass(h) as usize;
    let class = if !pass(h) {
        "ranking_error"
    } else if !pass(r) {
        "query_resolution_error"
    } else {
        "no_error"
    };
    (row, class)
}

pub fn random_values<R: Rng>(rng: &mut R, n: usize) -> Vec<(String, [f64; 3])> {
    let value = |rng: &mut R| match rng.gen_range(0..4) {
        0 => 0.0,
        1 => 1.0,
        2 => (rng.gen_range(0..=50) as f64) / 50.0,
        _ => rng.gen::<f64>(),
    };
    (0..n)
        .map(|i| (format!("q{i}"), [value(rng), value(rng), value(rng)]))
        .collect()
}

pub fn to_maps(rows: &[(String, [f64; 3])]) -> [BTreeMap<String, f64>; 3] {
    let mut maps: [BTreeMap<String, f64>; 3] = Default::default();
    for (q, v) in rows {
        for i in 0..3 {
            maps[i].insert(q.clone(), v[i]);
        }
    }
    maps
}

/// Random corpus over a small vocabulary so that terms repeat.
pub fn random_corpus<R: Rng>(rng: &mut R, max_docs: usize) -> Vec<(String, String)> {
    const VOCAB: &[&str] = &[
        "social", "security", "trust", "fund", "tax", "payroll", "first", "lady", "pay", "almond",
        "recipe", "heart", "the", "of", "a", "is", "owed", "fixed", "salary", "public",
    ];
    let n = rng.gen_range(1..=max_docs);
    (0..n)
        .map(|i| {
            let len = rng.gen_range(0..=12);
            let text: Vec<String> = (0..len)
                .map(|_| {
                    let w = VOCAB[rng.gen_range(0..VOCAB.len())];
                    if rng.gen_bool(0.1) { w.to_uppercase() } else { w.to_string() }
                })
                .collect();
            (format!("d{:04}", rng.gen_range(0..100_000) * 1000 + i), text.join(if rng.gen_bool(0.5) { " " } else { ", " }))
        })
        .collect()
}

pub fn random_query<R: Rng>(rng: &mut R) -> Vec<String> {
    const QVOCAB: &[&str] = &["social", "security", "fund", "lady", "almond", "heart", "the", "zebra", "owed"];
    (0..rng.gen_range(0..=5))
        .map(|_| QVOCAB[rng.gen_range(0..QVOCAB.len())].to_string())
        .collect()
}
