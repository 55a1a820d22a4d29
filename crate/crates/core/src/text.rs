//! Tokenization shared by indexing, query resolution and scoring.

/// Case-folds `text` and splits it on every non-alphanumeric character.
///
/// No stemming and no stopword removal. Empty tokens are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|tok| !tok.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Distinct terms in first-occurrence order.
pub(crate) fn distinct<'a, I>(terms: I) -> Vec<&'a str>
where
    I: IntoIterator<Item = &'a String>,
{
    let mut seen = std::collections::HashSet::new();
    terms
        .into_iter()
        .map(String::as_str)
        .filter(|t| seen.insert(*t))
        .collect()
}
