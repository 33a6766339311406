//! "Did you mean" candidates for misspelled column names.

/// Maximum case-insensitive edit distance for a name to be suggested.
pub const MAX_SUGGESTION_DISTANCE: usize = 2;

/// Names within [`MAX_SUGGESTION_DISTANCE`] of `wanted`, closest first, ties by name.
pub fn nearest_names<'a>(wanted: &str, candidates: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let wanted = wanted.to_lowercase();
    let mut scored: Vec<(usize, &str)> = candidates
        .into_iter()
        .map(|c| (strsim::levenshtein(&wanted, &c.to_lowercase()), c))
        .filter(|(d, _)| *d <= MAX_SUGGESTION_DISTANCE)
        .collect();
    scored.sort();
    scored.into_iter().map(|(_, c)| c.to_string()).collect()
}
