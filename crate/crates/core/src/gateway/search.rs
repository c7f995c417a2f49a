use std::collections::BTreeSet;

use super::catalog::{Catalog, CatalogEntry};
use super::interface::ToolSignature;

pub const DEFAULT_K: usize = 10;
pub const MAX_K: usize = 50;

pub const NAME_WEIGHT: u32 = 3;
pub const DESCRIPTION_WEIGHT: u32 = 1;
pub const BACKEND_WEIGHT: u32 = 1;

/// Lowercase a word and fold simple English plurals.
pub fn normalize_term(word: &str) -> String {
    let w = word.to_lowercase();
    if w.len() > 4 && w.ends_with("ies") {
        format!("{}y", &w[..w.len() - 3])
    } else if w.len() > 3 && w.ends_with('s') && !w.ends_with("ss") {
        w[..w.len() - 1].to_string()
    } else {
        w
    }
}

/// Split on anything that is not alphanumeric; `_`, `-` and `.` separate words.
pub fn terms(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(normalize_term).collect()
}

/// Weighted term overlap between `query` and one entry.
pub fn score(query: &BTreeSet<String>, entry: &CatalogEntry) -> u32 {
    let name = terms(&entry.name);
    let description = terms(&entry.description);
    let backend = terms(&entry.backend);
    query
        .iter()
        .map(|t| {
            let mut s = 0;
            if name.contains(t) {
                s += NAME_WEIGHT;
            }
            if description.contains(t) {
                s += DESCRIPTION_WEIGHT;
            }
            if backend.contains(t) {
                s += BACKEND_WEIGHT;
            }
            s
        })
        .sum()
}

/// Top `k` entries by score; ties go to the lexicographically smaller qualified name.
pub fn search(catalog: &Catalog, query: &str, k: usize) -> Vec<ToolSignature> {
    let q = terms(query);
    if q.is_empty() || k == 0 {
        return Vec::new();
    }
    let mut scored: Vec<(u32, &CatalogEntry)> =
        catalog.entries().iter().map(|e| (score(&q, e), e)).filter(|(s, _)| *s > 0).collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.qualified.cmp(&b.1.qualified)));
    scored.into_iter().take(k.min(MAX_K)).map(|(_, e)| ToolSignature::of(e)).collect()
}
