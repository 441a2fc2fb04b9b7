//! Lexical helpers shared by extraction, validation and scoring.

/// Dedup key for component names: lowercase, punctuation removed,
/// whitespace collapsed to single spaces.
///
/// Hyphens and slashes separate words ("PT-101" becomes "pt 101") so that
/// tag spellings with and without separators still collide.
pub fn normalize_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut pending_space = false;
    for ch in name.chars() {
        if ch.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.extend(ch.to_lowercase());
        } else if ch.is_whitespace() || matches!(ch, '-' | '_' | '/') {
            pending_space = true;
        }
    }
    out
}
