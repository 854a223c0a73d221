//! Shared tokenization.

/// Lowercase, split on Unicode whitespace, trim non-alphanumeric characters
/// from both ends of each piece, and drop pieces that end up empty.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Whitespace word count, used for length bounds.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_edges_and_lowercases() {
        assert_eq!(tokenize("Hello, World! (it's) --"), vec!["hello", "world", "it's"]);
    }

    #[test]
    fn unicode_whitespace() {
        assert_eq!(tokenize("a\u{00a0}b\tc\n"), vec!["a", "b", "c"]);
    }
}
