//! Shared tokenizer used by the vocabulary, the overlap predictor, and the
//! ROUGE metric: lowercase, split on any non-alphanumeric character.

/// Splits `text` into lowercase alphanumeric runs. `"[Heat (1995), 4]"`
/// becomes `["heat", "1995", "4"]`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            for lc in ch.to_lowercase() {
                cur.push(lc);
            }
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Token set of `text`, for overlap scoring.
pub fn token_set(text: &str) -> std::collections::BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_punctuation_and_lowercases() {
        assert_eq!(tokenize("[Heat (1995), 4]"), vec!["heat", "1995", "4"]);
        assert_eq!(tokenize("don't-stop"), vec!["don", "t", "stop"]);
        assert_eq!(tokenize("  "), Vec::<String>::new());
    }

    #[test]
    fn token_set_dedupes() {
        let s = token_set("the cat the hat");
        assert_eq!(s.len(), 3);
        assert!(s.contains("cat"));
    }
}
