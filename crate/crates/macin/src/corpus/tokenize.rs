/// Lowercases, splits on whitespace, and strips leading/trailing
/// punctuation from each token. Interior punctuation survives, so
/// "U.S." becomes "u.s". Empty tokens are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|tok| tok.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|tok| !tok.is_empty())
        .map(|tok| tok.to_lowercase())
        .collect()
}

/// Splits body text into sentences on `.`, `?` or `!` followed by
/// whitespace (or end of text). Deliberately simple; bodies are stored
/// pre-split so downstream results never depend on re-running this.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        if matches!(chars[i], '.' | '?' | '!') {
            // consume a run of sentence-final punctuation
            let mut end = i + 1;
            while end < chars.len() && matches!(chars[end], '.' | '?' | '!') {
                end += 1;
            }
            if end >= chars.len() || chars[end].is_whitespace() {
                let s: String = chars[start..end].iter().collect();
                let s = s.trim();
                if !s.is_empty() {
                    sentences.push(s.to_string());
                }
                start = end;
                i = end;
                continue;
            }
        }
        i += 1;
    }
    let tail: String = chars[start..].iter().collect();
    let tail = tail.trim();
    if !tail.is_empty() {
        sentences.push(tail.to_string());
    }
    sentences
}
