//! Shared text normalization and tokenization.
//!
//! Every component that compares strings (duplicate detection, consistency
//! checks, cover-EM, ROUGE-L, index terms) goes through these helpers so that
//! the same notion of "equal text" is used end to end.

/// Lowercases, trims, collapses internal whitespace runs to a single space and
/// strips terminal `?`, `.` and `!` characters.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    loop {
        let trimmed = out.trim_end_matches(['?', '.', '!']).trim_end();
        if trimmed.len() == out.len() {
            break;
        }
        out.truncate(trimmed.len());
    }
    out
}

/// Whitespace tokens of the normalized text.
pub fn normalized_tokens(text: &str) -> Vec<String> {
    normalize(text).split(' ').filter(|t| !t.is_empty()).map(str::to_owned).collect()
}

/// Index/query terms: lowercased whitespace tokens with non-alphanumeric
/// characters trimmed from both ends. Empty terms are dropped.
pub fn terms(text: &str) -> Vec<String> {
    text.split_whitespace().filter_map(term_of).collect()
}

pub(crate) fn term_of(token: &str) -> Option<String> {
    let core = token.trim_matches(|c: char| !c.is_alphanumeric());
    if core.is_empty() {
        None
    } else {
        Some(core.chars().flat_map(char::to_lowercase).collect())
    }
}

/// Number of whitespace-separated words.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been",
    "before", "but", "by", "can", "could", "did", "do", "does", "for", "from", "had", "has",
    "have", "he", "her", "his", "how", "i", "if", "in", "into", "is", "it", "its", "of", "on",
    "or", "she", "so", "than", "that", "the", "their", "them", "then", "there", "these", "they",
    "this", "those", "to", "was", "were", "what", "when", "where", "which", "who", "whom",
    "whose", "why", "will", "with", "would", "you", "your",
];

/// Function words ignored by the lexical reader when matching query terms.
pub fn is_stopword(term: &str) -> bool {
    STOPWORDS.binary_search(&term).is_ok()
}

/// Sentence byte spans of `text`. A sentence ends at `.`, `?` or `!` followed
/// by whitespace (or at end of text); spans are trimmed of surrounding
/// whitespace and include the terminator. Whitespace-only pieces are dropped.
pub fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '?' | '!') {
            let at_boundary = match chars.peek() {
                Some((_, next)) => next.is_whitespace(),
                None => true,
            };
            if at_boundary {
                push_trimmed(text, start, i + c.len_utf8(), &mut spans);
                start = i + c.len_utf8();
            }
        }
    }
    push_trimmed(text, start, text.len(), &mut spans);
    spans
}

fn push_trimmed(text: &str, start: usize, end: usize, spans: &mut Vec<(usize, usize)>) {
    let piece = &text[start..end];
    let lead = piece.len() - piece.trim_start().len();
    let trimmed = piece.trim();
    if !trimmed.is_empty() {
        spans.push((start + lead, start + lead + trimmed.len()));
    }
}

/// Whitespace tokens of `text[start..end]` as absolute byte spans.
pub(crate) fn token_spans(text: &str, start: usize, end: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut tok_start = None;
    for (i, c) in text[start..end].char_indices() {
        if c.is_whitespace() {
            if let Some(s) = tok_start.take() {
                out.push((start + s, start + i));
            }
        } else if tok_start.is_none() {
            tok_start = Some(i);
        }
    }
    if let Some(s) = tok_start {
        out.push((start + s, end));
    }
    out
}

/// Converts a byte offset into a character offset.
pub fn char_offset(text: &str, byte: usize) -> usize {
    text[..byte].chars().count()
}

/// Byte offset of the `n`-th character (or `text.len()` when `n` is the char count).
pub fn byte_offset(text: &str, n: usize) -> Option<usize> {
    if n == 0 {
        return Some(0);
    }
    let mut count = 0;
    for (i, _) in text.char_indices() {
        if count == n {
            return Some(i);
        }
        count += 1;
    }
    (count == n).then_some(text.len())
}

/// Substring by character offsets, end exclusive.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let b0 = byte_offset(text, start)?;
    let b1 = byte_offset(text, end)?;
    Some(&text[b0..b1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize("Who directed  Jaws?"), "who directed jaws");
        assert_eq!(normalize(""), "");
        assert_eq!(normalize("  A.  "), "a");
        assert_eq!(normalize("Really?!  "), "really");
        assert_eq!(normalize("a ?"), "a");
    }

    #[test]
    fn stopwords_sorted() {
        let mut sorted = STOPWORDS.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, STOPWORDS);
    }

    #[test]
    fn terms_trim_punctuation() {
        assert_eq!(terms("Spielberg, (1946)!  --"), vec!["spielberg", "1946"]);
    }

    #[test]
    fn sentences_split_on_terminator_then_space() {
        let text = "Jaws is a film. It was released in 1975! Really? e.g.fine";
        let got: Vec<&str> = sentence_spans(text).iter().map(|&(a, b)| &text[a..b]).collect();
        assert_eq!(got, vec!["Jaws is a film.", "It was released in 1975!", "Really?", "e.g.fine"]);
    }

    #[test]
    fn char_offsets_roundtrip() {
        let t = "héllo wörld";
        let b = t.find('w').unwrap();
        let c = char_offset(t, b);
        assert_eq!(c, 6);
        assert_eq!(char_slice(t, 6, 11), Some("wörld"));
        assert_eq!(char_slice(t, 6, 12), None);
    }
}
