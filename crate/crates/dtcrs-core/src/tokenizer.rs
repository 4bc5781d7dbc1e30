//! Pluggable tokenization.
//!
//! All token limits in the pipeline (chunk size, summary budget, retrieval
//! budget) are interpreted under the configured tokenizer. The default is a
//! deterministic Unicode word-and-punctuation tokenizer: a token is either a
//! maximal run of alphanumeric characters or a single non-whitespace,
//! non-alphanumeric character.

/// Counts tokens and cuts text at token boundaries.
pub trait Tokenizer: Send + Sync {
    /// Number of tokens in `text`.
    fn count(&self, text: &str) -> usize;

    /// Byte spans of each token, in order.
    fn spans(&self, text: &str) -> Vec<(usize, usize)>;

    /// Cut `text` after at most `max_tokens` tokens. Returns the prefix and
    /// whether anything was cut.
    fn truncate(&self, text: &str, max_tokens: usize) -> (String, bool) {
        let spans = self.spans(text);
        if spans.len() <= max_tokens {
            return (text.to_string(), false);
        }
        if max_tokens == 0 {
            return (String::new(), true);
        }
        let end = spans[max_tokens - 1].1;
        (text[..end].to_string(), true)
    }
}

/// Default deterministic tokenizer: alphanumeric runs and single
/// punctuation characters.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnicodeTokenizer;

impl Tokenizer for UnicodeTokenizer {
    fn count(&self, text: &str) -> usize {
        let mut count = 0usize;
        let mut in_word = false;
        for ch in text.chars() {
            if ch.is_whitespace() {
                in_word = false;
            } else if ch.is_alphanumeric() {
                if !in_word {
                    count += 1;
                    in_word = true;
                }
            } else {
                count += 1;
                in_word = false;
            }
        }
        count
    }

    fn spans(&self, text: &str) -> Vec<(usize, usize)> {
        let mut spans = Vec::new();
        let mut word_start: Option<usize> = None;
        for (idx, ch) in text.char_indices() {
            if ch.is_alphanumeric() {
                if word_start.is_none() {
                    word_start = Some(idx);
                }
            } else {
                if let Some(start) = word_start.take() {
                    spans.push((start, idx));
                }
                if !ch.is_whitespace() {
                    spans.push((idx, idx + ch.len_utf8()));
                }
            }
        }
        if let Some(start) = word_start {
            spans.push((start, text.len()));
        }
        spans
    }
}
