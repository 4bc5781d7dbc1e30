//! Fixed-size, sentence-aligned document chunking.
//!
//! Sentences never straddle a chunk boundary: a sentence that would cross
//! the token limit starts the next chunk whole. Splitting is rule-based
//! (terminator characters plus an abbreviation guard) so results are
//! deterministic.

use crate::error::{Error, Result};
use crate::model::{Chunk, Document};
use crate::tokenizer::Tokenizer;

/// Byte span of one sentence, with its token count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SentenceSpan {
    pub start: usize,
    pub end: usize,
    pub token_count: usize,
}

/// Abbreviations whose trailing period does not end a sentence.
/// Multi-dot forms are matched against the token scanned back from the
/// period, with internal dots kept.
const ABBREVIATIONS: &[&str] = &[
    "dr", "mr", "mrs", "ms", "prof", "sr", "jr", "st", "etc", "vs", "fig", "figs", "eq",
    "eqs", "al", "e.g", "i.e", "no", "vol", "inc", "ltd", "co", "dept", "univ", "approx",
    "cf", "resp",
];

/// Result of chunking, including oversized-sentence warnings.
#[derive(Debug, Clone)]
pub struct ChunkOutcome {
    pub chunks: Vec<Chunk>,
    /// Ids of chunks made from a single sentence longer than the limit.
    pub oversized: Vec<String>,
}

/// Split text into sentence spans. Spans are ordered, non-overlapping, and
/// cover all non-whitespace text; each ends at `.`, `!`, `?` (outside known
/// abbreviations) or end-of-text.
pub fn split_sentences(text: &str, tokenizer: &dyn Tokenizer) -> Vec<SentenceSpan> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut iter = text.char_indices().peekable();

    while let Some((idx, ch)) = iter.next() {
        if start.is_none() {
            if ch.is_whitespace() {
                continue;
            }
            start = Some(idx);
        }
        if !matches!(ch, '.' | '!' | '?') {
            continue;
        }
        if ch == '.' && !period_terminates(text, bytes, idx) {
            continue;
        }
        // Attach closing quotes/brackets to the sentence.
        let mut end = idx + ch.len_utf8();
        while let Some(&(next_idx, next_ch)) = iter.peek() {
            if matches!(next_ch, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}') {
                end = next_idx + next_ch.len_utf8();
                iter.next();
            } else {
                break;
            }
        }
        // The terminator only counts if followed by whitespace or the end.
        match iter.peek() {
            Some(&(_, next_ch)) if !next_ch.is_whitespace() => continue,
            _ => {}
        }
        let span_start = start.take().expect("sentence start tracked");
        spans.push(make_span(text, span_start, end, tokenizer));
    }

    if let Some(span_start) = start {
        spans.push(make_span(text, span_start, text.len(), tokenizer));
    }
    spans
}

fn make_span(text: &str, start: usize, end: usize, tokenizer: &dyn Tokenizer) -> SentenceSpan {
    let trimmed = text[start..end].trim_end();
    let end = start + trimmed.len();
    SentenceSpan {
        start,
        end,
        token_count: tokenizer.count(&text[start..end]),
    }
}

/// Decide whether the period at `idx` ends a sentence.
fn period_terminates(text: &str, bytes: &[u8], idx: usize) -> bool {
    // Scan back over the word the period attaches to (letters, digits, dots).
    let mut word_start = idx;
    while word_start > 0 {
        let prev = bytes[word_start - 1];
        if prev.is_ascii_alphanumeric() || prev == b'.' {
            word_start -= 1;
        } else if prev >= 0x80 {
            // Multi-byte character: step to its boundary and keep scanning if
            // alphanumeric.
            let mut char_start = word_start - 1;
            while char_start > 0 && (bytes[char_start] & 0xC0) == 0x80 {
                char_start -= 1;
            }
            match text[char_start..].chars().next() {
                Some(c) if c.is_alphanumeric() => word_start = char_start,
                _ => break,
            }
        } else {
            break;
        }
    }
    let word = text[word_start..idx].trim_matches('.');
    if word.is_empty() {
        return true;
    }
    // Decimal numbers: "3.14" has a digit right after the dot, which the
    // whitespace rule already rejects; a trailing "14." does terminate.
    let lowered = word.to_lowercase();
    !ABBREVIATIONS.contains(&lowered.as_str())
}

/// Greedily pack sentences into chunks of at most `limit` tokens.
///
/// A single sentence above the limit becomes its own chunk and is reported
/// in `oversized`.
pub fn chunk(document: &Document, limit: usize, tokenizer: &dyn Tokenizer) -> Result<ChunkOutcome> {
    if limit == 0 {
        return Err(Error::invalid("chunk token limit must be positive"));
    }
    let sentences = split_sentences(&document.text, tokenizer);
    let mut chunks = Vec::new();
    let mut oversized = Vec::new();

    let mut group_start = 0usize;
    while group_start < sentences.len() {
        let mut group_end = group_start + 1;
        let mut total = sentences[group_start].token_count;
        while group_end < sentences.len() && total + sentences[group_end].token_count <= limit {
            total += sentences[group_end].token_count;
            group_end += 1;
        }
        let index = chunks.len();
        let id = format!("{}-c{:04}", document.id, index);
        let text_start = sentences[group_start].start;
        let text_end = sentences[group_end - 1].end;
        let text = document.text[text_start..text_end].to_string();
        let token_count = tokenizer.count(&text);
        if group_end - group_start == 1 && token_count > limit {
            oversized.push(id.clone());
        }
        chunks.push(Chunk {
            id,
            doc_id: document.id.clone(),
            index,
            text,
            token_count,
        });
        group_start = group_end;
    }

    Ok(ChunkOutcome { chunks, oversized })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::UnicodeTokenizer;

    const TOK: UnicodeTokenizer = UnicodeTokenizer;

    fn doc(text: &str) -> Document {
        Document::new("d", "t", text)
    }

    fn span_texts<'a>(text: &'a str, spans: &[SentenceSpan]) -> Vec<&'a str> {
        spans.iter().map(|s| &text[s.start..s.end]).collect()
    }

    #[test]
    fn empty_text_has_no_sentences() {
        assert!(split_sentences("", &TOK).is_empty());
        assert!(split_sentences("   \n\t ", &TOK).is_empty());
    }

    #[test]
    fn splits_on_each_terminator() {
        let text = "A. B? C!";
        let spans = split_sentences(text, &TOK);
        assert_eq!(span_texts(text, &spans), vec!["A.", "B?", "C!"]);
    }

    #[test]
    fn abbreviation_period_does_not_split() {
        let text = "Dr. Smith ran.";
        let spans = split_sentences(text, &TOK);
        assert_eq!(span_texts(text, &spans), vec!["Dr. Smith ran."]);
    }

    #[test]
    fn multi_dot_abbreviations_and_decimals_hold() {
        let text = "It costs 3.14 dollars, e.g. at the store. Next one!";
        let spans = split_sentences(text, &TOK);
        assert_eq!(
            span_texts(text, &spans),
            vec!["It costs 3.14 dollars, e.g. at the store.", "Next one!"]
        );
    }

    #[test]
    fn trailing_text_without_terminator_is_a_sentence() {
        let text = "First one. trailing words";
        let spans = split_sentences(text, &TOK);
        assert_eq!(span_texts(text, &spans), vec!["First one.", "trailing words"]);
    }

    #[test]
    fn closing_quote_attaches_to_sentence() {
        let text = "He said \"stop.\" Then left.";
        let spans = split_sentences(text, &TOK);
        assert_eq!(
            span_texts(text, &spans),
            vec!["He said \"stop.\"", "Then left."]
        );
    }

    #[test]
    fn spans_cover_non_whitespace() {
        let text = "  One two. \n Three four!  ";
        let spans = split_sentences(text, &TOK);
        let rebuilt: String = span_texts(text, &spans).join(" ");
        let normalize = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
        assert_eq!(normalize(&rebuilt), normalize(text));
    }

    /// Sentence with exactly `n` tokens: n-1 words plus the final period.
    fn sentence(n: usize) -> String {
        let words = vec!["w"; n - 1].join(" ");
        format!("{words}.")
    }

    #[test]
    fn sentence_crossing_boundary_moves_whole() {
        let text = format!("{} {}", sentence(300), sentence(250));
        let outcome = chunk(&doc(&text), 500, &TOK).unwrap();
        let counts: Vec<usize> = outcome.chunks.iter().map(|c| c.token_count).collect();
        assert_eq!(counts, vec![300, 250]);
        assert!(outcome.oversized.is_empty());
    }

    #[test]
    fn greedy_packing_matches_enumeration_oracle() {
        // 10 sentences of 100 tokens each, limit 500: the greedy oracle
        // packs exactly 5 sentences per chunk.
        let text = (0..10).map(|_| sentence(100)).collect::<Vec<_>>().join(" ");
        let outcome = chunk(&doc(&text), 500, &TOK).unwrap();
        assert_eq!(outcome.chunks.len(), 2);
        assert!(outcome.chunks.iter().all(|c| c.token_count == 500));
    }

    #[test]
    fn empty_document_yields_no_chunks() {
        let outcome = chunk(&doc(""), 500, &TOK).unwrap();
        assert!(outcome.chunks.is_empty());
    }

    #[test]
    fn oversized_sentence_becomes_own_chunk_with_warning() {
        let text = format!("{} {}", sentence(10), sentence(600));
        let outcome = chunk(&doc(&text), 500, &TOK).unwrap();
        assert_eq!(outcome.chunks.len(), 2);
        assert_eq!(outcome.oversized, vec![outcome.chunks[1].id.clone()]);
        assert!(outcome.chunks[1].token_count > 500);
    }

    #[test]
    fn zero_limit_is_rejected() {
        assert!(chunk(&doc("Hello."), 0, &TOK).is_err());
    }

    #[test]
    fn coverage_maximality_and_determinism() {
        let mut text = String::new();
        let sizes = [40usize, 80, 25, 130, 60, 55, 170, 15, 90, 33, 47];
        for n in sizes {
            text.push_str(&sentence(n));
            text.push(' ');
        }
        let limit = 180;
        let first = chunk(&doc(&text), limit, &TOK).unwrap();
        let second = chunk(&doc(&text), limit, &TOK).unwrap();
        assert_eq!(
            first.chunks.iter().map(|c| &c.text).collect::<Vec<_>>(),
            second.chunks.iter().map(|c| &c.text).collect::<Vec<_>>()
        );

        // Coverage: chunks concatenate to the text modulo whitespace.
        let rebuilt = first
            .chunks
            .iter()
            .map(|c| c.text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        let normalize = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
        assert_eq!(normalize(&rebuilt), normalize(&text));

        // Budget and maximality against the sentence token counts.
        let spans = split_sentences(&text, &TOK);
        let mut cursor = 0usize;
        for (i, c) in first.chunks.iter().enumerate() {
            assert!(c.token_count <= limit, "chunk over budget");
            let mut used = 0usize;
            let mut total = 0usize;
            while cursor + used < spans.len() && total + spans[cursor + used].token_count <= limit
            {
                total += spans[cursor + used].token_count;
                used += 1;
            }
            let next = cursor + used;
            if i + 1 < first.chunks.len() {
                assert!(
                    total + spans[next].token_count > limit,
                    "moving the next sentence in would still fit"
                );
            }
            cursor = next;
        }
        assert_eq!(cursor, spans.len(), "every sentence lands in one chunk");
    }
}
