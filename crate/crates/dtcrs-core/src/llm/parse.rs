//! Parsers for raw LLM replies.
//!
//! Every parser is total in the sense that unparseable input maps to a
//! documented fallback at the gateway; nothing here panics on garbage.

use crate::model::{TableOfContents, TocEntry};

/// Parse a table of contents from numbered, bulleted, or markdown-heading
/// lines. Returns `None` when no line parses.
pub fn parse_toc(raw: &str) -> Option<TableOfContents> {
    let mut entries = Vec::new();
    for line in raw.lines() {
        let trimmed = line.trim_end();
        let stripped = trimmed.trim_start();
        if stripped.is_empty() {
            continue;
        }
        if let Some(entry) = parse_toc_line(stripped) {
            entries.push(entry);
        }
    }
    if entries.is_empty() {
        None
    } else {
        Some(TableOfContents {
            entries,
            raw_text: raw.to_string(),
        })
    }
}

fn parse_toc_line(line: &str) -> Option<TocEntry> {
    // Markdown heading: level = number of '#'.
    if line.starts_with('#') {
        let level = line.chars().take_while(|&c| c == '#').count() as u32;
        let heading = line.trim_start_matches('#').trim();
        if !heading.is_empty() {
            return Some(TocEntry {
                level: level.min(6),
                heading: heading.to_string(),
            });
        }
        return None;
    }
    // Bullet: "- Heading".
    if let Some(rest) = line
        .strip_prefix("- ")
        .or_else(|| line.strip_prefix("* "))
        .or_else(|| line.strip_prefix("\u{2022} "))
    {
        let heading = rest.trim();
        if !heading.is_empty() {
            return Some(TocEntry {
                level: 1,
                heading: heading.to_string(),
            });
        }
        return None;
    }
    // Numbered: "2.", "2)", "2.1 Heading" — level = numeric components.
    let label_end = line
        .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == ')'))
        .unwrap_or(line.len());
    let label = &line[..label_end];
    if label.is_empty() || !label.starts_with(|c: char| c.is_ascii_digit()) {
        return None;
    }
    let level = label
        .trim_end_matches(['.', ')'])
        .split('.')
        .filter(|part| !part.is_empty())
        .count() as u32;
    let heading = line[label_end..].trim();
    if level == 0 || heading.is_empty() {
        return None;
    }
    Some(TocEntry {
        level,
        heading: heading.to_string(),
    })
}

/// Parse a binary classification label. The first token decides; anything
/// else is unparseable.
pub fn parse_binary_label(raw: &str) -> Option<u8> {
    let normalized = raw.trim().to_lowercase();
    let first = normalized
        .split(|c: char| !c.is_alphanumeric())
        .find(|t| !t.is_empty())?;
    match first {
        "1" | "yes" | "true" => Some(1),
        "0" | "no" | "false" => Some(0),
        _ => None,
    }
}

/// Parse one sub-question per line, stripping numbering and bullets and
/// dropping blanks.
pub fn parse_sub_questions(raw: &str) -> Vec<String> {
    raw.lines()
        .filter_map(|line| {
            let stripped = strip_list_marker(line.trim());
            if stripped.is_empty() {
                None
            } else {
                Some(stripped.to_string())
            }
        })
        .collect()
}

fn strip_list_marker(line: &str) -> &str {
    let line = line.trim_start_matches(['-', '*', '\u{2022}']).trim_start();
    let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(rest) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return rest.trim();
        }
    }
    line.trim()
}

/// Parse a multiple-choice reply into a 0-based option index. Accepts a
/// leading letter ("B", "b)") or a 1-based number; out-of-range picks fail.
pub fn parse_choice(raw: &str, options_count: usize) -> Option<usize> {
    let normalized = raw.trim().to_lowercase();
    let normalized = normalized
        .strip_prefix("answer")
        .map(|rest| rest.trim_start_matches([':', '.', ' ']))
        .unwrap_or(&normalized);
    let first = normalized
        .split(|c: char| !c.is_alphanumeric())
        .find(|t| !t.is_empty())?;
    if first.len() == 1 {
        let ch = first.chars().next().unwrap();
        if ch.is_ascii_alphabetic() {
            let index = (ch as u8 - b'a') as usize;
            return (index < options_count).then_some(index);
        }
    }
    if let Ok(number) = first.parse::<usize>() {
        if (1..=options_count).contains(&number) {
            return Some(number - 1);
        }
    }
    None
}

/// Strip a leading "Answer:" label from a freeform reply.
pub fn strip_answer_label(raw: &str) -> String {
    let trimmed = raw.trim();
    let lowered = trimmed.to_lowercase();
    if let Some(rest) = lowered.strip_prefix("answer") {
        let consumed = trimmed.len() - rest.len();
        let after = trimmed[consumed..].trim_start_matches([':', '.', ' ', '\t']);
        return after.trim().to_string();
    }
    trimmed.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_numbered_toc() {
        let toc = parse_toc("1. Intro\n2. Methods").unwrap();
        assert_eq!(toc.entries.len(), 2);
        assert_eq!(toc.entries[0].heading, "Intro");
        assert_eq!(toc.entries[0].level, 1);
        assert_eq!(toc.entries[1].level, 1);
    }

    #[test]
    fn nested_numbering_sets_levels() {
        let toc = parse_toc("1. Intro\n1.1 Background\n## Related").unwrap();
        let levels: Vec<u32> = toc.entries.iter().map(|e| e.level).collect();
        assert_eq!(levels, vec![1, 2, 2]);
    }

    #[test]
    fn empty_reply_fails_parsing() {
        assert!(parse_toc("").is_none());
        assert!(parse_toc("no list here\nat all").is_none());
    }

    #[test]
    fn label_normalization_table() {
        assert_eq!(parse_binary_label("1"), Some(1));
        assert_eq!(parse_binary_label(" Yes."), Some(1));
        assert_eq!(parse_binary_label("no"), Some(0));
        assert_eq!(parse_binary_label("0"), Some(0));
        assert_eq!(parse_binary_label("maybe"), None);
        assert_eq!(parse_binary_label(""), None);
    }

    #[test]
    fn sub_question_lines_parse_and_blanks_drop() {
        let subs = parse_sub_questions("1. A?\n\n2. B?\n\n3. C?\n");
        assert_eq!(subs, vec!["A?", "B?", "C?"]);
        let subs = parse_sub_questions("- first\n* second\n\u{2022} third");
        assert_eq!(subs, vec!["first", "second", "third"]);
        assert!(parse_sub_questions("\n  \n").is_empty());
    }

    #[test]
    fn choice_letters_and_numbers() {
        assert_eq!(parse_choice("B", 4), Some(1));
        assert_eq!(parse_choice("b)", 4), Some(1));
        assert_eq!(parse_choice("Answer: C", 4), Some(2));
        assert_eq!(parse_choice("3", 4), Some(2));
        assert_eq!(parse_choice("E", 4), None);
        assert_eq!(parse_choice("7", 4), None);
        assert_eq!(parse_choice("", 4), None);
    }

    #[test]
    fn answer_label_stripping() {
        assert_eq!(strip_answer_label("Answer: yes"), "yes");
        assert_eq!(strip_answer_label("ANSWER:   42"), "42");
        assert_eq!(strip_answer_label("plain reply"), "plain reply");
    }
}
