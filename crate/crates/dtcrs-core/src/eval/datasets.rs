//! Dataset ingestion for the three QA corpora.
//!
//! Each loader consumes the dataset's published JSON/JSONL shape and maps
//! records onto [`Document`] and [`QuestionRecord`]. Malformed records are
//! skipped and counted, never fatal; an unreadable file is an error.

use crate::error::{Error, Result};
use crate::model::{Document, QuestionRecord, QuestionType};
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Qasper,
    Quality,
    NarrativeQa,
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "qasper" => Ok(DatasetKind::Qasper),
            "quality" => Ok(DatasetKind::Quality),
            "narrativeqa" => Ok(DatasetKind::NarrativeQa),
            other => Err(Error::invalid(format!("unknown dataset kind `{other}`"))),
        }
    }
}

#[derive(Debug)]
pub struct LoadOutcome {
    pub documents: Vec<Document>,
    pub questions: Vec<QuestionRecord>,
    /// Count of malformed records skipped.
    pub skipped: usize,
}

pub fn load_dataset(kind: DatasetKind, path: &Path) -> Result<LoadOutcome> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    if raw.trim().is_empty() {
        log::warn!("dataset file {} is empty", path.display());
        return Ok(LoadOutcome {
            documents: Vec::new(),
            questions: Vec::new(),
            skipped: 0,
        });
    }
    match kind {
        DatasetKind::Qasper => load_qasper(&raw),
        DatasetKind::Quality => load_quality(&raw),
        DatasetKind::NarrativeQa => load_narrativeqa(&raw),
    }
}

fn string_field(value: &Value, key: &str) -> Option<String> {
    value.get(key).and_then(Value::as_str).map(str::to_string)
}

/// QASPER: one JSON object mapping paper id to the paper record.
fn load_qasper(raw: &str) -> Result<LoadOutcome> {
    let parsed: BTreeMap<String, Value> =
        serde_json::from_str(raw).map_err(|e| Error::Data(format!("qasper parse: {e}")))?;
    let mut documents = Vec::new();
    let mut questions = Vec::new();
    let mut skipped = 0usize;

    for (paper_id, paper) in parsed {
        let title = string_field(&paper, "title").unwrap_or_default();
        let mut text = title.clone();
        if let Some(abstract_text) = string_field(&paper, "abstract") {
            text.push_str("\n\n");
            text.push_str(&abstract_text);
        }
        if let Some(sections) = paper.get("full_text").and_then(Value::as_array) {
            for section in sections {
                if let Some(name) = string_field(section, "section_name") {
                    text.push_str("\n\n");
                    text.push_str(&name);
                }
                if let Some(paragraphs) = section.get("paragraphs").and_then(Value::as_array) {
                    for paragraph in paragraphs.iter().filter_map(Value::as_str) {
                        text.push_str("\n\n");
                        text.push_str(paragraph);
                    }
                }
            }
        }
        if text.trim().is_empty() {
            skipped += 1;
            continue;
        }
        documents.push(Document::new(paper_id.clone(), title, text));

        let Some(qas) = paper.get("qas").and_then(Value::as_array) else {
            continue;
        };
        for (qa_index, qa) in qas.iter().enumerate() {
            match qasper_question(&paper_id, qa_index, qa) {
                Some(record) => questions.push(record),
                None => skipped += 1,
            }
        }
    }
    Ok(LoadOutcome {
        documents,
        questions,
        skipped,
    })
}

fn qasper_question(paper_id: &str, qa_index: usize, qa: &Value) -> Option<QuestionRecord> {
    let text = string_field(qa, "question")?;
    let id = string_field(qa, "question_id").unwrap_or_else(|| format!("{paper_id}-q{qa_index}"));
    let answers = qa.get("answers").and_then(Value::as_array)?;

    let mut gold_answers = Vec::new();
    let mut gold_evidence = Vec::new();
    let mut qtype: Option<QuestionType> = None;
    for annotation in answers {
        let answer = annotation.get("answer")?;
        let unanswerable = answer
            .get("unanswerable")
            .and_then(Value::as_bool)
            .unwrap_or(false);
        let yes_no = answer.get("yes_no").and_then(Value::as_bool);
        let free_form = string_field(answer, "free_form_answer").unwrap_or_default();
        let spans: Vec<String> = answer
            .get("extractive_spans")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
            .unwrap_or_default();

        let (answer_text, this_type) = if unanswerable {
            ("Unanswerable".to_string(), QuestionType::Unanswerable)
        } else if let Some(flag) = yes_no {
            (
                if flag { "Yes" } else { "No" }.to_string(),
                QuestionType::Boolean,
            )
        } else if !spans.is_empty() {
            (spans.join(", "), QuestionType::Extractive)
        } else if !free_form.is_empty() {
            (free_form.clone(), QuestionType::Abstractive)
        } else {
            continue;
        };
        gold_answers.push(answer_text);
        qtype.get_or_insert(this_type);

        for key in ["highlighted_evidence", "evidence"] {
            if let Some(evidence) = answer.get(key).and_then(Value::as_array) {
                for item in evidence.iter().filter_map(Value::as_str) {
                    if !item.trim().is_empty() && !gold_evidence.contains(&item.to_string()) {
                        gold_evidence.push(item.to_string());
                    }
                }
            }
        }
    }
    if gold_answers.is_empty() {
        return None;
    }
    Some(QuestionRecord {
        id,
        doc_id: paper_id.to_string(),
        text,
        gold_answers,
        options: None,
        gold_option: None,
        gold_evidence: (!gold_evidence.is_empty()).then_some(gold_evidence),
        predicted_label: None,
        qtype,
    })
}

/// QuALITY: JSONL, one article with its multiple-choice questions per line.
fn load_quality(raw: &str) -> Result<LoadOutcome> {
    let mut documents = Vec::new();
    let mut questions = Vec::new();
    let mut skipped = 0usize;

    for line in raw.lines().filter(|l| !l.trim().is_empty()) {
        let Ok(record) = serde_json::from_str::<Value>(line) else {
            skipped += 1;
            continue;
        };
        let Some(article_id) = string_field(&record, "article_id") else {
            skipped += 1;
            continue;
        };
        let title = string_field(&record, "title").unwrap_or_default();
        let Some(article) = string_field(&record, "article") else {
            skipped += 1;
            continue;
        };
        documents.push(Document::new(article_id.clone(), title, article));

        let Some(question_list) = record.get("questions").and_then(Value::as_array) else {
            continue;
        };
        for (index, question) in question_list.iter().enumerate() {
            let Some(text) = string_field(question, "question") else {
                skipped += 1;
                continue;
            };
            let options: Vec<String> = question
                .get("options")
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
                .unwrap_or_default();
            let gold_label = question.get("gold_label").and_then(Value::as_u64);
            let (Some(gold_label), false) = (gold_label, options.is_empty()) else {
                skipped += 1;
                continue;
            };
            if gold_label == 0 || gold_label as usize > options.len() {
                skipped += 1;
                continue;
            }
            let gold_option = gold_label as usize - 1;
            let id = string_field(question, "question_unique_id")
                .unwrap_or_else(|| format!("{article_id}-q{index}"));
            questions.push(QuestionRecord {
                id,
                doc_id: article_id.clone(),
                text,
                gold_answers: vec![options[gold_option].clone()],
                options: Some(options),
                gold_option: Some(gold_option),
                gold_evidence: None,
                predicted_label: None,
                qtype: None,
            });
        }
    }
    Ok(LoadOutcome {
        documents,
        questions,
        skipped,
    })
}

/// NarrativeQA: JSONL, one question per line with its document and the two
/// reference answers.
fn load_narrativeqa(raw: &str) -> Result<LoadOutcome> {
    let mut documents: Vec<Document> = Vec::new();
    let mut questions = Vec::new();
    let mut skipped = 0usize;

    for (line_index, line) in raw.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let Ok(record) = serde_json::from_str::<Value>(line) else {
            skipped += 1;
            continue;
        };
        let Some(document) = record.get("document") else {
            skipped += 1;
            continue;
        };
        let Some(doc_id) = string_field(document, "id") else {
            skipped += 1;
            continue;
        };
        let Some(doc_text) = string_field(document, "text") else {
            skipped += 1;
            continue;
        };
        let question_text = match record.get("question") {
            Some(Value::String(s)) => s.clone(),
            Some(value) => match string_field(value, "text") {
                Some(s) => s,
                None => {
                    skipped += 1;
                    continue;
                }
            },
            None => {
                skipped += 1;
                continue;
            }
        };
        let answers: Vec<String> = record
            .get("answers")
            .and_then(Value::as_array)
            .map(|a| {
                a.iter()
                    .filter_map(|item| match item {
                        Value::String(s) => Some(s.clone()),
                        other => string_field(other, "text"),
                    })
                    .collect()
            })
            .unwrap_or_default();
        if answers.is_empty() {
            skipped += 1;
            continue;
        }
        if !documents.iter().any(|d| d.id == doc_id) {
            let title = string_field(document, "title").unwrap_or_default();
            documents.push(Document::new(doc_id.clone(), title, doc_text));
        }
        questions.push(QuestionRecord {
            id: format!("{doc_id}-q{line_index}"),
            doc_id,
            text: question_text,
            gold_answers: answers,
            options: None,
            gold_option: None,
            gold_evidence: None,
            predicted_label: None,
            qtype: None,
        });
    }
    Ok(LoadOutcome {
        documents,
        questions,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(content.as_bytes()).unwrap();
        file
    }

    #[test]
    fn qasper_fixture_maps_types_and_evidence() {
        let fixture = r#"{
          "paper1": {
            "title": "A Paper",
            "abstract": "We study things.",
            "full_text": [
              {"section_name": "Intro", "paragraphs": ["First paragraph.", "Second paragraph."]}
            ],
            "qas": [
              {
                "question": "What dataset is used?",
                "question_id": "q1",
                "answers": [
                  {"answer": {"unanswerable": false, "extractive_spans": ["the FOO corpus"], "yes_no": null, "free_form_answer": "", "evidence": [], "highlighted_evidence": ["We evaluate on the FOO corpus."]}}
                ]
              },
              {
                "question": "Do they beat the baseline?",
                "question_id": "q2",
                "answers": [
                  {"answer": {"unanswerable": false, "extractive_spans": [], "yes_no": true, "free_form_answer": "", "evidence": [], "highlighted_evidence": []}}
                ]
              }
            ]
          }
        }"#;
        let file = write_temp(fixture);
        let outcome = load_dataset(DatasetKind::Qasper, file.path()).unwrap();
        assert_eq!(outcome.documents.len(), 1);
        assert_eq!(outcome.questions.len(), 2);
        assert_eq!(outcome.skipped, 0);

        let q1 = &outcome.questions[0];
        assert_eq!(q1.qtype, Some(QuestionType::Extractive));
        assert_eq!(q1.gold_answers, vec!["the FOO corpus".to_string()]);
        assert_eq!(
            q1.gold_evidence.as_deref(),
            Some(&["We evaluate on the FOO corpus.".to_string()][..])
        );
        let q2 = &outcome.questions[1];
        assert_eq!(q2.qtype, Some(QuestionType::Boolean));
        assert_eq!(q2.gold_answers, vec!["Yes".to_string()]);
        assert!(outcome.documents[0].text.contains("First paragraph."));
    }

    #[test]
    fn quality_fixture_maps_options() {
        let fixture = r#"{"article_id": "a1", "title": "T", "article": "Body text.", "questions": [{"question": "Pick one?", "question_unique_id": "a1-1", "options": ["w", "x", "y", "z"], "gold_label": 2}]}"#;
        let file = write_temp(fixture);
        let outcome = load_dataset(DatasetKind::Quality, file.path()).unwrap();
        assert_eq!(outcome.questions.len(), 1);
        let q = &outcome.questions[0];
        assert_eq!(q.options.as_ref().unwrap().len(), 4);
        assert_eq!(q.gold_option, Some(1));
        q.validate().unwrap();
    }

    #[test]
    fn narrativeqa_fixture_keeps_two_references() {
        let fixture = r#"{"document": {"id": "story1", "text": "Once upon a time."}, "question": {"text": "Who?"}, "answers": [{"text": "Eve"}, {"text": "The gardener"}]}
{"document": {"id": "story1", "text": "Once upon a time."}, "question": {"text": "Where?"}, "answers": [{"text": "Home"}, {"text": "A cottage"}]}"#;
        let file = write_temp(fixture);
        let outcome = load_dataset(DatasetKind::NarrativeQa, file.path()).unwrap();
        assert_eq!(outcome.documents.len(), 1, "document deduplicated");
        assert_eq!(outcome.questions.len(), 2);
        assert_eq!(outcome.questions[0].gold_answers.len(), 2);
    }

    #[test]
    fn empty_file_loads_nothing() {
        let file = write_temp("");
        let outcome = load_dataset(DatasetKind::Qasper, file.path()).unwrap();
        assert_eq!(outcome.documents.len(), 0);
        assert_eq!(outcome.questions.len(), 0);
    }

    #[test]
    fn malformed_records_are_skipped_with_count() {
        let fixture = r#"{"article_id": "a1", "article": "Body.", "questions": [{"question": "No options?"}]}
not json at all"#;
        let file = write_temp(fixture);
        let outcome = load_dataset(DatasetKind::Quality, file.path()).unwrap();
        assert_eq!(outcome.documents.len(), 1);
        assert_eq!(outcome.questions.len(), 0);
        assert_eq!(outcome.skipped, 2);
    }

    #[test]
    fn unreadable_file_is_an_error() {
        let err = load_dataset(DatasetKind::Qasper, Path::new("/nonexistent/file.json"));
        assert!(err.is_err());
    }
}
