//! Evaluation harness: dataset loaders, QA metrics, report assembly, and
//! tree statistics.

pub mod datasets;
pub mod metrics;
pub mod stats;

pub use datasets::{load_dataset, DatasetKind, LoadOutcome};
pub use metrics::{bleu, choice_scores, meteor, normalize_tokens, rouge_l, token_f1, RougeParams};
pub use stats::{tree_stats, TreeStatsReport};

use crate::error::{Error, Result};
use crate::model::{AnswerValue, QuestionRecord, QuestionType};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Scores for one question; fields absent when not applicable.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct QuestionScores {
    pub qtype: Option<QuestionType>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rouge_l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu4: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meteor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sat_contribution: Option<f64>,
}

/// Arithmetic means of the per-question scores that are present.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct MetricAggregates {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rouge_l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu4: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meteor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sat_style: Option<f64>,
}

/// Per-question scores with overall and per-type aggregates.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct MetricReport {
    pub per_question: BTreeMap<String, QuestionScores>,
    pub aggregates: MetricAggregates,
    pub per_type: BTreeMap<QuestionType, MetricAggregates>,
}

/// Score predicted answers against their question records. Freeform
/// questions get the text metrics; multiple-choice questions get accuracy
/// and the SAT-style contribution.
pub fn score_records(
    questions: &[QuestionRecord],
    answers: &BTreeMap<String, AnswerValue>,
) -> Result<MetricReport> {
    let rouge_params = RougeParams::default();
    let mut per_question = BTreeMap::new();

    for question in questions {
        let Some(answer) = answers.get(&question.id) else {
            continue;
        };
        let mut scores = QuestionScores {
            qtype: question.qtype,
            ..Default::default()
        };
        match answer {
            AnswerValue::Choice(index) => {
                let Some(gold) = question.gold_option else {
                    return Err(Error::invalid(format!(
                        "question {} got a choice answer but has no gold option",
                        question.id
                    )));
                };
                let options_count = question.options.as_ref().map(Vec::len).unwrap_or(0);
                let correct = *index == gold;
                scores.correct = Some(correct);
                scores.sat_contribution = Some(if correct {
                    1.0
                } else {
                    -1.0 / (options_count.max(2) as f64 - 1.0)
                });
            }
            AnswerValue::Text(text) => {
                if question.gold_answers.is_empty() {
                    continue;
                }
                scores.f1 = Some(token_f1(text, &question.gold_answers));
                scores.rouge_l = Some(rouge_l(text, &question.gold_answers, &rouge_params));
                scores.bleu1 = Some(bleu(text, &question.gold_answers, 1));
                scores.bleu4 = Some(bleu(text, &question.gold_answers, 4));
                scores.meteor = Some(meteor(text, &question.gold_answers));
            }
        }
        per_question.insert(question.id.clone(), scores);
    }

    let aggregates = aggregate(per_question.values());
    let mut per_type: BTreeMap<QuestionType, MetricAggregates> = BTreeMap::new();
    for qtype in [
        QuestionType::Extractive,
        QuestionType::Abstractive,
        QuestionType::Boolean,
        QuestionType::Unanswerable,
    ] {
        let typed: Vec<&QuestionScores> = per_question
            .values()
            .filter(|s| s.qtype == Some(qtype))
            .collect();
        if !typed.is_empty() {
            per_type.insert(qtype, aggregate(typed.into_iter()));
        }
    }

    Ok(MetricReport {
        per_question,
        aggregates,
        per_type,
    })
}

fn aggregate<'a>(scores: impl Iterator<Item = &'a QuestionScores>) -> MetricAggregates {
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    let mut add = |key: &'static str, value: Option<f64>| {
        if let Some(v) = value {
            let entry = sums.entry(key).or_insert((0.0, 0));
            entry.0 += v;
            entry.1 += 1;
        }
    };
    for score in scores {
        add("f1", score.f1);
        add("rouge_l", score.rouge_l);
        add("bleu1", score.bleu1);
        add("bleu4", score.bleu4);
        add("meteor", score.meteor);
        add("accuracy", score.correct.map(|c| if c { 1.0 } else { 0.0 }));
        add("sat", score.sat_contribution);
    }
    let mean = |key: &str| sums.get(key).map(|(sum, count)| sum / *count as f64);
    MetricAggregates {
        f1: mean("f1"),
        rouge_l: mean("rouge_l"),
        bleu1: mean("bleu1"),
        bleu4: mean("bleu4"),
        meteor: mean("meteor"),
        accuracy: mean("accuracy"),
        sat_style: mean("sat"),
    }
}

/// Render the per-question rows as CSV aligned with the JSON report.
pub fn report_to_csv(report: &MetricReport) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record([
            "question_id",
            "type",
            "f1",
            "rouge_l",
            "bleu1",
            "bleu4",
            "meteor",
            "correct",
        ])
        .map_err(|e| Error::Data(e.to_string()))?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for (id, scores) in &report.per_question {
        writer
            .write_record([
                id.as_str(),
                scores.qtype.map(|t| t.as_str()).unwrap_or(""),
                &fmt(scores.f1),
                &fmt(scores.rouge_l),
                &fmt(scores.bleu1),
                &fmt(scores.bleu4),
                &fmt(scores.meteor),
                &scores
                    .correct
                    .map(|c| c.to_string())
                    .unwrap_or_default(),
            ])
            .map_err(|e| Error::Data(e.to_string()))?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
}
