//! Uniform access to a chat-completion LLM for the five pipeline steps.
//!
//! The gateway owns prompt templates, per-step temperatures, retry policy,
//! and reply parsing with documented fallbacks. Parse failures never raise
//! past the gateway; only transport failures propagate.

mod http;
mod mock;
mod parse;
mod prompts;

pub use http::HttpLlm;
pub use mock::{FailingLlm, MockCall, MockLlm};
pub use parse::{parse_binary_label, parse_choice, parse_sub_questions, parse_toc, strip_answer_label};
pub use prompts::PromptTemplates;

use crate::error::{Error, Result};
use crate::model::{Document, SubQuestionSet, TableOfContents, Temperatures, TocEntry};
use crate::tokenizer::{Tokenizer, UnicodeTokenizer};
use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

/// The pipeline step a request belongs to; fixes its temperature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmStep {
    Toc,
    Classify,
    Decompose,
    Summarize,
    AnswerFreeform,
    AnswerChoice,
}

impl LlmStep {
    pub fn as_str(&self) -> &'static str {
        match self {
            LlmStep::Toc => "toc",
            LlmStep::Classify => "classify",
            LlmStep::Decompose => "decompose",
            LlmStep::Summarize => "summarize",
            LlmStep::AnswerFreeform => "answer_freeform",
            LlmStep::AnswerChoice => "answer_choice",
        }
    }
}

/// One outgoing completion request.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmRequest {
    pub step: LlmStep,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: usize,
}

/// A chat-completion backend. Implementations perform a single attempt;
/// the gateway handles retries.
pub trait LlmProvider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &LlmRequest) -> Result<String>;
}

/// Connection settings for an HTTP backend.
#[derive(Debug, Clone)]
pub struct LlmProviderConfig {
    pub base_url: String,
    pub model_name: String,
    /// Read from the environment, never from config files.
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
}

impl LlmProviderConfig {
    /// Read `DTCRS_BASE_URL`, `DTCRS_MODEL`, and `DTCRS_API_KEY`.
    pub fn from_env() -> Result<Self> {
        let base_url = std::env::var("DTCRS_BASE_URL")
            .map_err(|_| Error::invalid("DTCRS_BASE_URL is not set"))?;
        let model_name = std::env::var("DTCRS_MODEL")
            .map_err(|_| Error::invalid("DTCRS_MODEL is not set"))?;
        Ok(LlmProviderConfig {
            base_url,
            model_name,
            api_key: std::env::var("DTCRS_API_KEY").ok(),
            timeout: Duration::from_secs(120),
            max_retries: 3,
        })
    }
}

/// Table-of-contents generation result.
#[derive(Debug, Clone)]
pub struct TocResult {
    pub toc: TableOfContents,
    /// Document was cut to the provider context limit.
    pub truncated: bool,
    /// Reply did not parse; the ToC degraded to a single raw entry.
    pub parse_fallback: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifyResult {
    pub label: u8,
    pub parse_fallback: bool,
}

#[derive(Debug, Clone)]
pub struct DecomposeResult {
    pub set: SubQuestionSet,
    /// Reply held no parseable sub-question; the original question stands in.
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub struct SummaryResult {
    pub text: String,
    /// Reply exceeded the budget and was cut at a token boundary.
    pub truncated: bool,
}

#[derive(Debug, Clone)]
pub enum AnswerResult {
    Freeform(String),
    Choice { index: usize, parse_fallback: bool },
}

/// Gateway over an [`LlmProvider`] with templates, retries, and fallbacks.
pub struct LlmGateway {
    provider: Arc<dyn LlmProvider>,
    templates: PromptTemplates,
    temperatures: Temperatures,
    tokenizer: Arc<dyn Tokenizer>,
    context_limit_tokens: usize,
    max_retries: u32,
    retry_base: Duration,
}

impl LlmGateway {
    pub fn new(provider: Arc<dyn LlmProvider>) -> Self {
        LlmGateway {
            provider,
            templates: PromptTemplates::default(),
            temperatures: Temperatures::default(),
            tokenizer: Arc::new(UnicodeTokenizer),
            context_limit_tokens: 100_000,
            max_retries: 3,
            retry_base: Duration::from_millis(250),
        }
    }

    pub fn with_templates(mut self, templates: PromptTemplates) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_temperatures(mut self, temperatures: Temperatures) -> Self {
        self.temperatures = temperatures;
        self
    }

    pub fn with_context_limit(mut self, tokens: usize) -> Self {
        self.context_limit_tokens = tokens;
        self
    }

    pub fn with_retry(mut self, max_retries: u32, base: Duration) -> Self {
        self.max_retries = max_retries;
        self.retry_base = base;
        self
    }

    pub fn with_tokenizer(mut self, tokenizer: Arc<dyn Tokenizer>) -> Self {
        self.tokenizer = tokenizer;
        self
    }

    pub fn tokenizer(&self) -> &Arc<dyn Tokenizer> {
        &self.tokenizer
    }

    fn temperature_for(&self, step: LlmStep) -> f64 {
        match step {
            LlmStep::Toc => self.temperatures.toc,
            LlmStep::Classify => self.temperatures.classify,
            LlmStep::Decompose => self.temperatures.decompose,
            LlmStep::Summarize => self.temperatures.summarize,
            LlmStep::AnswerFreeform | LlmStep::AnswerChoice => self.temperatures.answer,
        }
    }

    fn complete(&self, step: LlmStep, prompt: String, max_tokens: usize) -> Result<String> {
        let request = LlmRequest {
            step,
            prompt,
            temperature: self.temperature_for(step),
            max_tokens,
        };
        let mut attempt = 0;
        loop {
            match self.provider.complete(&request) {
                Ok(reply) => return Ok(reply),
                Err(err) if err.is_transport() && attempt < self.max_retries => {
                    let backoff = self.retry_base * 2u32.saturating_pow(attempt);
                    if !backoff.is_zero() {
                        std::thread::sleep(backoff);
                    }
                    attempt += 1;
                }
                Err(err) => return Err(err),
            }
        }
    }

    /// Generate a document outline. Unparseable replies degrade to a single
    /// entry holding the raw text.
    pub fn generate_toc(&self, document: &Document) -> Result<TocResult> {
        if document.text.is_empty() {
            return Err(Error::invalid("cannot outline an empty document"));
        }
        let (text, truncated) = self
            .tokenizer
            .truncate(&document.text, self.context_limit_tokens);
        let mut values = HashMap::new();
        values.insert("document", text);
        let prompt = self.templates.render(LlmStep::Toc, &values)?;
        let reply = self.complete(LlmStep::Toc, prompt, 1024)?;
        match parse_toc(&reply) {
            Some(toc) => Ok(TocResult {
                toc,
                truncated,
                parse_fallback: false,
            }),
            None => {
                log::warn!("table-of-contents reply did not parse; degrading to raw entry");
                Ok(TocResult {
                    toc: TableOfContents {
                        entries: vec![TocEntry {
                            level: 1,
                            heading: reply.trim().to_string(),
                        }],
                        raw_text: reply,
                    },
                    truncated,
                    parse_fallback: true,
                })
            }
        }
    }

    /// Classify a question: 1 = multi-section/abstractive (build a tree),
    /// 0 = route to dense retrieval. Unparseable replies default to 0.
    pub fn classify_question(&self, question: &str, toc: &TableOfContents) -> Result<ClassifyResult> {
        if question.trim().is_empty() {
            return Err(Error::invalid("question must be non-empty"));
        }
        let mut values = HashMap::new();
        values.insert("toc", toc.render());
        values.insert("question", question.to_string());
        let prompt = self.templates.render(LlmStep::Classify, &values)?;
        let reply = self.complete(LlmStep::Classify, prompt, 16)?;
        match parse_binary_label(&reply) {
            Some(label) => Ok(ClassifyResult {
                label,
                parse_fallback: false,
            }),
            None => {
                log::warn!("classifier reply {reply:?} did not parse; defaulting to label 0");
                Ok(ClassifyResult {
                    label: 0,
                    parse_fallback: true,
                })
            }
        }
    }

    /// Decompose a question into sub-questions. With `toc` equal to the
    /// empty ToC the prompt omits the outline entirely. A reply with no
    /// parseable lines falls back to the original question alone.
    pub fn decompose_question(
        &self,
        question_id: &str,
        question: &str,
        toc: &TableOfContents,
    ) -> Result<DecomposeResult> {
        if question.trim().is_empty() {
            return Err(Error::invalid("question must be non-empty"));
        }
        let mut values = HashMap::new();
        if toc.is_empty() {
            values.insert("toc_clause", String::new());
            values.insert("toc_section", String::new());
        } else {
            values.insert(
                "toc_clause",
                " based on the document's table of contents".to_string(),
            );
            values.insert(
                "toc_section",
                format!("\nTable of contents:\n{}\n", toc.render()),
            );
        }
        values.insert("question", question.to_string());
        let prompt = self.templates.render(LlmStep::Decompose, &values)?;
        let reply = self.complete(LlmStep::Decompose, prompt, 512)?;
        let sub_questions = parse_sub_questions(&reply);
        if sub_questions.is_empty() {
            log::warn!("decomposition reply held no sub-questions; using the question itself");
            return Ok(DecomposeResult {
                set: SubQuestionSet::new(question_id, vec![question.to_string()])?,
                fallback: true,
            });
        }
        Ok(DecomposeResult {
            set: SubQuestionSet::new(question_id, sub_questions)?,
            fallback: false,
        })
    }

    /// Summarize clustered texts to at most `max_tokens` tokens.
    pub fn summarize_cluster(&self, texts: &[String], max_tokens: usize) -> Result<SummaryResult> {
        if texts.is_empty() {
            return Err(Error::invalid("cannot summarize an empty cluster"));
        }
        let mut values = HashMap::new();
        values.insert("max_tokens", max_tokens.to_string());
        values.insert("context", texts.join("\n\n"));
        let prompt = self.templates.render(LlmStep::Summarize, &values)?;
        let reply = self.complete(LlmStep::Summarize, prompt, max_tokens)?;
        let (text, truncated) = self.tokenizer.truncate(reply.trim(), max_tokens);
        if truncated {
            log::warn!("summary reply exceeded {max_tokens} tokens; hard-truncated");
        }
        Ok(SummaryResult { text, truncated })
    }

    /// Answer a question over rank-ordered context. With `options` present
    /// the reply parses to a 0-based ordinal; unparseable picks fall back to
    /// ordinal 0 so evaluation never crashes.
    pub fn answer(
        &self,
        question: &str,
        context: &[String],
        options: Option<&[String]>,
    ) -> Result<AnswerResult> {
        let step = if options.is_some() {
            LlmStep::AnswerChoice
        } else {
            LlmStep::AnswerFreeform
        };
        let mut values = HashMap::new();
        values.insert("question", question.to_string());
        if let Some(options) = options {
            let rendered = options
                .iter()
                .enumerate()
                .map(|(i, option)| format!("{}. {option}", (b'A' + i as u8) as char))
                .collect::<Vec<_>>()
                .join("\n");
            values.insert("options", rendered);
        }
        values.insert("context", String::new());
        let base_prompt = self.templates.render(step, &values)?;
        let base_tokens = self.tokenizer.count(&base_prompt);
        let budget = self.context_limit_tokens.saturating_sub(base_tokens);

        // Pack context highest-ranked first until the provider limit.
        let mut packed = Vec::new();
        let mut used = 0usize;
        for item in context {
            let tokens = self.tokenizer.count(item);
            if used + tokens > budget {
                break;
            }
            used += tokens;
            packed.push(item.as_str());
        }
        values.insert("context", packed.join("\n\n"));
        let prompt = self.templates.render(step, &values)?;
        let reply = self.complete(step, prompt, 1024)?;

        match options {
            None => Ok(AnswerResult::Freeform(strip_answer_label(&reply))),
            Some(options) => match parse_choice(&reply, options.len()) {
                Some(index) => Ok(AnswerResult::Choice {
                    index,
                    parse_fallback: false,
                }),
                None => {
                    log::warn!("choice reply {reply:?} did not parse; defaulting to option 0");
                    Ok(AnswerResult::Choice {
                        index: 0,
                        parse_fallback: true,
                    })
                }
            },
        }
    }
}
