//! Prompt templates for the five pipeline steps.
//!
//! Templates live as plain-text files under `prompts/` in the crate root
//! (compiled in by default) and can be overridden from a directory at
//! runtime. Placeholders use `{name}` syntax; see each template for the
//! names it expects.

use crate::error::{Error, Result};
use crate::llm::LlmStep;
use std::collections::HashMap;
use std::path::Path;

const TOC: &str = include_str!("../../prompts/toc.txt");
const CLASSIFY: &str = include_str!("../../prompts/classify.txt");
const DECOMPOSE: &str = include_str!("../../prompts/decompose.txt");
const SUMMARIZE: &str = include_str!("../../prompts/summarize.txt");
const ANSWER_FREEFORM: &str = include_str!("../../prompts/answer_freeform.txt");
const ANSWER_CHOICE: &str = include_str!("../../prompts/answer_choice.txt");

/// The template text per step.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    toc: String,
    classify: String,
    decompose: String,
    summarize: String,
    answer_freeform: String,
    answer_choice: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            toc: TOC.to_string(),
            classify: CLASSIFY.to_string(),
            decompose: DECOMPOSE.to_string(),
            summarize: SUMMARIZE.to_string(),
            answer_freeform: ANSWER_FREEFORM.to_string(),
            answer_choice: ANSWER_CHOICE.to_string(),
        }
    }
}

impl PromptTemplates {
    /// Load templates from a directory holding `toc.txt`, `classify.txt`,
    /// `decompose.txt`, `summarize.txt`, `answer_freeform.txt`,
    /// `answer_choice.txt`. Missing files fall back to the built-in text.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut templates = PromptTemplates::default();
        for (name, slot) in [
            ("toc.txt", &mut templates.toc),
            ("classify.txt", &mut templates.classify),
            ("decompose.txt", &mut templates.decompose),
            ("summarize.txt", &mut templates.summarize),
            ("answer_freeform.txt", &mut templates.answer_freeform),
            ("answer_choice.txt", &mut templates.answer_choice),
        ] {
            let path = dir.join(name);
            if path.exists() {
                *slot = std::fs::read_to_string(&path)?;
            }
        }
        Ok(templates)
    }

    pub fn template(&self, step: LlmStep) -> &str {
        match step {
            LlmStep::Toc => &self.toc,
            LlmStep::Classify => &self.classify,
            LlmStep::Decompose => &self.decompose,
            LlmStep::Summarize => &self.summarize,
            LlmStep::AnswerFreeform => &self.answer_freeform,
            LlmStep::AnswerChoice => &self.answer_choice,
        }
    }

    /// Substitute `{name}` placeholders. Unknown placeholders are an error
    /// so template typos surface immediately.
    pub fn render(&self, step: LlmStep, values: &HashMap<&str, String>) -> Result<String> {
        let template = self.template(step);
        let mut out = String::with_capacity(template.len());
        let mut rest = template;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let Some(close) = after.find('}') else {
                return Err(Error::invalid(format!(
                    "unclosed placeholder in {step:?} template"
                )));
            };
            let name = &after[..close];
            match values.get(name) {
                Some(value) => out.push_str(value),
                None => {
                    return Err(Error::invalid(format!(
                        "template for {step:?} references unknown placeholder `{name}`"
                    )));
                }
            }
            rest = &after[close + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }
}
