//! Deterministic mock provider for offline tests.
//!
//! Replies resolve in priority order: exact (step, prompt-digest) script,
//! then (step, substring) rule, then a per-step FIFO queue, then a built-in
//! echo rule. Every call is appended to a transcript for assertions.

use crate::error::{Error, Result};
use crate::llm::{LlmProvider, LlmRequest, LlmStep};
use crate::tokenizer::{Tokenizer, UnicodeTokenizer};
use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// One logged request/reply pair.
#[derive(Debug, Clone)]
pub struct MockCall {
    pub step: LlmStep,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: usize,
    pub reply: String,
}

#[derive(Default)]
struct Scripts {
    by_digest: HashMap<(LlmStep, u64), VecDeque<String>>,
    by_substring: Vec<(LlmStep, String, String)>,
    by_step: HashMap<LlmStep, VecDeque<String>>,
    defaults: HashMap<LlmStep, String>,
}

/// Scriptable, logging LLM stub. With a fixed script, any call sequence
/// produces an identical transcript across runs.
#[derive(Default)]
pub struct MockLlm {
    scripts: Mutex<Scripts>,
    log: Mutex<Vec<MockCall>>,
}

impl MockLlm {
    pub fn new() -> Self {
        MockLlm::default()
    }

    /// FNV-1a digest used to key exact-prompt scripts.
    pub fn prompt_digest(prompt: &str) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in prompt.as_bytes() {
            hash ^= u64::from(*byte);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        hash
    }

    /// Queue a reply for an exact prompt digest.
    pub fn script_digest(&self, step: LlmStep, digest: u64, reply: impl Into<String>) {
        self.scripts
            .lock()
            .unwrap()
            .by_digest
            .entry((step, digest))
            .or_default()
            .push_back(reply.into());
    }

    /// Reply whenever a prompt for `step` contains `needle` (sticky).
    pub fn script_containing(
        &self,
        step: LlmStep,
        needle: impl Into<String>,
        reply: impl Into<String>,
    ) {
        self.scripts
            .lock()
            .unwrap()
            .by_substring
            .push((step, needle.into(), reply.into()));
    }

    /// Queue the next reply for a step (FIFO).
    pub fn script_step(&self, step: LlmStep, reply: impl Into<String>) {
        self.scripts
            .lock()
            .unwrap()
            .by_step
            .entry(step)
            .or_default()
            .push_back(reply.into());
    }

    /// Replace the built-in fallback for a step (sticky).
    pub fn set_default(&self, step: LlmStep, reply: impl Into<String>) {
        self.scripts
            .lock()
            .unwrap()
            .defaults
            .insert(step, reply.into());
    }

    pub fn calls(&self) -> Vec<MockCall> {
        self.log.lock().unwrap().clone()
    }

    pub fn call_count(&self, step: LlmStep) -> usize {
        self.log.lock().unwrap().iter().filter(|c| c.step == step).count()
    }

    pub fn total_calls(&self) -> usize {
        self.log.lock().unwrap().len()
    }

    fn resolve(&self, step: LlmStep, prompt: &str) -> String {
        let mut scripts = self.scripts.lock().unwrap();
        let digest = MockLlm::prompt_digest(prompt);
        if let Some(queue) = scripts.by_digest.get_mut(&(step, digest)) {
            if let Some(reply) = queue.pop_front() {
                return reply;
            }
        }
        for (rule_step, needle, reply) in &scripts.by_substring {
            if *rule_step == step && prompt.contains(needle.as_str()) {
                return reply.clone();
            }
        }
        if let Some(queue) = scripts.by_step.get_mut(&step) {
            if let Some(reply) = queue.pop_front() {
                return reply;
            }
        }
        if let Some(reply) = scripts.defaults.get(&step) {
            return reply.clone();
        }
        fallback_reply(step, prompt)
    }
}

/// Built-in fallbacks. Content-bearing steps echo the first ten tokens of
/// the prompt's context block so downstream embeddings stay text-dependent.
fn fallback_reply(step: LlmStep, prompt: &str) -> String {
    match step {
        LlmStep::Toc => "1. Overview\n2. Details\n3. Summary".to_string(),
        LlmStep::Classify => "1".to_string(),
        LlmStep::Decompose => {
            "1. What is the main topic?\n2. What supporting details are given?".to_string()
        }
        LlmStep::Summarize | LlmStep::AnswerFreeform => echo_context(prompt, 10),
        LlmStep::AnswerChoice => "A".to_string(),
    }
}

fn echo_context(prompt: &str, tokens: usize) -> String {
    let body = match prompt.rfind("Context:") {
        Some(pos) => &prompt[pos + "Context:".len()..],
        None => prompt,
    };
    let (echo, _) = UnicodeTokenizer.truncate(body.trim_start(), tokens);
    echo
}

impl LlmProvider for MockLlm {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &LlmRequest) -> Result<String> {
        let reply = self.resolve(request.step, &request.prompt);
        self.log.lock().unwrap().push(MockCall {
            step: request.step,
            prompt: request.prompt.clone(),
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            reply: reply.clone(),
        });
        Ok(reply)
    }
}

/// Provider that fails with a transport error `n` times, then delegates.
pub struct FailingLlm<P: LlmProvider> {
    failures_remaining: AtomicUsize,
    inner: P,
}

impl<P: LlmProvider> FailingLlm<P> {
    pub fn new(failures: usize, inner: P) -> Self {
        FailingLlm {
            failures_remaining: AtomicUsize::new(failures),
            inner,
        }
    }
}

impl<P: LlmProvider> LlmProvider for FailingLlm<P> {
    fn name(&self) -> &str {
        "failing"
    }

    fn complete(&self, request: &LlmRequest) -> Result<String> {
        let remaining = self.failures_remaining.load(Ordering::SeqCst);
        if remaining > 0 {
            self.failures_remaining.store(remaining - 1, Ordering::SeqCst);
            return Err(Error::Transport("simulated transport failure".into()));
        }
        self.inner.complete(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(step: LlmStep, prompt: &str) -> LlmRequest {
        LlmRequest {
            step,
            prompt: prompt.to_string(),
            temperature: 0.0,
            max_tokens: 64,
        }
    }

    #[test]
    fn digest_scripts_take_priority() {
        let mock = MockLlm::new();
        let prompt = "exact prompt";
        mock.script_step(LlmStep::Classify, "0");
        mock.script_digest(LlmStep::Classify, MockLlm::prompt_digest(prompt), "1");
        let reply = mock.complete(&request(LlmStep::Classify, prompt)).unwrap();
        assert_eq!(reply, "1");
        // Digest queue exhausted: falls through to the step queue.
        let reply = mock.complete(&request(LlmStep::Classify, prompt)).unwrap();
        assert_eq!(reply, "0");
    }

    #[test]
    fn substring_rules_are_sticky() {
        let mock = MockLlm::new();
        mock.script_containing(LlmStep::Classify, "which sections", "1");
        for _ in 0..3 {
            let reply = mock
                .complete(&request(LlmStep::Classify, "so which sections apply?"))
                .unwrap();
            assert_eq!(reply, "1");
        }
    }

    #[test]
    fn summarize_fallback_echoes_context_head() {
        let mock = MockLlm::new();
        let prompt = "Summarize.\n\nContext:\none two three four five six seven eight nine ten eleven";
        let reply = mock.complete(&request(LlmStep::Summarize, prompt)).unwrap();
        assert_eq!(reply, "one two three four five six seven eight nine ten");
    }

    #[test]
    fn transcript_records_every_call() {
        let mock = MockLlm::new();
        mock.complete(&request(LlmStep::Toc, "p1")).unwrap();
        mock.complete(&request(LlmStep::Classify, "p2")).unwrap();
        assert_eq!(mock.total_calls(), 2);
        assert_eq!(mock.call_count(LlmStep::Toc), 1);
        assert_eq!(mock.calls()[1].prompt, "p2");
    }
}
