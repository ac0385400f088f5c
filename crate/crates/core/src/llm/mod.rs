//! Model gateway: renders the four prompt tasks, calls a completion
//! provider with retries, and validates what comes back.

pub mod mock;
pub mod parse;
pub mod prompts;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{QueryType, UNKNOWN_ANSWER};
use crate::text::{fit_suggestion, truncate_at_sentence, MAX_MESSAGE_CHARS};
pub use prompts::{PromptBundle, PromptTask, Turn};

pub const RELATED_QUESTION_COUNT: usize = 3;
pub const DEFAULT_HISTORY_TURNS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("completion provider failed: {message}")]
pub struct ProviderError {
    pub message: String,
    pub retryable: bool,
}

impl ProviderError {
    pub fn retryable(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: true,
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: false,
        }
    }
}

/// `(PromptBundle) -> raw text`.
pub trait CompletionProvider: Send + Sync {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, ProviderError>;
}

impl<F> CompletionProvider for F
where
    F: Fn(&PromptBundle) -> Result<String, ProviderError> + Send + Sync,
{
    fn complete(&self, prompt: &PromptBundle) -> Result<String, ProviderError> {
        self(prompt)
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Skips backoff waits; used under the virtual clock.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoSleep;

impl Sleeper for NoSleep {
    fn sleep(&self, _: Duration) {}
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    #[serde(with = "humantime_std")]
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

mod humantime_std {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&humantime::format_duration(*d).to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        humantime::parse_duration(&String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerGeneration {
    pub english_answer: String,
    pub query_type: QueryType,
    pub is_unknown: bool,
}

impl AnswerGeneration {
    fn unknown(query_type: QueryType) -> Self {
        Self {
            english_answer: UNKNOWN_ANSWER.to_owned(),
            query_type,
            is_unknown: true,
        }
    }
}

pub struct LlmGateway {
    provider: Arc<dyn CompletionProvider>,
    retry: RetryPolicy,
    sleeper: Arc<dyn Sleeper>,
    fallback_questions: Vec<String>,
}

impl LlmGateway {
    pub fn new(provider: Arc<dyn CompletionProvider>, fallback_questions: Vec<String>) -> Self {
        Self {
            provider,
            retry: RetryPolicy::default(),
            sleeper: Arc::new(ThreadSleeper),
            fallback_questions,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy, sleeper: Arc<dyn Sleeper>) -> Self {
        self.retry = retry;
        self.sleeper = sleeper;
        self
    }

    fn call(&self, prompt: &PromptBundle) -> Result<String, ProviderError> {
        let mut backoff = self.retry.initial_backoff;
        let mut attempt = 0;
        loop {
            match self.provider.complete(prompt) {
                Ok(text) => return Ok(text),
                Err(e) if e.retryable && attempt < self.retry.max_retries => {
                    tracing::warn!(task = ?prompt.task, attempt, error = %e, "retrying completion");
                    self.sleeper.sleep(backoff);
                    backoff *= 2;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Answer and classify a seeker question from retrieved chunks.
    pub fn answer_query(
        &self,
        query: &str,
        raw_chunks: &[String],
        faq_chunks: &[String],
        history: &[Turn],
    ) -> Result<AnswerGeneration, LlmError> {
        if query.trim().is_empty() {
            return Err(LlmError::InvalidInput("empty query"));
        }
        let prompt = prompts::response_generation(query, raw_chunks, faq_chunks, history);
        // one extra attempt for unparseable output
        for _ in 0..2 {
            let raw = self.call(&prompt)?;
            if let Some(parsed) = parse::parse_answer(&raw) {
                return Ok(normalize_answer(parsed));
            }
            tracing::warn!("unparseable answer output");
        }
        Ok(AnswerGeneration::unknown(QueryType::Other))
    }

    /// Exactly three follow-up questions of at most 72 characters each.
    pub fn related_questions(&self, query: &str, answer: &str) -> Result<Vec<String>, LlmError> {
        if query.trim().is_empty() || answer.trim().is_empty() {
            return Err(LlmError::InvalidInput("empty query or answer"));
        }
        let raw = self.call(&prompts::related_questions(query, answer))?;
        let parsed = parse::parse_string_list(&raw).unwrap_or_default();
        Ok(self.complete_suggestions(parsed))
    }

    /// Three suggestions without asking the provider, for when it fails.
    pub fn fallback_suggestions(&self) -> Vec<String> {
        self.complete_suggestions(Vec::new())
    }

    fn complete_suggestions(&self, candidates: Vec<String>) -> Vec<String> {
        let mut out: Vec<String> = Vec::with_capacity(RELATED_QUESTION_COUNT);
        let fallback = self.fallback_questions.iter().cloned().chain(
            [
                "How should I care for my eye after cataract surgery?",
                "When can I resume my daily activities?",
                "Which symptoms should I report to the hospital?",
            ]
            .map(String::from),
        );
        for q in candidates.into_iter().chain(fallback) {
            let q = fit_suggestion(&q);
            if q.is_empty() || out.contains(&q) {
                continue;
            }
            out.push(q);
            if out.len() == RELATED_QUESTION_COUNT {
                break;
            }
        }
        out
    }

    /// Merge an expert's free-form correction into the bot's answer.
    pub fn merge_correction(&self, query: &str, bot_answer: &str, correction: &str) -> Result<String, LlmError> {
        if [query, bot_answer, correction].iter().any(|s| s.trim().is_empty()) {
            return Err(LlmError::InvalidInput("empty query, answer or correction"));
        }
        let out = self.call(&prompts::final_response(query, bot_answer, correction))?;
        let out = out.trim();
        Ok(if out.is_empty() {
            correction.trim().to_owned()
        } else {
            out.to_owned()
        })
    }

    /// Summarise to at most 700 characters. Inputs already within the limit
    /// are returned unchanged without calling the provider.
    pub fn shorten(&self, answer: &str) -> Result<String, LlmError> {
        if crate::text::char_len(answer) <= MAX_MESSAGE_CHARS {
            return Ok(answer.to_owned());
        }
        let out = self.call(&prompts::shorten(answer))?;
        let out = out.trim();
        let source = if out.is_empty() { answer } else { out };
        Ok(truncate_at_sentence(source, MAX_MESSAGE_CHARS))
    }
}

fn normalize_answer(parsed: parse::RawAnswer) -> AnswerGeneration {
    let is_unknown = parsed.response == UNKNOWN_ANSWER;
    let query_type = match parsed.query_type {
        // the prompt says to pick medical when unsure; an unknown answer is
        // never small talk
        QueryType::SmallTalk if is_unknown => QueryType::Medical,
        t => t,
    };
    AnswerGeneration {
        english_answer: parsed.response,
        query_type,
        is_unknown,
    }
}
