//! Prompt templates for the four model tasks.
//!
//! Templates live in `prompts/*.txt` and use `{{name}}` placeholders. A
//! rendered prompt differs from its template only at placeholder sites,
//! which also lets [`Template::extract`] recover the inputs from a rendered
//! prompt (the mock provider works this way).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PromptTask {
    ResponseGeneration,
    RelatedQuestions,
    FinalResponse,
    Shorten,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub task: PromptTask,
    pub system_prompt: String,
    pub query_prompt: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Var(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Template {
    source: &'static str,
    segments: Vec<Segment>,
}

impl Template {
    pub fn parse(source: &'static str) -> Self {
        let mut segments = Vec::new();
        let mut rest = source;
        while let Some(open) = rest.find("{{") {
            let Some(close) = rest[open..].find("}}") else {
                break;
            };
            if open > 0 {
                segments.push(Segment::Literal(rest[..open].to_owned()));
            }
            segments.push(Segment::Var(rest[open + 2..open + close].to_owned()));
            rest = &rest[open + close + 2..];
        }
        if !rest.is_empty() {
            segments.push(Segment::Literal(rest.to_owned()));
        }
        Self { source, segments }
    }

    pub fn source(&self) -> &'static str {
        self.source
    }

    pub fn placeholders(&self) -> Vec<&str> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Var(v) => Some(v.as_str()),
                Segment::Literal(_) => None,
            })
            .collect()
    }

    /// Substitute every placeholder. Panics on a missing value: the set of
    /// placeholders is fixed at compile time by the callers in this crate.
    pub fn render(&self, values: &[(&str, &str)]) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(l) => out.push_str(l),
                Segment::Var(v) => {
                    let value = values
                        .iter()
                        .find(|(k, _)| k == v)
                        .unwrap_or_else(|| panic!("no value for placeholder {v}"));
                    out.push_str(value.1);
                }
            }
        }
        out
    }

    /// Recover placeholder values from a rendered prompt, or `None` when the
    /// text does not follow the template.
    pub fn extract(&self, rendered: &str) -> Option<BTreeMap<String, String>> {
        let mut values = BTreeMap::new();
        let mut pos = 0;
        let mut pending: Option<&str> = None;
        let n = self.segments.len();
        for (i, seg) in self.segments.iter().enumerate() {
            match seg {
                Segment::Literal(lit) => {
                    let found = if i == n - 1 {
                        // trailing literal must be a suffix
                        rendered
                            .len()
                            .checked_sub(lit.len())
                            .filter(|start| *start >= pos && rendered[*start..] == **lit)
                    } else {
                        rendered[pos..].find(lit.as_str()).map(|j| pos + j)
                    }?;
                    match pending.take() {
                        Some(var) => {
                            values.insert(var.to_owned(), rendered[pos..found].to_owned());
                        }
                        None if found != pos => return None,
                        None => {}
                    }
                    pos = found + lit.len();
                }
                Segment::Var(v) => pending = Some(v),
            }
        }
        match pending {
            Some(var) => {
                values.insert(var.to_owned(), rendered[pos..].to_owned());
            }
            None if pos != rendered.len() => return None,
            None => {}
        }
        Some(values)
    }
}

pub struct TaskTemplates {
    pub system: Template,
    pub query: Template,
}

pub fn templates(task: PromptTask) -> TaskTemplates {
    let (system, query) = match task {
        PromptTask::ResponseGeneration => (
            include_str!("../../prompts/response_generation.system.txt"),
            include_str!("../../prompts/response_generation.query.txt"),
        ),
        PromptTask::RelatedQuestions => (
            include_str!("../../prompts/related_questions.system.txt"),
            include_str!("../../prompts/related_questions.query.txt"),
        ),
        PromptTask::FinalResponse => (
            include_str!("../../prompts/final_response.system.txt"),
            include_str!("../../prompts/final_response.query.txt"),
        ),
        PromptTask::Shorten => (
            include_str!("../../prompts/shorten.system.txt"),
            include_str!("../../prompts/shorten.query.txt"),
        ),
    };
    TaskTemplates {
        system: Template::parse(system),
        query: Template::parse(query),
    }
}

/// One prior exchange of the seeker's conversation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub question: String,
    pub answer: String,
}

pub fn format_history(history: &[Turn]) -> String {
    history
        .iter()
        .map(|t| format!("Patient: {}\nChatbot: {}", t.question, t.answer))
        .collect::<Vec<_>>()
        .join("\n")
}

pub const CHUNK_SEPARATOR: &str = "\n\n";

fn bundle(task: PromptTask, values: &[(&str, &str)]) -> PromptBundle {
    let t = templates(task);
    PromptBundle {
        task,
        system_prompt: t.system.render(values),
        query_prompt: t.query.render(values),
    }
}

pub fn response_generation(query: &str, raw_chunks: &[String], faq_chunks: &[String], history: &[Turn]) -> PromptBundle {
    let raw = raw_chunks.join(CHUNK_SEPARATOR);
    let new = faq_chunks.join(CHUNK_SEPARATOR);
    let conversation = format_history(history);
    bundle(
        PromptTask::ResponseGeneration,
        &[
            ("raw_documents", &raw),
            ("new_documents", &new),
            ("conversation", &conversation),
            ("query", query),
        ],
    )
}

pub fn related_questions(query: &str, response: &str) -> PromptBundle {
    bundle(PromptTask::RelatedQuestions, &[("query", query), ("response", response)])
}

pub fn final_response(query: &str, response: &str, correction: &str) -> PromptBundle {
    bundle(
        PromptTask::FinalResponse,
        &[("query", query), ("response", response), ("correction", correction)],
    )
}

pub fn shorten(response: &str) -> PromptBundle {
    bundle(PromptTask::Shorten, &[("response", response)])
}
