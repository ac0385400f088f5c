//! Deterministic stand-in for a language model.
//!
//! The mock reads its inputs back out of the rendered prompt and answers
//! with simple rules: keyword classification, extractive answers chosen by
//! word overlap (a sentence must share more than half of the question's
//! content words, otherwise the answer is "I do not know"), keyword-templated follow-up questions, dictionary-based
//! correction merging and sentence-dropping summaries.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::parse::python_repr;
use super::prompts::{templates, PromptBundle, PromptTask};
use super::{CompletionProvider, ProviderError};
use crate::knowledge::embedding::{content_tokens, stem, word_tokens};
use crate::model::UNKNOWN_ANSWER;
use crate::text::{char_len, sentences, MAX_MESSAGE_CHARS};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelatedTemplate {
    pub keywords: Vec<String>,
    pub questions: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockLlmConfig {
    pub logistics_keywords: Vec<String>,
    pub greeting_keywords: Vec<String>,
    pub acknowledgement_phrases: Vec<String>,
    /// Lowercase abbreviation -> expansion.
    pub abbreviations: Vec<(String, String)>,
    pub related: Vec<RelatedTemplate>,
    pub default_related: Vec<String>,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for MockLlmConfig {
    fn default() -> Self {
        Self {
            logistics_keywords: strings(&[
                "insurance",
                "schedule",
                "cost",
                "discharge",
                "appointment",
                "payment",
                "time to reach",
            ]),
            greeting_keywords: strings(&["hello", "hi", "thank"]),
            acknowledgement_phrases: strings(&["got it", "i understand", "thankyou"]),
            abbreviations: vec![
                ("btr".into(), "Better to".into()),
                ("wks".into(), "weeks".into()),
                ("wk".into(), "week".into()),
                ("appt".into(), "appointment".into()),
                ("pls".into(), "please".into()),
                ("hrs".into(), "hours".into()),
                ("dr".into(), "doctor".into()),
                ("b4".into(), "before".into()),
                ("u".into(), "you".into()),
            ],
            related: vec![
                RelatedTemplate {
                    keywords: strings(&["long", "take", "duration", "minute"]),
                    questions: strings(&[
                        "How long is the recovery time after cataract surgery?",
                        "Will I feel any pain during the cataract surgery?",
                        "What are the risks associated with cataract surgery?",
                    ]),
                },
                RelatedTemplate {
                    keywords: strings(&["hair", "wash", "bath", "shower", "shampoo"]),
                    questions: strings(&[
                        "When can I take a full head bath after surgery?",
                        "Can I wash my face after cataract surgery?",
                        "How do I keep water away from my operated eye?",
                    ]),
                },
                RelatedTemplate {
                    keywords: strings(&["drop", "medicine", "medication"]),
                    questions: strings(&[
                        "How many times a day should I use the eye drops?",
                        "What should I do if I miss a dose of eye drops?",
                        "How do I put eye drops correctly?",
                    ]),
                },
                RelatedTemplate {
                    keywords: strings(&["insurance", "cost", "payment", "document", "admission"]),
                    questions: strings(&[
                        "What documents are needed for insurance approval?",
                        "How much does cataract surgery cost?",
                        "What time should I reach the hospital?",
                    ]),
                },
            ],
            default_related: strings(&[
                "How long is the recovery time after cataract surgery?",
                "Will I feel any pain during the cataract surgery?",
                "What are the risks associated with cataract surgery?",
            ]),
        }
    }
}

const QUESTION_WORDS: &[&str] = &[
    "what", "how", "when", "why", "where", "which", "who", "can", "should", "is", "are", "will", "do",
    "does", "may",
];

#[derive(Clone, Debug, Default)]
pub struct MockCompletionProvider {
    config: MockLlmConfig,
}

impl MockCompletionProvider {
    pub fn new(config: MockLlmConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &MockLlmConfig {
        &self.config
    }

    fn has_keyword(tokens: &[String], joined: &str, kw: &str) -> bool {
        let kw = kw.to_lowercase();
        if kw.contains(' ') {
            return format!(" {joined} ").contains(&format!(" {kw} "));
        }
        tokens.iter().any(|t| *t == kw || stem(t) == kw || *t == format!("{kw}s"))
    }

    fn classify(&self, query: &str) -> &'static str {
        let tokens: Vec<String> = word_tokens(query).collect();
        let joined = tokens.join(" ");
        let greeting = self
            .config
            .greeting_keywords
            .iter()
            .chain(&self.config.acknowledgement_phrases)
            .any(|k| Self::has_keyword(&tokens, &joined, k));
        let asks = query.contains('?') || tokens.iter().any(|t| QUESTION_WORDS.contains(&t.as_str()));
        if greeting && !asks {
            return "small-talk";
        }
        if self
            .config
            .logistics_keywords
            .iter()
            .any(|k| Self::has_keyword(&tokens, &joined, k))
        {
            "logistical"
        } else {
            "medical"
        }
    }

    fn small_talk_reply(&self, query: &str) -> &'static str {
        let tokens: Vec<String> = word_tokens(query).collect();
        let joined = tokens.join(" ");
        let thanks = Self::has_keyword(&tokens, &joined, "thank")
            || self
                .config
                .acknowledgement_phrases
                .iter()
                .any(|k| Self::has_keyword(&tokens, &joined, k));
        if thanks {
            "You're welcome! Feel free to ask if you have any other questions about your cataract surgery."
        } else {
            "Hello! I am here to answer your questions about cataract surgery. How can I help you?"
        }
    }

    /// Candidate answers in preference order: FAQ entries first.
    fn candidates(raw: &str, new: &str) -> Vec<(BTreeSet<String>, String)> {
        let mut out = Vec::new();
        for block in new.split("\n\n").filter(|b| !b.trim().is_empty()) {
            let block = block.trim();
            if let (Some(q), Some(a)) = (block.strip_prefix("Q: "), block.find("\nA: ")) {
                let question = &q[..a - 3];
                let answer = block[a + 4..].trim();
                out.push((content_tokens(question), answer.to_owned()));
            } else {
                out.extend(sentences(block).into_iter().map(|s| (content_tokens(&s), s)));
            }
        }
        out.extend(sentences(raw).into_iter().map(|s| (content_tokens(&s), s)));
        out
    }

    fn answer(&self, values: &std::collections::BTreeMap<String, String>) -> String {
        let query = values.get("query").map(String::as_str).unwrap_or("").trim();
        let query_type = self.classify(query);
        let response = if query_type == "small-talk" {
            self.small_talk_reply(query).to_owned()
        } else {
            let wanted = content_tokens(query);
            let mut best: Option<(usize, String)> = None;
            for (tokens, text) in Self::candidates(&values["raw_documents"], &values["new_documents"]) {
                let score = tokens.intersection(&wanted).count();
                // a candidate must cover more than half of the question
                if score * 2 > wanted.len() && best.as_ref().is_none_or(|(s, _)| score > *s) {
                    best = Some((score, text));
                }
            }
            best.map(|(_, t)| t).unwrap_or_else(|| UNKNOWN_ANSWER.to_owned())
        };
        serde_json::json!({ "response": response, "query_type": query_type }).to_string()
    }

    fn related(&self, values: &std::collections::BTreeMap<String, String>) -> String {
        let query = values.get("query").map(String::as_str).unwrap_or("");
        let tokens: Vec<String> = word_tokens(query).collect();
        let joined = tokens.join(" ");
        let chosen = self
            .config
            .related
            .iter()
            .find(|t| t.keywords.iter().any(|k| Self::has_keyword(&tokens, &joined, k)))
            .map(|t| &t.questions)
            .unwrap_or(&self.config.default_related);
        python_repr(chosen)
    }

    fn expand(&self, correction: &str) -> String {
        let mut words = Vec::new();
        for raw in correction.split_whitespace() {
            let core = raw.trim_end_matches(['.', ',', '!', ';']);
            let tail = &raw[core.len()..];
            let expanded = self
                .config
                .abbreviations
                .iter()
                .find(|(abbr, _)| abbr.eq_ignore_ascii_case(core))
                .map(|(_, full)| full.clone())
                .unwrap_or_else(|| core.to_owned());
            let tail = if tail.starts_with('.') { "." } else { tail };
            words.push(format!("{expanded}{tail}"));
        }
        let mut s = words.join(" ");
        s = s.trim_end_matches(['.', ' ']).to_owned();
        let mut chars = s.chars();
        match chars.next() {
            Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
            None => s,
        }
    }

    /// "wash my hair" from "How many days after surgery can I wash my hair?"
    fn query_action(query: &str) -> Option<String> {
        let lower = query.to_lowercase();
        let lower = lower.trim().trim_end_matches(['?', '.', '!']);
        let idx = ["can i ", "should i ", "may i ", "do i ", "could i "]
            .iter()
            .filter_map(|m| lower.find(m).map(|i| i + m.len()))
            .min()?;
        let words: Vec<String> = lower[idx..]
            .split_whitespace()
            .map(|w| match w {
                "my" => "your".to_owned(),
                "i" | "me" => "you".to_owned(),
                "myself" => "yourself".to_owned(),
                w => w.to_owned(),
            })
            .collect();
        let (verb, rest) = words.split_first()?;
        let gerund = if verb.ends_with('e') && !verb.ends_with("ee") && verb.len() > 2 {
            format!("{}ing", &verb[..verb.len() - 1])
        } else {
            format!("{verb}ing")
        };
        let mut phrase = vec![gerund];
        phrase.extend(rest.iter().cloned());
        // drop a trailing time clause, it is re-attached separately
        if let Some(pos) = phrase.iter().position(|w| w == "after" || w == "before") {
            phrase.truncate(pos);
        }
        Some(phrase.join(" "))
    }

    fn merge(&self, values: &std::collections::BTreeMap<String, String>) -> String {
        let query = values["query"].trim();
        let response = values["response"].trim();
        let correction = values["correction"].trim();
        let norm = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        if norm(correction) == norm(response) {
            return response.to_owned();
        }
        let mut text = self.expand(correction);
        let lower_q = query.to_lowercase();

        // "avoid for 2 weeks" -> "avoid washing your hair for 2 weeks"
        if let Some(action) = Self::query_action(query) {
            let mut words: Vec<String> = text.split(' ').map(str::to_owned).collect();
            if let Some(i) = words.iter().position(|w| {
                matches!(w.to_lowercase().as_str(), "avoid" | "stop" | "start" | "continue" | "delay")
            }) {
                let next = words.get(i + 1).map(|w| w.to_lowercase());
                if next.as_deref().is_none_or(|n| matches!(n, "for" | "until" | "till" | "till." | "for.")) {
                    words.insert(i + 1, action);
                }
            }
            text = words.join(" ");
        }
        if (lower_q.contains("after surgery") || lower_q.contains("after the surgery") || lower_q.contains("after cataract surgery"))
            && !text.to_lowercase().contains("surgery")
            && text.split_whitespace().count() > 3
        {
            text.push_str(" after the cataract surgery");
        }
        format!("{text}.")
    }

    fn shorten(values: &std::collections::BTreeMap<String, String>) -> String {
        let mut out = String::new();
        for s in sentences(&values["response"]) {
            let extra = if out.is_empty() { 0 } else { 1 };
            if char_len(&out) + extra + char_len(&s) > MAX_MESSAGE_CHARS {
                break;
            }
            if extra == 1 {
                out.push(' ');
            }
            out.push_str(&s);
        }
        out
    }
}

impl CompletionProvider for MockCompletionProvider {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, ProviderError> {
        let values = templates(prompt.task)
            .query
            .extract(&prompt.query_prompt)
            .ok_or_else(|| ProviderError::fatal("mock provider received an unrecognised prompt"))?;
        Ok(match prompt.task {
            PromptTask::ResponseGeneration => self.answer(&values),
            PromptTask::RelatedQuestions => self.related(&values),
            PromptTask::FinalResponse => self.merge(&values),
            PromptTask::Shorten => Self::shorten(&values),
        })
    }
}
