//! Expert-in-the-loop answering for healthcare seekers.
//!
//! Answers are generated from a curated knowledge base, shown to the seeker
//! immediately and verified by an assigned expert. Corrections flow back to
//! the seeker and, after a nightly review, into the knowledge base.

pub mod clock;
pub mod ids;
pub mod knowledge;
pub mod language;
pub mod llm;
pub mod model;
pub mod text;
pub mod workflow;
pub mod channel;
pub mod kb_update;
pub mod onboarding;
pub mod eventlog;
pub mod events;
pub mod config;
pub mod service;

/// Guide chapters, compiled and run as doctests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/configuration.md")]
    pub struct Configuration;
    #[doc = include_str!("../../../book/src/knowledge.md")]
    pub struct Knowledge;
    #[doc = include_str!("../../../book/src/verification.md")]
    pub struct Verification;
    #[doc = include_str!("../../../book/src/timers.md")]
    pub struct Timers;
    #[doc = include_str!("../../../book/src/event-log.md")]
    pub struct EventLog;
    #[doc = include_str!("../../../book/src/channel.md")]
    pub struct Channel;
    #[doc = include_str!("../../../book/src/kb-update.md")]
    pub struct KbUpdate;
}
