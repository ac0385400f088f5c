//! Events recorded in the log. Every state change of the service is one of
//! these; replaying them rebuilds the service state.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::channel::OutboundAction;
use crate::clock::{LocalZone, Timestamp};
use crate::ids::{MessageId, QueryId, TaskId, UserId};
use crate::kb_update::{ReviewOutcome, ReviewRow};
use crate::knowledge::FaqEntry;
use crate::language::{AudioHandle, NormalizedInbound};
use crate::model::{BotAnswer, QueryRecord, UserProfile};
use crate::workflow::{Transition, VerificationTask};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub offset: u64,
    pub at: Timestamp,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProfileChange {
    Enrolled,
    LanguageChanged,
    Deactivated,
}

/// Inbound content as logged; audio is kept by handle, not inline.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InboundContent {
    Text { text: String },
    Audio { audio: AudioHandle },
    Button { label: String },
    Suggestion { index: u8 },
}

/// What an outbound message is about, so later inbound messages and timer
/// events can refer back to it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MessageContext {
    #[default]
    Notice,
    Welcome,
    Answer { query_id: QueryId },
    CorrectedAnswer { query_id: QueryId, task_id: TaskId },
    /// English options of a suggestion list, in display order.
    Suggestions { options: Vec<String> },
    ExpertPrompt { task_id: TaskId },
    VerifyMenu { task_id: TaskId },
    CorrectionRequest { task_id: TaskId },
    Reminder { task_id: TaskId },
    Digest,
    LanguageMenu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Job {
    ExpertDigest,
    SeekerReminder,
    KbDigest,
    KbApply,
}

impl Job {
    pub const ALL: [Job; 4] = [Job::ExpertDigest, Job::SeekerReminder, Job::KbDigest, Job::KbApply];
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Event {
    /// First record of every log.
    Started { zone: LocalZone },
    ProfileChanged {
        profile: UserProfile,
        change: ProfileChange,
    },
    InboundReceived {
        user_id: UserId,
        channel_message_id: String,
        content: InboundContent,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        context_id: Option<MessageId>,
    },
    LanguageMenuOpened { user_id: UserId },
    AnswerGenerated {
        inbound: NormalizedInbound,
        query: QueryRecord,
        answer: BotAnswer,
        /// Chunk ids retrieved for the answer.
        sources: Vec<String>,
    },
    TaskCreated { task: VerificationTask },
    TaskTransition(Transition),
    TaskReminded { task_id: TaskId, recipients: Vec<UserId> },
    OutboundDispatched {
        message_id: MessageId,
        recipient_id: UserId,
        action: OutboundAction,
        #[serde(default)]
        context: MessageContext,
    },
    SchedulerFired { job: Job, slot: Timestamp },
    DigestEmitted {
        day: NaiveDate,
        rows: Vec<ReviewRow>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        file: Option<String>,
    },
    ReviewIngested { outcome: ReviewOutcome },
    #[serde(rename = "FAQApplied")]
    FaqApplied { entries: Vec<(String, FaqEntry)> },
    #[serde(rename = "FAQApplyFailed")]
    FaqApplyFailed { error: String },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::Started { .. } => "Started",
            Event::ProfileChanged { .. } => "ProfileChanged",
            Event::InboundReceived { .. } => "InboundReceived",
            Event::LanguageMenuOpened { .. } => "LanguageMenuOpened",
            Event::AnswerGenerated { .. } => "AnswerGenerated",
            Event::TaskCreated { .. } => "TaskCreated",
            Event::TaskTransition(_) => "TaskTransition",
            Event::TaskReminded { .. } => "TaskReminded",
            Event::OutboundDispatched { .. } => "OutboundDispatched",
            Event::SchedulerFired { .. } => "SchedulerFired",
            Event::DigestEmitted { .. } => "DigestEmitted",
            Event::ReviewIngested { .. } => "ReviewIngested",
            Event::FaqApplied { .. } => "FAQApplied",
            Event::FaqApplyFailed { .. } => "FAQApplyFailed",
        }
    }
}
