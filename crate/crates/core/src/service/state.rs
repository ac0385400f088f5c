//! Service state as a fold over the event log.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::Serialize;

use crate::channel::OutboundAction;
use crate::clock::{LocalZone, Timestamp};
use crate::events::{Event, EventRecord, InboundContent, Job, MessageContext, ProfileChange};
use crate::ids::{AnswerId, MessageId, QueryId, TaskId, UserId};
use crate::kb_update::ReviewRow;
use crate::knowledge::FaqEntry;
use crate::language::NormalizedInbound;
use crate::model::{AnswerStatus, BotAnswer, IconState, QueryRecord, UserProfile};
use crate::workflow::{TaskState, VerificationTask};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SentMessage {
    pub recipient_id: UserId,
    pub at: Timestamp,
    pub action: OutboundAction,
    pub context: MessageContext,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "direction", rename_all = "snake_case")]
pub enum ConversationItem {
    Inbound {
        offset: u64,
        at: Timestamp,
        channel_message_id: String,
        content: InboundContent,
    },
    Outbound {
        offset: u64,
        at: Timestamp,
        message_id: MessageId,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DigestRecord {
    pub day: NaiveDate,
    pub row_ids: Vec<String>,
    pub file: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct State {
    pub zone: Option<LocalZone>,
    pub started_at: Option<Timestamp>,
    pub last_at: Option<Timestamp>,
    pub next_offset: u64,
    pub seekers: BTreeMap<UserId, UserProfile>,
    pub deactivated: BTreeSet<UserId>,
    pub queries: BTreeMap<QueryId, QueryRecord>,
    pub inbound: BTreeMap<QueryId, NormalizedInbound>,
    pub answers: BTreeMap<AnswerId, BotAnswer>,
    pub answer_of_query: BTreeMap<QueryId, AnswerId>,
    /// The seeker-facing text message carrying each answer.
    pub answer_message: BTreeMap<QueryId, MessageId>,
    pub tasks: BTreeMap<TaskId, VerificationTask>,
    /// First message of the verification prompt sent to each expert.
    pub prompts: BTreeMap<TaskId, BTreeMap<UserId, MessageId>>,
    pub messages: BTreeMap<MessageId, SentMessage>,
    pub conversations: BTreeMap<UserId, Vec<ConversationItem>>,
    /// Latest reaction per target message.
    pub reactions: BTreeMap<MessageId, IconState>,
    pub last_verify_menu: BTreeMap<UserId, MessageId>,
    pub last_suggestions: BTreeMap<UserId, MessageId>,
    pub language_menu_open: BTreeSet<UserId>,
    pub processed_inbound: BTreeSet<String>,
    pub watermarks: BTreeMap<Job, Timestamp>,
    pub emitted_rows: BTreeMap<String, ReviewRow>,
    pub digests: Vec<DigestRecord>,
    pub kb_queue: BTreeMap<String, FaqEntry>,
    pub applied_rows: BTreeSet<String>,
    pub faq_applied: Vec<FaqEntry>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("cannot apply record {offset}: {reason}")]
pub struct ApplyError {
    pub offset: u64,
    pub reason: String,
}

impl State {
    pub fn watermark(&self, job: Job) -> Option<Timestamp> {
        self.watermarks.get(&job).copied().or(self.started_at)
    }

    /// The enrolled seeker currently using `address`: the most recent
    /// enrollment wins.
    pub fn seeker_by_address(&self, address: &str) -> Option<&UserProfile> {
        self.seekers
            .values()
            .filter(|p| p.channel_address == address.trim())
            .max_by(|a, b| a.user_id.cmp(&b.user_id))
    }

    pub fn is_seeker_active(&self, user: &UserId, now: Timestamp) -> bool {
        !self.deactivated.contains(user) && self.seekers.get(user).is_some_and(|p| p.is_active(now))
    }

    pub fn task_for_query(&self, query: &QueryId) -> Vec<&VerificationTask> {
        self.tasks.values().filter(|t| t.query_id == *query).collect()
    }

    pub fn query_of_task(&self, task: &VerificationTask) -> Option<&QueryRecord> {
        self.queries.get(&task.query_id)
    }

    pub fn answer_of_task(&self, task: &VerificationTask) -> Option<&BotAnswer> {
        self.answers.get(&task.answer_id)
    }

    pub fn apply(&mut self, r: &EventRecord) -> Result<(), ApplyError> {
        let fail = |reason: String| ApplyError {
            offset: r.offset,
            reason,
        };
        if r.offset != self.next_offset {
            return Err(fail(format!("expected offset {}", self.next_offset)));
        }
        if self.started_at.is_none() && !matches!(r.event, Event::Started { .. }) {
            return Err(fail("log does not begin with Started".into()));
        }
        let at = r.at;
        match &r.event {
            Event::Started { zone } => {
                if self.started_at.is_some() {
                    return Err(fail("second Started record".into()));
                }
                self.zone = Some(*zone);
                self.started_at = Some(at);
            }
            Event::ProfileChanged { profile, change } => {
                if self.deactivated.contains(&profile.user_id) {
                    return Err(fail(format!("{} is deactivated", profile.user_id)));
                }
                if *change == ProfileChange::Deactivated {
                    self.deactivated.insert(profile.user_id.clone());
                    self.language_menu_open.remove(&profile.user_id);
                }
                if *change == ProfileChange::LanguageChanged {
                    self.language_menu_open.remove(&profile.user_id);
                }
                self.seekers.insert(profile.user_id.clone(), profile.clone());
            }
            Event::InboundReceived {
                user_id,
                channel_message_id,
                content,
                ..
            } => {
                self.processed_inbound.insert(channel_message_id.clone());
                self.language_menu_open.remove(user_id);
                self.conversations
                    .entry(user_id.clone())
                    .or_default()
                    .push(ConversationItem::Inbound {
                        offset: r.offset,
                        at,
                        channel_message_id: channel_message_id.clone(),
                        content: content.clone(),
                    });
            }
            Event::LanguageMenuOpened { user_id } => {
                self.language_menu_open.insert(user_id.clone());
            }
            Event::AnswerGenerated {
                inbound, query, answer, ..
            } => {
                self.answer_of_query
                    .insert(query.query_id.clone(), answer.answer_id.clone());
                self.inbound.insert(query.query_id.clone(), inbound.clone());
                self.queries.insert(query.query_id.clone(), query.clone());
                self.answers.insert(answer.answer_id.clone(), answer.clone());
            }
            Event::TaskCreated { task } => {
                if self.tasks.contains_key(&task.task_id) {
                    return Err(fail(format!("duplicate task {}", task.task_id)));
                }
                self.tasks.insert(task.task_id.clone(), task.clone());
            }
            Event::TaskTransition(t) => {
                let task = self
                    .tasks
                    .get_mut(&t.task_id)
                    .ok_or_else(|| fail(format!("unknown task {}", t.task_id)))?;
                task.apply(t).map_err(|e| fail(e.to_string()))?;
                let status = match t.to {
                    TaskState::ApprovedYes => Some(AnswerStatus::Verified),
                    TaskState::AwaitingCorrection => Some(AnswerStatus::MarkedIncorrect),
                    TaskState::CorrectedDone => Some(AnswerStatus::Corrected),
                    _ => None,
                };
                if let Some(status) = status {
                    let answer_id = task.answer_id.clone();
                    let answer = self
                        .answers
                        .get_mut(&answer_id)
                        .ok_or_else(|| fail(format!("unknown answer {answer_id}")))?;
                    if !answer.status.can_transition(status) {
                        return Err(fail(format!("answer {answer_id}: {:?} -> {status:?}", answer.status)));
                    }
                    answer.status = status;
                }
            }
            Event::TaskReminded { task_id, .. } => {
                let task = self
                    .tasks
                    .get_mut(task_id)
                    .ok_or_else(|| fail(format!("unknown task {task_id}")))?;
                if task.reminder_sent {
                    return Err(fail(format!("second reminder for {task_id}")));
                }
                task.reminder_sent = true;
            }
            Event::OutboundDispatched {
                message_id,
                recipient_id,
                action,
                context,
            } => {
                match (action, context) {
                    (OutboundAction::SendText { .. }, MessageContext::Answer { query_id }) => {
                        self.answer_message
                            .entry(query_id.clone())
                            .or_insert_with(|| message_id.clone());
                    }
                    (OutboundAction::SendText { .. }, MessageContext::ExpertPrompt { task_id }) => {
                        self.prompts
                            .entry(task_id.clone())
                            .or_default()
                            .entry(recipient_id.clone())
                            .or_insert_with(|| message_id.clone());
                    }
                    (OutboundAction::ButtonMenu { .. }, MessageContext::VerifyMenu { .. }) => {
                        self.last_verify_menu.insert(recipient_id.clone(), message_id.clone());
                    }
                    (OutboundAction::SuggestionList { .. }, MessageContext::Suggestions { .. }) => {
                        self.last_suggestions.insert(recipient_id.clone(), message_id.clone());
                    }
                    (OutboundAction::SetReaction { target_message_id, icon, .. }, _) => {
                        self.reactions.insert(target_message_id.clone(), *icon);
                    }
                    _ => {}
                }
                self.messages.insert(
                    message_id.clone(),
                    SentMessage {
                        recipient_id: recipient_id.clone(),
                        at,
                        action: action.clone(),
                        context: context.clone(),
                    },
                );
                self.conversations
                    .entry(recipient_id.clone())
                    .or_default()
                    .push(ConversationItem::Outbound {
                        offset: r.offset,
                        at,
                        message_id: message_id.clone(),
                    });
            }
            Event::SchedulerFired { job, slot } => {
                if self.watermark(*job).is_some_and(|w| *slot <= w) {
                    return Err(fail(format!("{job:?} slot {slot} fired twice")));
                }
                self.watermarks.insert(*job, *slot);
            }
            Event::DigestEmitted { day, rows, file } => {
                for row in rows {
                    if self.emitted_rows.insert(row.row_id.clone(), row.clone()).is_some() {
                        return Err(fail(format!("row {} emitted twice", row.row_id)));
                    }
                }
                self.digests.push(DigestRecord {
                    day: *day,
                    row_ids: rows.iter().map(|r| r.row_id.clone()).collect(),
                    file: file.clone(),
                });
            }
            Event::ReviewIngested { outcome } => {
                self.kb_queue
                    .extend(outcome.queued.iter().map(|(k, v)| (k.clone(), v.clone())));
            }
            Event::FaqApplied { entries } => {
                for (row, entry) in entries {
                    self.kb_queue.remove(row);
                    self.applied_rows.insert(row.clone());
                    self.faq_applied.push(entry.clone());
                }
            }
            Event::FaqApplyFailed { .. } => {}
        }
        self.last_at = Some(self.last_at.map_or(at, |l| l.max(at)));
        self.next_offset += 1;
        Ok(())
    }
}
