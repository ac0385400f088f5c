//! Read models for operators and chat clients.

use serde::Serialize;

use crate::channel::OutboundAction;
use crate::clock::Timestamp;
use crate::events::{InboundContent, MessageContext};
use crate::ids::{MessageId, UserId};
use crate::model::IconState;
use crate::workflow::VerificationTask;

use super::state::ConversationItem;
use super::{Service, ServiceError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFilter {
    #[default]
    Pending,
    All,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TaskView {
    #[serde(flatten)]
    pub task: VerificationTask,
    pub seeker_id: UserId,
    pub question: String,
    pub answer: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "direction", rename_all = "snake_case")]
pub enum ConversationEntry {
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
        action: OutboundAction,
        context: MessageContext,
        /// Glyph currently shown on this message, if any.
        #[serde(skip_serializing_if = "Option::is_none")]
        reaction: Option<IconState>,
    },
}

impl Service {
    /// Tasks in creation order, optionally only those still open.
    pub fn tasks(&self, filter: TaskFilter) -> Vec<TaskView> {
        let mut tasks: Vec<&VerificationTask> = self
            .state
            .tasks
            .values()
            .filter(|t| filter == TaskFilter::All || !t.state.is_terminal())
            .collect();
        tasks.sort_by(|a, b| (a.created_at, &a.task_id).cmp(&(b.created_at, &b.task_id)));
        tasks
            .into_iter()
            .map(|t| {
                let q = self.state.queries.get(&t.query_id);
                TaskView {
                    task: t.clone(),
                    seeker_id: q.map(|q| q.seeker_id.clone()).unwrap_or_else(|| UserId::new("")),
                    question: q.map(|q| q.english_text.clone()).unwrap_or_default(),
                    answer: self
                        .state
                        .answers
                        .get(&t.answer_id)
                        .map(|a| a.english_answer.clone())
                        .unwrap_or_default(),
                }
            })
            .collect()
    }

    /// Tasks an expert may act on now.
    pub fn tasks_for_expert(&self, expert: &UserId) -> Vec<TaskView> {
        self.tasks(TaskFilter::Pending)
            .into_iter()
            .filter(|v| v.task.active_experts().contains(expert))
            .collect()
    }

    /// Everything a user sent and received, in log order.
    pub fn conversation(&self, user: &UserId) -> Result<Vec<ConversationEntry>, ServiceError> {
        if !self.state.seekers.contains_key(user) && self.cfg.expert(user).is_none() {
            return Err(ServiceError::UnknownUser(user.clone()));
        }
        let items = self.state.conversations.get(user).map(Vec::as_slice).unwrap_or_default();
        Ok(items
            .iter()
            .map(|item| match item {
                ConversationItem::Inbound {
                    offset,
                    at,
                    channel_message_id,
                    content,
                } => ConversationEntry::Inbound {
                    offset: *offset,
                    at: *at,
                    channel_message_id: channel_message_id.clone(),
                    content: content.clone(),
                },
                ConversationItem::Outbound { offset, at, message_id } => {
                    let sent = &self.state.messages[message_id];
                    ConversationEntry::Outbound {
                        offset: *offset,
                        at: *at,
                        message_id: message_id.clone(),
                        action: sent.action.clone(),
                        context: sent.context.clone(),
                        reaction: self.state.reactions.get(message_id).copied(),
                    }
                }
            })
            .collect())
    }
}
