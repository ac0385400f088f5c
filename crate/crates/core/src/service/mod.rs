//! The running service: an event log, the state folded from it, and the
//! flows that turn inbound messages, expert actions and timer firings into
//! new events.
//!
//! Every change goes through [`Service::record`]. The records of one public
//! operation are appended to the log as a single batch when it returns, so
//! a crash loses either the whole operation or nothing, and reopening a log
//! rebuilds the same state. Outbound messages are recorded as
//! `OutboundDispatched` events and reach the outbox only once their batch is
//! durable. After a failed append the service refuses further work and must
//! be reopened from its log.
//!
//! ```
//! use expertloop::config::Deployment;
//! use expertloop::eventlog::MemoryLog;
//! use expertloop::service::{Providers, Service};
//! use chrono::{TimeZone, Utc};
//!
//! let cfg = Deployment::bundled();
//! let now = Utc.with_ymd_and_hms(2024, 3, 4, 3, 30, 0).unwrap();
//! let svc = Service::open(cfg.clone(), Providers::mock(&cfg)?, Box::new(MemoryLog::new()), now)?;
//! assert_eq!(svc.state().next_offset, 1);
//! # Ok::<(), expertloop::service::ServiceError>(())
//! ```

mod flows;
pub mod notices;
mod providers;
pub mod state;
mod timers;
mod view;

use thiserror::Error;

use crate::channel::{ChannelError, OutboundAction};
use crate::clock::Timestamp;
use crate::config::Deployment;
use crate::eventlog::{EventLog, LogError};
use crate::events::{Event, EventRecord, MessageContext};
use crate::ids::{mint, MessageId, UserId};
use crate::kb_update::KbError;
use crate::knowledge::{KnowledgeError, KnowledgeStore};
use crate::language::LanguageServices;
use crate::model::{IconState, UserProfile};
use crate::onboarding::OnboardingError;
use crate::text::{split_for_channel, MAX_MESSAGE_CHARS};
use crate::workflow::WorkflowError;

pub use flows::InboundOutcome;
pub use providers::{corpus_epoch, Providers};
pub use state::{ApplyError, ConversationItem, SentMessage, State};
pub use view::{ConversationEntry, TaskFilter, TaskView};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Replay(#[from] ApplyError),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error(transparent)]
    Onboarding(#[from] OnboardingError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("no user with channel address {0}")]
    UnknownSender(String),
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("correction text is empty")]
    EmptyCorrection,
    #[error("setup failed: {0}")]
    Setup(String),
    #[error("an append failed; reopen the service from its log")]
    Poisoned,
}

/// A message waiting for delivery by the channel sink.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct Outbound {
    pub message_id: MessageId,
    pub recipient_id: UserId,
    pub at: Timestamp,
    pub action: OutboundAction,
}

pub struct Service {
    cfg: Deployment,
    providers: Providers,
    log: Box<dyn EventLog>,
    state: State,
    outbox: Vec<Outbound>,
    /// Records of the operation in progress, not yet in the log.
    pending: Vec<EventRecord>,
    depth: u32,
    poisoned: bool,
}

impl std::fmt::Debug for Service {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Service")
            .field("next_offset", &self.state.next_offset)
            .field("outbox", &self.outbox.len())
            .finish()
    }
}

impl Service {
    /// Replay `log` and start serving. An empty log is initialised with a
    /// `Started` record at `now`.
    pub fn open(cfg: Deployment, providers: Providers, log: Box<dyn EventLog>, now: Timestamp) -> Result<Self, ServiceError> {
        cfg.validate().map_err(|e| ServiceError::Setup(e.to_string()))?;
        let mut svc = Self {
            cfg,
            providers,
            log,
            state: State::default(),
            outbox: Vec::new(),
            pending: Vec::new(),
            depth: 0,
            poisoned: false,
        };
        let records = svc.log.read_all()?;
        for r in &records {
            svc.state.apply(r)?;
            if let Event::FaqApplied { entries } = &r.event {
                let entries: Vec<_> = entries.iter().map(|(_, e)| e.clone()).collect();
                svc.providers.store.append_faq_entries(&entries, r.at)?;
            }
        }
        if records.is_empty() {
            let zone = svc.cfg.timezone;
            svc.transact(|s| s.record(now, Event::Started { zone }).map(drop))?;
        } else if svc.state.zone != Some(svc.cfg.timezone) {
            return Err(ServiceError::Setup("log was written with a different timezone".into()));
        }
        tracing::info!(records = records.len(), "service opened");
        Ok(svc)
    }

    pub fn config(&self) -> &Deployment {
        &self.cfg
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn store(&self) -> &KnowledgeStore {
        &self.providers.store
    }

    pub fn language(&self) -> &LanguageServices {
        &self.providers.language
    }

    pub fn read_log(&self) -> Result<Vec<EventRecord>, ServiceError> {
        Ok(self.log.read_all()?)
    }

    /// Take every message queued since the last drain.
    pub fn drain_outbox(&mut self) -> Vec<Outbound> {
        std::mem::take(&mut self.outbox)
    }

    /// Time never runs backwards in the log.
    fn clamp(&self, at: Timestamp) -> Timestamp {
        self.state.last_at.map_or(at, |l| l.max(at))
    }

    /// Run one public operation and append its records as one batch. Nested
    /// calls join the outer batch.
    fn transact<T>(&mut self, f: impl FnOnce(&mut Self) -> Result<T, ServiceError>) -> Result<T, ServiceError> {
        if self.poisoned {
            return Err(ServiceError::Poisoned);
        }
        self.depth += 1;
        let out = f(self);
        self.depth -= 1;
        if self.depth == 0 {
            self.commit()?;
        }
        out
    }

    fn commit(&mut self) -> Result<(), ServiceError> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let batch = std::mem::take(&mut self.pending);
        if let Err(e) = self.log.append_batch(&batch) {
            // memory is ahead of the log now
            self.poisoned = true;
            return Err(e.into());
        }
        for record in batch {
            if let Event::OutboundDispatched {
                message_id,
                recipient_id,
                action,
                ..
            } = record.event
            {
                self.outbox.push(Outbound {
                    message_id,
                    recipient_id,
                    at: record.at,
                    action,
                });
            }
        }
        Ok(())
    }

    fn record(&mut self, at: Timestamp, event: Event) -> Result<EventRecord, ServiceError> {
        debug_assert!(self.depth > 0, "record outside an operation");
        let at = self.clamp(at);
        let record = EventRecord {
            offset: self.state.next_offset,
            at,
            event,
        };
        self.state.apply(&record)?;
        self.pending.push(record.clone());
        Ok(record)
    }

    fn dispatch(
        &mut self,
        at: Timestamp,
        recipient: &UserId,
        action: OutboundAction,
        context: MessageContext,
    ) -> Result<MessageId, ServiceError> {
        action.validate()?;
        let at = self.clamp(at);
        let message_id = MessageId::new(mint("msg", at, self.state.next_offset, 0));
        self.record(
            at,
            Event::OutboundDispatched {
                message_id: message_id.clone(),
                recipient_id: recipient.clone(),
                action,
                context,
            },
        )?;
        Ok(message_id)
    }

    fn address_of(&self, user: &UserId) -> Result<String, ServiceError> {
        if let Some(e) = self.cfg.expert(user) {
            return Ok(e.channel_address.clone());
        }
        self.state
            .seekers
            .get(user)
            .map(|p| p.channel_address.clone())
            .ok_or_else(|| ServiceError::UnknownUser(user.clone()))
    }

    fn seeker(&self, user: &UserId) -> Result<UserProfile, ServiceError> {
        self.state
            .seekers
            .get(user)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownUser(user.clone()))
    }

    /// Localized text (and audio when asked) to a seeker; returns the id of
    /// the text message.
    fn send_seeker_text(
        &mut self,
        at: Timestamp,
        seeker: &UserProfile,
        english: &str,
        context: MessageContext,
        want_audio: bool,
    ) -> Result<MessageId, ServiceError> {
        let localized = self
            .providers
            .language
            .localize_outbound(english, seeker.language, want_audio, at);
        let recipient = seeker.channel_address.clone();
        let id = self.dispatch(
            at,
            &seeker.user_id,
            OutboundAction::SendText {
                recipient: recipient.clone(),
                text: localized.text,
            },
            context,
        )?;
        if let Some(audio) = localized.audio {
            self.dispatch(at, &seeker.user_id, OutboundAction::SendAudio { recipient, audio }, MessageContext::Notice)?;
        }
        Ok(id)
    }

    fn tag_seeker(&mut self, at: Timestamp, seeker: &UserProfile, target: &MessageId, english: &str) -> Result<MessageId, ServiceError> {
        let text = self
            .providers
            .language
            .localize_outbound(english, seeker.language, false, at)
            .text;
        self.dispatch(
            at,
            &seeker.user_id,
            OutboundAction::TaggedReply {
                recipient: seeker.channel_address.clone(),
                target_message_id: target.clone(),
                text,
            },
            MessageContext::Notice,
        )
    }

    fn react(&mut self, at: Timestamp, user: &UserId, target: &MessageId, icon: IconState) -> Result<MessageId, ServiceError> {
        let recipient = self.address_of(user)?;
        self.dispatch(
            at,
            user,
            OutboundAction::SetReaction {
                recipient,
                target_message_id: target.clone(),
                icon,
            },
            MessageContext::Notice,
        )
    }

    /// English text to an expert, split to fit the channel. Returns the id
    /// of the first part.
    fn send_expert_text(&mut self, at: Timestamp, expert: &UserId, text: &str, context: MessageContext) -> Result<MessageId, ServiceError> {
        let recipient = self.address_of(expert)?;
        let mut first = None;
        for part in split_for_channel(text, MAX_MESSAGE_CHARS) {
            let id = self.dispatch(
                at,
                expert,
                OutboundAction::SendText {
                    recipient: recipient.clone(),
                    text: part,
                },
                context.clone(),
            )?;
            first.get_or_insert(id);
        }
        first.ok_or_else(|| ServiceError::Setup("empty expert message".into()))
    }
}
