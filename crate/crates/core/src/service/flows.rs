//! Inbound messages, expert decisions and corrections, enrollment.

use crate::channel::{InboundBody, InboundMessage, OutboundAction, FAQ_HEADER, NEXT_STEPS_HEADER};
use crate::clock::Timestamp;
use crate::events::{Event, InboundContent, MessageContext, ProfileChange};
use crate::ids::{mint, AnswerId, MessageId, QueryId, TaskId, UserId};
use crate::kb_update::{read_csv, validate_review, ReviewOutcome};
use crate::knowledge::DEFAULT_TOP_K;
use crate::language::{InboundPayload, NormalizedInbound};
use crate::llm::Turn;
use crate::model::{AnswerStatus, BotAnswer, IconState, LanguageCode, Modality, QueryRecord, UserProfile};
use crate::onboarding::{is_language_trigger, language_menu_options, parse_language_choice, OnboardingError, OnboardingForm};
use crate::text::{fit_suggestion, truncate_at_sentence, MAX_MESSAGE_CHARS};
use crate::workflow::{button_labels, Decision, TaskState, Track, Transition, VerificationTask, WorkflowError, VERIFY_PROMPT};

use super::{notices, Service, ServiceError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InboundOutcome {
    /// The channel message id was seen before; nothing happened.
    Duplicate,
    /// Recorded and handled; replies, if any, are in the outbox.
    Handled { user_id: UserId },
}

enum Sender {
    Seeker(UserProfile),
    Expert(UserId),
}

impl Service {
    /// Handle one inbound channel message. Timers due by `now` fire first.
    pub fn handle_inbound(&mut self, msg: &InboundMessage, now: Timestamp) -> Result<InboundOutcome, ServiceError> {
        self.transact(|s| s.handle_inbound_op(msg, now))
    }

    fn handle_inbound_op(&mut self, msg: &InboundMessage, now: Timestamp) -> Result<InboundOutcome, ServiceError> {
        self.advance_to(now)?;
        if self.state.processed_inbound.contains(&msg.message_id) {
            return Ok(InboundOutcome::Duplicate);
        }
        let sender = if let Some(e) = self.cfg.expert_by_address(&msg.sender) {
            Sender::Expert(e.id.clone())
        } else if let Some(p) = self.state.seeker_by_address(&msg.sender) {
            Sender::Seeker(p.clone())
        } else {
            return Err(ServiceError::UnknownSender(msg.sender.clone()));
        };
        let user_id = match &sender {
            Sender::Seeker(p) => p.user_id.clone(),
            Sender::Expert(id) => id.clone(),
        };
        let menu_open = self.state.language_menu_open.contains(&user_id);
        let tap = match (&sender, &msg.body) {
            (Sender::Seeker(p), InboundBody::SuggestionPick(i)) => self.resolve_suggestion(&p.user_id, msg.context_id.as_ref(), *i),
            _ => None,
        };
        let content = match &msg.body {
            InboundBody::Text(t) => InboundContent::Text { text: t.clone() },
            InboundBody::Audio(bytes) => InboundContent::Audio {
                audio: self.providers.language.audio_store().put(bytes, now).map_err(|e| ServiceError::Setup(e.to_string()))?,
            },
            InboundBody::ButtonPress(label) => InboundContent::Button { label: label.clone() },
            // taps are echoed as the text that was shown
            InboundBody::SuggestionPick(i) => match &tap {
                Some((shown, _)) => InboundContent::Text { text: shown.clone() },
                None => InboundContent::Suggestion { index: *i },
            },
        };
        self.record(
            now,
            Event::InboundReceived {
                user_id: user_id.clone(),
                channel_message_id: msg.message_id.clone(),
                content,
                context_id: msg.context_id.clone(),
            },
        )?;
        match sender {
            Sender::Seeker(p) => self.seeker_message(p, msg, tap, menu_open, now)?,
            Sender::Expert(id) => self.expert_message(&id, msg, now)?,
        }
        Ok(InboundOutcome::Handled { user_id })
    }

    /// The shown label and English text of suggestion `index` (1-based),
    /// from the list named by `context` or else the seeker's latest list.
    fn resolve_suggestion(&self, seeker: &UserId, context: Option<&MessageId>, index: u8) -> Option<(String, String)> {
        let list_id = context
            .filter(|c| self.state.messages.get(*c).is_some_and(|m| m.recipient_id == *seeker))
            .or_else(|| self.state.last_suggestions.get(seeker))?;
        let sent = self.state.messages.get(list_id)?;
        match (&sent.action, &sent.context) {
            (OutboundAction::SuggestionList { suggestions, .. }, MessageContext::Suggestions { options }) => {
                let i = usize::from(index).checked_sub(1)?;
                Some((suggestions.get(i)?.clone(), options.get(i)?.clone()))
            }
            _ => None,
        }
    }

    fn seeker_message(
        &mut self,
        p: UserProfile,
        msg: &InboundMessage,
        tap: Option<(String, String)>,
        menu_open: bool,
        now: Timestamp,
    ) -> Result<(), ServiceError> {
        if !self.state.is_seeker_active(&p.user_id, now) {
            self.send_seeker_text(now, &p, notices::ACCESS_ENDED, MessageContext::Notice, false)?;
            return Ok(());
        }
        match &msg.body {
            InboundBody::Text(text) => {
                if menu_open {
                    if let Some(lang) = parse_language_choice(text) {
                        self.apply_language(&p, lang, now)?;
                        return Ok(());
                    }
                }
                if is_language_trigger(text) {
                    return self.open_language_menu(&p, now);
                }
                self.ask(&p, InboundPayload::Text(text.clone()), now)
            }
            InboundBody::Audio(bytes) => self.ask(&p, InboundPayload::Audio(bytes.clone()), now),
            InboundBody::SuggestionPick(_) => match tap {
                Some((shown, english)) => self.ask(&p, InboundPayload::Tap { shown, english }, now),
                None => {
                    self.send_seeker_text(now, &p, notices::NO_SUGGESTIONS, MessageContext::Notice, false)?;
                    Ok(())
                }
            },
            InboundBody::ButtonPress(_) => {
                self.send_seeker_text(now, &p, notices::NOT_UNDERSTOOD, MessageContext::Notice, false)?;
                Ok(())
            }
        }
    }

    fn open_language_menu(&mut self, p: &UserProfile, now: Timestamp) -> Result<(), ServiceError> {
        self.record(now, Event::LanguageMenuOpened { user_id: p.user_id.clone() })?;
        let header = self.providers.language.localize_label(notices::LANGUAGE_MENU_HEADER, p.language);
        let text = format!("{header}\n{}", language_menu_options());
        self.dispatch(
            now,
            &p.user_id,
            OutboundAction::SendText {
                recipient: p.channel_address.clone(),
                text,
            },
            MessageContext::LanguageMenu,
        )?;
        Ok(())
    }

    fn history(&self, seeker: &UserId) -> Vec<Turn> {
        let n = self.cfg.history_turns;
        let mut turns: Vec<Turn> = self
            .state
            .queries
            .values()
            .filter(|q| q.seeker_id == *seeker)
            .filter_map(|q| {
                let a = self.state.answers.get(self.state.answer_of_query.get(&q.query_id)?)?;
                Some(Turn {
                    question: q.english_text.clone(),
                    answer: a.english_answer.clone(),
                })
            })
            .collect();
        let skip = turns.len().saturating_sub(n);
        turns.drain(..skip);
        turns
    }

    fn ask(&mut self, p: &UserProfile, payload: InboundPayload, now: Timestamp) -> Result<(), ServiceError> {
        let inbound = match self.providers.language.normalize_inbound(p, payload, now) {
            Ok(n) => n,
            Err(e) => {
                tracing::warn!(user = %p.user_id, error = %e, "could not normalize inbound message");
                self.send_seeker_text(now, p, notices::NOT_UNDERSTOOD, MessageContext::Notice, false)?;
                return Ok(());
            }
        };
        let history = self.history(&p.user_id);
        let generated = self
            .providers
            .store
            .search(&inbound.english_text, DEFAULT_TOP_K)
            .map_err(|e| e.to_string())
            .and_then(|found| {
                let gen = self
                    .providers
                    .llm
                    .answer_query(&inbound.english_text, &found.raw_texts(), &found.faq_texts(), &history)
                    .map_err(|e| e.to_string())?;
                Ok((found, gen))
            });
        let (found, gen) = match generated {
            Ok(x) => x,
            Err(e) => {
                tracing::warn!(user = %p.user_id, error = %e, "answer generation failed");
                self.send_seeker_text(now, p, notices::TRY_AGAIN, MessageContext::Notice, false)?;
                return Ok(());
            }
        };
        let english_answer = self
            .providers
            .llm
            .shorten(&gen.english_answer)
            .unwrap_or_else(|_| truncate_at_sentence(&gen.english_answer, MAX_MESSAGE_CHARS));
        let track = Track::for_query_type(gen.query_type);
        let related = match track {
            Some(_) => self
                .providers
                .llm
                .related_questions(&inbound.english_text, &english_answer)
                .unwrap_or_else(|_| self.providers.llm.fallback_suggestions()),
            None => Vec::new(),
        };

        let at = self.clamp(now);
        let offset = self.state.next_offset;
        let query_id = QueryId::new(mint("qry", at, offset, 0));
        let answer_id = AnswerId::new(mint("ans", at, offset, 1));
        let modality = inbound.original_modality;
        let query = QueryRecord {
            query_id: query_id.clone(),
            seeker_id: p.user_id.clone(),
            original_text: inbound.original_text.clone(),
            original_modality: modality,
            english_text: inbound.english_text.clone(),
            query_type: gen.query_type,
            asked_at: at,
            conversation_id: format!("conv_{}", p.user_id),
        };
        let answer = BotAnswer {
            answer_id: answer_id.clone(),
            query_id: query_id.clone(),
            english_answer: english_answer.clone(),
            citations: if gen.is_unknown { Vec::new() } else { found.doc_ids() },
            is_unknown: gen.is_unknown,
            status: AnswerStatus::Unverified,
            related_questions: related.clone(),
        };
        let sources = found
            .raw_chunks
            .iter()
            .chain(&found.faq_chunks)
            .map(|(c, _)| c.chunk_id.to_string())
            .collect();
        self.record(
            at,
            Event::AnswerGenerated {
                inbound,
                query,
                answer,
                sources,
            },
        )?;
        let answer_msg = self.send_seeker_text(
            at,
            p,
            &english_answer,
            MessageContext::Answer {
                query_id: query_id.clone(),
            },
            modality == Modality::Audio,
        )?;
        let Some(track) = track else {
            return Ok(());
        };
        self.react(at, &p.user_id, &answer_msg, IconState::QuestionMark)?;
        self.send_suggestions(at, p, NEXT_STEPS_HEADER, &related)?;

        let operating = match track {
            Track::Doctor => p.operating_doctor_id.clone(),
            Track::Coordinator => p.operating_coordinator_id.clone(),
        }
        .ok_or_else(|| ServiceError::Setup(format!("{} has no operating expert", p.user_id)))?;
        let escalation = self.cfg.escalation_expert(track).clone();
        let task_id = TaskId::new(mint("tsk", at, self.state.next_offset, 0));
        let task = VerificationTask::new(task_id.clone(), query_id, answer_id, track, operating.clone(), escalation, at);
        self.record(at, Event::TaskCreated { task })?;
        self.dispatch_prompt(at, &task_id, &operating)
    }

    fn send_suggestions(&mut self, at: Timestamp, p: &UserProfile, header: &str, english: &[String]) -> Result<MessageId, ServiceError> {
        let lang = &self.providers.language;
        let header = lang.localize_label(header, p.language);
        let suggestions = english
            .iter()
            .map(|q| fit_suggestion(&lang.localize_label(q, p.language)))
            .collect();
        self.dispatch(
            at,
            &p.user_id,
            OutboundAction::SuggestionList {
                recipient: p.channel_address.clone(),
                header,
                suggestions,
            },
            MessageContext::Suggestions {
                options: english.to_vec(),
            },
        )
    }

    /// Verification prompt for one expert: question first, then the answer
    /// with its sources and the seeker's details, then the buttons.
    pub(super) fn dispatch_prompt(&mut self, at: Timestamp, task_id: &TaskId, expert: &UserId) -> Result<(), ServiceError> {
        let task = self.task(task_id)?.clone();
        let query = self
            .state
            .queries
            .get(&task.query_id)
            .cloned()
            .ok_or_else(|| ServiceError::Setup(format!("task {task_id} has no query")))?;
        let answer = self
            .state
            .answers
            .get(&task.answer_id)
            .cloned()
            .ok_or_else(|| ServiceError::Setup(format!("task {task_id} has no answer")))?;
        let seeker = self.seeker(&query.seeker_id)?;
        let mut question = query.english_text.clone();
        if query.original_text != query.english_text {
            question.push_str(&format!("\n(asked as: {})", query.original_text));
        }
        let sources = if answer.citations.is_empty() {
            "none".to_owned()
        } else {
            answer.citations.join(", ")
        };
        let text = format!(
            "Question: {question}\n\nAnswer: {}\n\nSources: {sources}\n\nPatient: {}",
            answer.english_answer, seeker.display_demographics
        );
        let prompt = self.send_expert_text(at, expert, &text, MessageContext::ExpertPrompt { task_id: task_id.clone() })?;
        let recipient = self.address_of(expert)?;
        self.dispatch(
            at,
            expert,
            OutboundAction::ButtonMenu {
                recipient,
                text: VERIFY_PROMPT.to_owned(),
                buttons: button_labels(task.track).iter().map(|s| s.to_string()).collect(),
            },
            MessageContext::VerifyMenu { task_id: task_id.clone() },
        )?;
        self.react(at, expert, &prompt, IconState::QuestionMark)?;
        Ok(())
    }

    fn task(&self, id: &TaskId) -> Result<&VerificationTask, ServiceError> {
        self.state
            .tasks
            .get(id)
            .ok_or_else(|| ServiceError::Workflow(WorkflowError::UnknownTask(id.clone())))
    }

    fn context_task(&self, expert: &UserId, context: Option<&MessageId>) -> Option<TaskId> {
        let sent = self.state.messages.get(context?)?;
        if sent.recipient_id != *expert {
            return None;
        }
        match &sent.context {
            MessageContext::ExpertPrompt { task_id }
            | MessageContext::VerifyMenu { task_id }
            | MessageContext::CorrectionRequest { task_id }
            | MessageContext::Reminder { task_id } => Some(task_id.clone()),
            _ => None,
        }
    }

    fn expert_message(&mut self, expert: &UserId, msg: &InboundMessage, now: Timestamp) -> Result<(), ServiceError> {
        match &msg.body {
            InboundBody::ButtonPress(label) => {
                let task_id = self.context_task(expert, msg.context_id.as_ref()).or_else(|| {
                    let menu = self.state.last_verify_menu.get(expert)?;
                    match &self.state.messages.get(menu)?.context {
                        MessageContext::VerifyMenu { task_id } => Some(task_id.clone()),
                        _ => None,
                    }
                });
                let Some(task_id) = task_id else {
                    return self.reject(now, expert, notices::REJECT_NOT_ASSIGNED);
                };
                let track = self.task(&task_id)?.track;
                let Some(decision) = Decision::from_label(label, track) else {
                    return self.reject(now, expert, notices::REJECT_UNKNOWN_OPTION);
                };
                match self.decide(expert, &task_id, decision, now) {
                    Ok(_) => Ok(()),
                    Err(ServiceError::Workflow(e)) => self.reject(now, expert, rejection(&e)),
                    Err(e) => Err(e),
                }
            }
            InboundBody::Text(text) => {
                let task_id = self
                    .context_task(expert, msg.context_id.as_ref())
                    .filter(|t| self.state.tasks.get(t).is_some_and(|t| t.state == TaskState::AwaitingCorrection))
                    .or_else(|| {
                        self.state
                            .tasks
                            .values()
                            .filter(|t| t.state == TaskState::AwaitingCorrection && t.deciding_expert_id.as_ref() == Some(expert))
                            .max_by(|a, b| (a.decided_at, &a.task_id).cmp(&(b.decided_at, &b.task_id)))
                            .map(|t| t.task_id.clone())
                    });
                let Some(task_id) = task_id else {
                    return self.reject(now, expert, notices::REJECT_NO_CORRECTION);
                };
                match self.correct(expert, &task_id, text, now) {
                    Ok(_) => Ok(()),
                    Err(ServiceError::Workflow(e)) => self.reject(now, expert, rejection(&e)),
                    Err(ServiceError::EmptyCorrection) => self.reject(now, expert, notices::CORRECTION_REQUEST),
                    Err(e) => Err(e),
                }
            }
            InboundBody::Audio(_) | InboundBody::SuggestionPick(_) => self.reject(now, expert, notices::REJECT_UNKNOWN_OPTION),
        }
    }

    fn reject(&mut self, at: Timestamp, expert: &UserId, text: &str) -> Result<(), ServiceError> {
        self.send_expert_text(at, expert, text, MessageContext::Notice)?;
        Ok(())
    }

    /// An expert's Yes, No or reroute on a task. Rejected decisions change
    /// nothing.
    pub fn submit_decision(&mut self, expert: &UserId, task_id: &TaskId, decision: Decision, now: Timestamp) -> Result<TaskState, ServiceError> {
        self.transact(|s| s.submit_decision_op(expert, task_id, decision, now))
    }

    fn submit_decision_op(&mut self, expert: &UserId, task_id: &TaskId, decision: Decision, now: Timestamp) -> Result<TaskState, ServiceError> {
        self.advance_to(now)?;
        self.decide(expert, task_id, decision, now)
    }

    fn decide(&mut self, expert: &UserId, task_id: &TaskId, decision: Decision, now: Timestamp) -> Result<TaskState, ServiceError> {
        let task = self.task(task_id)?.clone();
        let to = task.check_decision(expert, decision, &self.cfg.workflow)?;
        let at = self.clamp(now);
        let mut t = Transition::new(&task, to, at);
        t.expert = Some(expert.clone());
        if decision == Decision::Reroute {
            t.successor = Some(TaskId::new(mint("tsk", at, self.state.next_offset, 1)));
        }
        let successor = t.successor.clone();
        self.record(at, Event::TaskTransition(t))?;

        let query = self
            .state
            .queries
            .get(&task.query_id)
            .cloned()
            .ok_or_else(|| ServiceError::Setup(format!("task {task_id} has no query")))?;
        let seeker = self.seeker(&query.seeker_id)?;
        let answer_msg = self.state.answer_message.get(&query.query_id).cloned();
        match decision {
            Decision::Yes => {
                if let Some(m) = &answer_msg {
                    self.react(at, &seeker.user_id, m, IconState::GreenTick)?;
                    self.tag_seeker(at, &seeker, m, notices::verified(task.track))?;
                }
                self.mark_prompts_done(at, task_id)?;
            }
            Decision::No => {
                if let Some(m) = &answer_msg {
                    self.react(at, &seeker.user_id, m, IconState::RedCross)?;
                    self.tag_seeker(at, &seeker, m, notices::AWAIT_CORRECTION)?;
                }
                let recipient = self.address_of(expert)?;
                let action = match self.state.prompts.get(task_id).and_then(|p| p.get(expert)) {
                    Some(prompt) => OutboundAction::TaggedReply {
                        recipient,
                        target_message_id: prompt.clone(),
                        text: notices::CORRECTION_REQUEST.to_owned(),
                    },
                    None => OutboundAction::SendText {
                        recipient,
                        text: notices::CORRECTION_REQUEST.to_owned(),
                    },
                };
                self.dispatch(at, expert, action, MessageContext::CorrectionRequest { task_id: task_id.clone() })?;
            }
            Decision::Reroute => {
                self.mark_prompts_done(at, task_id)?;
                let track = task.track.other();
                let operating = match track {
                    Track::Doctor => seeker.operating_doctor_id.clone(),
                    Track::Coordinator => seeker.operating_coordinator_id.clone(),
                }
                .ok_or_else(|| ServiceError::Setup(format!("{} has no operating expert", seeker.user_id)))?;
                let mut next = VerificationTask::new(
                    successor.clone().expect("reroute has a successor"),
                    task.query_id.clone(),
                    task.answer_id.clone(),
                    track,
                    operating.clone(),
                    self.cfg.escalation_expert(track).clone(),
                    at,
                );
                next.rerouted_from = Some(task_id.clone());
                let next_id = next.task_id.clone();
                self.record(at, Event::TaskCreated { task: next })?;
                self.dispatch_prompt(at, &next_id, &operating)?;
            }
        }
        Ok(to)
    }

    fn mark_prompts_done(&mut self, at: Timestamp, task_id: &TaskId) -> Result<(), ServiceError> {
        let prompts: Vec<(UserId, MessageId)> = self
            .state
            .prompts
            .get(task_id)
            .map(|m| m.iter().map(|(u, p)| (u.clone(), p.clone())).collect())
            .unwrap_or_default();
        for (expert, prompt) in prompts {
            self.react(at, &expert, &prompt, IconState::GreenTick)?;
        }
        Ok(())
    }

    /// The deciding expert's correction; returns the final answer sent to
    /// the seeker.
    pub fn submit_correction(&mut self, expert: &UserId, task_id: &TaskId, correction: &str, now: Timestamp) -> Result<String, ServiceError> {
        self.transact(|s| s.submit_correction_op(expert, task_id, correction, now))
    }

    fn submit_correction_op(&mut self, expert: &UserId, task_id: &TaskId, correction: &str, now: Timestamp) -> Result<String, ServiceError> {
        self.advance_to(now)?;
        self.correct(expert, task_id, correction, now)
    }

    fn correct(&mut self, expert: &UserId, task_id: &TaskId, correction: &str, now: Timestamp) -> Result<String, ServiceError> {
        let task = self.task(task_id)?.clone();
        task.check_correction(expert)?;
        let correction = correction.trim();
        if correction.is_empty() {
            return Err(ServiceError::EmptyCorrection);
        }
        let query = self
            .state
            .queries
            .get(&task.query_id)
            .cloned()
            .ok_or_else(|| ServiceError::Setup(format!("task {task_id} has no query")))?;
        let bot_answer = self
            .state
            .answers
            .get(&task.answer_id)
            .map(|a| a.english_answer.clone())
            .unwrap_or_default();
        let llm = &self.providers.llm;
        let merged = llm
            .merge_correction(&query.english_text, &bot_answer, correction)
            .unwrap_or_else(|e| {
                tracing::warn!(error = %e, "sending the correction unmerged");
                correction.to_owned()
            });
        let final_answer = llm
            .shorten(&merged)
            .unwrap_or_else(|_| truncate_at_sentence(&merged, MAX_MESSAGE_CHARS));

        let at = self.clamp(now);
        let mut t = Transition::new(&task, TaskState::CorrectedDone, at);
        t.expert = Some(expert.clone());
        t.correction_text = Some(correction.to_owned());
        t.final_answer = Some(final_answer.clone());
        self.record(at, Event::TaskTransition(t))?;

        let seeker = self.seeker(&query.seeker_id)?;
        let sent = self.send_seeker_text(
            at,
            &seeker,
            &final_answer,
            MessageContext::CorrectedAnswer {
                query_id: query.query_id.clone(),
                task_id: task_id.clone(),
            },
            query.original_modality == Modality::Audio,
        )?;
        self.react(at, &seeker.user_id, &sent, IconState::GreenTick)?;
        self.mark_prompts_done(at, task_id)?;
        Ok(final_answer)
    }

    /// Enroll the patient and attendant of a form and send their welcome
    /// messages. Returns the new user ids, patient first.
    pub fn register(&mut self, form: &OnboardingForm, now: Timestamp) -> Result<Vec<UserId>, ServiceError> {
        self.transact(|s| s.register_op(form, now))
    }

    fn register_op(&mut self, form: &OnboardingForm, now: Timestamp) -> Result<Vec<UserId>, ServiceError> {
        self.advance_to(now)?;
        let cfg = &self.cfg;
        form.validate(now, &cfg.timezone, &cfg.onboarding, |id| cfg.expert_role(id))?;
        for (_, phone, _) in form.phones() {
            let taken_by_seeker = self
                .state
                .seeker_by_address(&phone)
                .is_some_and(|p| self.state.is_seeker_active(&p.user_id, now));
            if taken_by_seeker || cfg.expert_by_address(&phone).is_some() {
                return Err(OnboardingError::DuplicateEnrollment(phone).into());
            }
        }
        let at = self.clamp(now);
        let first = self.state.next_offset;
        let ids: Vec<UserId> = (0..form.phones().len() as u64)
            .map(|i| UserId::new(mint("usr", at, first + i, 0)))
            .collect();
        let profiles = form.profiles(&ids, &self.cfg.timezone);
        for p in &profiles {
            self.record(
                at,
                Event::ProfileChanged {
                    profile: p.clone(),
                    change: ProfileChange::Enrolled,
                },
            )?;
        }
        let starters = self.cfg.onboarding.starter_faqs.clone();
        for p in &profiles {
            self.send_seeker_text(at, p, &notices::welcome(), MessageContext::Welcome, false)?;
            self.send_suggestions(at, p, FAQ_HEADER, &starters)?;
        }
        Ok(ids)
    }

    pub fn set_language(&mut self, user: &UserId, lang: LanguageCode, now: Timestamp) -> Result<UserProfile, ServiceError> {
        self.transact(|s| s.set_language_op(user, lang, now))
    }

    fn set_language_op(&mut self, user: &UserId, lang: LanguageCode, now: Timestamp) -> Result<UserProfile, ServiceError> {
        self.advance_to(now)?;
        if self.cfg.expert(user).is_some() {
            return Err(OnboardingError::ExpertLanguage.into());
        }
        let p = self
            .state
            .seekers
            .get(user)
            .cloned()
            .ok_or_else(|| OnboardingError::UnknownUser(user.clone()))?;
        if !self.state.is_seeker_active(user, now) {
            return Err(OnboardingError::Inactive(user.clone()).into());
        }
        self.apply_language(&p, lang, now)
    }

    fn apply_language(&mut self, p: &UserProfile, lang: LanguageCode, now: Timestamp) -> Result<UserProfile, ServiceError> {
        let mut updated = p.clone();
        updated.language = lang;
        self.record(
            now,
            Event::ProfileChanged {
                profile: updated.clone(),
                change: ProfileChange::LanguageChanged,
            },
        )?;
        self.send_seeker_text(now, &updated, notices::LANGUAGE_CHANGED, MessageContext::Notice, false)?;
        Ok(updated)
    }

    /// Ingest the knowledge-base expert's reviewed sheet.
    pub fn ingest_review(&mut self, csv: &str, now: Timestamp) -> Result<ReviewOutcome, ServiceError> {
        self.transact(|s| s.ingest_review_op(csv, now))
    }

    fn ingest_review_op(&mut self, csv: &str, now: Timestamp) -> Result<ReviewOutcome, ServiceError> {
        self.advance_to(now)?;
        let rows = read_csv(csv)?;
        let outcome = validate_review(&rows, &self.state.emitted_rows, &self.state.applied_rows)?;
        self.record(now, Event::ReviewIngested { outcome: outcome.clone() })?;
        Ok(outcome)
    }

    /// The normalized form of a recorded question.
    pub fn inbound_of(&self, query: &QueryId) -> Option<&NormalizedInbound> {
        self.state.inbound.get(query)
    }
}

fn rejection(e: &WorkflowError) -> &'static str {
    match e {
        WorkflowError::AlreadyDecided(_) => notices::REJECT_ALREADY_DECIDED,
        WorkflowError::CorrectionPendingElsewhere(_) => notices::REJECT_PENDING_ELSEWHERE,
        WorkflowError::RerouteDisabled(_) => notices::REJECT_REROUTE_DISABLED,
        WorkflowError::WrongState { .. } | WorkflowError::WrongExpert(_) => notices::REJECT_NO_CORRECTION,
        _ => notices::REJECT_NOT_ASSIGNED,
    }
}
