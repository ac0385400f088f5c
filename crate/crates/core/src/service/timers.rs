//! Time-driven work. [`Service::advance_to`] visits every due instant in
//! order and, at each, runs the workflow timers, then the seeker
//! notifications, then the knowledge-base jobs.
//!
//! A scheduled job records `SchedulerFired` before doing its work, so a
//! crash mid-job never repeats it after replay.

use chrono::NaiveTime;

use crate::channel::OutboundAction;
use crate::clock::Timestamp;
use crate::events::{Event, Job, MessageContext, ProfileChange};
use crate::ids::{TaskId, UserId};
use crate::kb_update::{digest_window, write_csv, ReviewRow, ShouldUpdate};
use crate::model::IconState;
use crate::workflow::{digest_lists, TaskState, Transition};

use super::{notices, Service, ServiceError};

impl Service {
    fn job_times(&self, job: Job) -> Vec<NaiveTime> {
        match job {
            Job::ExpertDigest => self.cfg.workflow.digest_times.clone(),
            Job::SeekerReminder => self.cfg.onboarding.reminder_times.clone(),
            Job::KbDigest => vec![self.cfg.kb.digest_time],
            Job::KbApply => vec![self.cfg.kb.apply_time],
        }
    }

    fn next_slot(&self, job: Job) -> Option<Timestamp> {
        let after = self.state.watermark(job)?;
        self.cfg.timezone.next_slot(after, &self.job_times(job))
    }

    /// The earliest instant at which something is due.
    pub fn next_due(&self) -> Option<Timestamp> {
        let wf = &self.cfg.workflow;
        let tasks = self
            .state
            .tasks
            .values()
            .flat_map(|t| [t.escalation_due(wf), t.reminder_due(wf)])
            .flatten();
        let jobs = Job::ALL.into_iter().filter_map(|j| self.next_slot(j));
        let expiries = self
            .state
            .seekers
            .values()
            .filter(|p| !self.state.deactivated.contains(&p.user_id))
            .filter_map(|p| p.active_until);
        tasks.chain(jobs).chain(expiries).min()
    }

    /// Fire everything due up to and including `now`, in time order.
    pub fn advance_to(&mut self, now: Timestamp) -> Result<(), ServiceError> {
        self.transact(|s| s.advance_to_op(now))
    }

    fn advance_to_op(&mut self, now: Timestamp) -> Result<(), ServiceError> {
        while let Some(t) = self.next_due().filter(|t| *t <= now) {
            self.fire(t)?;
        }
        Ok(())
    }

    fn fire(&mut self, t: Timestamp) -> Result<(), ServiceError> {
        self.fire_escalations(t)?;
        self.fire_reminders(t)?;
        if self.next_slot(Job::ExpertDigest).is_some_and(|s| s <= t) {
            self.fire_expert_digest(t)?;
        }
        self.fire_deactivations(t)?;
        if self.next_slot(Job::SeekerReminder).is_some_and(|s| s <= t) {
            self.fire_seeker_reminders(t)?;
        }
        if self.next_slot(Job::KbDigest).is_some_and(|s| s <= t) {
            self.fire_kb_digest(t)?;
        }
        if self.next_slot(Job::KbApply).is_some_and(|s| s <= t) {
            self.fire_kb_apply(t)?;
        }
        Ok(())
    }

    fn due_tasks(&self, t: Timestamp, due: impl Fn(&crate::workflow::VerificationTask) -> Option<Timestamp>) -> Vec<TaskId> {
        let mut v: Vec<(Timestamp, TaskId)> = self
            .state
            .tasks
            .values()
            .filter_map(|task| due(task).filter(|d| *d <= t).map(|d| (d, task.task_id.clone())))
            .collect();
        v.sort();
        v.into_iter().map(|(_, id)| id).collect()
    }

    fn fire_escalations(&mut self, t: Timestamp) -> Result<(), ServiceError> {
        let wf = self.cfg.workflow.clone();
        for id in self.due_tasks(t, |task| task.escalation_due(&wf)) {
            let task = self.state.tasks[&id].clone();
            let due = task.escalation_due(&wf).expect("due task");
            self.record(t, Event::TaskTransition(Transition::new(&task, TaskState::Escalated, due)))?;
            tracing::info!(task = %id, expert = %task.escalation_expert_id, "escalated");
            self.dispatch_prompt(t, &id, &task.escalation_expert_id)?;
        }
        Ok(())
    }

    fn fire_reminders(&mut self, t: Timestamp) -> Result<(), ServiceError> {
        let wf = self.cfg.workflow.clone();
        for id in self.due_tasks(t, |task| task.reminder_due(&wf)) {
            let task = self.state.tasks[&id].clone();
            let recipients = task.active_experts();
            self.record(
                t,
                Event::TaskReminded {
                    task_id: id.clone(),
                    recipients: recipients.clone(),
                },
            )?;
            let question = self
                .state
                .queries
                .get(&task.query_id)
                .map(|q| q.english_text.clone())
                .unwrap_or_default();
            let text = notices::expert_reminder(&question);
            for expert in recipients {
                let context = MessageContext::Reminder { task_id: id.clone() };
                match self.state.prompts.get(&id).and_then(|p| p.get(&expert)).cloned() {
                    Some(prompt) => {
                        let recipient = self.address_of(&expert)?;
                        self.dispatch(
                            t,
                            &expert,
                            OutboundAction::TaggedReply {
                                recipient,
                                target_message_id: prompt,
                                text: text.clone(),
                            },
                            context,
                        )?;
                    }
                    None => {
                        self.send_expert_text(t, &expert, &text, context)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn fire_expert_digest(&mut self, t: Timestamp) -> Result<(), ServiceError> {
        self.record(t, Event::SchedulerFired { job: Job::ExpertDigest, slot: t })?;
        let lists = digest_lists(self.state.tasks.values(), t, &self.cfg.workflow);
        for (expert, tasks) in lists {
            let mut text = notices::DIGEST_HEADER.to_owned();
            for (i, id) in tasks.iter().enumerate() {
                let q = self
                    .state
                    .tasks
                    .get(id)
                    .and_then(|task| self.state.queries.get(&task.query_id))
                    .map(|q| q.english_text.as_str())
                    .unwrap_or("");
                text.push_str(&format!("\n{}. {q}", i + 1));
            }
            self.send_expert_text(t, &expert, &text, MessageContext::Digest)?;
        }
        Ok(())
    }

    fn fire_deactivations(&mut self, t: Timestamp) -> Result<(), ServiceError> {
        let expired: Vec<_> = self
            .state
            .seekers
            .values()
            .filter(|p| !self.state.deactivated.contains(&p.user_id) && p.active_until.is_some_and(|u| u <= t))
            .cloned()
            .collect();
        for profile in expired {
            tracing::info!(user = %profile.user_id, "access ended");
            self.record(
                t,
                Event::ProfileChanged {
                    profile,
                    change: ProfileChange::Deactivated,
                },
            )?;
        }
        Ok(())
    }

    fn fire_seeker_reminders(&mut self, t: Timestamp) -> Result<(), ServiceError> {
        self.record(t, Event::SchedulerFired { job: Job::SeekerReminder, slot: t })?;
        let active: Vec<_> = self
            .state
            .seekers
            .values()
            .filter(|p| self.state.is_seeker_active(&p.user_id, t))
            .cloned()
            .collect();
        for p in active {
            self.send_seeker_text(t, &p, notices::SEEKER_REMINDER, MessageContext::Notice, false)?;
        }
        Ok(())
    }

    /// Review rows for every corrected task not yet emitted whose
    /// correction landed before `end`.
    pub fn pending_review_rows(&self, end: Timestamp) -> Vec<ReviewRow> {
        let mut tasks: Vec<_> = self
            .state
            .tasks
            .values()
            .filter(|t| t.state == TaskState::CorrectedDone)
            .filter(|t| t.corrected_at.is_some_and(|c| c < end))
            .filter(|t| !self.state.emitted_rows.contains_key(t.task_id.as_str()))
            .collect();
        tasks.sort_by(|a, b| (a.corrected_at, &a.task_id).cmp(&(b.corrected_at, &b.task_id)));
        tasks
            .into_iter()
            .map(|t| {
                let final_answer = t.final_answer.clone().unwrap_or_default();
                ReviewRow {
                    row_id: t.task_id.to_string(),
                    question: self
                        .state
                        .queries
                        .get(&t.query_id)
                        .map(|q| q.english_text.clone())
                        .unwrap_or_default(),
                    bot_answer: self
                        .state
                        .answers
                        .get(&t.answer_id)
                        .map(|a| a.english_answer.clone())
                        .unwrap_or_default(),
                    expert_correction: t.correction_text.clone().unwrap_or_default(),
                    merged_final_answer: final_answer.clone(),
                    should_update: ShouldUpdate::Unset,
                    final_answer_for_kb: final_answer,
                }
            })
            .collect()
    }

    fn fire_kb_digest(&mut self, t: Timestamp) -> Result<(), ServiceError> {
        self.record(t, Event::SchedulerFired { job: Job::KbDigest, slot: t })?;
        let zone = self.cfg.timezone;
        let day = zone.local_date(t);
        let (_, end) = digest_window(&zone, day, self.cfg.kb.digest_time);
        let rows = self.pending_review_rows(end);
        let file = match &self.cfg.paths.review_dir {
            Some(dir) => {
                let path = dir.join(format!("kb-review-{day}.csv"));
                let write = std::fs::create_dir_all(dir).and_then(|_| {
                    let csv = write_csv(&rows).map_err(|e| std::io::Error::other(e.to_string()))?;
                    std::fs::write(&path, csv)
                });
                match write {
                    Ok(()) => Some(path.display().to_string()),
                    Err(e) => {
                        tracing::error!(error = %e, path = %path.display(), "review sheet not written");
                        None
                    }
                }
            }
            None => None,
        };
        self.record(t, Event::DigestEmitted { day, rows, file })?;
        self.notify_kb_expert(t, day)
    }

    /// Short heads-up to the knowledge-base expert that a sheet is ready.
    fn notify_kb_expert(&mut self, t: Timestamp, day: chrono::NaiveDate) -> Result<(), ServiceError> {
        let n = self.state.digests.last().map_or(0, |d| d.row_ids.len());
        if n == 0 {
            return Ok(());
        }
        let kb: UserId = self.cfg.knowledge_base_expert.clone();
        let text = format!("The review sheet for {day} is ready with {n} corrected answer(s).");
        self.send_expert_text(t, &kb, &text, MessageContext::Digest)?;
        Ok(())
    }

    fn fire_kb_apply(&mut self, t: Timestamp) -> Result<(), ServiceError> {
        self.record(t, Event::SchedulerFired { job: Job::KbApply, slot: t })?;
        if self.state.kb_queue.is_empty() {
            return Ok(());
        }
        let at = self.clamp(t);
        let queued: Vec<_> = self
            .state
            .kb_queue
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let entries: Vec<_> = queued.iter().map(|(_, e)| e.clone()).collect();
        match self.providers.store.append_faq_entries(&entries, at) {
            Ok(n) => {
                tracing::info!(count = n, "expert FAQ entries applied");
                self.record(at, Event::FaqApplied { entries: queued })?;
            }
            Err(e) => {
                tracing::error!(error = %e, "expert FAQ update failed; queue kept");
                self.record(at, Event::FaqApplyFailed { error: e.to_string() })?;
            }
        }
        Ok(())
    }

    /// Glyph currently shown on a message.
    pub fn reaction(&self, message: &crate::ids::MessageId) -> Option<IconState> {
        self.state.reactions.get(message).copied()
    }
}
