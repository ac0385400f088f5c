//! Per-question verification state machine and its timers.
//!
//! This module is pure: it validates decisions, computes transitions and
//! works out which timer events are due. The service records the resulting
//! events and performs the channel side effects.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{self, LocalZone, Timestamp};
use crate::ids::{AnswerId, QueryId, TaskId, UserId};
use crate::model::QueryType;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Track {
    #[serde(rename = "DoctorTrack")]
    Doctor,
    #[serde(rename = "CoordinatorTrack")]
    Coordinator,
}

impl Track {
    pub fn for_query_type(t: QueryType) -> Option<Track> {
        match t {
            QueryType::Medical => Some(Track::Doctor),
            QueryType::Logistical => Some(Track::Coordinator),
            QueryType::SmallTalk | QueryType::Other => None,
        }
    }

    pub fn other(self) -> Track {
        match self {
            Track::Doctor => Track::Coordinator,
            Track::Coordinator => Track::Doctor,
        }
    }

    /// Label of the button that moves a task from this track to the other.
    pub fn reroute_label(self) -> &'static str {
        match self {
            Track::Doctor => REROUTE_TO_COORDINATOR,
            Track::Coordinator => REROUTE_TO_DOCTOR,
        }
    }
}

pub const YES_LABEL: &str = "Yes";
pub const NO_LABEL: &str = "No";
pub const REROUTE_TO_COORDINATOR: &str = "Send to Patient Coordinator";
pub const REROUTE_TO_DOCTOR: &str = "Send to Doctor";
pub const VERIFY_PROMPT: &str = "Is the answer accurate and complete?";

pub fn button_labels(track: Track) -> [&'static str; 3] {
    [YES_LABEL, NO_LABEL, track.reroute_label()]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskState {
    AwaitingOperating,
    Escalated,
    ApprovedYes,
    AwaitingCorrection,
    CorrectedDone,
    Rerouted,
}

impl TaskState {
    pub const ALL: [TaskState; 6] = [
        Self::AwaitingOperating,
        Self::Escalated,
        Self::ApprovedYes,
        Self::AwaitingCorrection,
        Self::CorrectedDone,
        Self::Rerouted,
    ];

    /// Every legal transition.
    pub const EDGES: [(TaskState, TaskState); 8] = [
        (Self::AwaitingOperating, Self::Escalated),
        (Self::AwaitingOperating, Self::ApprovedYes),
        (Self::AwaitingOperating, Self::AwaitingCorrection),
        (Self::AwaitingOperating, Self::Rerouted),
        (Self::Escalated, Self::ApprovedYes),
        (Self::Escalated, Self::AwaitingCorrection),
        (Self::Escalated, Self::Rerouted),
        (Self::AwaitingCorrection, Self::CorrectedDone),
    ];

    pub fn can_transition(self, to: TaskState) -> bool {
        Self::EDGES.contains(&(self, to))
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Self::ApprovedYes | Self::CorrectedDone | Self::Rerouted)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Yes,
    No,
    Reroute,
}

impl Decision {
    /// Map a pressed button label; the reroute label must match the track.
    pub fn from_label(label: &str, track: Track) -> Option<Decision> {
        match label.trim() {
            YES_LABEL => Some(Decision::Yes),
            NO_LABEL => Some(Decision::No),
            l if l == track.reroute_label() => Some(Decision::Reroute),
            _ => None,
        }
    }

    pub fn target(self) -> TaskState {
        match self {
            Decision::Yes => TaskState::ApprovedYes,
            Decision::No => TaskState::AwaitingCorrection,
            Decision::Reroute => TaskState::Rerouted,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationTask {
    pub task_id: TaskId,
    pub query_id: QueryId,
    pub answer_id: AnswerId,
    pub track: Track,
    pub operating_expert_id: UserId,
    pub escalation_expert_id: UserId,
    pub state: TaskState,
    pub created_at: Timestamp,
    #[serde(default)]
    pub escalated_at: Option<Timestamp>,
    #[serde(default)]
    pub decided_at: Option<Timestamp>,
    #[serde(default)]
    pub corrected_at: Option<Timestamp>,
    #[serde(default)]
    pub deciding_expert_id: Option<UserId>,
    #[serde(default)]
    pub correction_text: Option<String>,
    #[serde(default)]
    pub final_answer: Option<String>,
    #[serde(default)]
    pub reminder_sent: bool,
    /// The task this one was rerouted from.
    #[serde(default)]
    pub rerouted_from: Option<TaskId>,
    #[serde(default)]
    pub successor: Option<TaskId>,
}

impl VerificationTask {
    pub fn new(
        task_id: TaskId,
        query_id: QueryId,
        answer_id: AnswerId,
        track: Track,
        operating_expert_id: UserId,
        escalation_expert_id: UserId,
        created_at: Timestamp,
    ) -> Self {
        Self {
            task_id,
            query_id,
            answer_id,
            track,
            operating_expert_id,
            escalation_expert_id,
            state: TaskState::AwaitingOperating,
            created_at,
            escalated_at: None,
            decided_at: None,
            corrected_at: None,
            deciding_expert_id: None,
            correction_text: None,
            final_answer: None,
            reminder_sent: false,
            rerouted_from: None,
            successor: None,
        }
    }

    pub fn is_assigned(&self, expert: &UserId) -> bool {
        *expert == self.operating_expert_id || *expert == self.escalation_expert_id
    }

    /// Experts who may currently act on the task.
    pub fn active_experts(&self) -> Vec<UserId> {
        if self.state == TaskState::AwaitingCorrection {
            return self.deciding_expert_id.iter().cloned().collect();
        }
        let mut out = vec![self.operating_expert_id.clone()];
        if self.escalated_at.is_some() && self.escalation_expert_id != self.operating_expert_id {
            out.push(self.escalation_expert_id.clone());
        }
        out
    }

    /// Validate a decision without changing anything; returns the new state.
    pub fn check_decision(&self, expert: &UserId, decision: Decision, cfg: &WorkflowConfig) -> Result<TaskState, WorkflowError> {
        if self.state.is_terminal() {
            return Err(WorkflowError::AlreadyDecided(self.task_id.clone()));
        }
        if !self.is_assigned(expert) {
            return Err(WorkflowError::NotAssignedExpert {
                task: self.task_id.clone(),
                expert: expert.clone(),
                reason: "not assigned to this task",
            });
        }
        if *expert != self.operating_expert_id && self.escalated_at.is_none() {
            return Err(WorkflowError::NotAssignedExpert {
                task: self.task_id.clone(),
                expert: expert.clone(),
                reason: "task has not been escalated",
            });
        }
        if self.state == TaskState::AwaitingCorrection {
            return if self.deciding_expert_id.as_ref() == Some(expert) {
                Err(WorkflowError::AlreadyDecided(self.task_id.clone()))
            } else {
                Err(WorkflowError::CorrectionPendingElsewhere(self.task_id.clone()))
            };
        }
        if decision == Decision::Reroute && self.track == Track::Coordinator && !cfg.allow_coordinator_reroute {
            return Err(WorkflowError::RerouteDisabled(self.task_id.clone()));
        }
        let to = decision.target();
        debug_assert!(self.state.can_transition(to));
        Ok(to)
    }

    pub fn check_correction(&self, expert: &UserId) -> Result<(), WorkflowError> {
        if self.state != TaskState::AwaitingCorrection {
            return Err(WorkflowError::WrongState {
                task: self.task_id.clone(),
                state: self.state,
            });
        }
        if self.deciding_expert_id.as_ref() != Some(expert) {
            return Err(WorkflowError::WrongExpert(self.task_id.clone()));
        }
        Ok(())
    }

    /// Apply a recorded transition. Illegal transitions are refused so a
    /// tampered log cannot produce an impossible state.
    pub fn apply(&mut self, t: &Transition) -> Result<(), WorkflowError> {
        if !self.state.can_transition(t.to) || self.state != t.from {
            return Err(WorkflowError::IllegalTransition {
                task: self.task_id.clone(),
                from: self.state,
                to: t.to,
            });
        }
        match t.to {
            TaskState::Escalated => self.escalated_at = Some(t.at),
            TaskState::ApprovedYes | TaskState::AwaitingCorrection | TaskState::Rerouted => {
                self.decided_at = Some(t.at);
                self.deciding_expert_id = t.expert.clone();
                self.successor = t.successor.clone();
            }
            TaskState::CorrectedDone => {
                self.corrected_at = Some(t.at);
                self.correction_text = t.correction_text.clone();
                self.final_answer = t.final_answer.clone();
            }
            TaskState::AwaitingOperating => {}
        }
        self.state = t.to;
        Ok(())
    }

    pub fn escalation_due(&self, cfg: &WorkflowConfig) -> Option<Timestamp> {
        (self.state == TaskState::AwaitingOperating && self.escalated_at.is_none())
            .then(|| self.created_at + cfg.escalation_delay)
    }

    pub fn reminder_due(&self, cfg: &WorkflowConfig) -> Option<Timestamp> {
        (!self.state.is_terminal() && !self.reminder_sent).then(|| self.created_at + cfg.reminder_delay)
    }

    /// Pending strictly longer than the digest age at `now`.
    pub fn in_digest(&self, now: Timestamp, cfg: &WorkflowConfig) -> bool {
        !self.state.is_terminal() && now - self.created_at > cfg.digest_min_age
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub task_id: TaskId,
    pub from: TaskState,
    pub to: TaskState,
    pub at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert: Option<UserId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub successor: Option<TaskId>,
}

impl Transition {
    pub fn new(task: &VerificationTask, to: TaskState, at: Timestamp) -> Self {
        Self {
            task_id: task.task_id.clone(),
            from: task.state,
            to,
            at,
            expert: None,
            correction_text: None,
            final_answer: None,
            successor: None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorkflowError {
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("{expert} may not act on {task}: {reason}")]
    NotAssignedExpert {
        task: TaskId,
        expert: UserId,
        reason: &'static str,
    },
    #[error("task {0} has already been decided")]
    AlreadyDecided(TaskId),
    #[error("task {0} is waiting for another expert's correction")]
    CorrectionPendingElsewhere(TaskId),
    #[error("task {task} is {state:?}, not awaiting a correction")]
    WrongState { task: TaskId, state: TaskState },
    #[error("only the expert who chose No may correct task {0}")]
    WrongExpert(TaskId),
    #[error("rerouting coordinator task {0} is disabled")]
    RerouteDisabled(TaskId),
    #[error("illegal transition of {task}: {from:?} -> {to:?}")]
    IllegalTransition { task: TaskId, from: TaskState, to: TaskState },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowConfig {
    #[serde(with = "clock::serde_duration")]
    pub escalation_delay: Duration,
    #[serde(with = "clock::serde_duration")]
    pub reminder_delay: Duration,
    #[serde(with = "clock::serde_duration")]
    pub digest_min_age: Duration,
    #[serde(with = "clock::serde_times")]
    pub digest_times: Vec<NaiveTime>,
    pub allow_coordinator_reroute: bool,
}

impl Default for WorkflowConfig {
    fn default() -> Self {
        let t = |h, m| NaiveTime::from_hms_opt(h, m, 0).expect("valid time");
        Self {
            escalation_delay: Duration::hours(3),
            reminder_delay: Duration::hours(6),
            digest_min_age: Duration::hours(6),
            digest_times: vec![t(8, 0), t(12, 0), t(16, 0)],
            allow_coordinator_reroute: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DueKind {
    Escalate,
    PendingReminder,
    Digest,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DueEvent {
    pub kind: DueKind,
    pub task_id: Option<TaskId>,
    pub recipient_ids: Vec<UserId>,
    pub due_at: Timestamp,
}

/// Timer events due at `now`, in execution order: escalations, then
/// reminders, then digests for every configured slot in
/// `(last_digest_slot, now]`. Escalations happen before reminders so a
/// reminder firing at the same instant already includes the escalation
/// expert.
pub fn tick<'a>(
    tasks: impl IntoIterator<Item = &'a VerificationTask>,
    now: Timestamp,
    last_digest_slot: Timestamp,
    cfg: &WorkflowConfig,
    zone: &LocalZone,
) -> Vec<DueEvent> {
    let tasks: Vec<&VerificationTask> = tasks.into_iter().collect();
    let mut escalations: Vec<DueEvent> = tasks
        .iter()
        .filter_map(|t| {
            let due = t.escalation_due(cfg).filter(|d| *d <= now)?;
            Some(DueEvent {
                kind: DueKind::Escalate,
                task_id: Some(t.task_id.clone()),
                recipient_ids: vec![t.escalation_expert_id.clone()],
                due_at: due,
            })
        })
        .collect();
    escalations.sort_by(|a, b| (a.due_at, &a.task_id).cmp(&(b.due_at, &b.task_id)));

    let mut reminders: Vec<DueEvent> = tasks
        .iter()
        .filter_map(|t| {
            let due = t.reminder_due(cfg).filter(|d| *d <= now)?;
            let mut after = (*t).clone();
            if escalations.iter().any(|e| e.task_id.as_ref() == Some(&t.task_id)) {
                after.escalated_at = Some(due);
            }
            Some(DueEvent {
                kind: DueKind::PendingReminder,
                task_id: Some(t.task_id.clone()),
                recipient_ids: after.active_experts(),
                due_at: due,
            })
        })
        .collect();
    reminders.sort_by(|a, b| (a.due_at, &a.task_id).cmp(&(b.due_at, &b.task_id)));

    let digests = zone
        .slots_between(last_digest_slot, now, &cfg.digest_times)
        .into_iter()
        .map(|slot| DueEvent {
            kind: DueKind::Digest,
            task_id: None,
            recipient_ids: digest_lists(tasks.iter().copied(), slot, cfg).into_keys().collect(),
            due_at: slot,
        });

    escalations.into_iter().chain(reminders).chain(digests).collect()
}

/// Tasks pending longer than the digest age at `at`, grouped by each
/// expert able to act on them. Lists are ordered by creation time.
pub fn digest_lists<'a>(
    tasks: impl IntoIterator<Item = &'a VerificationTask>,
    at: Timestamp,
    cfg: &WorkflowConfig,
) -> BTreeMap<UserId, Vec<TaskId>> {
    let mut due: Vec<&VerificationTask> = tasks.into_iter().filter(|t| t.in_digest(at, cfg)).collect();
    due.sort_by(|a, b| (a.created_at, &a.task_id).cmp(&(b.created_at, &b.task_id)));
    let mut out: BTreeMap<UserId, Vec<TaskId>> = BTreeMap::new();
    for t in due {
        for e in t.active_experts() {
            out.entry(e).or_default().push(t.task_id.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn at(h: u32, m: u32) -> Timestamp {
        // Monday 2024-03-04 in UTC, which is the zone used below
        Utc.with_ymd_and_hms(2024, 3, 4, h, m, 0).unwrap()
    }

    fn task(created: Timestamp) -> VerificationTask {
        VerificationTask::new(
            "tsk_1".into(),
            "qry_1".into(),
            "ans_1".into(),
            Track::Doctor,
            "doc".into(),
            "esc".into(),
            created,
        )
    }

    fn cfg() -> WorkflowConfig {
        WorkflowConfig::default()
    }

    fn apply_due(t: &mut VerificationTask, events: &[DueEvent]) {
        for e in events {
            match e.kind {
                DueKind::Escalate => t.apply(&Transition::new(t, TaskState::Escalated, e.due_at)).unwrap(),
                DueKind::PendingReminder => t.reminder_sent = true,
                DueKind::Digest => {}
            }
        }
    }

    #[test]
    fn exactly_eight_edges_and_three_terminals() {
        let legal = TaskState::ALL
            .iter()
            .flat_map(|a| TaskState::ALL.iter().map(move |b| (*a, *b)))
            .filter(|(a, b)| a.can_transition(*b))
            .count();
        assert_eq!(legal, 8);
        let terminal: Vec<_> = TaskState::ALL.into_iter().filter(|s| s.is_terminal()).collect();
        assert_eq!(terminal, [TaskState::ApprovedYes, TaskState::CorrectedDone, TaskState::Rerouted]);
        for s in terminal {
            assert!(TaskState::ALL.iter().all(|to| !s.can_transition(*to)));
        }
    }

    #[test]
    fn escalation_fires_once_at_three_hours() {
        let mut t = task(at(9, 0));
        let zone = LocalZone::utc();
        let ev = tick([&t], at(12, 0), at(9, 0), &cfg(), &zone);
        let esc: Vec<_> = ev.iter().filter(|e| e.kind == DueKind::Escalate).collect();
        assert_eq!(esc.len(), 1);
        assert_eq!(esc[0].due_at, at(12, 0));
        apply_due(&mut t, &ev);
        let ev = tick([&t], at(12, 1), at(12, 0), &cfg(), &zone);
        assert!(ev.iter().all(|e| e.kind != DueKind::Escalate));
    }

    #[test]
    fn reminder_fires_once_at_six_hours_to_both() {
        let mut t = task(at(9, 0));
        let zone = LocalZone::utc();
        let ev = tick([&t], at(15, 0), at(9, 0), &cfg(), &zone);
        let rem: Vec<_> = ev.iter().filter(|e| e.kind == DueKind::PendingReminder).collect();
        assert_eq!(rem.len(), 1);
        assert_eq!(rem[0].recipient_ids, ["doc".into(), "esc".into()] as [UserId; 2]);
        apply_due(&mut t, &ev);
        let ev = tick([&t], at(15, 5), at(15, 0), &cfg(), &zone);
        assert!(ev.iter().all(|e| e.kind != DueKind::PendingReminder));
    }

    #[test]
    fn digest_lists_only_tasks_older_than_six_hours() {
        let t = task(at(5, 0));
        let c = cfg();
        assert!(digest_lists([&t], at(8, 0), &c).is_empty());
        let noon = digest_lists([&t], at(12, 0), &c);
        assert_eq!(noon.get(&UserId::from("doc")).unwrap(), &vec![TaskId::from("tsk_1")]);
        // exactly six hours is not "more than"
        assert!(digest_lists([&task(at(6, 0))], at(12, 0), &c).is_empty());
    }

    #[test]
    fn digest_slots_fire_once_each() {
        let zone = LocalZone::utc();
        let ev = tick(std::iter::empty(), at(16, 0), at(7, 0), &cfg(), &zone);
        let slots: Vec<_> = ev.iter().map(|e| e.due_at).collect();
        assert_eq!(slots, [at(8, 0), at(12, 0), at(16, 0)]);
        assert!(tick(std::iter::empty(), at(16, 0), at(16, 0), &cfg(), &zone).is_empty());
    }

    #[test]
    fn escalation_expert_needs_escalation() {
        let t = task(at(9, 0));
        let r = t.check_decision(&"esc".into(), Decision::Yes, &cfg());
        assert!(matches!(r, Err(WorkflowError::NotAssignedExpert { .. })));
        let r = t.check_decision(&"stranger".into(), Decision::Yes, &cfg());
        assert!(matches!(r, Err(WorkflowError::NotAssignedExpert { .. })));
    }

    #[test]
    fn first_terminal_decision_wins() {
        let mut t = task(at(9, 0));
        t.apply(&Transition::new(&t, TaskState::Escalated, at(12, 0))).unwrap();
        let to = t.check_decision(&"esc".into(), Decision::Yes, &cfg()).unwrap();
        let mut tr = Transition::new(&t, to, at(12, 5));
        tr.expert = Some("esc".into());
        t.apply(&tr).unwrap();
        assert_eq!(
            t.check_decision(&"doc".into(), Decision::Yes, &cfg()),
            Err(WorkflowError::AlreadyDecided("tsk_1".into()))
        );
    }

    #[test]
    fn correction_guards() {
        let mut t = task(at(9, 0));
        let mut tr = Transition::new(&t, TaskState::AwaitingCorrection, at(9, 5));
        tr.expert = Some("doc".into());
        t.apply(&tr).unwrap();
        assert_eq!(t.check_correction(&"esc".into()), Err(WorkflowError::WrongExpert("tsk_1".into())));
        assert!(t.check_correction(&"doc".into()).is_ok());
        assert_eq!(
            t.check_decision(&"doc".into(), Decision::Yes, &cfg()),
            Err(WorkflowError::AlreadyDecided("tsk_1".into()))
        );
        let mut done = Transition::new(&t, TaskState::CorrectedDone, at(9, 10));
        done.final_answer = Some("fixed".into());
        t.apply(&done).unwrap();
        assert!(matches!(t.check_correction(&"doc".into()), Err(WorkflowError::WrongState { .. })));
    }

    #[test]
    fn illegal_transition_refused() {
        let mut t = task(at(9, 0));
        let bad = Transition::new(&t, TaskState::CorrectedDone, at(9, 1));
        assert!(matches!(t.apply(&bad), Err(WorkflowError::IllegalTransition { .. })));
        assert_eq!(t.state, TaskState::AwaitingOperating);
    }

    #[test]
    fn coordinator_reroute_can_be_disabled() {
        let mut t = task(at(9, 0));
        t.track = Track::Coordinator;
        let c = WorkflowConfig {
            allow_coordinator_reroute: false,
            ..cfg()
        };
        assert!(matches!(
            t.check_decision(&"doc".into(), Decision::Reroute, &c),
            Err(WorkflowError::RerouteDisabled(_))
        ));
        assert_eq!(Decision::from_label("Send to Doctor", Track::Coordinator), Some(Decision::Reroute));
        assert_eq!(Decision::from_label("Send to Doctor", Track::Doctor), None);
    }
}
