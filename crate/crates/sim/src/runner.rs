//! Executes a script against a service on a virtual clock.
//!
//! Every step first advances the clock to the step's time, so timer output
//! lands in the transcript before the step's own traffic. Inbound traffic
//! goes through the webhook encoder and parser, and every outbound payload
//! is rendered, decoded again and checked to round-trip.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use expertloop::channel::{parse_outbound, parse_webhook, render_outbound, webhook_json, InboundBody, InboundMessage};
use expertloop::clock::Timestamp;
use expertloop::config::Deployment;
use expertloop::eventlog::{EventLog, LogError, MemoryLog};
use expertloop::events::EventRecord;
use expertloop::ids::{MessageId, UserId};
use expertloop::kb_update::{write_csv, ShouldUpdate};
use expertloop::model::LanguageCode;
use expertloop::service::{notices, Providers, Service, State};
use serde_json::json;

use crate::coverage::EdgeCoverage;
use crate::expect::{evaluate, ExpectationResult};
use crate::script::{Action, ScenarioScript};
use crate::transcript::{to_jsonl, Direction, TranscriptItem};
use crate::SimError;

/// Log wrapper that fails the append of one chosen offset, once. Stands in
/// for a process killed just before that record reached storage.
#[derive(Clone, Debug)]
pub struct FailingLog {
    inner: MemoryLog,
    fail_at: u64,
    tripped: Arc<AtomicBool>,
}

impl FailingLog {
    pub fn new(inner: MemoryLog, fail_at: u64) -> Self {
        Self {
            inner,
            fail_at,
            tripped: Arc::new(AtomicBool::new(false)),
        }
    }

    pub fn tripped(&self) -> bool {
        self.tripped.load(Ordering::SeqCst)
    }
}

impl EventLog for FailingLog {
    fn append_batch(&mut self, records: &[EventRecord]) -> Result<(), LogError> {
        let next = self.inner.next_offset();
        if !self.tripped() && (next..next + records.len() as u64).contains(&self.fail_at) {
            self.tripped.store(true, Ordering::SeqCst);
            return Err(LogError::Storage(std::io::Error::other("simulated crash")));
        }
        self.inner.append_batch(records)
    }

    fn read_all(&self) -> Result<Vec<EventRecord>, LogError> {
        self.inner.read_all()
    }

    fn next_offset(&self) -> u64 {
        self.inner.next_offset()
    }
}

/// What happened at an injected crash.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrashReport {
    /// 1-based step during which the crash hit; 0 for setup.
    pub step: usize,
    /// Offset whose append failed.
    pub offset: u64,
}

#[derive(Debug)]
pub struct RunReport {
    pub name: String,
    pub transcript: Vec<TranscriptItem>,
    pub results: Vec<ExpectationResult>,
    pub coverage: EdgeCoverage,
    pub log: Vec<EventRecord>,
    pub crashes: Vec<CrashReport>,
    /// Final service state.
    pub state: State,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn transcript_jsonl(&self) -> String {
        to_jsonl(&self.transcript)
    }
}

#[derive(Clone, Debug)]
struct Actor {
    user_id: UserId,
    address: String,
}

pub struct Simulation {
    script: ScenarioScript,
    times: Vec<Timestamp>,
    start: Timestamp,
    cfg: Deployment,
    log: MemoryLog,
    failing: Option<FailingLog>,
    svc: Service,
    actors: BTreeMap<String, Actor>,
    by_address: BTreeMap<String, String>,
    transcript: Vec<TranscriptItem>,
    crashes: Vec<CrashReport>,
    /// State as of the last operation known to be in the log.
    committed: State,
}

impl Simulation {
    /// Reference deployment, mock providers, fresh in-memory log.
    pub fn new(script: ScenarioScript) -> Result<Self, SimError> {
        Self::with_options(script, Deployment::bundled(), MemoryLog::new(), None)
    }

    /// As [`Simulation::new`], but the append of record `offset` fails once
    /// and the simulation recovers by replaying the log.
    pub fn with_crash(script: ScenarioScript, offset: u64) -> Result<Self, SimError> {
        Self::with_options(script, Deployment::bundled(), MemoryLog::new(), Some(offset))
    }

    pub fn with_options(script: ScenarioScript, cfg: Deployment, log: MemoryLog, crash_at: Option<u64>) -> Result<Self, SimError> {
        let times = script.step_times()?;
        let start = script.start_time()?;
        let failing = crash_at.map(|o| FailingLog::new(log.clone(), o));
        let boxed: Box<dyn EventLog> = match &failing {
            Some(f) => Box::new(f.clone()),
            None => Box::new(log.clone()),
        };
        let svc = Service::open(cfg.clone(), Providers::mock(&cfg)?, boxed, start)?;
        let mut sim = Self {
            script,
            times,
            start,
            cfg,
            log,
            failing,
            svc,
            actors: BTreeMap::new(),
            by_address: BTreeMap::new(),
            transcript: Vec::new(),
            crashes: Vec::new(),
            committed: State::default(),
        };
        for e in &sim.cfg.experts {
            sim.actors.insert(
                e.id.to_string(),
                Actor {
                    user_id: e.id.clone(),
                    address: e.channel_address.clone(),
                },
            );
            sim.by_address.insert(e.channel_address.clone(), e.id.to_string());
        }
        sim.setup()?;
        sim.check_actors()?;
        Ok(sim)
    }

    fn setup(&mut self) -> Result<(), SimError> {
        loop {
            match self.enroll() {
                Ok(()) => return Ok(()),
                Err(e) => self.recover(0, e)?,
            }
        }
    }

    fn enroll(&mut self) -> Result<(), SimError> {
        let profiles = self.script.profiles.clone();
        for p in &profiles {
            let pairs = [(&p.patient, &p.form.patient_phone), (&p.attendant, &p.form.attendant_phone)];
            for (alias, phone) in pairs {
                if let (Some(alias), Some(phone)) = (alias, phone) {
                    self.by_address.insert(phone.clone(), alias.clone());
                }
            }
        }
        for (i, p) in profiles.iter().enumerate() {
            let phones = [
                (p.patient.as_deref(), p.form.patient_phone.as_deref()),
                (p.attendant.as_deref(), p.form.attendant_phone.as_deref()),
            ];
            let enrolled = phones
                .iter()
                .filter_map(|(_, phone)| *phone)
                .any(|phone| self.svc.state().seeker_by_address(phone).is_some());
            if !enrolled {
                self.committed = self.svc.state().clone();
                self.svc.register(&p.form, self.start)?;
                self.drain()?;
            }
            for (alias, phone) in phones {
                let Some(alias) = alias else { continue };
                let phone = phone.ok_or_else(|| SimError::Script(format!("profile {}: alias {alias} has no phone", i + 1)))?;
                let profile = self
                    .svc
                    .state()
                    .seeker_by_address(phone)
                    .ok_or_else(|| SimError::Script(format!("profile {}: {phone} did not enroll", i + 1)))?;
                let actor = Actor {
                    user_id: profile.user_id.clone(),
                    address: phone.to_owned(),
                };
                self.actors.insert(alias.to_owned(), actor);
            }
        }
        Ok(())
    }

    fn check_actors(&self) -> Result<(), SimError> {
        for (i, s) in self.script.steps.iter().enumerate() {
            let needs_actor = !matches!(s.action, Action::AdvanceClock | Action::Restart | Action::SubmitReview);
            match &s.actor {
                Some(a) if !self.actors.contains_key(a) => {
                    return Err(SimError::Script(format!("step {}: unknown actor {a:?}", i + 1)));
                }
                None if needs_actor => {
                    return Err(SimError::Script(format!("step {}: {:?} needs an actor", i + 1, s.action)));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Run every step, then evaluate the expectations.
    pub fn run(mut self) -> Result<RunReport, SimError> {
        for i in 0..self.script.steps.len() {
            loop {
                match self.step(i) {
                    Ok(()) => break,
                    Err(e) => self.recover(i + 1, e)?,
                }
            }
        }
        let log = self.svc.read_log()?;
        let results = evaluate(&self.script.expectations, &self.transcript, &log);
        Ok(RunReport {
            name: self.script.name.clone(),
            coverage: EdgeCoverage::from_log(&log),
            transcript: self.transcript,
            results,
            log,
            crashes: self.crashes,
            state: self.svc.state().clone(),
        })
    }

    /// After an injected log failure: drop the service, replay the log, and
    /// check the replay matches the state after the last durable operation.
    /// Any other error is returned.
    fn recover(&mut self, step: usize, err: SimError) -> Result<(), SimError> {
        let Some(failing) = self.failing.take() else {
            return Err(err);
        };
        if !failing.tripped() {
            self.failing = Some(failing);
            return Err(err);
        }
        let at = self.svc.state().last_at.unwrap_or(self.start);
        tracing::info!(step, offset = failing.fail_at, "simulated crash, replaying log");
        self.svc = Service::open(self.cfg.clone(), Providers::mock(&self.cfg)?, Box::new(self.log.clone()), at)?;
        if *self.svc.state() != self.committed {
            return Err(SimError::ReplayMismatch(step));
        }
        self.crashes.push(CrashReport {
            step,
            offset: failing.fail_at,
        });
        Ok(())
    }

    fn step(&mut self, i: usize) -> Result<(), SimError> {
        let at = self.times[i];
        self.committed = self.svc.state().clone();
        self.svc.advance_to(at)?;
        self.committed = self.svc.state().clone();
        self.drain()?;
        let step = self.script.steps[i].clone();
        let alias = step.actor.clone().unwrap_or_default();
        let payload = step.payload.clone();
        let text_payload = || -> Result<String, SimError> {
            payload
                .as_ref()
                .and_then(|p| p.as_str())
                .map(str::to_owned)
                .ok_or_else(|| SimError::Script(format!("step {}: payload must be a string", i + 1)))
        };
        match step.action {
            Action::SendText => {
                let text = text_payload()?;
                self.inbound(i, &alias, InboundBody::Text(text), None, at)?;
            }
            Action::SendAudioFixture => {
                let clip = text_payload()?;
                self.inbound(i, &alias, InboundBody::Audio(clip.into_bytes()), None, at)?;
            }
            Action::TapSuggestion => {
                let (context, options) = self
                    .latest_out(&alias, "suggestions", |_| true)
                    .map(|p| (p.message_id.clone(), p.suggestions.clone().unwrap_or_default()))
                    .ok_or_else(|| SimError::Script(format!("step {}: {alias} has no suggestion list", i + 1)))?;
                let index = match payload.as_ref() {
                    Some(serde_yaml::Value::Number(n)) => n.as_u64().unwrap_or(0) as u8,
                    Some(serde_yaml::Value::String(label)) => options
                        .iter()
                        .position(|o| o == label)
                        .map(|p| p as u8 + 1)
                        .ok_or_else(|| SimError::Script(format!("step {}: no suggestion {label:?}", i + 1)))?,
                    _ => return Err(SimError::Script(format!("step {}: tap needs an index or label", i + 1))),
                };
                self.inbound(i, &alias, InboundBody::SuggestionPick(index), Some(MessageId::new(context)), at)?;
            }
            Action::PressButton => {
                let label = text_payload()?;
                let context = self.latest_out(&alias, "buttons", |_| true).map(|p| MessageId::new(p.message_id));
                self.inbound(i, &alias, InboundBody::ButtonPress(label), context, at)?;
            }
            Action::SubmitCorrectionText => {
                let text = text_payload()?;
                let context = self
                    .latest_out(&alias, "tagged_reply", |p| p.text.as_deref() == Some(notices::CORRECTION_REQUEST))
                    .map(|p| MessageId::new(p.message_id));
                self.inbound(i, &alias, InboundBody::Text(text), context, at)?;
            }
            Action::AdvanceClock => {}
            Action::SetLanguage => {
                let value = payload.clone().ok_or_else(|| SimError::Script(format!("step {}: language missing", i + 1)))?;
                let lang: LanguageCode =
                    serde_yaml::from_value(value).map_err(|e| SimError::Script(format!("step {}: {e}", i + 1)))?;
                let user = self.actors[&alias].user_id.clone();
                self.push(at, Direction::Api, &alias, json!({"action": "set_language", "user_id": user, "language": lang}));
                self.svc.set_language(&user, lang, at)?;
            }
            Action::SubmitReview => {
                let csv = self.review_sheet(i, payload.as_ref())?;
                let kb = self.cfg.knowledge_base_expert.to_string();
                let actor = step.actor.clone().unwrap_or(kb);
                self.push(at, Direction::Api, &actor, json!({"action": "submit_review", "csv": csv}));
                self.svc.ingest_review(&csv, at)?;
            }
            Action::Restart => {
                self.push(at, Direction::Api, "operator", json!({"action": "restart"}));
                let log: Box<dyn EventLog> = Box::new(self.log.clone());
                self.svc = Service::open(self.cfg.clone(), Providers::mock(&self.cfg)?, log, at)?;
            }
        }
        self.drain()
    }

    /// The latest emitted review sheet with every row marked as the payload
    /// says: one `yes`/`no` for all rows, or a list with one per row.
    fn review_sheet(&self, i: usize, payload: Option<&serde_yaml::Value>) -> Result<String, SimError> {
        let bad = |m: &str| SimError::Script(format!("step {}: {m}", i + 1));
        let state = self.svc.state();
        let digest = state.digests.last().ok_or_else(|| bad("no review sheet emitted yet"))?;
        let marks: Vec<String> = match payload {
            Some(serde_yaml::Value::String(s)) => vec![s.clone(); digest.row_ids.len()],
            Some(serde_yaml::Value::Sequence(v)) => v.iter().map(|m| m.as_str().unwrap_or_default().to_owned()).collect(),
            _ => return Err(bad("review payload must be yes, no, or a list")),
        };
        if marks.len() != digest.row_ids.len() {
            return Err(bad("one mark per review row is required"));
        }
        let mut rows = Vec::new();
        for (id, mark) in digest.row_ids.iter().zip(marks) {
            let mut row = state.emitted_rows[id].clone();
            row.should_update = match mark.to_ascii_lowercase().as_str() {
                "yes" => ShouldUpdate::Yes,
                "no" => ShouldUpdate::No,
                other => return Err(bad(&format!("review mark {other:?}"))),
            };
            rows.push(row);
        }
        write_csv(&rows).map_err(|e| bad(&e.to_string()))
    }

    fn inbound(&mut self, i: usize, alias: &str, body: InboundBody, context_id: Option<MessageId>, at: Timestamp) -> Result<(), SimError> {
        let msg = InboundMessage {
            sender: self.actors[alias].address.clone(),
            message_id: format!("sim-{}", i + 1),
            timestamp: at,
            body,
            context_id,
        };
        let bytes = webhook_json(&msg);
        let value: serde_json::Value = serde_json::from_slice(&bytes).expect("webhook body is JSON");
        // A redelivered step is deduplicated by the service; log it once.
        if !self.transcript.iter().any(|t| t.direction == Direction::In && t.payload == value) {
            self.push(at, Direction::In, alias, value);
        }
        let parsed = parse_webhook(&bytes)?;
        self.svc.handle_inbound(&parsed, at)?;
        Ok(())
    }

    fn latest_out(
        &self,
        alias: &str,
        kind: &str,
        pred: impl Fn(&expertloop::channel::WirePayload) -> bool,
    ) -> Option<expertloop::channel::WirePayload> {
        self.transcript
            .iter()
            .rev()
            .filter(|t| t.actor == alias)
            .filter_map(TranscriptItem::wire)
            .find(|p| p.kind == kind && pred(p))
    }

    fn push(&mut self, at: Timestamp, direction: Direction, actor: &str, payload: serde_json::Value) {
        let seq = self.transcript.len() as u64 + 1;
        self.transcript.push(TranscriptItem::new(seq, at, direction, actor, payload));
    }

    fn drain(&mut self) -> Result<(), SimError> {
        for o in self.svc.drain_outbox() {
            for p in render_outbound(&o.message_id, &o.action)? {
                let back = parse_outbound(&p)?;
                if back != (o.message_id.clone(), o.action.clone()) {
                    return Err(SimError::RoundTrip(p.message_id.clone()));
                }
                let actor = self.by_address.get(&p.recipient).cloned().unwrap_or_else(|| p.recipient.clone());
                let value = serde_json::to_value(&p).expect("payload serializes");
                self.push(o.at, Direction::Out, &actor, value);
            }
        }
        Ok(())
    }
}
