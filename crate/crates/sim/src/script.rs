//! Scenario scripts. The schema is pinned in `scenarios/schema.yaml`.

use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use expertloop::clock::Timestamp;
use expertloop::onboarding::OnboardingForm;
use serde::{Deserialize, Serialize};

use crate::SimError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// RFC 3339 instant at which the service starts and profiles enroll.
    pub start: String,
    #[serde(default)]
    pub profiles: Vec<ProfileSpec>,
    #[serde(default)]
    pub steps: Vec<Step>,
    #[serde(default)]
    pub expectations: Vec<Expectation>,
}

/// One onboarding form and the aliases its seekers go by in the script.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub patient: Option<String>,
    #[serde(default)]
    pub attendant: Option<String>,
    pub form: OnboardingForm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    SendText,
    SendAudioFixture,
    TapSuggestion,
    PressButton,
    SubmitCorrectionText,
    AdvanceClock,
    SetLanguage,
    /// The knowledge-base expert returns the latest review sheet.
    SubmitReview,
    /// Drop the service and reopen it from its log.
    Restart,
}

impl Action {
    pub const ALL: [Action; 9] = [
        Action::SendText,
        Action::SendAudioFixture,
        Action::TapSuggestion,
        Action::PressButton,
        Action::SubmitCorrectionText,
        Action::AdvanceClock,
        Action::SetLanguage,
        Action::SubmitReview,
        Action::Restart,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    /// Offset from `start` ("20m", "3h 1s") or an RFC 3339 instant.
    /// Defaults to the previous step's time.
    #[serde(default)]
    pub at: Option<String>,
    #[serde(default)]
    pub actor: Option<String>,
    pub action: Action,
    #[serde(default)]
    pub payload: Option<serde_yaml::Value>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageMatch {
    pub to: String,
    #[serde(default)]
    pub kind: Option<String>,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub contains: Option<String>,
    #[serde(default)]
    pub header: Option<String>,
    #[serde(default)]
    pub glyph: Option<String>,
    /// Exact number of matching messages anywhere in the transcript.
    /// Without it the expectation is matched in order with the others.
    #[serde(default)]
    pub count: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionMatch {
    pub to: String,
    #[serde(default)]
    pub on_text: Option<String>,
    #[serde(default)]
    pub on_contains: Option<String>,
    /// Glyph finally shown on the last matching message.
    pub glyph: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventMatch {
    pub kind: String,
    /// For TaskTransition: the target state.
    #[serde(default)]
    pub to: Option<String>,
    /// For SchedulerFired: the job.
    #[serde(default)]
    pub job: Option<String>,
    /// Exact count; at least one when absent.
    #[serde(default)]
    pub count: Option<usize>,
}

/// Written in scripts as a one-key map: `message:`, `reaction:` or `event:`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExpectationWire", into = "ExpectationWire")]
pub enum Expectation {
    Message(MessageMatch),
    Reaction(ReactionMatch),
    Event(EventMatch),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpectationWire {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    message: Option<MessageMatch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reaction: Option<ReactionMatch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    event: Option<EventMatch>,
}

impl TryFrom<ExpectationWire> for Expectation {
    type Error = String;

    fn try_from(w: ExpectationWire) -> Result<Self, String> {
        match (w.message, w.reaction, w.event) {
            (Some(m), None, None) => Ok(Self::Message(m)),
            (None, Some(r), None) => Ok(Self::Reaction(r)),
            (None, None, Some(e)) => Ok(Self::Event(e)),
            _ => Err("an expectation has exactly one of message, reaction, event".into()),
        }
    }
}

impl From<Expectation> for ExpectationWire {
    fn from(e: Expectation) -> Self {
        match e {
            Expectation::Message(m) => Self {
                message: Some(m),
                ..Self::default()
            },
            Expectation::Reaction(r) => Self {
                reaction: Some(r),
                ..Self::default()
            },
            Expectation::Event(e) => Self {
                event: Some(e),
                ..Self::default()
            },
        }
    }
}

impl ScenarioScript {
    pub fn from_yaml(text: &str) -> Result<Self, SimError> {
        serde_yaml::from_str(text).map_err(|e| SimError::Script(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Script(format!("{}: {e}", path.display())))?;
        Self::from_yaml(&text)
    }

    pub fn start_time(&self) -> Result<Timestamp, SimError> {
        DateTime::parse_from_rfc3339(&self.start)
            .map(|t| t.with_timezone(&Utc))
            .map_err(|e| SimError::Script(format!("start: {e}")))
    }

    /// Absolute time of every step, checked to be non-decreasing.
    pub fn step_times(&self) -> Result<Vec<Timestamp>, SimError> {
        let start = self.start_time()?;
        let mut prev = start;
        let mut out = Vec::with_capacity(self.steps.len());
        for (i, step) in self.steps.iter().enumerate() {
            let mut at = match &step.at {
                None => prev,
                Some(s) => parse_at(s, start).map_err(|e| SimError::Script(format!("step {}: {e}", i + 1)))?,
            };
            if step.action == Action::AdvanceClock {
                if let Some(by) = step.payload.as_ref().and_then(|p| p.as_str()) {
                    let d = humantime::parse_duration(by).map_err(|e| SimError::Script(format!("step {}: {e}", i + 1)))?;
                    at += Duration::from_std(d).map_err(|e| SimError::Script(e.to_string()))?;
                }
            }
            if at < prev {
                return Err(SimError::Script(format!("step {} goes back in time", i + 1)));
            }
            prev = at;
            out.push(at);
        }
        Ok(out)
    }
}

fn parse_at(s: &str, start: Timestamp) -> Result<Timestamp, String> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    let d = humantime::parse_duration(s).map_err(|e| format!("bad time {s:?}: {e}"))?;
    Ok(start + Duration::from_std(d).map_err(|e| e.to_string())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn times_are_offsets_or_instants() {
        let s = ScenarioScript::from_yaml(
            r#"
name: t
start: "2024-03-04T09:00:00+05:30"
steps:
  - {at: 20m, actor: x, action: send_text, payload: hi}
  - {action: advance_clock, payload: 3h}
  - {at: "2024-03-04T10:00:00Z", action: advance_clock}
"#,
        )
        .unwrap();
        let t = s.step_times().unwrap();
        assert_eq!(t[0].to_rfc3339(), "2024-03-04T03:50:00+00:00");
        assert_eq!(t[1].to_rfc3339(), "2024-03-04T06:50:00+00:00");
        assert_eq!(t[2].to_rfc3339(), "2024-03-04T10:00:00+00:00");
    }

    #[test]
    fn backwards_steps_rejected() {
        let s = ScenarioScript::from_yaml(
            r#"
name: t
start: "2024-03-04T09:00:00+05:30"
steps:
  - {at: 2h, action: advance_clock}
  - {at: 1h, action: advance_clock}
"#,
        )
        .unwrap();
        assert!(matches!(s.step_times(), Err(SimError::Script(_))));
    }
}
