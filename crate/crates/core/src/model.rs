//! Shared domain types.

use std::fmt;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::ids::{AnswerId, QueryId, UserId};

/// Exact fallback answer used when the knowledge base cannot answer.
pub const UNKNOWN_ANSWER: &str = "I do not know the answer to your question. If this needs to be answered by a doctor, please schedule a consultation.";

/// Seekers lose access this long after their surgery date.
pub const SEEKER_ACCESS_DAYS: i64 = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LanguageCode {
    #[serde(rename = "EN", alias = "en")]
    En,
    #[serde(rename = "HI", alias = "hi")]
    Hi,
    #[serde(rename = "KN", alias = "kn")]
    Kn,
    #[serde(rename = "TA", alias = "ta")]
    Ta,
    #[serde(rename = "TE", alias = "te")]
    Te,
}

impl LanguageCode {
    pub const ALL: [LanguageCode; 5] = [Self::En, Self::Hi, Self::Kn, Self::Ta, Self::Te];

    pub fn code(self) -> &'static str {
        match self {
            Self::En => "EN",
            Self::Hi => "HI",
            Self::Kn => "KN",
            Self::Ta => "TA",
            Self::Te => "TE",
        }
    }

    /// The language's own name, used in the language menu.
    pub fn endonym(self) -> &'static str {
        match self {
            Self::En => "English",
            Self::Hi => "हिन्दी",
            Self::Kn => "ಕನ್ನಡ",
            Self::Ta => "தமிழ்",
            Self::Te => "తెలుగు",
        }
    }
}

impl fmt::Display for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unsupported language {0:?}")]
pub struct UnsupportedLanguage(pub String);

impl FromStr for LanguageCode {
    type Err = UnsupportedLanguage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "en" | "english" => Ok(Self::En),
            "hi" | "hindi" => Ok(Self::Hi),
            "kn" | "kannada" => Ok(Self::Kn),
            "ta" | "tamil" => Ok(Self::Ta),
            "te" | "telugu" => Ok(Self::Te),
            _ => Err(UnsupportedLanguage(s.to_owned())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Patient,
    Attendant,
    OperatingDoctor,
    EscalationDoctor,
    OperatingCoordinator,
    EscalationCoordinator,
    KnowledgeBaseExpert,
}

impl Role {
    pub fn is_seeker(self) -> bool {
        matches!(self, Self::Patient | Self::Attendant)
    }

    pub fn is_expert(self) -> bool {
        !self.is_seeker()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: UserId,
    pub role: Role,
    pub language: LanguageCode,
    pub channel_address: String,
    #[serde(default)]
    pub display_demographics: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surgery_date: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operating_doctor_id: Option<UserId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operating_coordinator_id: Option<UserId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_until: Option<Timestamp>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProfileError {
    #[error("seeker {0} is missing {1}")]
    SeekerIncomplete(UserId, &'static str),
    #[error("seeker {0} must be active until its surgery date plus {SEEKER_ACCESS_DAYS} days")]
    AccessWindow(UserId),
    #[error("expert {0} must use English")]
    ExpertLanguage(UserId),
}

impl UserProfile {
    /// Check the role-dependent invariants. `access_end` maps a surgery
    /// date to the instant access ends (it depends on the local zone).
    pub fn validate(&self, access_end: impl Fn(NaiveDate) -> Timestamp) -> Result<(), ProfileError> {
        if self.role.is_seeker() {
            let id = || self.user_id.clone();
            let date = self
                .surgery_date
                .ok_or_else(|| ProfileError::SeekerIncomplete(id(), "surgery_date"))?;
            if self.operating_doctor_id.is_none() {
                return Err(ProfileError::SeekerIncomplete(id(), "operating_doctor_id"));
            }
            if self.operating_coordinator_id.is_none() {
                return Err(ProfileError::SeekerIncomplete(id(), "operating_coordinator_id"));
            }
            if self.active_until != Some(access_end(date)) {
                return Err(ProfileError::AccessWindow(id()));
            }
        } else if self.language != LanguageCode::En {
            return Err(ProfileError::ExpertLanguage(self.user_id.clone()));
        }
        Ok(())
    }

    pub fn is_active(&self, now: Timestamp) -> bool {
        match self.active_until {
            Some(until) => now < until,
            None => true,
        }
    }
}

/// Seeker access ends at local midnight starting the seventh day after
/// surgery.
pub fn access_end(zone: &crate::clock::LocalZone, surgery_date: NaiveDate) -> Timestamp {
    zone.at(surgery_date + Duration::days(SEEKER_ACCESS_DAYS), chrono::NaiveTime::MIN)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    Text,
    Audio,
    Tap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryType {
    Medical,
    Logistical,
    SmallTalk,
    Other,
}

impl QueryType {
    pub fn needs_verification(self) -> bool {
        matches!(self, Self::Medical | Self::Logistical)
    }

    /// Parse the classifier label emitted by the answering prompt.
    /// Anything unrecognised is `Other`.
    pub fn from_label(label: &str) -> Self {
        let norm: String = label
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphabetic())
            .collect();
        match norm.as_str() {
            "medical" => Self::Medical,
            "logistical" | "logistic" | "logistics" => Self::Logistical,
            "smalltalk" => Self::SmallTalk,
            _ => Self::Other,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Medical => "medical",
            Self::Logistical => "logistical",
            Self::SmallTalk => "small-talk",
            Self::Other => "other",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: QueryId,
    pub seeker_id: UserId,
    pub original_text: String,
    pub original_modality: Modality,
    pub english_text: String,
    pub query_type: QueryType,
    pub asked_at: Timestamp,
    /// Groups every message of one seeker.
    pub conversation_id: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnswerStatus {
    Unverified,
    Verified,
    MarkedIncorrect,
    Corrected,
}

impl AnswerStatus {
    pub fn can_transition(self, to: AnswerStatus) -> bool {
        use AnswerStatus::*;
        matches!(
            (self, to),
            (Unverified, Verified) | (Unverified, MarkedIncorrect) | (MarkedIncorrect, Corrected)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Self::Verified | Self::Corrected)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IconState {
    QuestionMark,
    GreenTick,
    RedCross,
}

impl IconState {
    pub fn glyph(self) -> &'static str {
        match self {
            Self::QuestionMark => "❓",
            Self::GreenTick => "✅",
            Self::RedCross => "❌",
        }
    }

    pub fn from_glyph(g: &str) -> Option<Self> {
        match g {
            "❓" => Some(Self::QuestionMark),
            "✅" => Some(Self::GreenTick),
            "❌" => Some(Self::RedCross),
            _ => None,
        }
    }
}

pub fn icon_for(status: AnswerStatus) -> IconState {
    match status {
        AnswerStatus::Unverified => IconState::QuestionMark,
        AnswerStatus::Verified | AnswerStatus::Corrected => IconState::GreenTick,
        AnswerStatus::MarkedIncorrect => IconState::RedCross,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BotAnswer {
    pub answer_id: AnswerId,
    pub query_id: QueryId,
    pub english_answer: String,
    pub citations: Vec<String>,
    pub is_unknown: bool,
    pub status: AnswerStatus,
    pub related_questions: Vec<String>,
}
