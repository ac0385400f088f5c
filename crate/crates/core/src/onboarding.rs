//! Seeker enrollment, language selection and seeker-facing reminders.

use chrono::{Duration, NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{self, LocalZone, Timestamp};
use crate::ids::UserId;
use crate::model::{access_end, LanguageCode, Role, UserProfile};

/// Typed by a seeker to open the language menu.
pub const LANGUAGE_MENU_TRIGGER: &str = "Change language";

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    #[serde(default)]
    pub age: Option<u32>,
    #[serde(default)]
    pub gender: Option<String>,
    #[serde(default)]
    pub education: Option<String>,
}

impl Demographics {
    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if let Some(a) = self.age {
            parts.push(format!("age {a}"));
        }
        if let Some(g) = self.gender.as_deref().filter(|g| !g.trim().is_empty()) {
            parts.push(g.trim().to_owned());
        }
        if let Some(e) = self.education.as_deref().filter(|e| !e.trim().is_empty()) {
            parts.push(format!("education: {}", e.trim()));
        }
        if parts.is_empty() {
            "not recorded".to_owned()
        } else {
            parts.join(", ")
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnboardingForm {
    #[serde(default)]
    pub patient_phone: Option<String>,
    #[serde(default)]
    pub attendant_phone: Option<String>,
    #[serde(default = "english")]
    pub patient_language: LanguageCode,
    #[serde(default = "english")]
    pub attendant_language: LanguageCode,
    pub operating_doctor_id: UserId,
    pub operating_coordinator_id: UserId,
    pub surgery_date: NaiveDate,
    #[serde(default)]
    pub demographics: Demographics,
}

fn english() -> LanguageCode {
    LanguageCode::En
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OnboardingError {
    #[error("invalid form: {0}")]
    InvalidForm(String),
    #[error("{0} is already enrolled")]
    DuplicateEnrollment(String),
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("experts use English only")]
    ExpertLanguage,
    #[error("access for {0} has ended")]
    Inactive(UserId),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnboardingConfig {
    /// Latest accepted surgery date, in days after enrollment.
    pub horizon_days: i64,
    #[serde(with = "clock::serde_times")]
    pub reminder_times: Vec<NaiveTime>,
    pub starter_faqs: Vec<String>,
}

impl Default for OnboardingConfig {
    fn default() -> Self {
        let t = |h, m| NaiveTime::from_hms_opt(h, m, 0).expect("valid time");
        Self {
            horizon_days: 14,
            reminder_times: vec![t(7, 30), t(16, 0)],
            starter_faqs: vec![
                "How long will the surgery take?".into(),
                "Will I feel any pain during the cataract surgery?".into(),
                "When can I resume my daily activities after surgery?".into(),
            ],
        }
    }
}

fn normalize_phone(p: &Option<String>) -> Option<String> {
    p.as_deref().map(str::trim).filter(|p| !p.is_empty()).map(str::to_owned)
}

impl OnboardingForm {
    /// Channel addresses to enroll, patient first.
    pub fn phones(&self) -> Vec<(Role, String, LanguageCode)> {
        let mut out = Vec::new();
        if let Some(p) = normalize_phone(&self.patient_phone) {
            out.push((Role::Patient, p, self.patient_language));
        }
        if let Some(p) = normalize_phone(&self.attendant_phone) {
            out.push((Role::Attendant, p, self.attendant_language));
        }
        out
    }

    /// Structural checks. `expert_role` reports the role of a configured
    /// expert id, if any.
    pub fn validate(
        &self,
        now: Timestamp,
        zone: &LocalZone,
        cfg: &OnboardingConfig,
        expert_role: impl Fn(&UserId) -> Option<Role>,
    ) -> Result<(), OnboardingError> {
        let invalid = |m: String| Err(OnboardingError::InvalidForm(m));
        let phones = self.phones();
        if phones.is_empty() {
            return invalid("at least one phone number is required".into());
        }
        if phones.len() == 2 && phones[0].1 == phones[1].1 {
            return invalid("patient and attendant phones must differ".into());
        }
        if expert_role(&self.operating_doctor_id) != Some(Role::OperatingDoctor) {
            return invalid(format!("{} is not an operating doctor", self.operating_doctor_id));
        }
        if expert_role(&self.operating_coordinator_id) != Some(Role::OperatingCoordinator) {
            return invalid(format!("{} is not an operating coordinator", self.operating_coordinator_id));
        }
        let today = zone.local_date(now);
        if self.surgery_date > today + Duration::days(cfg.horizon_days) {
            return invalid(format!(
                "surgery date {} is more than {} days ahead",
                self.surgery_date, cfg.horizon_days
            ));
        }
        if access_end(zone, self.surgery_date) <= now {
            return invalid(format!("access for surgery on {} has already ended", self.surgery_date));
        }
        Ok(())
    }

    pub fn profiles(&self, ids: &[UserId], zone: &LocalZone) -> Vec<UserProfile> {
        let demo = self.demographics.describe();
        self.phones()
            .into_iter()
            .zip(ids)
            .map(|((role, phone, language), id)| UserProfile {
                user_id: id.clone(),
                role,
                language,
                channel_address: phone,
                display_demographics: match role {
                    Role::Patient => format!("patient, {demo}"),
                    _ => format!("attendant of patient, {demo}"),
                },
                surgery_date: Some(self.surgery_date),
                operating_doctor_id: Some(self.operating_doctor_id.clone()),
                operating_coordinator_id: Some(self.operating_coordinator_id.clone()),
                active_until: Some(access_end(zone, self.surgery_date)),
            })
            .collect()
    }
}

/// Numbered language menu lines, one per supported language.
pub fn language_menu_options() -> String {
    LanguageCode::ALL
        .iter()
        .enumerate()
        .map(|(i, l)| format!("{}. {}", i + 1, l.endonym()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parse a reply to the language menu: a digit 1 to 5, optionally followed
/// by a full stop.
pub fn parse_language_choice(reply: &str) -> Option<LanguageCode> {
    let r = reply.trim().trim_end_matches('.');
    let n: usize = r.parse().ok()?;
    LanguageCode::ALL.get(n.checked_sub(1)?).copied()
}

pub fn is_language_trigger(text: &str) -> bool {
    text.trim().trim_end_matches(['.', '!']).eq_ignore_ascii_case(LANGUAGE_MENU_TRIGGER)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn form() -> OnboardingForm {
        OnboardingForm {
            patient_phone: Some("+91100".into()),
            attendant_phone: Some("+91101".into()),
            patient_language: LanguageCode::Hi,
            attendant_language: LanguageCode::En,
            operating_doctor_id: "dr-rao".into(),
            operating_coordinator_id: "co-devi".into(),
            surgery_date: NaiveDate::from_ymd_opt(2024, 3, 6).unwrap(),
            demographics: Demographics {
                age: Some(64),
                gender: Some("female".into()),
                education: Some("primary".into()),
            },
        }
    }

    fn roles(id: &UserId) -> Option<Role> {
        match id.as_str() {
            "dr-rao" => Some(Role::OperatingDoctor),
            "co-devi" => Some(Role::OperatingCoordinator),
            _ => None,
        }
    }

    fn now() -> Timestamp {
        Utc.with_ymd_and_hms(2024, 3, 4, 4, 0, 0).unwrap()
    }

    #[test]
    fn full_form_gives_two_profiles() {
        let zone = LocalZone::parse("+05:30").unwrap();
        let f = form();
        f.validate(now(), &zone, &OnboardingConfig::default(), roles).unwrap();
        let p = f.profiles(&["u1".into(), "u2".into()], &zone);
        assert_eq!(p.len(), 2);
        assert_eq!((p[0].role, p[0].language), (Role::Patient, LanguageCode::Hi));
        assert_eq!((p[1].role, p[1].language), (Role::Attendant, LanguageCode::En));
        // local midnight on 2024-03-13 in +05:30
        assert_eq!(p[0].active_until.unwrap().to_rfc3339(), "2024-03-12T18:30:00+00:00");
    }

    #[test]
    fn patient_only_form() {
        let mut f = form();
        f.attendant_phone = None;
        assert_eq!(f.profiles(&["u1".into(), "u2".into()], &LocalZone::utc()).len(), 1);
    }

    #[test]
    fn invalid_forms() {
        let zone = LocalZone::utc();
        let cfg = OnboardingConfig::default();
        let mut f = form();
        f.patient_phone = None;
        f.attendant_phone = Some(" ".into());
        assert!(f.validate(now(), &zone, &cfg, roles).is_err());
        let mut f = form();
        f.surgery_date = NaiveDate::from_ymd_opt(2024, 3, 19).unwrap();
        assert!(f.validate(now(), &zone, &cfg, roles).is_err());
        let mut f = form();
        f.operating_doctor_id = "co-devi".into();
        assert!(f.validate(now(), &zone, &cfg, roles).is_err());
    }

    #[test]
    fn language_choices() {
        assert_eq!(parse_language_choice("2"), Some(LanguageCode::Hi));
        assert_eq!(parse_language_choice(" 5. "), Some(LanguageCode::Te));
        assert_eq!(parse_language_choice("0"), None);
        assert_eq!(parse_language_choice("6"), None);
        assert_eq!(parse_language_choice("two"), None);
        assert!(is_language_trigger("change language"));
        assert!(language_menu_options().starts_with("1. English\n2. हिन्दी"));
    }
}
