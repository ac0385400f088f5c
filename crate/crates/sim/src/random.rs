//! Seeded random scripts for property runs.

use chrono::NaiveDate;
use expertloop::model::LanguageCode;
use expertloop::onboarding::{Demographics, OnboardingForm};
use expertloop::workflow::{NO_LABEL, REROUTE_TO_COORDINATOR, REROUTE_TO_DOCTOR, YES_LABEL};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::script::{Action, ProfileSpec, ScenarioScript, Step};

/// Seeker questions, medical and logistical.
pub const QUESTIONS: [&str; 10] = [
    "How many days after surgery can I wash my hair?",
    "Will I feel any pain during the cataract surgery?",
    "How long will the surgery take?",
    "When can I resume my daily activities after surgery?",
    "Can I watch television after the surgery?",
    "What are the risks associated with cataract surgery?",
    "How much does the surgery cost?",
    "What documents do I need for admission?",
    "Can I reschedule my appointment?",
    "Can I play cricket after the surgery?",
];

const EXPERTS: [&str; 4] = ["dr-rao", "co-devi", "dr-menon", "co-iyer"];
const CORRECTIONS: [&str; 3] = [
    "Avoid this for 2 wks.",
    "Pls ask at the front desk.",
    "Yes, but wear the shield.",
];

/// A script with one enrolled patient and `steps` random actions spread
/// over about two days.
pub fn random_script(seed: u64, steps: usize) -> ScenarioScript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(steps);
    let mut offset_s: u64 = 0;
    for _ in 0..steps {
        offset_s += rng.gen_range(0..4 * 3600);
        let at = Some(format!("{offset_s}s"));
        let roll = rng.gen_range(0..100);
        let step = if roll < 35 {
            Step {
                at,
                actor: Some("patient".into()),
                action: Action::SendText,
                payload: Some((*QUESTIONS.choose(&mut rng).expect("non-empty")).into()),
            }
        } else if roll < 75 {
            let label = *[YES_LABEL, NO_LABEL, REROUTE_TO_COORDINATOR, REROUTE_TO_DOCTOR]
                .choose(&mut rng)
                .expect("non-empty");
            Step {
                at,
                actor: Some((*EXPERTS.choose(&mut rng).expect("non-empty")).into()),
                action: Action::PressButton,
                payload: Some(label.into()),
            }
        } else if roll < 90 {
            Step {
                at,
                actor: Some((*EXPERTS.choose(&mut rng).expect("non-empty")).into()),
                action: Action::SubmitCorrectionText,
                payload: Some((*CORRECTIONS.choose(&mut rng).expect("non-empty")).into()),
            }
        } else {
            Step {
                at,
                actor: None,
                action: Action::AdvanceClock,
                payload: None,
            }
        };
        out.push(step);
    }
    ScenarioScript {
        name: format!("random-{seed}"),
        description: String::new(),
        start: "2024-03-04T09:00:00+05:30".into(),
        profiles: vec![ProfileSpec {
            patient: Some("patient".into()),
            attendant: None,
            form: OnboardingForm {
                patient_phone: Some("+919800000001".into()),
                attendant_phone: None,
                patient_language: LanguageCode::En,
                attendant_language: LanguageCode::En,
                operating_doctor_id: "dr-rao".into(),
                operating_coordinator_id: "co-devi".into(),
                surgery_date: NaiveDate::from_ymd_opt(2024, 3, 6).expect("valid date"),
                demographics: Demographics {
                    age: Some(rng.gen_range(40..90)),
                    gender: None,
                    education: None,
                },
            },
        }],
        steps: out,
        expectations: Vec::new(),
    }
}
