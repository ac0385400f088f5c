//! Fixed message texts. Seeker-facing texts are English here and are
//! localized on dispatch; expert-facing texts are sent as is.

use crate::onboarding::LANGUAGE_MENU_TRIGGER;
use crate::workflow::Track;

pub fn verified(track: Track) -> &'static str {
    match track {
        Track::Doctor => "This answer has been verified by your doctor.",
        Track::Coordinator => "This answer has been verified by your patient coordinator.",
    }
}

pub const AWAIT_CORRECTION: &str = "Your expert is preparing a corrected answer. Please await the corrected response.";
pub const ACCESS_ENDED: &str = "Your access to this service has ended. Please contact the hospital for any further questions.";
pub const TRY_AGAIN: &str = "Sorry, something went wrong while answering. Please try again in a few minutes.";
pub const NOT_UNDERSTOOD: &str = "Sorry, we could not understand your message. Please try typing your question.";
pub const SEEKER_REMINDER: &str = "Hello! You can ask any cataract surgery related questions here, at any time.";
pub const LANGUAGE_MENU_HEADER: &str = "Reply with the number of your preferred language:";
pub const LANGUAGE_CHANGED: &str = "Your language has been updated.";
pub const CORRECTION_REQUEST: &str = "Please reply with the correct answer in your own words.";
pub const NO_SUGGESTIONS: &str = "That suggestion list is no longer available. Please type your question.";
pub const DIGEST_HEADER: &str = "Questions waiting for your verification:";

pub fn welcome() -> String {
    format!(
        "Welcome! Ask any question about your cataract surgery by text or voice message. \
         To choose another language, send \"{LANGUAGE_MENU_TRIGGER}\"."
    )
}

pub fn expert_reminder(question: &str) -> String {
    format!("Reminder: this question is still waiting for verification.\n\nQuestion: {question}")
}

pub const REJECT_ALREADY_DECIDED: &str = "This question has already been handled.";
pub const REJECT_PENDING_ELSEWHERE: &str = "Another expert is correcting this answer.";
pub const REJECT_NOT_ASSIGNED: &str = "You cannot act on this question.";
pub const REJECT_NO_CORRECTION: &str = "There is no answer waiting for your correction.";
pub const REJECT_REROUTE_DISABLED: &str = "This question cannot be sent to a doctor.";
pub const REJECT_UNKNOWN_OPTION: &str = "That option is not available for this question.";
