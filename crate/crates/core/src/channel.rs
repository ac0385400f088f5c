//! Wire codec for the messaging channel.
//!
//! The channel speaks a small JSON envelope modelled on chat-app webhooks.
//! Inbound messages arrive as
//!
//! ```json
//! {"sender":"+911234","message_id":"wamid-1","timestamp":"2024-03-04T09:00:00Z",
//!  "kind":"text","text":"How long will the surgery take?"}
//! ```
//!
//! with `kind` one of `text`, `audio` (`audio_b64`), `button`
//! (`button_label`) or `suggestion` (`suggestion_index`, 1 to 3). An
//! optional `context_id` names the menu or list being answered. Outbound
//! payloads carry `recipient`, `message_id` and `kind`, one of `text`,
//! `audio`, `reaction`, `tagged_reply`, `buttons` or `suggestions`.

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::ids::MessageId;
use crate::language::AudioHandle;
use crate::model::IconState;
use crate::text::{char_len, MAX_MESSAGE_CHARS, MAX_SUGGESTION_CHARS};
use crate::workflow::{YES_LABEL, NO_LABEL, REROUTE_TO_COORDINATOR, REROUTE_TO_DOCTOR};

pub const SUGGESTION_COUNT: usize = 3;
pub const NEXT_STEPS_HEADER: &str = "What to do next?";
pub const FAQ_HEADER: &str = "Frequently asked questions";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChannelError {
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("body has {0} characters, limit is 700")]
    OversizeBody(usize),
    #[error("invalid action: {0}")]
    InvalidAction(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum OutboundAction {
    SendText {
        recipient: String,
        text: String,
    },
    SendAudio {
        recipient: String,
        audio: AudioHandle,
    },
    SetReaction {
        recipient: String,
        target_message_id: MessageId,
        icon: IconState,
    },
    TaggedReply {
        recipient: String,
        target_message_id: MessageId,
        text: String,
    },
    ButtonMenu {
        recipient: String,
        text: String,
        buttons: Vec<String>,
    },
    SuggestionList {
        recipient: String,
        header: String,
        suggestions: Vec<String>,
    },
}

impl OutboundAction {
    pub fn recipient(&self) -> &str {
        match self {
            Self::SendText { recipient, .. }
            | Self::SendAudio { recipient, .. }
            | Self::SetReaction { recipient, .. }
            | Self::TaggedReply { recipient, .. }
            | Self::ButtonMenu { recipient, .. }
            | Self::SuggestionList { recipient, .. } => recipient,
        }
    }

    /// Visible text of the action, if any.
    pub fn text(&self) -> Option<&str> {
        match self {
            Self::SendText { text, .. } | Self::TaggedReply { text, .. } | Self::ButtonMenu { text, .. } => Some(text),
            Self::SuggestionList { header, .. } => Some(header),
            Self::SendAudio { .. } | Self::SetReaction { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if let Some(text) = self.text() {
            let n = char_len(text);
            if n > MAX_MESSAGE_CHARS {
                return Err(ChannelError::OversizeBody(n));
            }
        }
        match self {
            Self::ButtonMenu { buttons, .. } => {
                let legal = buttons.len() == 3
                    && buttons[0] == YES_LABEL
                    && buttons[1] == NO_LABEL
                    && (buttons[2] == REROUTE_TO_COORDINATOR || buttons[2] == REROUTE_TO_DOCTOR);
                if !legal {
                    return Err(ChannelError::InvalidAction(format!("illegal buttons {buttons:?}")));
                }
            }
            Self::SuggestionList { suggestions, .. } => {
                if suggestions.len() != SUGGESTION_COUNT {
                    return Err(ChannelError::InvalidAction(format!(
                        "{} suggestions, expected {SUGGESTION_COUNT}",
                        suggestions.len()
                    )));
                }
                if let Some(s) = suggestions.iter().find(|s| char_len(s) > MAX_SUGGESTION_CHARS) {
                    return Err(ChannelError::InvalidAction(format!("suggestion longer than 72 characters: {s:?}")));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// One outbound JSON payload.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WirePayload {
    pub recipient: String,
    pub message_id: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_handle: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_message_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub glyph: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub header: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buttons: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggestions: Option<Vec<String>>,
}

pub fn render_outbound(message_id: &MessageId, action: &OutboundAction) -> Result<Vec<WirePayload>, ChannelError> {
    action.validate()?;
    let mut p = WirePayload {
        recipient: action.recipient().to_owned(),
        message_id: message_id.to_string(),
        ..WirePayload::default()
    };
    match action {
        OutboundAction::SendText { text, .. } => {
            p.kind = "text".into();
            p.text = Some(text.clone());
        }
        OutboundAction::SendAudio { audio, .. } => {
            p.kind = "audio".into();
            p.audio_handle = Some(audio.0.clone());
        }
        OutboundAction::SetReaction {
            target_message_id, icon, ..
        } => {
            p.kind = "reaction".into();
            p.target_message_id = Some(target_message_id.to_string());
            p.glyph = Some(icon.glyph().to_owned());
        }
        OutboundAction::TaggedReply {
            target_message_id, text, ..
        } => {
            p.kind = "tagged_reply".into();
            p.target_message_id = Some(target_message_id.to_string());
            p.text = Some(text.clone());
        }
        OutboundAction::ButtonMenu { text, buttons, .. } => {
            p.kind = "buttons".into();
            p.text = Some(text.clone());
            p.buttons = Some(buttons.clone());
        }
        OutboundAction::SuggestionList { header, suggestions, .. } => {
            p.kind = "suggestions".into();
            p.header = Some(header.clone());
            p.suggestions = Some(suggestions.clone());
        }
    }
    Ok(vec![p])
}

/// Client-side decoding of an outbound payload, as the simulator and a
/// console would see it.
pub fn parse_outbound(p: &WirePayload) -> Result<(MessageId, OutboundAction), ChannelError> {
    fn need<T: Clone>(v: &Option<T>, field: &str) -> Result<T, ChannelError> {
        v.clone()
            .ok_or_else(|| ChannelError::SchemaViolation(format!("missing {field}")))
    }
    let recipient = p.recipient.clone();
    let action = match p.kind.as_str() {
        "text" => OutboundAction::SendText {
            recipient,
            text: need(&p.text, "text")?,
        },
        "audio" => OutboundAction::SendAudio {
            recipient,
            audio: AudioHandle(need(&p.audio_handle, "audio_handle")?),
        },
        "reaction" => {
            let glyph = need(&p.glyph, "glyph")?;
            OutboundAction::SetReaction {
                recipient,
                target_message_id: MessageId::new(need(&p.target_message_id, "target_message_id")?),
                icon: IconState::from_glyph(&glyph)
                    .ok_or_else(|| ChannelError::SchemaViolation(format!("unknown glyph {glyph:?}")))?,
            }
        }
        "tagged_reply" => OutboundAction::TaggedReply {
            recipient,
            target_message_id: MessageId::new(need(&p.target_message_id, "target_message_id")?),
            text: need(&p.text, "text")?,
        },
        "buttons" => OutboundAction::ButtonMenu {
            recipient,
            text: need(&p.text, "text")?,
            buttons: need(&p.buttons, "buttons")?,
        },
        "suggestions" => OutboundAction::SuggestionList {
            recipient,
            header: need(&p.header, "header")?,
            suggestions: need(&p.suggestions, "suggestions")?,
        },
        other => return Err(ChannelError::SchemaViolation(format!("unknown kind {other:?}"))),
    };
    Ok((MessageId::new(p.message_id.clone()), action))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InboundBody {
    Text(String),
    Audio(Vec<u8>),
    ButtonPress(String),
    /// 1-based index into the suggestion list.
    SuggestionPick(u8),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InboundMessage {
    pub sender: String,
    pub message_id: String,
    pub timestamp: Timestamp,
    pub body: InboundBody,
    /// Message id of the menu or list this message answers, if known.
    pub context_id: Option<MessageId>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct WireInbound {
    #[serde(default)]
    sender: Option<String>,
    #[serde(default)]
    message_id: Option<String>,
    #[serde(default)]
    timestamp: Option<String>,
    #[serde(default)]
    kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    audio_b64: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    button_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    suggestion_index: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    context_id: Option<String>,
}

pub fn parse_webhook(payload: &[u8]) -> Result<InboundMessage, ChannelError> {
    let bad = |m: String| ChannelError::SchemaViolation(m);
    let w: WireInbound = serde_json::from_slice(payload).map_err(|e| bad(e.to_string()))?;
    let nonempty = |v: Option<String>, f: &str| v.filter(|s| !s.trim().is_empty()).ok_or_else(|| bad(format!("missing {f}")));
    let sender = nonempty(w.sender, "sender")?;
    let message_id = nonempty(w.message_id, "message_id")?;
    let ts = nonempty(w.timestamp, "timestamp")?;
    let timestamp = chrono::DateTime::parse_from_rfc3339(&ts)
        .map_err(|e| bad(format!("timestamp: {e}")))?
        .with_timezone(&chrono::Utc);
    let body = match nonempty(w.kind, "kind")?.as_str() {
        "text" => InboundBody::Text(nonempty(w.text, "text")?),
        "audio" => {
            let b64 = nonempty(w.audio_b64, "audio_b64")?;
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(b64.trim())
                .map_err(|e| bad(format!("audio_b64: {e}")))?;
            InboundBody::Audio(bytes)
        }
        "button" => {
            let label = nonempty(w.button_label, "button_label")?;
            if ![YES_LABEL, NO_LABEL, REROUTE_TO_COORDINATOR, REROUTE_TO_DOCTOR].contains(&label.as_str()) {
                return Err(bad(format!("unknown button label {label:?}")));
            }
            InboundBody::ButtonPress(label)
        }
        "suggestion" => match w.suggestion_index {
            Some(i @ 1..=3) => InboundBody::SuggestionPick(i as u8),
            Some(i) => return Err(bad(format!("suggestion_index {i} out of range"))),
            None => return Err(bad("missing suggestion_index".into())),
        },
        other => return Err(bad(format!("unknown kind {other:?}"))),
    };
    Ok(InboundMessage {
        sender,
        message_id,
        timestamp,
        body,
        context_id: w.context_id.filter(|s| !s.is_empty()).map(MessageId::new),
    })
}

/// Encode an inbound message as a webhook body; the inverse of
/// [`parse_webhook`].
pub fn webhook_json(m: &InboundMessage) -> Vec<u8> {
    let mut w = WireInbound {
        sender: Some(m.sender.clone()),
        message_id: Some(m.message_id.clone()),
        timestamp: Some(m.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
        context_id: m.context_id.as_ref().map(|c| c.to_string()),
        ..WireInbound::default()
    };
    match &m.body {
        InboundBody::Text(t) => {
            w.kind = Some("text".into());
            w.text = Some(t.clone());
        }
        InboundBody::Audio(b) => {
            w.kind = Some("audio".into());
            w.audio_b64 = Some(base64::engine::general_purpose::STANDARD.encode(b));
        }
        InboundBody::ButtonPress(l) => {
            w.kind = Some("button".into());
            w.button_label = Some(l.clone());
        }
        InboundBody::SuggestionPick(i) => {
            w.kind = Some("suggestion".into());
            w.suggestion_index = Some(i64::from(*i));
        }
    }
    serde_json::to_vec(&w).expect("inbound serializes")
}
