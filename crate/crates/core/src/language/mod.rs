//! Inbound normalisation to English and outbound localisation.
//!
//! Seekers write or speak in one of five languages; the model and the
//! experts work in English. Inbound text is translated to English, audio is
//! transcribed first. Outbound text is translated back and, for voice
//! conversations, synthesised to audio as well.

pub mod audio;
pub mod mock;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::model::{LanguageCode, Modality, UserProfile};
use crate::text::{char_len, truncate_at_sentence, MAX_MESSAGE_CHARS};
pub use audio::{AudioHandle, AudioStore, FsAudioStore, MemoryAudioStore};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LanguageError {
    #[error("transcription failed: {0}")]
    Transcription(String),
    #[error("translation failed: {0}")]
    Translation(String),
    #[error("speech synthesis failed: {0}")]
    Synthesis(String),
    #[error("audio store: {0}")]
    Store(String),
    #[error("empty message")]
    Empty,
}

pub trait SpeechToText: Send + Sync {
    fn transcribe(&self, audio: &[u8], language: LanguageCode) -> Result<String, LanguageError>;
}

pub trait TextToSpeech: Send + Sync {
    fn synthesize(&self, text: &str, language: LanguageCode) -> Result<Vec<u8>, LanguageError>;
}

pub trait Translator: Send + Sync {
    fn translate(&self, text: &str, from: LanguageCode, to: LanguageCode) -> Result<String, LanguageError>;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InboundPayload {
    Text(String),
    Audio(Vec<u8>),
    /// A tapped suggestion: the label as shown and its stored English text.
    Tap { shown: String, english: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedInbound {
    pub english_text: String,
    pub original_text: String,
    pub original_language: LanguageCode,
    pub original_modality: Modality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_ref: Option<AudioHandle>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Localized {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<AudioHandle>,
    /// True when translation failed and English was sent instead.
    #[serde(default)]
    pub fell_back: bool,
}

/// Appended to English text sent in place of a failed translation.
pub const TRANSLATION_APOLOGY: &str = "(Sorry, this message could not be translated into your language.)";

pub struct LanguageServices {
    stt: Arc<dyn SpeechToText>,
    tts: Arc<dyn TextToSpeech>,
    translator: Arc<dyn Translator>,
    audio: Arc<dyn AudioStore>,
}

impl LanguageServices {
    pub fn new(
        stt: Arc<dyn SpeechToText>,
        tts: Arc<dyn TextToSpeech>,
        translator: Arc<dyn Translator>,
        audio: Arc<dyn AudioStore>,
    ) -> Self {
        Self {
            stt,
            tts,
            translator,
            audio,
        }
    }

    pub fn audio_store(&self) -> &Arc<dyn AudioStore> {
        &self.audio
    }

    fn to_english(&self, text: &str, from: LanguageCode) -> Result<String, LanguageError> {
        if from == LanguageCode::En {
            return Ok(text.to_owned());
        }
        match self.translator.translate(text, from, LanguageCode::En) {
            Ok(t) => Ok(t),
            Err(first) => {
                tracing::warn!(error = %first, "retrying inbound translation");
                self.translator.translate(text, from, LanguageCode::En)
            }
        }
    }

    pub fn normalize_inbound(
        &self,
        sender: &UserProfile,
        payload: InboundPayload,
        now: Timestamp,
    ) -> Result<NormalizedInbound, LanguageError> {
        let lang = sender.language;
        let out = match payload {
            InboundPayload::Tap { shown, english } => NormalizedInbound {
                english_text: english,
                original_text: shown,
                original_language: lang,
                original_modality: Modality::Tap,
                audio_ref: None,
            },
            InboundPayload::Text(text) => {
                let text = text.trim().to_owned();
                if text.is_empty() {
                    return Err(LanguageError::Empty);
                }
                NormalizedInbound {
                    english_text: self.to_english(&text, lang)?,
                    original_text: text,
                    original_language: lang,
                    original_modality: Modality::Text,
                    audio_ref: None,
                }
            }
            InboundPayload::Audio(bytes) => {
                let handle = self.audio.put(&bytes, now)?;
                let transcript = self.stt.transcribe(&bytes, lang)?;
                let transcript = transcript.trim().to_owned();
                if transcript.is_empty() {
                    return Err(LanguageError::Transcription("empty transcript".into()));
                }
                NormalizedInbound {
                    english_text: self.to_english(&transcript, lang)?,
                    original_text: transcript,
                    original_language: lang,
                    original_modality: Modality::Audio,
                    audio_ref: Some(handle),
                }
            }
        };
        if out.english_text.trim().is_empty() {
            return Err(LanguageError::Translation("empty translation".into()));
        }
        Ok(out)
    }

    /// Translate English text for a recipient and optionally voice it. Never
    /// fails: translation problems fall back to English plus an apology and
    /// synthesis problems drop the audio.
    pub fn localize_outbound(&self, english_text: &str, target: LanguageCode, want_audio: bool, now: Timestamp) -> Localized {
        let (text, fell_back) = if target == LanguageCode::En {
            (english_text.to_owned(), false)
        } else {
            match self.translator.translate(english_text, LanguageCode::En, target) {
                Ok(t) => (truncate_at_sentence(&t, MAX_MESSAGE_CHARS), false),
                Err(e) => {
                    tracing::warn!(error = %e, ?target, "sending English fallback");
                    let budget = MAX_MESSAGE_CHARS - char_len(TRANSLATION_APOLOGY) - 2;
                    let body = truncate_at_sentence(english_text, budget);
                    (format!("{body}\n\n{TRANSLATION_APOLOGY}"), true)
                }
            }
        };
        let audio = if want_audio {
            match self
                .tts
                .synthesize(&text, target)
                .and_then(|bytes| self.audio.put(&bytes, now))
            {
                Ok(h) => Some(h),
                Err(e) => {
                    tracing::warn!(error = %e, "sending text without audio");
                    None
                }
            }
        } else {
            None
        };
        Localized { text, audio, fell_back }
    }

    /// Localise a short label (no audio, no apology line).
    pub fn localize_label(&self, english: &str, target: LanguageCode) -> String {
        if target == LanguageCode::En {
            return english.to_owned();
        }
        self.translator
            .translate(english, LanguageCode::En, target)
            .unwrap_or_else(|_| english.to_owned())
    }
}
