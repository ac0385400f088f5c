//! Dictionary-backed language providers for tests and simulation.
//!
//! Phrase files are tab-separated `LANG<TAB>english<TAB>translation` lines;
//! audio fixture files are `name<TAB>LANG<TAB>transcript` lines, where the
//! audio bytes of a fixture are its name.

use std::collections::BTreeMap;

use super::{LanguageError, SpeechToText, TextToSpeech, Translator};
use crate::model::LanguageCode;

fn tsv_rows(src: &str, cols: usize) -> Result<Vec<Vec<&str>>, String> {
    src.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            let row: Vec<&str> = l.split('\t').collect();
            if row.len() == cols {
                Ok(row)
            } else {
                Err(format!("line {}: expected {cols} tab-separated fields", i + 1))
            }
        })
        .collect()
}

/// Bidirectional phrase dictionary. English to another language fails for
/// unknown phrases; the other direction passes unknown text through with a
/// `[XX]` source-language marker so code-mixed input still reaches the model.
#[derive(Clone, Debug, Default)]
pub struct PhraseDictionary {
    forward: BTreeMap<(LanguageCode, String), String>,
    backward: BTreeMap<(LanguageCode, String), String>,
}

impl PhraseDictionary {
    pub fn from_tsv(src: &str) -> Result<Self, String> {
        let mut d = Self::default();
        for row in tsv_rows(src, 3)? {
            let lang: LanguageCode = row[0].parse().map_err(|e| format!("{e}"))?;
            d.insert(lang, row[1], row[2]);
        }
        Ok(d)
    }

    pub fn insert(&mut self, lang: LanguageCode, english: &str, translated: &str) {
        self.forward
            .insert((lang, english.trim().to_owned()), translated.trim().to_owned());
        self.backward
            .insert((lang, translated.trim().to_owned()), english.trim().to_owned());
    }

    pub fn merge(&mut self, other: PhraseDictionary) {
        self.forward.extend(other.forward);
        self.backward.extend(other.backward);
    }
}

impl Translator for PhraseDictionary {
    fn translate(&self, text: &str, from: LanguageCode, to: LanguageCode) -> Result<String, LanguageError> {
        if from == to {
            return Ok(text.to_owned());
        }
        let key = text.trim().to_owned();
        match (from, to) {
            (LanguageCode::En, target) => self
                .forward
                .get(&(target, key))
                .cloned()
                .ok_or_else(|| LanguageError::Translation(format!("no {target} phrase for {text:?}"))),
            (source, LanguageCode::En) => Ok(self
                .backward
                .get(&(source, key.clone()))
                .cloned()
                .unwrap_or_else(|| format!("[{source}] {key}"))),
            (source, target) => {
                let en = self.translate(text, source, LanguageCode::En)?;
                self.translate(&en, LanguageCode::En, target)
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct MockSpeechToText {
    fixtures: BTreeMap<String, (LanguageCode, String)>,
}

impl MockSpeechToText {
    pub fn from_tsv(src: &str) -> Result<Self, String> {
        let mut fixtures = BTreeMap::new();
        for row in tsv_rows(src, 3)? {
            let lang: LanguageCode = row[1].parse().map_err(|e| format!("{e}"))?;
            fixtures.insert(row[0].trim().to_owned(), (lang, row[2].trim().to_owned()));
        }
        Ok(Self { fixtures })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.fixtures.contains_key(name)
    }
}

impl SpeechToText for MockSpeechToText {
    fn transcribe(&self, audio: &[u8], language: LanguageCode) -> Result<String, LanguageError> {
        let name = std::str::from_utf8(audio).map_err(|_| LanguageError::Transcription("unrecognised audio".into()))?;
        match self.fixtures.get(name.trim()) {
            Some((lang, text)) if *lang == language => Ok(text.clone()),
            Some((lang, _)) => Err(LanguageError::Transcription(format!(
                "fixture {name:?} is {lang}, hint was {language}"
            ))),
            None => Err(LanguageError::Transcription(format!("unknown audio fixture {name:?}"))),
        }
    }
}

/// Produces `tts:<LANG>:<text>` as the "audio".
#[derive(Clone, Copy, Debug, Default)]
pub struct MockTextToSpeech;

impl TextToSpeech for MockTextToSpeech {
    fn synthesize(&self, text: &str, language: LanguageCode) -> Result<Vec<u8>, LanguageError> {
        Ok(format!("tts:{language}:{text}").into_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dictionary_both_directions() {
        let d = PhraseDictionary::from_tsv("HI\tThank you\tधन्यवाद\n").unwrap();
        assert_eq!(d.translate("Thank you", LanguageCode::En, LanguageCode::Hi).unwrap(), "धन्यवाद");
        assert_eq!(d.translate("धन्यवाद", LanguageCode::Hi, LanguageCode::En).unwrap(), "Thank you");
        assert!(d.translate("Hello", LanguageCode::En, LanguageCode::Hi).is_err());
        assert_eq!(
            d.translate("agar opration k baad", LanguageCode::Hi, LanguageCode::En).unwrap(),
            "[HI] agar opration k baad"
        );
    }

    #[test]
    fn bad_rows_rejected() {
        assert!(PhraseDictionary::from_tsv("HI\tonly two").is_err());
        assert!(PhraseDictionary::from_tsv("FR\ta\tb").is_err());
    }

    #[test]
    fn transcriber_checks_language_hint() {
        let s = MockSpeechToText::from_tsv("clip\tHI\tनमस्ते\n").unwrap();
        assert_eq!(s.transcribe(b"clip", LanguageCode::Hi).unwrap(), "नमस्ते");
        assert!(s.transcribe(b"clip", LanguageCode::Ta).is_err());
    }
}
