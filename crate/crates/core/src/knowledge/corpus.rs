//! Corpus directory loader.
//!
//! A corpus directory holds one UTF-8 `.txt` file per document (the file
//! stem is the doc id) and a `manifest.toml` mapping every doc id to its
//! tier:
//!
//! ```toml
//! [tiers]
//! postop-guide = "raw"
//! expert-faq = "expert-faq"
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use super::{KnowledgeError, KnowledgeStore, Tier};
use crate::clock::Timestamp;

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("document {0:?} has no manifest entry")]
    Unlisted(String),
    #[error("manifest lists {0:?} but there is no such file")]
    Missing(String),
    #[error(transparent)]
    Store(#[from] KnowledgeError),
}

#[derive(Deserialize)]
struct Manifest {
    tiers: BTreeMap<String, String>,
}

fn parse_tier(s: &str) -> Result<Tier, CorpusError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "raw" => Ok(Tier::Raw),
        "expert-faq" | "expertfaq" | "faq" => Ok(Tier::ExpertFaq),
        other => Err(CorpusError::Manifest(format!("unknown tier {other:?}"))),
    }
}

/// Documents of a corpus directory, sorted by doc id.
pub fn read_corpus(dir: &Path) -> Result<Vec<(String, String, Tier)>, CorpusError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CorpusError::Io { path, source }
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let raw = fs::read_to_string(&manifest_path).map_err(io(&manifest_path))?;
    let manifest: Manifest = toml::from_str(&raw).map_err(|e| CorpusError::Manifest(e.to_string()))?;

    let mut docs = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(io(dir))? {
        let path = entry.map_err(io(dir))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        docs.insert(stem.to_owned(), text);
    }

    let mut out = Vec::new();
    for (doc_id, text) in &docs {
        let tier = manifest
            .tiers
            .get(doc_id)
            .ok_or_else(|| CorpusError::Unlisted(doc_id.clone()))?;
        out.push((doc_id.clone(), text.clone(), parse_tier(tier)?));
    }
    if let Some(missing) = manifest.tiers.keys().find(|k| !docs.contains_key(*k)) {
        return Err(CorpusError::Missing(missing.clone()));
    }
    Ok(out)
}

/// Ingest every document of `dir`; returns the number of chunks created.
pub fn load_corpus(store: &mut KnowledgeStore, dir: &Path, at: Timestamp) -> Result<usize, CorpusError> {
    let mut n = 0;
    for (doc_id, text, tier) in read_corpus(dir)? {
        n += store.ingest_document(&doc_id, &text, tier, at)?.len();
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::HashedBagOfWords;
    use chrono::Utc;
    use std::sync::Arc;

    #[test]
    fn loads_listed_documents() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("guide.txt"), "Rest.\n\nUse drops.").unwrap();
        fs::write(dir.path().join("expert-faq.txt"), "Q: a?\nA: b.").unwrap();
        fs::write(
            dir.path().join(MANIFEST_FILE),
            "[tiers]\nguide = \"raw\"\nexpert-faq = \"expert-faq\"\n",
        )
        .unwrap();
        let mut store = KnowledgeStore::new(Arc::new(HashedBagOfWords::default()));
        let n = load_corpus(&mut store, dir.path(), Utc::now()).unwrap();
        assert_eq!(n, 2);
        assert_eq!(store.faq_chunk_count(), 1);
    }

    #[test]
    fn unlisted_document_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("guide.txt"), "Rest.").unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), "[tiers]\n").unwrap();
        assert!(matches!(read_corpus(dir.path()), Err(CorpusError::Unlisted(_))));
    }
}
