//! Two-tier knowledge store.
//!
//! Documents are chunked, embedded and kept in memory. Search is an
//! exhaustive cosine scan returning the global top-k, partitioned into the
//! raw-document tier and the expert-FAQ tier. The corpus is small (tens of
//! pages), so there is no approximate index.

pub mod chunking;
pub mod corpus;
pub mod embedding;

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::ids::ChunkId;
pub use chunking::{chunk_text, DEFAULT_CHUNK_BUDGET};
pub use embedding::{cosine, EmbeddingError, EmbeddingProvider, HashedBagOfWords};

/// Document id of the append-only expert-FAQ document.
pub const EXPERT_FAQ_DOC: &str = "expert-faq";
pub const DEFAULT_TOP_K: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tier {
    Raw,
    ExpertFaq,
}

impl Tier {
    pub fn for_doc(doc_id: &str) -> Tier {
        if doc_id == EXPERT_FAQ_DOC {
            Tier::ExpertFaq
        } else {
            Tier::Raw
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeChunk {
    pub chunk_id: ChunkId,
    pub doc_id: String,
    pub text: String,
    pub embedding: Vec<f64>,
    pub tier: Tier,
    pub ingested_at: Timestamp,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SearchResult {
    pub raw_chunks: Vec<(KnowledgeChunk, f64)>,
    pub faq_chunks: Vec<(KnowledgeChunk, f64)>,
}

impl SearchResult {
    pub fn is_empty(&self) -> bool {
        self.raw_chunks.is_empty() && self.faq_chunks.is_empty()
    }

    pub fn raw_texts(&self) -> Vec<String> {
        self.raw_chunks.iter().map(|(c, _)| c.text.clone()).collect()
    }

    pub fn faq_texts(&self) -> Vec<String> {
        self.faq_chunks.iter().map(|(c, _)| c.text.clone()).collect()
    }

    /// Distinct source documents in rank order.
    pub fn doc_ids(&self) -> Vec<String> {
        let mut all: Vec<&(KnowledgeChunk, f64)> =
            self.raw_chunks.iter().chain(&self.faq_chunks).collect();
        all.sort_by(|a, b| rank_order(a, b));
        let mut seen = BTreeSet::new();
        all.into_iter()
            .filter(|(c, _)| seen.insert(c.doc_id.clone()))
            .map(|(c, _)| c.doc_id.clone())
            .collect()
    }
}

/// A reviewed question and its approved answer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaqEntry {
    pub question: String,
    pub answer: String,
}

impl FaqEntry {
    pub fn new(question: impl Into<String>, answer: impl Into<String>) -> Self {
        Self {
            question: question.into(),
            answer: answer.into(),
        }
    }

    pub fn chunk_text(&self) -> String {
        format!("Q: {}\nA: {}", self.question.trim(), self.answer.trim())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KnowledgeError {
    #[error("document {0:?} is already ingested")]
    DuplicateDocument(String),
    #[error("document {0:?} is empty")]
    EmptyDocument(String),
    #[error("document {doc_id:?} cannot be ingested into the {requested:?} tier")]
    TierMismatch { doc_id: String, requested: Tier },
    #[error("no FAQ entries to append")]
    NoEntries,
    #[error("FAQ entry {0} has an empty question or answer")]
    EmptyEntry(usize),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("embedding dimension {got} does not match the store's {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Scores are compared at this resolution so that equal cosines computed
/// from different vectors, which can differ in the last bits, still tie.
const SCORE_RESOLUTION: f64 = 1e-9;

fn score_key(score: f64) -> i64 {
    (score / SCORE_RESOLUTION).round() as i64
}

/// Descending score, then older first, then chunk id.
fn rank_order(a: &(KnowledgeChunk, f64), b: &(KnowledgeChunk, f64)) -> Ordering {
    score_key(b.1)
        .cmp(&score_key(a.1))
        .then_with(|| a.0.ingested_at.cmp(&b.0.ingested_at))
        .then_with(|| a.0.chunk_id.cmp(&b.0.chunk_id))
}

#[derive(Clone)]
pub struct KnowledgeStore {
    embedder: Arc<dyn EmbeddingProvider>,
    chunk_budget: usize,
    chunks: Vec<KnowledgeChunk>,
    docs: BTreeSet<String>,
}

impl KnowledgeStore {
    pub fn new(embedder: Arc<dyn EmbeddingProvider>) -> Self {
        Self::with_budget(embedder, DEFAULT_CHUNK_BUDGET)
    }

    pub fn with_budget(embedder: Arc<dyn EmbeddingProvider>, chunk_budget: usize) -> Self {
        Self {
            embedder,
            chunk_budget,
            chunks: Vec::new(),
            docs: BTreeSet::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.embedder.dimension()
    }

    pub fn chunks(&self) -> &[KnowledgeChunk] {
        &self.chunks
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn contains_doc(&self, doc_id: &str) -> bool {
        self.docs.contains(doc_id)
    }

    pub fn faq_chunk_count(&self) -> usize {
        self.chunks.iter().filter(|c| c.tier == Tier::ExpertFaq).count()
    }

    fn embed_checked(&self, text: &str) -> Result<Vec<f64>, KnowledgeError> {
        let v = self.embedder.embed(text)?;
        if v.len() != self.dimension() {
            return Err(KnowledgeError::DimensionMismatch {
                expected: self.dimension(),
                got: v.len(),
            });
        }
        Ok(v)
    }

    fn next_index(&self, doc_id: &str) -> usize {
        self.chunks.iter().filter(|c| c.doc_id == doc_id).count()
    }

    fn push_all(&mut self, doc_id: &str, texts: Vec<String>, at: Timestamp) -> Result<Vec<ChunkId>, KnowledgeError> {
        // embed everything first so a provider failure leaves the store untouched
        let embedded = texts
            .into_iter()
            .map(|t| self.embed_checked(&t).map(|e| (t, e)))
            .collect::<Result<Vec<_>, _>>()?;
        let tier = Tier::for_doc(doc_id);
        let first = self.next_index(doc_id);
        let mut ids = Vec::with_capacity(embedded.len());
        for (i, (text, embedding)) in embedded.into_iter().enumerate() {
            let chunk_id = ChunkId::new(format!("{doc_id}#{:05}", first + i));
            ids.push(chunk_id.clone());
            self.chunks.push(KnowledgeChunk {
                chunk_id,
                doc_id: doc_id.to_owned(),
                text,
                embedding,
                tier,
                ingested_at: at,
            });
        }
        self.docs.insert(doc_id.to_owned());
        Ok(ids)
    }

    pub fn ingest_document(
        &mut self,
        doc_id: &str,
        text: &str,
        tier: Tier,
        at: Timestamp,
    ) -> Result<Vec<ChunkId>, KnowledgeError> {
        if self.docs.contains(doc_id) {
            return Err(KnowledgeError::DuplicateDocument(doc_id.to_owned()));
        }
        if Tier::for_doc(doc_id) != tier {
            return Err(KnowledgeError::TierMismatch {
                doc_id: doc_id.to_owned(),
                requested: tier,
            });
        }
        let pieces = chunk_text(text, self.chunk_budget);
        if pieces.is_empty() {
            return Err(KnowledgeError::EmptyDocument(doc_id.to_owned()));
        }
        self.push_all(doc_id, pieces, at)
    }

    pub fn search(&self, query_text: &str, k: usize) -> Result<SearchResult, KnowledgeError> {
        if k == 0 {
            return Err(KnowledgeError::InvalidK);
        }
        if self.chunks.is_empty() {
            return Ok(SearchResult::default());
        }
        let q = self.embed_checked(query_text)?;
        let mut scored: Vec<(KnowledgeChunk, f64)> = self
            .chunks
            .iter()
            .map(|c| (c.clone(), cosine(&q, &c.embedding)))
            .collect();
        scored.sort_by(rank_order);
        scored.truncate(k);
        let (faq_chunks, raw_chunks) = scored.into_iter().partition(|(c, _)| c.tier == Tier::ExpertFaq);
        Ok(SearchResult { raw_chunks, faq_chunks })
    }

    /// Append reviewed entries to the expert-FAQ document, one chunk each.
    pub fn append_faq_entries(&mut self, entries: &[FaqEntry], at: Timestamp) -> Result<usize, KnowledgeError> {
        if entries.is_empty() {
            return Err(KnowledgeError::NoEntries);
        }
        if let Some(i) = entries
            .iter()
            .position(|e| e.question.trim().is_empty() || e.answer.trim().is_empty())
        {
            return Err(KnowledgeError::EmptyEntry(i));
        }
        let texts = entries.iter().map(FaqEntry::chunk_text).collect();
        Ok(self.push_all(EXPERT_FAQ_DOC, texts, at)?.len())
    }
}

impl std::fmt::Debug for KnowledgeStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KnowledgeStore")
            .field("chunks", &self.chunks.len())
            .field("docs", &self.docs)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn t0() -> Timestamp {
        Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
    }

    fn store() -> KnowledgeStore {
        KnowledgeStore::new(Arc::new(HashedBagOfWords::default()))
    }

    #[test]
    fn empty_store_search_is_empty() {
        let s = store();
        assert!(s.search("anything", 3).unwrap().is_empty());
    }

    #[test]
    fn ingest_guards() {
        let mut s = store();
        assert_eq!(
            s.ingest_document(EXPERT_FAQ_DOC, "", Tier::ExpertFaq, t0()),
            Err(KnowledgeError::EmptyDocument(EXPERT_FAQ_DOC.into()))
        );
        s.ingest_document("postop-guide", "Rest well.", Tier::Raw, t0()).unwrap();
        assert_eq!(
            s.ingest_document("postop-guide", "Rest well.", Tier::Raw, t0()),
            Err(KnowledgeError::DuplicateDocument("postop-guide".into()))
        );
        assert!(matches!(
            s.ingest_document("other", "x", Tier::ExpertFaq, t0()),
            Err(KnowledgeError::TierMismatch { .. })
        ));
    }

    #[test]
    fn self_similarity_ranks_first() {
        let mut s = store();
        s.ingest_document("a", "Eye drops four times a day.\n\nNo swimming for a month.", Tier::Raw, t0())
            .unwrap();
        s.ingest_document("b", "Wear the eye shield at night.", Tier::Raw, t0()).unwrap();
        let r = s.search("Wear the eye shield at night.", 3).unwrap();
        let (top, score) = &r.raw_chunks[0];
        assert_eq!(top.doc_id, "b");
        assert!((score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn faq_entries_are_searchable() {
        let mut s = store();
        s.ingest_document("guide", "Cataract surgery usually takes about 10-20 minutes.", Tier::Raw, t0())
            .unwrap();
        let n = s
            .append_faq_entries(
                &[FaqEntry::new(
                    "Can I wash my hair after surgery?",
                    "Better to avoid washing your hair for 2 weeks after the cataract surgery.",
                )],
                t0(),
            )
            .unwrap();
        assert_eq!(n, 1);
        let r = s.search("wash hair", 3).unwrap();
        assert_eq!(r.faq_chunks.len(), 1);
        assert!(r.faq_chunks[0].0.text.starts_with("Q: Can I wash my hair"));
        assert_eq!(s.append_faq_entries(&[], t0()), Err(KnowledgeError::NoEntries));
    }

    struct Failing;
    impl EmbeddingProvider for Failing {
        fn dimension(&self) -> usize {
            4
        }
        fn embed(&self, _: &str) -> Result<Vec<f64>, EmbeddingError> {
            Err(EmbeddingError("down".into()))
        }
    }

    #[test]
    fn provider_failure_leaves_store_unchanged() {
        let mut s = KnowledgeStore::new(Arc::new(Failing));
        assert!(matches!(
            s.ingest_document("a", "text", Tier::Raw, t0()),
            Err(KnowledgeError::Embedding(_))
        ));
        assert!(s.is_empty() && !s.contains_doc("a"));
    }

    #[test]
    fn scores_equal_up_to_rounding_fall_back_to_age() {
        let chunk = |id: &str, days: i64| KnowledgeChunk {
            chunk_id: ChunkId::new(id),
            doc_id: id.into(),
            text: String::new(),
            embedding: Vec::new(),
            tier: Tier::Raw,
            ingested_at: t0() + chrono::Duration::days(days),
        };
        let newer = (chunk("a#00000", 1), 0.5 + 1e-15);
        let older = (chunk("b#00000", 0), 0.5);
        assert_eq!(rank_order(&older, &newer), Ordering::Less);
        let better = (chunk("c#00000", 1), 0.6);
        assert_eq!(rank_order(&better, &older), Ordering::Less);
    }
}
