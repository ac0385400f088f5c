//! The external capabilities a service runs on, and a mock bundle built
//! from a deployment's fixture paths.

use std::path::Path;
use std::sync::Arc;

use crate::clock::Timestamp;
use crate::config::Deployment;
use crate::knowledge::corpus::load_corpus;
use crate::knowledge::embedding::HashedBagOfWords;
use crate::knowledge::KnowledgeStore;
use crate::language::mock::{MockSpeechToText, MockTextToSpeech, PhraseDictionary};
use crate::language::{AudioStore, FsAudioStore, LanguageServices, MemoryAudioStore};
use crate::llm::mock::MockCompletionProvider;
use crate::llm::{CompletionProvider, LlmGateway};

use super::ServiceError;

pub struct Providers {
    pub store: KnowledgeStore,
    pub llm: LlmGateway,
    pub language: LanguageServices,
}

/// Corpus documents are stamped with this instant so that expert-FAQ
/// entries, stamped with their application time, always rank as newer.
pub fn corpus_epoch() -> Timestamp {
    chrono::DateTime::UNIX_EPOCH
}

fn read(path: &Path) -> Result<String, ServiceError> {
    std::fs::read_to_string(path).map_err(|e| ServiceError::Setup(format!("{}: {e}", path.display())))
}

impl Providers {
    /// Knowledge store with the deployment's embedding dimension, loaded
    /// from its corpus directory when one is configured.
    pub fn knowledge_store(cfg: &Deployment) -> Result<KnowledgeStore, ServiceError> {
        let mut store = KnowledgeStore::new(Arc::new(HashedBagOfWords::new(cfg.providers.embedding_dimension)));
        if let Some(dir) = &cfg.paths.corpus_dir {
            load_corpus(&mut store, dir, corpus_epoch()).map_err(|e| ServiceError::Setup(e.to_string()))?;
        }
        Ok(store)
    }

    pub fn audio_store(cfg: &Deployment) -> Result<Arc<dyn AudioStore>, ServiceError> {
        Ok(match &cfg.paths.audio_dir {
            Some(dir) => Arc::new(FsAudioStore::new(dir).map_err(|e| ServiceError::Setup(e.to_string()))?),
            None => Arc::new(MemoryAudioStore::default()),
        })
    }

    /// Dictionary translator, fixture transcriber and the keyword model.
    pub fn mock(cfg: &Deployment) -> Result<Self, ServiceError> {
        let llm: Arc<dyn CompletionProvider> = Arc::new(MockCompletionProvider::new(cfg.providers.mock.clone()));
        Self::mock_with_llm(cfg, llm)
    }

    /// Mock language services around a caller-supplied completion provider.
    pub fn mock_with_llm(cfg: &Deployment, llm: Arc<dyn CompletionProvider>) -> Result<Self, ServiceError> {
        let phrases = match &cfg.paths.phrases {
            Some(p) => PhraseDictionary::from_tsv(&read(p)?).map_err(ServiceError::Setup)?,
            None => PhraseDictionary::default(),
        };
        let stt = match &cfg.paths.audio_fixtures {
            Some(p) => MockSpeechToText::from_tsv(&read(p)?).map_err(ServiceError::Setup)?,
            None => MockSpeechToText::default(),
        };
        let language = LanguageServices::new(
            Arc::new(stt),
            Arc::new(MockTextToSpeech),
            Arc::new(phrases),
            Self::audio_store(cfg)?,
        );
        Ok(Self {
            store: Self::knowledge_store(cfg)?,
            llm: LlmGateway::new(llm, cfg.fallback_questions.clone()),
            language,
        })
    }
}
