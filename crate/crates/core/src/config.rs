//! Deployment configuration, read from TOML.
//!
//! Timer and routing settings sit at the top level; onboarding, the
//! nightly knowledge-base jobs, file paths and providers have their own
//! tables. Relative paths are resolved against the config file's
//! directory. See `fixtures/deployment.toml` for a complete example.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::LocalZone;
use crate::ids::UserId;
use crate::kb_update::KbConfig;
use crate::llm::mock::MockLlmConfig;
use crate::model::{LanguageCode, Role, UserProfile};
use crate::onboarding::OnboardingConfig;
use crate::workflow::{Track, WorkflowConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertConfig {
    pub id: UserId,
    pub role: Role,
    pub channel_address: String,
    #[serde(default)]
    pub name: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paths {
    #[serde(default)]
    pub corpus_dir: Option<PathBuf>,
    #[serde(default)]
    pub log_path: Option<PathBuf>,
    #[serde(default)]
    pub audio_dir: Option<PathBuf>,
    #[serde(default)]
    pub review_dir: Option<PathBuf>,
    /// Phrase dictionary for the mock translator.
    #[serde(default)]
    pub phrases: Option<PathBuf>,
    /// Named audio clips for the mock transcriber.
    #[serde(default)]
    pub audio_fixtures: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LlmProviderKind {
    #[default]
    Mock,
    /// Any chat-completions endpoint speaking the OpenAI wire format.
    OpenaiCompatible,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenAiConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderConfig {
    #[serde(default)]
    pub llm: LlmProviderKind,
    #[serde(default)]
    pub openai: Option<OpenAiConfig>,
    #[serde(default = "default_dimension")]
    pub embedding_dimension: usize,
    #[serde(default)]
    pub mock: MockLlmConfig,
}

fn default_dimension() -> usize {
    crate::knowledge::embedding::MOCK_EMBEDDING_DIM
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            llm: LlmProviderKind::Mock,
            openai: None,
            embedding_dimension: default_dimension(),
            mock: MockLlmConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deployment {
    pub timezone: LocalZone,
    #[serde(flatten)]
    pub workflow: WorkflowConfig,
    /// Earlier question-answer turns passed to the answering prompt.
    #[serde(default = "default_history")]
    pub history_turns: usize,
    #[serde(default)]
    pub admin_token: Option<String>,
    pub escalation_doctor: UserId,
    pub escalation_coordinator: UserId,
    pub knowledge_base_expert: UserId,
    #[serde(default)]
    pub fallback_questions: Vec<String>,
    pub experts: Vec<ExpertConfig>,
    #[serde(default)]
    pub onboarding: OnboardingConfig,
    #[serde(default)]
    pub kb: KbConfig,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub providers: ProviderConfig,
}

fn default_history() -> usize {
    3
}

impl Deployment {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let d: Deployment = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        d.validate()?;
        Ok(d)
    }

    /// Load a config file and resolve its relative paths.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut d = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            d.resolve_paths(base);
        }
        Ok(d)
    }

    /// The bundled deployment with paths resolved against the crate's
    /// fixture directory.
    pub fn bundled() -> Self {
        let mut d = Self::from_toml(DEFAULT_DEPLOYMENT).expect("bundled deployment is valid");
        d.resolve_paths(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures")));
        d
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for slot in [
            &mut p.corpus_dir,
            &mut p.log_path,
            &mut p.audio_dir,
            &mut p.review_dir,
            &mut p.phrases,
            &mut p.audio_fixtures,
        ] {
            if let Some(path) = slot.as_mut().filter(|p| p.is_relative()) {
                *path = base.join(&*path);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        let mut ids = BTreeSet::new();
        let mut addresses = BTreeSet::new();
        for e in &self.experts {
            if !e.role.is_expert() {
                return invalid(format!("{} has seeker role {:?}", e.id, e.role));
            }
            if !ids.insert(&e.id) {
                return invalid(format!("duplicate expert id {}", e.id));
            }
            if !addresses.insert(e.channel_address.trim()) {
                return invalid(format!("duplicate channel address {}", e.channel_address));
            }
        }
        let kb: Vec<_> = self
            .experts
            .iter()
            .filter(|e| e.role == Role::KnowledgeBaseExpert)
            .collect();
        if kb.len() != 1 {
            return invalid(format!("exactly one knowledge-base expert is required, found {}", kb.len()));
        }
        for (id, role) in [
            (&self.escalation_doctor, Role::EscalationDoctor),
            (&self.escalation_coordinator, Role::EscalationCoordinator),
            (&self.knowledge_base_expert, Role::KnowledgeBaseExpert),
        ] {
            if self.expert_role(id) != Some(role) {
                return invalid(format!("{id} must be configured with role {role:?}"));
            }
        }
        if self.onboarding.starter_faqs.len() != crate::channel::SUGGESTION_COUNT {
            return invalid("exactly three starter FAQs are required".into());
        }
        if self.workflow.escalation_delay <= chrono::Duration::zero() || self.workflow.reminder_delay <= chrono::Duration::zero() {
            return invalid("timer delays must be positive".into());
        }
        if self.providers.llm == LlmProviderKind::OpenaiCompatible && self.providers.openai.is_none() {
            return invalid("providers.openai is required for the openai-compatible provider".into());
        }
        Ok(())
    }

    pub fn expert(&self, id: &UserId) -> Option<&ExpertConfig> {
        self.experts.iter().find(|e| e.id == *id)
    }

    pub fn expert_role(&self, id: &UserId) -> Option<Role> {
        self.expert(id).map(|e| e.role)
    }

    pub fn expert_by_address(&self, address: &str) -> Option<&ExpertConfig> {
        self.experts.iter().find(|e| e.channel_address == address.trim())
    }

    pub fn escalation_expert(&self, track: Track) -> &UserId {
        match track {
            Track::Doctor => &self.escalation_doctor,
            Track::Coordinator => &self.escalation_coordinator,
        }
    }

    /// Experts as profiles; they always use English and never expire.
    pub fn expert_profile(&self, id: &UserId) -> Option<UserProfile> {
        self.expert(id).map(|e| UserProfile {
            user_id: e.id.clone(),
            role: e.role,
            language: LanguageCode::En,
            channel_address: e.channel_address.clone(),
            display_demographics: e.name.clone(),
            surgery_date: None,
            operating_doctor_id: None,
            operating_coordinator_id: None,
            active_until: None,
        })
    }
}

/// The deployment bundled with the crate, used by tests and the simulator.
pub const DEFAULT_DEPLOYMENT: &str = include_str!("../fixtures/deployment.toml");
