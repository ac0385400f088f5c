//! Scenario simulator. Plays seekers and experts against a full
//! [`expertloop::service::Service`] on a virtual clock, through the same
//! wire payloads a channel gateway would carry, and records a
//! deterministic transcript.
//!
//! ```
//! use expertloop_sim::{ScenarioScript, Simulation};
//!
//! let script = ScenarioScript::from_yaml("name: empty\nstart: \"2024-03-04T09:00:00+05:30\"\n").unwrap();
//! let report = Simulation::new(script).unwrap().run().unwrap();
//! assert!(report.transcript.is_empty());
//! assert!(report.passed());
//! ```

pub mod coverage;
pub mod expect;
pub mod random;
pub mod runner;
pub mod script;
pub mod transcript;

use thiserror::Error;

pub use coverage::EdgeCoverage;
pub use expect::ExpectationResult;
pub use runner::{CrashReport, FailingLog, RunReport, Simulation};
pub use script::{Action, Expectation, ProfileSpec, ScenarioScript, Step};
pub use transcript::{Direction, TranscriptItem};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("script error: {0}")]
    Script(String),
    #[error(transparent)]
    Service(#[from] expertloop::service::ServiceError),
    #[error(transparent)]
    Channel(#[from] expertloop::channel::ChannelError),
    #[error("round trip of outbound payload changed it: {0}")]
    RoundTrip(String),
    #[error("replayed state differs from the state before the crash at step {0}")]
    ReplayMismatch(usize),
}

/// Guide chapter, compiled and run as a doctest.
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/simulator.md")]
pub struct BookSimulator;
