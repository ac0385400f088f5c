//! HTTP host for the expert-in-the-loop service: webhook intake, expert
//! actions, operator reads, and the periodic scheduler tick.

pub mod app;
pub mod error;
pub mod openai;
pub mod routes;
pub mod sink;

pub use app::{App, Opener};
pub use error::ApiError;
pub use openai::OpenAiProvider;
pub use routes::router;
pub use sink::{HttpSink, LogSink, MemorySink, OutboundSink};
