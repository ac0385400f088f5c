//! Where rendered outbound payloads go. Delivery is best effort: a failed
//! send is logged and not retried.

use std::sync::Mutex;
use std::time::Duration;

use expertloop::channel::WirePayload;

pub trait OutboundSink: Send + Sync {
    fn send(&self, payload: &WirePayload);
}

/// Drops payloads after logging them; used when no sink URL is configured.
#[derive(Debug, Default)]
pub struct LogSink;

impl OutboundSink for LogSink {
    fn send(&self, payload: &WirePayload) {
        tracing::info!(recipient = %payload.recipient, kind = %payload.kind, message = %payload.message_id, "outbound");
    }
}

/// Keeps payloads in memory for tests and embedding.
#[derive(Debug, Default)]
pub struct MemorySink {
    sent: Mutex<Vec<WirePayload>>,
}

impl MemorySink {
    pub fn take(&self) -> Vec<WirePayload> {
        std::mem::take(&mut self.sent.lock().expect("sink lock"))
    }
}

impl OutboundSink for MemorySink {
    fn send(&self, payload: &WirePayload) {
        self.sent.lock().expect("sink lock").push(payload.clone());
    }
}

/// POSTs each payload as JSON to a fixed URL.
#[derive(Debug)]
pub struct HttpSink {
    client: reqwest::blocking::Client,
    url: String,
}

impl HttpSink {
    pub fn new(url: impl Into<String>) -> Result<Self, reqwest::Error> {
        Ok(Self {
            client: reqwest::blocking::Client::builder().timeout(Duration::from_secs(10)).build()?,
            url: url.into(),
        })
    }
}

impl OutboundSink for HttpSink {
    fn send(&self, payload: &WirePayload) {
        let result = self
            .client
            .post(&self.url)
            .json(payload)
            .send()
            .and_then(|r| r.error_for_status());
        if let Err(e) = result {
            tracing::warn!(message = %payload.message_id, error = %e, "sink delivery failed");
        }
    }
}
