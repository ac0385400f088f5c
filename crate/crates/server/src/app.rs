//! Shared server state: the service behind a lock, the clock, and the sink
//! that receives rendered outbound payloads.

use std::sync::{Arc, Mutex, PoisonError};

use expertloop::channel::render_outbound;
use expertloop::clock::{Clock, Timestamp};
use expertloop::service::{Outbound, Service, ServiceError};

use crate::sink::OutboundSink;

/// Builds a service from durable storage. Called once at start and again
/// whenever an append fails, since the in-memory state is then ahead of
/// the log.
pub type Opener = Box<dyn Fn(Timestamp) -> Result<Service, ServiceError> + Send + Sync>;

pub struct App {
    svc: Mutex<Service>,
    opener: Opener,
    clock: Arc<dyn Clock>,
    sink: Arc<dyn OutboundSink>,
    admin_token: Option<String>,
}

impl App {
    pub fn new(opener: Opener, clock: Arc<dyn Clock>, sink: Arc<dyn OutboundSink>) -> Result<Arc<Self>, ServiceError> {
        let svc = opener(clock.now())?;
        let admin_token = svc.config().admin_token.clone();
        Ok(Arc::new(Self {
            svc: Mutex::new(svc),
            opener,
            clock,
            sink,
            admin_token,
        }))
    }

    pub fn admin_token(&self) -> Option<&str> {
        self.admin_token.as_deref()
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    /// Run `f` against the service at the current time, then hand every
    /// message it queued to the sink.
    pub fn with_service<T>(&self, f: impl FnOnce(&mut Service, Timestamp) -> Result<T, ServiceError>) -> Result<T, ServiceError> {
        let now = self.clock.now();
        let mut svc = self.svc.lock().unwrap_or_else(PoisonError::into_inner);
        let out = f(&mut svc, now);
        if matches!(out, Err(ServiceError::Log(_) | ServiceError::Poisoned)) {
            tracing::error!("event log append failed, reopening from the log");
            match (self.opener)(now) {
                Ok(fresh) => *svc = fresh,
                Err(e) => tracing::error!(error = %e, "reopen failed; will retry on the next request"),
            }
        }
        let outbound = svc.drain_outbox();
        drop(svc);
        self.deliver(outbound);
        out
    }

    /// Read-only access; nothing is queued by readers.
    pub fn read<T>(&self, f: impl FnOnce(&Service) -> T) -> T {
        f(&self.svc.lock().unwrap_or_else(PoisonError::into_inner))
    }

    /// Fire whatever timers are due.
    pub fn tick(&self) -> Result<(), ServiceError> {
        self.with_service(|svc, now| svc.advance_to(now))
    }

    fn deliver(&self, outbound: Vec<Outbound>) {
        for o in outbound {
            match render_outbound(&o.message_id, &o.action) {
                Ok(payloads) => {
                    for p in payloads {
                        self.sink.send(&p);
                    }
                }
                Err(e) => tracing::error!(message = %o.message_id, error = %e, "cannot render outbound message"),
            }
        }
    }
}
