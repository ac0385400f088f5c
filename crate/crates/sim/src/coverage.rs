//! Which task state transitions a run exercised.

use std::collections::BTreeMap;
use std::fmt;

use expertloop::events::{Event, EventRecord};
use expertloop::workflow::TaskState;
use serde::Serialize;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EdgeCoverage {
    /// Count per legal edge, including edges never taken.
    pub edges: BTreeMap<String, usize>,
}

fn key(from: TaskState, to: TaskState) -> String {
    format!("{from:?} -> {to:?}")
}

impl EdgeCoverage {
    pub fn from_log(log: &[EventRecord]) -> Self {
        let mut c = Self::default();
        for (from, to) in TaskState::EDGES {
            c.edges.insert(key(from, to), 0);
        }
        for r in log {
            if let Event::TaskTransition(t) = &r.event {
                *c.edges.entry(key(t.from, t.to)).or_default() += 1;
            }
        }
        c
    }

    pub fn merge(&mut self, other: &EdgeCoverage) {
        for (k, n) in &other.edges {
            *self.edges.entry(k.clone()).or_default() += n;
        }
    }

    pub fn missing(&self) -> Vec<&str> {
        self.edges.iter().filter(|(_, n)| **n == 0).map(|(k, _)| k.as_str()).collect()
    }

    pub fn complete(&self) -> bool {
        self.missing().is_empty()
    }
}

impl fmt::Display for EdgeCoverage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let taken = self.edges.values().filter(|n| **n > 0).count();
        writeln!(f, "edge coverage: {taken}/{} edges", self.edges.len())?;
        for (k, n) in &self.edges {
            writeln!(f, "  {k:<40} {n}")?;
        }
        Ok(())
    }
}
