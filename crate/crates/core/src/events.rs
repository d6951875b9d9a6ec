//! Structured log of what the ingest loop did and when.
//!
//! Scenarios replay the log to check budget safety, refresh frequencies and
//! discovery completeness without peeking into scheduler internals.

use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Grant {
        at: DateTime<Utc>,
        token_id: String,
        cost: u32,
    },
    Wait {
        at: DateTime<Utc>,
        until: DateTime<Utc>,
    },
    Fetch {
        at: DateTime<Utc>,
        kind: FetchKind,
        login: String,
    },
    Enqueue {
        at: DateTime<Utc>,
        login: String,
        due_at: DateTime<Utc>,
        discovered_via: Option<String>,
    },
    Processed {
        at: DateTime<Utc>,
        login: String,
        active: bool,
    },
    Retired {
        at: DateTime<Utc>,
        login: String,
    },
    Failed {
        at: DateTime<Utc>,
        login: String,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FetchKind {
    Seed,
    Profile,
    Edges,
    Activity,
}

/// Cloneable handle to a shared, append-only event list. A disabled log
/// drops everything.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    inner: Option<Arc<Mutex<Vec<Event>>>>,
}

impl EventLog {
    pub fn enabled() -> Self {
        Self {
            inner: Some(Arc::new(Mutex::new(Vec::new()))),
        }
    }

    pub fn disabled() -> Self {
        Self { inner: None }
    }

    pub fn record(&self, event: Event) {
        if let Some(inner) = &self.inner {
            inner.lock().expect("event log poisoned").push(event);
        }
    }

    pub fn snapshot(&self) -> Vec<Event> {
        self.inner
            .as_ref()
            .map(|i| i.lock().expect("event log poisoned").clone())
            .unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.inner
            .as_ref()
            .map(|i| i.lock().expect("event log poisoned").len())
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
