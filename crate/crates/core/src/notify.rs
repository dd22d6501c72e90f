//! Outbound notifications (invitations, rejection notices).
//!
//! There is no mail transport here: messages go to a pluggable sink.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notification {
    pub to: String,
    pub subject: String,
    pub body: String,
}

pub trait NotificationSink: Send + Sync {
    fn deliver(&self, message: Notification);
}

/// Writes each message to the `tracing` log.
#[derive(Debug, Default)]
pub struct LogSink;

impl NotificationSink for LogSink {
    fn deliver(&self, message: Notification) {
        tracing::info!(to = %message.to, subject = %message.subject, "notification");
    }
}

/// Keeps messages in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    messages: Mutex<Vec<Notification>>,
}

impl MemorySink {
    pub fn messages(&self) -> Vec<Notification> {
        self.messages.lock().clone()
    }
}

impl NotificationSink for MemorySink {
    fn deliver(&self, message: Notification) {
        self.messages.lock().push(message);
    }
}

/// Appends one JSON object per message to a file.
#[derive(Debug)]
pub struct JsonlFileSink {
    path: PathBuf,
    lock: Mutex<()>,
}

impl JsonlFileSink {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            lock: Mutex::new(()),
        }
    }
}

impl NotificationSink for JsonlFileSink {
    fn deliver(&self, message: Notification) {
        let _guard = self.lock.lock();
        let line = match serde_json::to_string(&message) {
            Ok(line) => line,
            Err(e) => {
                tracing::error!("cannot encode notification: {e}");
                return;
            }
        };
        let result = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .and_then(|mut f| writeln!(f, "{line}"));
        if let Err(e) = result {
            tracing::error!(path = %self.path.display(), "cannot write notification: {e}");
        }
    }
}
