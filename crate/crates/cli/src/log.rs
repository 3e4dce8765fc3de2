use serde_json::json;

use crate::error::CliError;

/// Progress messages on stderr, as plain text or JSON lines.
#[derive(Debug, Clone, Copy)]
pub struct Logger {
    json: bool,
}

impl Logger {
    pub fn new(json: bool) -> Self {
        Logger { json }
    }

    pub fn info(&self, event: &str, message: impl AsRef<str>) {
        if self.json {
            eprintln!(
                "{}",
                json!({"level": "info", "event": event, "message": message.as_ref()})
            );
        } else {
            eprintln!("annulus: {}", message.as_ref());
        }
    }

    pub fn error(&self, e: &CliError) {
        if self.json {
            eprintln!(
                "{}",
                json!({
                    "level": "error",
                    "event": "failed",
                    "kind": e.kind(),
                    "exit_code": e.exit_code(),
                    "message": e.to_string(),
                })
            );
        } else {
            eprintln!("annulus: error: {e}");
        }
    }
}
