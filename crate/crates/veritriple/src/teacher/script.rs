//! Deterministic scripted teacher for offline runs and tests.
//!
//! A script is JSONL of `{"id", "attempt", "reply"}`. `attempt` is either a
//! 1-based integer or `"*"`, which matches any attempt for that id once no
//! exact entry applies. Lookups never consume entries, so replaying the same
//! (id, attempt) sequence is bit-deterministic. Unmatched lookups are hard
//! errors so a broken fixture fails loudly.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use super::{Teacher, TeacherCall, TeacherError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum AttemptMatcher {
    Exact(u32),
    Any,
}

impl<'de> Deserialize<'de> for AttemptMatcher {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        match serde_json::Value::deserialize(deserializer)? {
            serde_json::Value::Number(n) => n
                .as_u64()
                .and_then(|v| u32::try_from(v).ok())
                .map(AttemptMatcher::Exact)
                .ok_or_else(|| D::Error::custom("attempt must be a small positive integer")),
            serde_json::Value::String(s) if s == "*" => Ok(AttemptMatcher::Any),
            other => Err(D::Error::custom(format!(
                "attempt must be an integer or \"*\", got {other}"
            ))),
        }
    }
}

#[derive(Debug, Deserialize)]
struct ScriptLine {
    id: String,
    attempt: AttemptMatcher,
    reply: String,
}

/// Scripted mock teacher keyed by (example id, attempt index).
#[derive(Debug, Default)]
pub struct ScriptedTeacher {
    exact: HashMap<(String, u32), String>,
    wildcard: HashMap<String, String>,
}

impl ScriptedTeacher {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a reply for an exact (id, attempt) key.
    pub fn reply(mut self, id: &str, attempt: u32, reply: &str) -> Self {
        self.exact.insert((id.into(), attempt), reply.into());
        self
    }

    /// Register a reply matching every attempt for `id`.
    pub fn reply_any(mut self, id: &str, reply: &str) -> Self {
        self.wildcard.insert(id.into(), reply.into());
        self
    }
}

impl Teacher for ScriptedTeacher {
    fn invoke(&self, call: &TeacherCall<'_>) -> Result<String, TeacherError> {
        let key = (call.example_id.to_string(), call.attempt);
        if let Some(reply) = self.exact.get(&key) {
            return Ok(reply.clone());
        }
        if let Some(reply) = self.wildcard.get(call.example_id) {
            return Ok(reply.clone());
        }
        Err(TeacherError::UnmatchedScript {
            id: call.example_id.to_string(),
            attempt: call.attempt,
        })
    }
}

/// Load a scripted teacher from a JSONL script file.
pub fn load_script(path: &Path) -> Result<ScriptedTeacher, TeacherError> {
    let display = path.display().to_string();
    let script_err = |message: String| TeacherError::ScriptError {
        path: display.clone(),
        message,
    };
    let file = File::open(path).map_err(|e| script_err(e.to_string()))?;
    let mut teacher = ScriptedTeacher::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| script_err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ScriptLine = serde_json::from_str(&line)
            .map_err(|e| script_err(format!("line {}: {e}", idx + 1)))?;
        let clobbered = match entry.attempt {
            AttemptMatcher::Exact(n) => teacher
                .exact
                .insert((entry.id.clone(), n), entry.reply)
                .is_some(),
            AttemptMatcher::Any => teacher
                .wildcard
                .insert(entry.id.clone(), entry.reply)
                .is_some(),
        };
        if clobbered {
            return Err(script_err(format!(
                "line {}: duplicate entry for id \"{}\"",
                idx + 1,
                entry.id
            )));
        }
    }
    Ok(teacher)
}
