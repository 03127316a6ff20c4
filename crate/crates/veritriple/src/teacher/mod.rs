//! Teacher-model clients: a live OpenAI-compatible chat-completions client
//! and a deterministic scripted mock, behind one trait.

use std::time::Duration;

use rand::Rng;

mod live;
mod script;

pub use live::HttpTeacher;
pub use script::{load_script, ScriptedTeacher};

#[derive(Debug, thiserror::Error)]
pub enum TeacherError {
    #[error("teacher endpoint kept failing after {attempts} attempts: {last_error}")]
    TransientExhausted { attempts: u32, last_error: String },
    #[error("teacher endpoint rejected credentials: {0}")]
    AuthFailure(String),
    #[error("malformed endpoint reply: {0}")]
    MalformedEndpointReply(String),
    #[error("no scripted reply for id \"{id}\" attempt {attempt}")]
    UnmatchedScript { id: String, attempt: u32 },
    #[error("reply script {path}: {message}")]
    ScriptError { path: String, message: String },
}

impl TeacherError {
    /// Errors that abort one example but leave the run alive (the example
    /// stays eligible for resume).
    pub fn aborts_example_only(&self) -> bool {
        matches!(
            self,
            TeacherError::TransientExhausted { .. } | TeacherError::MalformedEndpointReply(_)
        )
    }
}

/// One teacher invocation. The example id and attempt index exist for the
/// scripted mock and for logging; the live client ignores them.
#[derive(Debug, Clone, Copy)]
pub struct TeacherCall<'a> {
    pub system: &'a str,
    pub user: &'a str,
    pub example_id: &'a str,
    pub attempt: u32,
}

/// A teacher model that turns a (system, user) prompt into a reply.
/// Implementations are shared across workers and must bound their own
/// request concurrency.
pub trait Teacher: Send + Sync {
    fn invoke(&self, call: &TeacherCall<'_>) -> Result<String, TeacherError>;
}

/// Live-client settings. The API key is read from the `TEACHER_API_KEY`
/// environment variable, never from configuration files.
#[derive(Debug, Clone)]
pub struct TeacherConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_reply_tokens: u32,
    pub request_timeout: Duration,
    pub max_retries: u32,
    /// Base for exponential backoff between retries.
    pub retry_backoff: Duration,
    pub max_concurrent_requests: usize,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            model_name: "gpt-4o-mini".into(),
            temperature: 0.0,
            max_reply_tokens: 4096,
            request_timeout: Duration::from_secs(120),
            max_retries: 3,
            retry_backoff: Duration::from_secs(1),
            max_concurrent_requests: 4,
        }
    }
}

/// Outcome of one transport attempt inside [`with_retries`].
pub(crate) enum RetryOutcome<T> {
    Done(T),
    /// Worth retrying: timeout, connection error, 429, 5xx.
    Transient(String),
    /// Not worth retrying: auth failure, malformed reply.
    Fatal(TeacherError),
}

/// Run `attempt_fn` up to `1 + max_retries` times with exponential backoff
/// plus jitter between transient failures.
pub(crate) fn with_retries<T>(
    max_retries: u32,
    backoff_base: Duration,
    mut attempt_fn: impl FnMut(u32) -> RetryOutcome<T>,
) -> Result<T, TeacherError> {
    let total = max_retries.saturating_add(1);
    let mut last_error = String::new();
    for attempt in 1..=total {
        match attempt_fn(attempt) {
            RetryOutcome::Done(value) => return Ok(value),
            RetryOutcome::Fatal(err) => return Err(err),
            RetryOutcome::Transient(message) => {
                last_error = message;
                if attempt < total {
                    std::thread::sleep(backoff_delay(backoff_base, attempt));
                }
            }
        }
    }
    Err(TeacherError::TransientExhausted {
        attempts: total,
        last_error,
    })
}

/// `base * 2^(attempt-1)`, jittered to 75%..125%, capped at one minute.
fn backoff_delay(base: Duration, attempt: u32) -> Duration {
    let exp = base.as_secs_f64() * f64::from(1u32 << (attempt - 1).min(16));
    let jitter = rand::thread_rng().gen_range(0.75..1.25);
    Duration::from_secs_f64((exp * jitter).min(60.0))
}
