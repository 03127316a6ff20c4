//! Blocking OpenAI-compatible chat-completions client.
//!
//! One POST per attempt with `{model, messages, temperature, max_tokens}`;
//! the reply text is the first choice's message content. Transient failures
//! (connect/timeout, 429, 5xx) are retried with exponential backoff; 401/403
//! are terminal. In-flight requests are bounded by a counting semaphore
//! sized to `max_concurrent_requests`, shared across all workers.

use std::sync::{Condvar, Mutex};

use serde::Deserialize;
use serde_json::json;

use super::{with_retries, RetryOutcome, Teacher, TeacherCall, TeacherConfig, TeacherError};

/// Environment variable holding the bearer token for the endpoint. When it
/// is unset no Authorization header is sent (local endpoints).
pub const API_KEY_ENV: &str = "TEACHER_API_KEY";

struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().expect("semaphore lock");
        while *permits == 0 {
            permits = self.available.wait(permits).expect("semaphore wait");
        }
        *permits -= 1;
        SemaphoreGuard { semaphore: self }
    }
}

struct SemaphoreGuard<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.semaphore.permits.lock().expect("semaphore lock");
        *permits += 1;
        self.semaphore.available.notify_one();
    }
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

/// Live teacher client. Cheap to share behind a reference; all state is the
/// HTTP connection pool and the concurrency semaphore.
pub struct HttpTeacher {
    config: TeacherConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    slots: Semaphore,
}

impl HttpTeacher {
    pub fn new(config: TeacherConfig) -> Result<Self, TeacherError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .map_err(|e| TeacherError::MalformedEndpointReply(e.to_string()))?;
        Ok(HttpTeacher {
            api_key: std::env::var(API_KEY_ENV).ok(),
            slots: Semaphore::new(config.max_concurrent_requests.max(1)),
            config,
            client,
        })
    }

    fn attempt_once(&self, system: &str, user: &str) -> RetryOutcome<String> {
        let _slot = self.slots.acquire();
        let body = json!({
            "model": self.config.model_name,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_reply_tokens,
        });
        let mut request = self.client.post(&self.config.endpoint_url).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = match request.send() {
            Ok(response) => response,
            // connect errors and timeouts are transient
            Err(e) => return RetryOutcome::Transient(e.to_string()),
        };
        let status = response.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return RetryOutcome::Fatal(TeacherError::AuthFailure(format!(
                "endpoint returned {status}"
            )));
        }
        if status.as_u16() == 429 || status.is_server_error() {
            return RetryOutcome::Transient(format!("endpoint returned {status}"));
        }
        if !status.is_success() {
            return RetryOutcome::Fatal(TeacherError::MalformedEndpointReply(format!(
                "endpoint returned {status}"
            )));
        }
        let reply: ChatReply = match response.json() {
            Ok(reply) => reply,
            Err(e) => {
                return RetryOutcome::Fatal(TeacherError::MalformedEndpointReply(e.to_string()))
            }
        };
        match reply
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
        {
            Some(content) => RetryOutcome::Done(content),
            None => RetryOutcome::Fatal(TeacherError::MalformedEndpointReply(
                "reply has no choices[0].message.content".into(),
            )),
        }
    }
}

impl Teacher for HttpTeacher {
    fn invoke(&self, call: &TeacherCall<'_>) -> Result<String, TeacherError> {
        with_retries(self.config.max_retries, self.config.retry_backoff, |_| {
            self.attempt_once(call.system, call.user)
        })
    }
}
