//! Minimal blocking HTTP plumbing shared by the remote translation and model
//! adapters, with bounded retries.

use std::time::Duration;

use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
    /// Parsed `Retry-After` header, in seconds.
    pub retry_after: Option<f64>,
}

/// Sends a JSON POST. Implementations must be thread-safe; tests swap in
/// counting or scripted stubs.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, headers: &[(String, String)], body: &Value) -> Result<HttpResponse, String>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .expect("http client builds");
        ReqwestTransport { client }
    }
}

impl Default for ReqwestTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(120))
    }
}

impl Transport for ReqwestTransport {
    fn post_json(&self, url: &str, headers: &[(String, String)], body: &Value) -> Result<HttpResponse, String> {
        let mut req = self.client.post(url).json(body);
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok());
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(HttpResponse {
            status,
            body,
            retry_after,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        RetryPolicy {
            max_attempts,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    /// Delay before retry number `attempt` (1-based): base * 2^(attempt-1), capped.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt.saturating_sub(1));
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryFailure {
    pub attempts: u32,
    pub last_error: String,
}

/// POSTs with retries on transport errors, 429 and 5xx. A 429 with a
/// `Retry-After` header waits at least that long. Returns the successful
/// body and the number of attempts used.
pub fn post_with_retry(
    transport: &dyn Transport,
    policy: &RetryPolicy,
    url: &str,
    headers: &[(String, String)],
    body: &Value,
) -> Result<(String, u32), RetryFailure> {
    let max = policy.max_attempts.max(1);
    let mut last_error = String::new();
    for attempt in 1..=max {
        let mut wait = policy.backoff(attempt);
        match transport.post_json(url, headers, body) {
            Ok(resp) if (200..300).contains(&resp.status) => return Ok((resp.body, attempt)),
            Ok(resp) if resp.status == 429 || resp.status >= 500 => {
                if let Some(secs) = resp.retry_after {
                    wait = wait.max(Duration::from_secs_f64(secs.clamp(0.0, 300.0)));
                }
                last_error = format!("HTTP {}: {}", resp.status, truncate(&resp.body));
            }
            Ok(resp) => {
                return Err(RetryFailure {
                    attempts: attempt,
                    last_error: format!("HTTP {}: {}", resp.status, truncate(&resp.body)),
                })
            }
            Err(e) => last_error = e,
        }
        if attempt < max {
            tracing::debug!(attempt, ?wait, error = %last_error, "retrying request");
            std::thread::sleep(wait);
        }
    }
    Err(RetryFailure {
        attempts: max,
        last_error,
    })
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}
