use std::time::Duration;

use serde::{Deserialize, Serialize};

/// Exponential backoff for transient failures (HTTP 429/5xx, timeouts).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_delay_ms: u64,
    pub max_delay_ms: u64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 4,
            initial_delay_ms: 500,
            max_delay_ms: 16_000,
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            ..Self::default()
        }
    }

    /// Delay before retry number `retry` (1-based), optionally raised to a
    /// server-provided `Retry-After`, capped at `max_delay_ms`.
    pub fn delay(&self, retry: u32, retry_after: Option<Duration>) -> Duration {
        let exp = retry.saturating_sub(1).min(32) as i32;
        let backoff = self.initial_delay_ms as f64 * self.multiplier.max(1.0).powi(exp);
        let mut ms = backoff.min(self.max_delay_ms as f64) as u64;
        if let Some(hint) = retry_after {
            ms = ms.max(hint.as_millis() as u64).min(self.max_delay_ms);
        }
        Duration::from_millis(ms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubles_until_cap() {
        let p = RetryPolicy {
            max_retries: 10,
            initial_delay_ms: 100,
            max_delay_ms: 1000,
            multiplier: 2.0,
        };
        let delays: Vec<u64> = (1..=6).map(|r| p.delay(r, None).as_millis() as u64).collect();
        assert_eq!(delays, vec![100, 200, 400, 800, 1000, 1000]);
        assert_eq!(p.delay(1, Some(Duration::from_millis(700))), Duration::from_millis(700));
        assert_eq!(p.delay(1, Some(Duration::from_secs(30))), Duration::from_millis(1000));
    }
}
