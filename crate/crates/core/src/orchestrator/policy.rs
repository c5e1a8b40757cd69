//! Request shaping: in-flight bound, retries, exponential backoff.

use std::time::Duration;

use rand::RngExt;

/// How hard to push the provider. The in-flight bound is a hard cap on
/// concurrently outstanding requests.
#[derive(Clone, Debug)]
pub struct RequestPolicy {
    pub max_in_flight: usize,
    pub max_retries: usize,
    pub backoff_initial: Duration,
    pub backoff_multiplier: f64,
    /// Relative jitter applied to each delay, e.g. 0.2 for +/-20%.
    pub backoff_jitter: f64,
    pub backoff_cap: Duration,
    pub timeout: Duration,
}

impl Default for RequestPolicy {
    fn default() -> Self {
        Self {
            max_in_flight: 20,
            max_retries: 3,
            backoff_initial: Duration::from_secs(1),
            backoff_multiplier: 2.0,
            backoff_jitter: 0.2,
            backoff_cap: Duration::from_secs(60),
            timeout: Duration::from_secs(60),
        }
    }
}

impl RequestPolicy {
    /// Delay before retry number `retry` (0-based), jittered.
    pub(crate) fn backoff_delay(&self, retry: usize) -> Duration {
        let base = self.backoff_initial.as_secs_f64() * self.backoff_multiplier.powi(retry as i32);
        let capped = base.min(self.backoff_cap.as_secs_f64());
        let jitter = if self.backoff_jitter > 0.0 {
            rand::rng().random_range(1.0 - self.backoff_jitter..=1.0 + self.backoff_jitter)
        } else {
            1.0
        };
        Duration::from_secs_f64((capped * jitter).max(0.0))
    }
}
