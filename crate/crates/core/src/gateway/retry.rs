use rand::Rng;
use std::time::Duration;

/// Exponential backoff with jitter for rate-limited or transiently failing calls.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts including the first one.
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    /// Fraction of the nominal delay added as uniform random jitter.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(30),
            jitter: 0.25,
        }
    }
}

impl RetryPolicy {
    pub fn no_retry() -> Self {
        RetryPolicy { max_attempts: 1, ..Self::default() }
    }

    /// Nominal delay after the given failed attempt (1-based), before jitter.
    pub fn nominal_delay(&self, failed_attempt: u32) -> Duration {
        let exp = failed_attempt.saturating_sub(1).min(20);
        self.base_delay.saturating_mul(1 << exp).min(self.max_delay)
    }

    pub fn delay(&self, failed_attempt: u32, retry_after: Option<Duration>) -> Duration {
        let nominal = self.nominal_delay(failed_attempt);
        let jitter = if self.jitter > 0.0 {
            nominal.mul_f64(rand::rng().random_range(0.0..self.jitter))
        } else {
            Duration::ZERO
        };
        let backoff = nominal + jitter;
        match retry_after {
            Some(hint) => backoff.max(hint.min(self.max_delay)),
            None => backoff,
        }
    }
}
