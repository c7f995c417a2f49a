use std::time::{Duration, SystemTime};

use rand::Rng;
use serde::Serialize;

use crate::model::{ErrorPolicy, RetryPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Success,
    Retryable,
    Terminal,
}

pub fn classify_response(policy: &ErrorPolicy, status: u16) -> Classification {
    if (200..300).contains(&status) {
        Classification::Success
    } else if policy.retryable_statuses.contains(&status) {
        Classification::Retryable
    } else if policy.terminal_statuses.contains(&status) {
        Classification::Terminal
    } else if status == 429 {
        Classification::Retryable
    } else {
        Classification::Terminal
    }
}

/// Upper bound of the wait after failed attempt `attempt` (1-based).
pub fn backoff_bound(retry: &RetryPolicy, attempt: u32) -> Duration {
    let exp = attempt.saturating_sub(1).min(1024) as i32;
    let secs = retry.base_delay.as_secs_f64() * retry.multiplier.powi(exp);
    let max = retry.max_delay.as_secs_f64();
    if !secs.is_finite() || secs >= max {
        retry.max_delay
    } else {
        Duration::from_secs_f64(secs.max(0.0))
    }
}

/// Full-jitter delay drawn uniformly from `[0, bound]`.
pub fn jittered<R: Rng + ?Sized>(bound: Duration, rng: &mut R) -> Duration {
    if bound.is_zero() {
        return bound;
    }
    Duration::from_secs_f64(rng.gen_range(0.0..=bound.as_secs_f64()))
}

/// Wait before the next attempt. A server-sent `Retry-After` is honored exactly.
pub fn backoff_delay(retry: &RetryPolicy, attempt: u32, retry_after: Option<Duration>) -> Duration {
    match retry_after {
        Some(d) => d,
        None => jittered(backoff_bound(retry, attempt), &mut rand::thread_rng()),
    }
}

/// Parse a `Retry-After` value given as delta-seconds or an HTTP-date.
pub fn parse_retry_after(value: &str, now: SystemTime) -> Option<Duration> {
    let value = value.trim();
    if let Ok(secs) = value.parse::<u64>() {
        return Some(Duration::from_secs(secs));
    }
    if let Ok(secs) = value.parse::<f64>() {
        return (secs.is_finite() && secs >= 0.0).then(|| Duration::from_secs_f64(secs));
    }
    let at = httpdate::parse_http_date(value).ok()?;
    Some(at.duration_since(now).unwrap_or(Duration::ZERO))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn policy(retryable: &[u16], terminal: &[u16]) -> ErrorPolicy {
        ErrorPolicy {
            retryable_statuses: retryable.iter().copied().collect(),
            terminal_statuses: terminal.iter().copied().collect(),
            ..ErrorPolicy::default()
        }
    }

    #[test]
    fn classification_examples() {
        let p = ErrorPolicy::default();
        assert_eq!(classify_response(&p, 200), Classification::Success);
        assert_eq!(classify_response(&p, 204), Classification::Success);
        assert_eq!(classify_response(&p, 429), Classification::Retryable);
        assert_eq!(classify_response(&p, 503), Classification::Retryable);
        assert_eq!(classify_response(&p, 500), Classification::Terminal);
        assert_eq!(classify_response(&policy(&[], &[404]), 404), Classification::Terminal);
        assert_eq!(classify_response(&policy(&[500], &[]), 500), Classification::Retryable);
        assert_eq!(classify_response(&policy(&[], &[429]), 429), Classification::Terminal);
    }

    #[test]
    fn bound_examples() {
        let r = RetryPolicy::default();
        assert_eq!(backoff_bound(&r, 1), Duration::from_secs(1));
        assert_eq!(backoff_bound(&r, 3), Duration::from_secs(4));
        assert_eq!(backoff_bound(&r, 10), Duration::from_secs(30));
        assert_eq!(backoff_delay(&r, 3, Some(Duration::from_secs(7))), Duration::from_secs(7));
    }

    #[test]
    fn retry_after_forms() {
        let now = SystemTime::UNIX_EPOCH + Duration::from_secs(1_000_000_000);
        assert_eq!(parse_retry_after("7", now), Some(Duration::from_secs(7)));
        let later = httpdate::fmt_http_date(now + Duration::from_secs(12));
        assert_eq!(parse_retry_after(&later, now), Some(Duration::from_secs(12)));
        let earlier = httpdate::fmt_http_date(now - Duration::from_secs(12));
        assert_eq!(parse_retry_after(&earlier, now), Some(Duration::ZERO));
        assert_eq!(parse_retry_after("soon", now), None);
    }

    proptest! {
        #[test]
        fn bound_is_min_formula(base_ms in 1u64..5_000, mult in 1.0f64..4.0, attempt in 1u32..20, max_ms in 1u64..60_000) {
            let r = RetryPolicy {
                max_attempts: 30,
                base_delay: Duration::from_millis(base_ms),
                multiplier: mult,
                max_delay: Duration::from_millis(max_ms),
            };
            let expected = (base_ms as f64 * mult.powi(attempt as i32 - 1)).min(max_ms as f64);
            let got = backoff_bound(&r, attempt).as_secs_f64() * 1000.0;
            prop_assert!((got - expected).abs() < 1e-3 * expected.max(1.0));
            let d = backoff_delay(&r, attempt, None);
            prop_assert!(d <= backoff_bound(&r, attempt));
        }

        #[test]
        fn only_2xx_succeed(status in 100u16..600) {
            let c = classify_response(&ErrorPolicy::default(), status);
            prop_assert_eq!(c == Classification::Success, (200..300).contains(&status));
        }
    }
}
