use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use tokio::sync::Notify;

use crate::model::RateLimitPolicy;

/// How long a waiter sleeps between re-checks while a probe is outstanding.
const PROBE_POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateDecision {
    Proceed,
    Wait(Duration),
}

/// Pure gate on the most recently observed headers.
pub fn rate_limit_gate(policy: &RateLimitPolicy, remaining: Option<u64>, retry_after: Option<Duration>) -> GateDecision {
    match remaining {
        Some(r) if r <= policy.pause_threshold => GateDecision::Wait(retry_after.unwrap_or(policy.default_pause)),
        _ => GateDecision::Proceed,
    }
}

#[derive(Debug, Default)]
struct GateState {
    /// Requests we may still send in this window; `None` until a response reports it.
    budget: Option<i64>,
    paused_until: Option<Instant>,
    in_flight: u32,
}

/// Rate-limit state shared by every caller using one credential.
#[derive(Debug)]
pub struct RateGate {
    policy: RateLimitPolicy,
    state: Mutex<GateState>,
    notify: Notify,
}

/// Held while a request is outstanding.
#[derive(Debug)]
pub struct RatePermit {
    gate: Arc<RateGate>,
}

impl Drop for RatePermit {
    fn drop(&mut self) {
        self.gate.state.lock().in_flight -= 1;
        self.gate.notify.notify_waiters();
    }
}

/// Response headers relevant to the gate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RateObservation {
    pub status: u16,
    pub remaining: Option<u64>,
    pub retry_after: Option<Duration>,
    pub reset: Option<Duration>,
}

impl RateGate {
    pub fn new(policy: RateLimitPolicy) -> Arc<Self> {
        Arc::new(RateGate { policy, state: Mutex::new(GateState::default()), notify: Notify::new() })
    }

    pub fn policy(&self) -> &RateLimitPolicy {
        &self.policy
    }

    /// Wait until a request may be sent without exceeding the quota.
    pub async fn acquire(self: &Arc<Self>) -> RatePermit {
        loop {
            let wait = {
                let mut s = self.state.lock();
                let now = Instant::now();
                if let Some(until) = s.paused_until {
                    if now >= until {
                        s.paused_until = None;
                        s.budget = None;
                    }
                }
                match (s.paused_until, s.budget) {
                    (Some(until), _) => until - now,
                    (None, None) if s.in_flight == 0 => {
                        s.in_flight += 1;
                        return RatePermit { gate: self.clone() };
                    }
                    (None, None) => PROBE_POLL,
                    (None, Some(b)) if b > self.policy.pause_threshold as i64 => {
                        s.budget = Some(b - 1);
                        s.in_flight += 1;
                        return RatePermit { gate: self.clone() };
                    }
                    (None, Some(_)) if s.in_flight > 0 => PROBE_POLL,
                    (None, Some(_)) => {
                        let d = self.policy.default_pause;
                        s.paused_until = Some(now + d);
                        d
                    }
                }
            };
            let notified = self.notify.notified();
            let _ = tokio::time::timeout(wait, notified).await;
        }
    }

    /// Fold one response into the shared estimate. Call while still holding the permit.
    pub fn observe(&self, obs: RateObservation) {
        let mut s = self.state.lock();
        let others = i64::from(s.in_flight.saturating_sub(1));
        let window = obs.retry_after.or(obs.reset).unwrap_or(self.policy.default_pause);
        if obs.status == 429 {
            s.budget = Some(0);
            s.paused_until = Some(Instant::now() + window);
        } else if let Some(r) = obs.remaining {
            let estimate = r as i64 - others;
            s.budget = Some(s.budget.map_or(estimate, |b| b.min(estimate)));
            if let GateDecision::Wait(_) = rate_limit_gate(&self.policy, Some(r), None) {
                let until = Instant::now() + window;
                s.paused_until = Some(s.paused_until.map_or(until, |u| u.max(until)));
            }
        }
        drop(s);
        self.notify.notify_waiters();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RateKey {
    pub backend: String,
    pub credential: String,
    pub principal: Option<String>,
}

/// All gates of one engine, created on first use.
#[derive(Debug, Default)]
pub struct RateRegistry {
    gates: Mutex<HashMap<RateKey, Arc<RateGate>>>,
}

impl RateRegistry {
    pub fn gate(&self, key: RateKey, policy: &RateLimitPolicy) -> Arc<RateGate> {
        self.gates.lock().entry(key).or_insert_with(|| RateGate::new(policy.clone())).clone()
    }
}
