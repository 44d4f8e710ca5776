//! Request pacing with an injectable clock so tests never sleep for real.

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

pub trait Clock: Send + Sync {
    fn now(&self) -> Instant;
    fn sleep(&self, d: Duration);
    /// Seconds since the Unix epoch; fixtures pin this to a constant.
    fn unix_timestamp(&self) -> u64;
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Instant {
        Instant::now()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }

    fn unix_timestamp(&self) -> u64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    }
}

/// Test clock that advances instantly on sleep and records each sleep call.
pub struct ManualClock {
    base: Instant,
    elapsed: Mutex<Duration>,
    slept: Mutex<Vec<Duration>>,
}

impl Default for ManualClock {
    fn default() -> Self {
        ManualClock {
            base: Instant::now(),
            elapsed: Mutex::new(Duration::ZERO),
            slept: Mutex::new(Vec::new()),
        }
    }
}

impl ManualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.slept.lock().unwrap().clone()
    }

    pub fn total_slept(&self) -> Duration {
        self.slept.lock().unwrap().iter().sum()
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Instant {
        self.base + *self.elapsed.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        *self.elapsed.lock().unwrap() += d;
        self.slept.lock().unwrap().push(d);
    }

    fn unix_timestamp(&self) -> u64 {
        0
    }
}

/// Enforces a minimum interval between acquisitions, i.e. a requests-per-second
/// budget. Shared per provider; safe for concurrent callers.
pub struct RateLimiter {
    min_interval: Duration,
    clock: Arc<dyn Clock>,
    last: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(requests_per_second: f64, clock: Arc<dyn Clock>) -> Self {
        let min_interval = if requests_per_second > 0.0 {
            Duration::from_secs_f64(1.0 / requests_per_second)
        } else {
            Duration::ZERO
        };
        RateLimiter {
            min_interval,
            clock,
            last: Mutex::new(None),
        }
    }

    /// Blocks until the next request fits the budget.
    pub fn acquire(&self) {
        if self.min_interval.is_zero() {
            return;
        }
        let mut last = self.last.lock().unwrap();
        let now = self.clock.now();
        let ready_at = match *last {
            Some(prev) => prev + self.min_interval,
            None => now,
        };
        if ready_at > now {
            self.clock.sleep(ready_at - now);
            *last = Some(ready_at);
        } else {
            *last = Some(now);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn acquisitions_are_spaced_at_least_one_interval() {
        let clock = Arc::new(ManualClock::new());
        let limiter = RateLimiter::new(4.0, clock.clone());
        let mut stamps = Vec::new();
        for _ in 0..10 {
            limiter.acquire();
            stamps.push(clock.now());
        }
        for pair in stamps.windows(2) {
            assert!(pair[1] - pair[0] >= Duration::from_millis(250));
        }
    }

    #[test]
    fn unlimited_budget_never_sleeps() {
        let clock = Arc::new(ManualClock::new());
        let limiter = RateLimiter::new(0.0, clock.clone());
        for _ in 0..5 {
            limiter.acquire();
        }
        assert!(clock.sleeps().is_empty());
    }
}
