use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use rand::Rng;

use super::ClientError;

/// Exponential backoff: attempt `i` (0-based) failing waits `base_delay * 2^i`
/// before the next try. With jitter the wait is drawn from `[delay/2, delay]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, base_delay: Duration::from_millis(250), jitter: true }
    }
}

impl RetryPolicy {
    /// No waiting between attempts; used by tests and offline runs.
    pub fn immediate(attempts: u32) -> Self {
        RetryPolicy { attempts, base_delay: Duration::ZERO, jitter: false }
    }

    pub fn delay(&self, attempt: u32) -> Duration {
        let full = self.base_delay.saturating_mul(1u32 << attempt.min(16));
        if self.jitter && !full.is_zero() {
            let nanos = full.as_nanos() as u64;
            Duration::from_nanos(rand::thread_rng().gen_range(nanos / 2..=nanos))
        } else {
            full
        }
    }

    pub fn run<T>(&self, mut f: impl FnMut() -> Result<T, ClientError>) -> Result<T, ClientError> {
        let attempts = self.attempts.max(1);
        let mut attempt = 0;
        loop {
            match f() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt + 1 < attempts => {
                    thread::sleep(self.delay(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Counting semaphore bounding concurrent remote calls.
#[derive(Debug)]
pub struct InFlightLimiter {
    max: usize,
    current: Mutex<usize>,
    released: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a InFlightLimiter,
}

impl InFlightLimiter {
    pub fn new(max: usize) -> Self {
        InFlightLimiter { max: max.max(1), current: Mutex::new(0), released: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut current = self.current.lock().unwrap_or_else(|e| e.into_inner());
        while *current >= self.max {
            current = self.released.wait(current).unwrap_or_else(|e| e.into_inner());
        }
        *current += 1;
        Permit { limiter: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut current = self.limiter.current.lock().unwrap_or_else(|e| e.into_inner());
        *current -= 1;
        self.limiter.released.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn backoff_doubles_without_jitter() {
        let p = RetryPolicy { jitter: false, ..Default::default() };
        assert_eq!(p.delay(0), Duration::from_millis(250));
        assert_eq!(p.delay(1), Duration::from_millis(500));
        assert_eq!(p.delay(2), Duration::from_millis(1000));
    }

    #[test]
    fn jitter_stays_in_band() {
        let p = RetryPolicy::default();
        for _ in 0..50 {
            let d = p.delay(1);
            assert!(d >= Duration::from_millis(250) && d <= Duration::from_millis(500));
        }
    }

    #[test]
    fn retries_transport_errors_up_to_limit() {
        let calls = AtomicUsize::new(0);
        let r: Result<(), _> = RetryPolicy::immediate(3).run(|| {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(ClientError::Transport("down".into()))
        });
        assert!(r.is_err());
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn succeeds_after_transient_failure() {
        let calls = AtomicUsize::new(0);
        let r = RetryPolicy::immediate(3).run(|| {
            if calls.fetch_add(1, Ordering::SeqCst) == 0 {
                Err(ClientError::Transport("blip".into()))
            } else {
                Ok(7)
            }
        });
        assert_eq!(r.unwrap(), 7);
    }

    #[test]
    fn protocol_errors_are_not_retried() {
        let calls = AtomicUsize::new(0);
        let _ = RetryPolicy::immediate(3).run::<()>(|| {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(ClientError::Protocol { message: "bad".into(), raw: "{".into() })
        });
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn limiter_bounds_concurrency() {
        let limiter = InFlightLimiter::new(2);
        let current = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    let _p = limiter.acquire();
                    let now = current.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    thread::sleep(Duration::from_millis(5));
                    current.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
