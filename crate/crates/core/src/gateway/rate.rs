use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Sliding-window limiter: at most `limit` acquisitions in any window.
#[derive(Debug)]
pub struct RateLimiter {
    limit: usize,
    window: Duration,
    stamps: Mutex<VecDeque<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(limit: u32) -> Self {
        RateLimiter::new(limit as usize, Duration::from_secs(60))
    }

    pub fn new(limit: usize, window: Duration) -> Self {
        assert!(limit > 0, "rate limit must be positive");
        RateLimiter { limit, window, stamps: Mutex::new(VecDeque::with_capacity(limit.min(4096))) }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn window(&self) -> Duration {
        self.window
    }

    /// Blocks until a slot is free in the current window, then takes it.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut stamps = self.stamps.lock().unwrap();
                let now = Instant::now();
                while stamps.front().is_some_and(|t| now.duration_since(*t) >= self.window) {
                    stamps.pop_front();
                }
                if stamps.len() < self.limit {
                    stamps.push_back(now);
                    return;
                }
                self.window - now.duration_since(stamps[0])
            };
            std::thread::sleep(wait);
        }
    }
}
