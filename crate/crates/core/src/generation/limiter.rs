use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Token bucket shared by all workers using one adapter.
#[derive(Debug)]
pub struct RateLimiter {
    rate: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    /// `rps <= 0` or non-finite disables limiting.
    pub fn new(rps: f64) -> Self {
        let capacity = rps.max(1.0);
        Self {
            rate: rps,
            capacity,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    pub fn unlimited(&self) -> bool {
        !(self.rate > 0.0 && self.rate.is_finite())
    }

    /// Blocks until one request may be issued.
    pub fn acquire(&self) {
        if self.unlimited() {
            return;
        }
        loop {
            let wait = {
                let mut guard = self.state.lock().expect("rate limiter poisoned");
                let (tokens, last) = &mut *guard;
                let now = Instant::now();
                *tokens = (*tokens + now.duration_since(*last).as_secs_f64() * self.rate).min(self.capacity);
                *last = now;
                if *tokens >= 1.0 {
                    *tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - *tokens) / self.rate)
            };
            std::thread::sleep(wait);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn throttles_after_burst() {
        let lim = RateLimiter::new(50.0);
        let start = Instant::now();
        for _ in 0..60 {
            lim.acquire();
        }
        // 50 burst tokens, then 10 more at 50/s.
        assert!(start.elapsed() >= Duration::from_millis(150), "{:?}", start.elapsed());
    }

    #[test]
    fn shared_across_threads() {
        let lim = Arc::new(RateLimiter::new(100.0));
        let start = Instant::now();
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let l = Arc::clone(&lim);
                std::thread::spawn(move || (0..40).for_each(|_| l.acquire()))
            })
            .collect();
        handles.into_iter().for_each(|h| h.join().unwrap());
        assert!(start.elapsed() >= Duration::from_millis(500));
    }

    #[test]
    fn zero_rate_is_unlimited() {
        let lim = RateLimiter::new(0.0);
        assert!(lim.unlimited());
        for _ in 0..10_000 {
            lim.acquire();
        }
    }
}
