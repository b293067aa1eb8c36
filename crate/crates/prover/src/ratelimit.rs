//! Per-id token buckets.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Instant;

use puppy_core::crypto::AssetId;

use crate::config::RateLimitConfig;

pub struct RateLimiter {
    cfg: RateLimitConfig,
    buckets: Mutex<HashMap<AssetId, (f64, Instant)>>,
}

impl RateLimiter {
    pub fn new(cfg: RateLimitConfig) -> Self {
        Self {
            cfg,
            buckets: Mutex::new(HashMap::new()),
        }
    }

    /// Takes one token for `id` if available.
    pub fn allow(&self, id: &AssetId) -> bool {
        self.allow_at(id, Instant::now())
    }

    fn allow_at(&self, id: &AssetId, now: Instant) -> bool {
        let burst = self.cfg.burst as f64;
        let mut buckets = self.buckets.lock().unwrap();
        let (tokens, last) = buckets.entry(*id).or_insert((burst, now));
        let dt = now.saturating_duration_since(*last).as_secs_f64();
        *tokens = (*tokens + dt * self.cfg.per_second).min(burst);
        *last = now;
        if *tokens >= 1.0 {
            *tokens -= 1.0;
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    #[test]
    fn burst_then_refill() {
        let rl = RateLimiter::new(RateLimitConfig {
            burst: 3,
            per_second: 2.0,
        });
        let a = AssetId([1; 32]);
        let b = AssetId([2; 32]);
        let t0 = Instant::now();
        assert!((0..3).all(|_| rl.allow_at(&a, t0)));
        assert!(!rl.allow_at(&a, t0));
        assert!(rl.allow_at(&b, t0));
        assert!(rl.allow_at(&a, t0 + Duration::from_millis(500)));
        assert!(!rl.allow_at(&a, t0 + Duration::from_millis(600)));
        // Refill never exceeds the burst size.
        let later = t0 + Duration::from_secs(100);
        assert!((0..3).all(|_| rl.allow_at(&a, later)));
        assert!(!rl.allow_at(&a, later));
    }
}
