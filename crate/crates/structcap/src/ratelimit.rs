//! Token-bucket rate limiting toward a chat backend.

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use structcap_core::chat::{BackendError, ChatBackend, ChatRequest};
use structcap_core::sampling::FrameSequence;

#[derive(Debug, Clone)]
pub struct TokenBucket {
    capacity: f64,
    per_second: f64,
    tokens: f64,
    last: Instant,
}

impl TokenBucket {
    /// Starts full. `per_second` must be positive.
    pub fn new(capacity: u32, per_second: f64, now: Instant) -> Self {
        assert!(per_second > 0.0 && per_second.is_finite(), "refill rate must be positive");
        let capacity = f64::from(capacity.max(1));
        Self {
            capacity,
            per_second,
            tokens: capacity,
            last: now,
        }
    }

    fn refill(&mut self, now: Instant) {
        let dt = now.saturating_duration_since(self.last).as_secs_f64();
        self.tokens = (self.tokens + dt * self.per_second).min(self.capacity);
        self.last = self.last.max(now);
    }

    /// Takes a token, or says how long until one is available.
    pub fn try_take(&mut self, now: Instant) -> Result<(), Duration> {
        self.refill(now);
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            Ok(())
        } else {
            Err(Duration::from_secs_f64((1.0 - self.tokens) / self.per_second))
        }
    }
}

/// Blocks until the shared bucket yields a token.
pub fn take(bucket: &Mutex<TokenBucket>) {
    loop {
        let wait = bucket.lock().expect("rate limiter").try_take(Instant::now());
        match wait {
            Ok(()) => return,
            Err(d) => std::thread::sleep(d),
        }
    }
}

/// Wraps a backend so every call first takes a token from a bucket that
/// may be shared with other workers.
pub struct RateLimited<B> {
    inner: B,
    bucket: Arc<Mutex<TokenBucket>>,
}

impl<B> RateLimited<B> {
    pub fn new(inner: B, bucket: Arc<Mutex<TokenBucket>>) -> Self {
        Self { inner, bucket }
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<B: ChatBackend> ChatBackend for RateLimited<B> {
    fn chat(&mut self, request: &ChatRequest) -> Result<String, BackendError> {
        take(&self.bucket);
        self.inner.chat(request)
    }

    fn register_clip(&mut self, clip: &FrameSequence) {
        self.inner.register_clip(clip)
    }
}

/// A backend shared between workers behind a mutex; each call holds the
/// lock for its duration. Useful for a single scripted mock whose ledger
/// must see every worker's calls.
pub struct Shared<B>(pub Arc<Mutex<B>>);

impl<B> Clone for Shared<B> {
    fn clone(&self) -> Self {
        Self(Arc::clone(&self.0))
    }
}

impl<B: ChatBackend> ChatBackend for Shared<B> {
    fn chat(&mut self, request: &ChatRequest) -> Result<String, BackendError> {
        self.0.lock().expect("shared backend").chat(request)
    }

    fn register_clip(&mut self, clip: &FrameSequence) {
        self.0.lock().expect("shared backend").register_clip(clip)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn burst_then_refill() {
        let t0 = Instant::now();
        let mut b = TokenBucket::new(2, 4.0, t0);
        assert!(b.try_take(t0).is_ok());
        assert!(b.try_take(t0).is_ok());
        let wait = b.try_take(t0).unwrap_err();
        assert!((wait.as_secs_f64() - 0.25).abs() < 1e-9);
        assert!(b.try_take(t0 + Duration::from_millis(250)).is_ok());
        // Refill never exceeds capacity.
        let later = t0 + Duration::from_secs(60);
        assert!(b.try_take(later).is_ok());
        assert!(b.try_take(later).is_ok());
        assert!(b.try_take(later).is_err());
    }
}
