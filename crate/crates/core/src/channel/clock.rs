use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

/// Monotonic time measured from an origin fixed at construction.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
    fn sleep_until(&self, t: Duration);
}

impl<C: Clock + ?Sized> Clock for Arc<C> {
    fn now(&self) -> Duration {
        (**self).now()
    }

    fn sleep_until(&self, t: Duration) {
        (**self).sleep_until(t)
    }
}

impl<C: Clock + ?Sized> Clock for &C {
    fn now(&self) -> Duration {
        (**self).now()
    }

    fn sleep_until(&self, t: Duration) {
        (**self).sleep_until(t)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }

    pub fn origin(&self) -> Instant {
        self.origin
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep_until(&self, t: Duration) {
        let now = self.now();
        if t > now {
            std::thread::sleep(t - now);
        }
    }
}

/// Simulated time in whole microseconds; sleeping advances it instantly.
/// Clones share the same timeline.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock {
    micros: Arc<AtomicU64>,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    /// Moves time forward to `t`; never moves it backwards.
    pub fn advance_to(&self, t: Duration) {
        self.micros
            .fetch_max(t.as_micros() as u64, Ordering::SeqCst);
    }

    pub fn advance_by(&self, d: Duration) {
        self.micros
            .fetch_add(d.as_micros() as u64, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Duration {
        Duration::from_micros(self.micros.load(Ordering::SeqCst))
    }

    fn sleep_until(&self, t: Duration) {
        self.advance_to(t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_clock_is_monotone_and_shared() {
        let a = VirtualClock::new();
        let b = a.clone();
        a.sleep_until(Duration::from_millis(5));
        assert_eq!(b.now(), Duration::from_millis(5));
        b.advance_to(Duration::from_millis(1));
        assert_eq!(a.now(), Duration::from_millis(5));
        b.advance_by(Duration::from_micros(7));
        assert_eq!(a.now(), Duration::from_micros(5007));
    }

    #[test]
    fn system_clock_sleeps() {
        let c = SystemClock::new();
        c.sleep_until(Duration::from_millis(3));
        assert!(c.now() >= Duration::from_millis(3));
    }
}
