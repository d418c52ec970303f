//! Engine time source. Real runs use the wall clock; deterministic runs and
//! tests drive a virtual clock by hand.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

/// Manually advanced clock with microsecond resolution. Cloning shares the
/// underlying time, so a test can hold one handle while the engine holds
/// another.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock {
    micros: Arc<AtomicU64>,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> f64 {
        self.micros.load(Ordering::SeqCst) as f64 / 1e6
    }

    pub fn advance(&self, seconds: f64) {
        assert!(seconds >= 0.0, "time cannot move backwards");
        self.micros
            .fetch_add((seconds * 1e6).round() as u64, Ordering::SeqCst);
    }
}

/// The engine's clock: wall time since engine start, or a shared virtual
/// clock.
#[derive(Debug, Clone)]
pub enum Clock {
    Real(Instant),
    Virtual(VirtualClock),
}

impl Clock {
    pub fn real() -> Self {
        Clock::Real(Instant::now())
    }

    /// Seconds since the engine started (real) or since tick zero (virtual).
    pub fn now(&self) -> f64 {
        match self {
            Clock::Real(start) => start.elapsed().as_secs_f64(),
            Clock::Virtual(v) => v.now(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_clock_advances_shared() {
        let clock = VirtualClock::new();
        let handle = clock.clone();
        assert_eq!(clock.now(), 0.0);
        handle.advance(1.5);
        assert_eq!(clock.now(), 1.5);
        clock.advance(0.25);
        assert_eq!(handle.now(), 1.75);
    }

    #[test]
    fn real_clock_moves_forward() {
        let clock = Clock::real();
        let a = clock.now();
        let b = clock.now();
        assert!(b >= a);
    }
}
