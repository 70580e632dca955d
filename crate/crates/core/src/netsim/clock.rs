//! Time sources. Simulation code reads time only through [`Clock`].

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    RealTime,
    VirtualTime,
}

pub trait Clock {
    fn mode(&self) -> ClockMode;
    /// Time since the clock started.
    fn now(&self) -> Duration;
}

/// Advances only when the event loop moves it.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock {
    now: Duration,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    /// Moves to `t`. Time never runs backwards; an earlier `t` is ignored.
    pub fn advance_to(&mut self, t: Duration) {
        if t > self.now {
            self.now = t;
        }
    }
}

impl Clock for VirtualClock {
    fn mode(&self) -> ClockMode {
        ClockMode::VirtualTime
    }

    fn now(&self) -> Duration {
        self.now
    }
}

#[derive(Debug, Clone)]
pub struct RealClock {
    start: Instant,
}

impl RealClock {
    pub fn start() -> Self {
        Self {
            start: Instant::now(),
        }
    }
}

impl Clock for RealClock {
    fn mode(&self) -> ClockMode {
        ClockMode::RealTime
    }

    fn now(&self) -> Duration {
        self.start.elapsed()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_clock_is_monotone() {
        let mut c = VirtualClock::new();
        c.advance_to(Duration::from_millis(5));
        c.advance_to(Duration::from_millis(3));
        assert_eq!(c.now(), Duration::from_millis(5));
        assert_eq!(c.mode(), ClockMode::VirtualTime);
    }

    #[test]
    fn real_clock_moves() {
        let c = RealClock::start();
        let a = c.now();
        std::thread::sleep(Duration::from_millis(2));
        assert!(c.now() > a);
    }
}
