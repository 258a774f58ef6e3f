//! Timestamp sources. Replay-equivalence tests rely on the fixed clock.

use std::sync::atomic::{AtomicI64, Ordering};

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};

pub trait Clock: Send + Sync {
    /// Current instant as ISO-8601 UTC text, second precision.
    fn now(&self) -> String;
}

pub fn format_instant(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> String {
        format_instant(Utc::now())
    }
}

/// Deterministic clock: starts at a fixed instant and advances one second per reading.
#[derive(Debug)]
pub struct FixedClock {
    next: AtomicI64,
}

impl FixedClock {
    pub fn starting_at(start: DateTime<Utc>) -> Self {
        Self {
            next: AtomicI64::new(start.timestamp()),
        }
    }

    pub fn parse(start: &str) -> Result<Self, chrono::ParseError> {
        let t = DateTime::parse_from_rfc3339(start)?.with_timezone(&Utc);
        Ok(Self::starting_at(t))
    }
}

impl Default for FixedClock {
    fn default() -> Self {
        Self::starting_at(Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap())
    }
}

impl Clock for FixedClock {
    fn now(&self) -> String {
        let secs = self.next.fetch_add(1, Ordering::SeqCst);
        format_instant(Utc.timestamp_opt(secs, 0).unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_clock_ticks() {
        let c = FixedClock::parse("2026-03-01T12:00:00Z").unwrap();
        assert_eq!(c.now(), "2026-03-01T12:00:00Z");
        assert_eq!(c.now(), "2026-03-01T12:00:01Z");
    }
}
