//! Whole-second UTC timestamps and injectable clocks.

use std::fmt;
use std::sync::atomic::{AtomicI64, Ordering};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Seconds since the Unix epoch, rendered as RFC 3339 UTC (`2003-03-19T20:30:53Z`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(i64);

impl Timestamp {
    pub const fn from_unix(secs: i64) -> Self {
        Self(secs)
    }

    pub fn unix(self) -> i64 {
        self.0
    }

    pub fn now() -> Self {
        Self(Utc::now().timestamp())
    }

    pub fn plus(self, secs: i64) -> Self {
        Self(self.0.saturating_add(secs))
    }

    pub fn minus(self, secs: i64) -> Self {
        Self(self.0.saturating_sub(secs))
    }

    pub fn to_rfc3339(self) -> String {
        DateTime::<Utc>::from_timestamp(self.0, 0)
            .unwrap_or(DateTime::<Utc>::MAX_UTC)
            .to_rfc3339_opts(SecondsFormat::Secs, true)
    }

    /// Parses the exact form produced by [`Timestamp::to_rfc3339`]; fractional
    /// seconds and non-`Z` offsets are rejected.
    pub fn parse_rfc3339(s: &str) -> Option<Self> {
        let dt = DateTime::parse_from_rfc3339(s).ok()?;
        let ts = Self(dt.timestamp());
        (ts.to_rfc3339() == s).then_some(ts)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_rfc3339())
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_rfc3339())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Timestamp::parse_rfc3339(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("bad RFC 3339 UTC timestamp {s:?}")))
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        Timestamp::now()
    }
}

/// A clock that only moves when told to.
#[derive(Debug)]
pub struct ManualClock(AtomicI64);

impl ManualClock {
    pub fn new(start: Timestamp) -> Self {
        Self(AtomicI64::new(start.unix()))
    }

    pub fn set(&self, t: Timestamp) {
        self.0.store(t.unix(), Ordering::SeqCst);
    }

    pub fn advance(&self, secs: i64) {
        self.0.fetch_add(secs, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Timestamp {
        Timestamp(self.0.load(Ordering::SeqCst))
    }
}

impl<C: Clock + ?Sized> Clock for std::sync::Arc<C> {
    fn now(&self) -> Timestamp {
        (**self).now()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rfc3339_seconds_utc() {
        let t = Timestamp::from_unix(1_048_105_853);
        assert_eq!(t.to_rfc3339(), "2003-03-19T20:30:53Z");
        assert_eq!(Timestamp::parse_rfc3339("2003-03-19T20:30:53Z"), Some(t));
        assert_eq!(Timestamp::parse_rfc3339("2003-03-19T20:30:53.5Z"), None);
        assert_eq!(Timestamp::parse_rfc3339("2003-03-19T12:30:53-08:00"), None);
    }

    #[test]
    fn manual_clock_moves_on_request() {
        let c = ManualClock::new(Timestamp::from_unix(100));
        c.advance(5);
        assert_eq!(c.now(), Timestamp::from_unix(105));
    }
}
