//! Time sources and local-time schedules.
//!
//! All timestamps are UTC internally. Daily firings (digests, reminders,
//! nightly jobs) are expressed as local wall-clock times in the deployment
//! zone, which is a fixed UTC offset.

use std::sync::{Arc, Mutex};

use chrono::{DateTime, Duration, FixedOffset, NaiveDate, NaiveTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

pub type Timestamp = DateTime<Utc>;

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        Utc::now()
    }
}

/// Deterministic clock that only moves when told to. Resolution is one
/// second; sub-second parts are dropped.
#[derive(Clone, Debug)]
pub struct VirtualClock {
    now: Arc<Mutex<Timestamp>>,
}

impl VirtualClock {
    pub fn new(start: Timestamp) -> Self {
        Self {
            now: Arc::new(Mutex::new(truncate_to_second(start))),
        }
    }

    pub fn advance(&self, by: Duration) -> Timestamp {
        let mut now = self.now.lock().expect("clock lock");
        *now = truncate_to_second(*now + by);
        *now
    }

    /// Move to `to`. Moving backwards is ignored.
    pub fn set(&self, to: Timestamp) -> Timestamp {
        let mut now = self.now.lock().expect("clock lock");
        let to = truncate_to_second(to);
        if to > *now {
            *now = to;
        }
        *now
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Timestamp {
        *self.now.lock().expect("clock lock")
    }
}

fn truncate_to_second(t: Timestamp) -> Timestamp {
    Utc.timestamp_opt(t.timestamp(), 0).single().unwrap_or(t)
}

/// The deployment's local time zone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LocalZone(pub FixedOffset);

impl LocalZone {
    pub fn utc() -> Self {
        Self(FixedOffset::east_opt(0).expect("zero offset"))
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("utc") || s == "Z" {
            return Ok(Self::utc());
        }
        let (sign, rest) = match s.as_bytes().first() {
            Some(b'+') => (1, &s[1..]),
            Some(b'-') => (-1, &s[1..]),
            _ => return Err(format!("timezone must look like +05:30, got {s:?}")),
        };
        let (h, m) = rest
            .split_once(':')
            .ok_or_else(|| format!("timezone must look like +05:30, got {s:?}"))?;
        let h: i32 = h.parse().map_err(|_| format!("bad hour in {s:?}"))?;
        let m: i32 = m.parse().map_err(|_| format!("bad minute in {s:?}"))?;
        if h > 14 || m > 59 {
            return Err(format!("offset out of range: {s:?}"));
        }
        FixedOffset::east_opt(sign * (h * 3600 + m * 60))
            .map(Self)
            .ok_or_else(|| format!("offset out of range: {s:?}"))
    }

    pub fn local(&self, t: Timestamp) -> DateTime<FixedOffset> {
        t.with_timezone(&self.0)
    }

    pub fn local_date(&self, t: Timestamp) -> NaiveDate {
        self.local(t).date_naive()
    }

    /// The UTC instant of local `time` on local `date`.
    pub fn at(&self, date: NaiveDate, time: NaiveTime) -> Timestamp {
        self.0
            .from_local_datetime(&date.and_time(time))
            .single()
            .expect("fixed offsets have no gaps")
            .with_timezone(&Utc)
    }

    /// Every instant in `(after, until]` whose local time of day is one of
    /// `times`, in chronological order.
    pub fn slots_between(
        &self,
        after: Timestamp,
        until: Timestamp,
        times: &[NaiveTime],
    ) -> Vec<Timestamp> {
        let mut out = Vec::new();
        if until <= after {
            return out;
        }
        let mut date = self.local_date(after);
        let last = self.local_date(until);
        while date <= last {
            let mut day: Vec<Timestamp> = times.iter().map(|t| self.at(date, *t)).collect();
            day.sort();
            out.extend(day.into_iter().filter(|s| *s > after && *s <= until));
            date = date.succ_opt().expect("date in range");
        }
        out
    }

    /// First slot strictly after `after`.
    pub fn next_slot(&self, after: Timestamp, times: &[NaiveTime]) -> Option<Timestamp> {
        if times.is_empty() {
            return None;
        }
        self.slots_between(after, after + Duration::days(2), times)
            .into_iter()
            .next()
    }
}

impl TryFrom<String> for LocalZone {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::parse(&s)
    }
}

impl From<LocalZone> for String {
    fn from(z: LocalZone) -> String {
        z.0.to_string()
    }
}

pub fn parse_clock_time(s: &str) -> Result<NaiveTime, String> {
    NaiveTime::parse_from_str(s.trim(), "%H:%M")
        .or_else(|_| NaiveTime::parse_from_str(s.trim(), "%H:%M:%S"))
        .map_err(|e| format!("bad time of day {s:?}: {e}"))
}

pub fn parse_duration(s: &str) -> Result<Duration, String> {
    let std = humantime::parse_duration(s.trim()).map_err(|e| format!("bad duration {s:?}: {e}"))?;
    Duration::from_std(std).map_err(|e| e.to_string())
}

/// Serde adapters for human-readable durations such as `3h` or `90m`.
pub mod serde_duration {
    use chrono::Duration;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        let std = d.to_std().map_err(serde::ser::Error::custom)?;
        s.serialize_str(&humantime::format_duration(std).to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_duration(&s).map_err(serde::de::Error::custom)
    }
}

/// Serde adapters for a single `HH:MM` time.
pub mod serde_time {
    use chrono::NaiveTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &NaiveTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.format("%H:%M").to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveTime, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_clock_time(&s).map_err(serde::de::Error::custom)
    }
}

/// Serde adapters for lists of `HH:MM` times.
pub mod serde_times {
    use chrono::NaiveTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(times: &[NaiveTime], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(times.iter().map(|t| t.format("%H:%M").to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<NaiveTime>, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter()
            .map(|s| super::parse_clock_time(s).map_err(serde::de::Error::custom))
            .collect()
    }
}
