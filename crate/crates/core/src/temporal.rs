//! Temporal units (matrix columns).
//!
//! Day units follow local midnights of the configured zone, so a DST
//! transition day is 23 or 25 hours long. Hour units are fixed 3600 s steps
//! from local midnight of the start date.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    #[default]
    Day,
    Hour,
}

impl FromStr for TimeUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "day" | "days" | "daily" => Ok(TimeUnit::Day),
            "hour" | "hours" | "hourly" => Ok(TimeUnit::Hour),
            other => Err(Error::Config(format!("unknown temporal unit '{other}'"))),
        }
    }
}

impl fmt::Display for TimeUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeUnit::Day => f.write_str("day"),
            TimeUnit::Hour => f.write_str("hour"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalSpec {
    pub start: NaiveDate,
    pub num_units: usize,
    #[serde(default)]
    pub unit: TimeUnit,
    #[serde(with = "tz_name")]
    pub timezone: Tz,
}

impl TemporalSpec {
    pub fn new(start: NaiveDate, num_units: usize, unit: TimeUnit, timezone: Tz) -> Result<Self> {
        let spec = TemporalSpec {
            start,
            num_units,
            unit,
            timezone,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn daily(start: NaiveDate, num_units: usize, timezone: Tz) -> Result<Self> {
        Self::new(start, num_units, TimeUnit::Day, timezone)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_units == 0 {
            return Err(Error::Config(
                "temporal window needs at least one unit".into(),
            ));
        }
        self.window_start()?;
        Ok(())
    }

    /// Instant of local midnight at the start date.
    pub fn window_start(&self) -> Result<DateTime<Utc>> {
        let midnight = self.start.and_hms_opt(0, 0, 0).expect("midnight exists");
        self.timezone
            .from_local_datetime(&midnight)
            .earliest()
            .map(|t| t.with_timezone(&Utc))
            .ok_or_else(|| {
                Error::Config(format!(
                    "local midnight of {} does not exist in {}",
                    self.start, self.timezone
                ))
            })
    }

    /// Column index of `instant`, or `None` outside the window.
    pub fn unit_of(&self, instant: DateTime<Utc>) -> Option<usize> {
        let index = match self.unit {
            TimeUnit::Day => {
                let local = instant.with_timezone(&self.timezone).date_naive();
                (local - self.start).num_days()
            }
            TimeUnit::Hour => {
                let start = self.window_start().ok()?;
                (instant - start).num_seconds().div_euclid(3600)
            }
        };
        (index >= 0 && (index as usize) < self.num_units).then_some(index as usize)
    }

    /// Human-readable label of column `j`, safe for file names.
    pub fn label(&self, j: usize) -> String {
        match self.unit {
            TimeUnit::Day => (self.start + Duration::days(j as i64))
                .format("%Y-%m-%d")
                .to_string(),
            TimeUnit::Hour => {
                let start = self.window_start().unwrap_or_default();
                (start + Duration::hours(j as i64))
                    .with_timezone(&self.timezone)
                    .format("%Y-%m-%dT%H%z")
                    .to_string()
            }
        }
    }
}

pub(crate) mod tz_name {
    use chrono_tz::Tz;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(tz: &Tz, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(tz.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Tz, D::Error> {
        let name = String::deserialize(d)?;
        name.parse::<Tz>().map_err(serde::de::Error::custom)
    }
}

pub fn parse_timezone(name: &str) -> Result<Tz> {
    name.parse::<Tz>()
        .map_err(|_| Error::Config(format!("unknown timezone '{name}'")))
}
