//! Trip CSV parsing.
//!
//! Every origin-destination row expands into two unit-weight points, one
//! for the pickup and one for the dropoff. Rows with a missing or
//! unparseable coordinate or datetime are skipped and counted.

use std::io::Read;

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};
use chrono_tz::Tz;
use csv::ByteRecord;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::MatrixAccumulator;

/// Rows parsed per parallel batch when streaming.
pub const DEFAULT_CHUNK_ROWS: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointRecord {
    pub longitude: f64,
    pub latitude: f64,
    pub timestamp: DateTime<Utc>,
    pub weight: u64,
}

/// Column mapping for trip files. Defaults follow the 2009 TLC yellow-cab layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TripSchema {
    pub pickup_longitude: String,
    pub pickup_latitude: String,
    pub pickup_datetime: String,
    pub dropoff_longitude: String,
    pub dropoff_latitude: String,
    pub dropoff_datetime: String,
    /// `chrono` format string. Formats with `%z` parse as offset-aware,
    /// everything else as local time in `timezone`.
    pub datetime_format: String,
    #[serde(with = "crate::temporal::tz_name")]
    pub timezone: Tz,
}

impl Default for TripSchema {
    fn default() -> Self {
        TripSchema {
            pickup_longitude: "Start_Lon".into(),
            pickup_latitude: "Start_Lat".into(),
            pickup_datetime: "Trip_Pickup_DateTime".into(),
            dropoff_longitude: "End_Lon".into(),
            dropoff_latitude: "End_Lat".into(),
            dropoff_datetime: "Trip_Dropoff_DateTime".into(),
            datetime_format: "%Y-%m-%d %H:%M:%S".into(),
            timezone: chrono_tz::America::New_York,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IngestStats {
    pub rows_read: u64,
    pub rejected_rows: u64,
}

impl IngestStats {
    pub fn merge(&mut self, other: IngestStats) {
        self.rows_read += other.rows_read;
        self.rejected_rows += other.rejected_rows;
    }
}

#[derive(Debug, Clone)]
pub struct ParsedTrips {
    pub points: Vec<PointRecord>,
    pub stats: IngestStats,
}

/// Header positions of the six schema columns.
#[derive(Debug, Clone)]
struct RowParser<'a> {
    columns: [usize; 6],
    format: &'a str,
    offset_aware: bool,
    timezone: Tz,
}

impl<'a> RowParser<'a> {
    fn new(headers: &ByteRecord, schema: &'a TripSchema) -> Result<Self> {
        let names = [
            &schema.pickup_longitude,
            &schema.pickup_latitude,
            &schema.pickup_datetime,
            &schema.dropoff_longitude,
            &schema.dropoff_latitude,
            &schema.dropoff_datetime,
        ];
        let mut columns = [0usize; 6];
        for (slot, name) in columns.iter_mut().zip(names) {
            *slot = headers
                .iter()
                .position(|h| trim_ascii(h).eq_ignore_ascii_case(name.trim().as_bytes()))
                .ok_or_else(|| {
                    Error::Config(format!("trip schema column '{name}' not found in header"))
                })?;
        }
        let format = schema.datetime_format.as_str();
        Ok(RowParser {
            columns,
            format,
            offset_aware: format.contains("%z") || format.contains("%:z"),
            timezone: schema.timezone,
        })
    }

    fn parse(&self, row: &ByteRecord) -> Option<[PointRecord; 2]> {
        let [plon, plat, ptime, dlon, dlat, dtime] = self.columns;
        let pickup = self.point(row, plon, plat, ptime)?;
        let dropoff = self.point(row, dlon, dlat, dtime)?;
        Some([pickup, dropoff])
    }

    fn point(&self, row: &ByteRecord, lon: usize, lat: usize, time: usize) -> Option<PointRecord> {
        let longitude = parse_f64(row.get(lon)?)?;
        let latitude = parse_f64(row.get(lat)?)?;
        if !(-180.0..=180.0).contains(&longitude) || !(-90.0..=90.0).contains(&latitude) {
            return None;
        }
        let text = std::str::from_utf8(trim_ascii(row.get(time)?)).ok()?;
        let timestamp = if self.offset_aware {
            DateTime::parse_from_str(text, self.format)
                .ok()?
                .with_timezone(&Utc)
        } else {
            let naive = NaiveDateTime::parse_from_str(text, self.format).ok()?;
            // ambiguous fall-back hour resolves to the first occurrence;
            // spring-forward gap times are rejected
            self.timezone
                .from_local_datetime(&naive)
                .earliest()?
                .with_timezone(&Utc)
        };
        Some(PointRecord {
            longitude,
            latitude,
            timestamp,
            weight: 1,
        })
    }
}

fn trim_ascii(b: &[u8]) -> &[u8] {
    let start = b
        .iter()
        .position(|c| !c.is_ascii_whitespace())
        .unwrap_or(b.len());
    let end = b
        .iter()
        .rposition(|c| !c.is_ascii_whitespace())
        .map_or(start, |e| e + 1);
    &b[start..end]
}

fn parse_f64(b: &[u8]) -> Option<f64> {
    let s = std::str::from_utf8(trim_ascii(b)).ok()?;
    let v: f64 = s.parse().ok()?;
    v.is_finite().then_some(v)
}

fn csv_reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source)
}

/// Reads every trip row of `source` into memory as points.
pub fn parse_trip_records<R: Read>(source: R, schema: &TripSchema) -> Result<ParsedTrips> {
    let mut points = Vec::new();
    let stats = for_each_chunk(source, schema, DEFAULT_CHUNK_ROWS, |chunk| {
        points.extend_from_slice(chunk)
    })?;
    Ok(ParsedTrips { points, stats })
}

/// Streams `source` into `acc` in parallel batches of `chunk_rows` rows.
pub fn ingest_trips<R: Read>(
    source: R,
    schema: &TripSchema,
    acc: &mut MatrixAccumulator,
    chunk_rows: usize,
) -> Result<IngestStats> {
    let stats = for_each_chunk(source, schema, chunk_rows, |chunk| acc.add_points(chunk))?;
    acc.add_rejected_rows(stats.rejected_rows);
    Ok(stats)
}

fn for_each_chunk<R: Read>(
    source: R,
    schema: &TripSchema,
    chunk_rows: usize,
    mut sink: impl FnMut(&[PointRecord]),
) -> Result<IngestStats> {
    let mut reader = csv_reader(source);
    let headers = reader.byte_headers()?.clone();
    let parser = RowParser::new(&headers, schema)?;
    let chunk_rows = chunk_rows.max(1);
    let mut stats = IngestStats::default();
    let mut batch: Vec<ByteRecord> = Vec::with_capacity(chunk_rows);
    let mut points = Vec::with_capacity(2 * chunk_rows);
    loop {
        batch.clear();
        for _ in 0..chunk_rows {
            let mut rec = ByteRecord::new();
            if !reader.read_byte_record(&mut rec)? {
                break;
            }
            batch.push(rec);
        }
        if batch.is_empty() {
            break;
        }
        let parsed: Vec<Option<[PointRecord; 2]>> =
            batch.par_iter().map(|row| parser.parse(row)).collect();
        points.clear();
        for p in parsed {
            stats.rows_read += 1;
            match p {
                Some(pair) => points.extend_from_slice(&pair),
                None => stats.rejected_rows += 1,
            }
        }
        sink(&points);
        if batch.len() < chunk_rows {
            break;
        }
    }
    if stats.rejected_rows > 0 {
        log::warn!(
            "rejected {} of {} trip rows with malformed coordinates or datetimes",
            stats.rejected_rows,
            stats.rows_read
        );
    }
    Ok(stats)
}
