//! File formats: the stay-record CSV, JSON-lines exports, friend lists,
//! feature matrices and JSON documents.

use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use trajsoc_core::{Instant, LatLon, PairFeatures, StayRecord, UserId};

pub const STAY_HEADER: [&str; 7] = [
    "ID",
    "Start time",
    "Start lat",
    "Start lon",
    "Stop time",
    "Stop lat",
    "Stop lon",
];
pub const FRIENDS_HEADER: [&str; 2] = ["user_a", "user_b"];
pub const FEATURES_HEADER: [&str; 9] = [
    "user_a", "user_b", "f_fre", "f_pop", "f_div", "f_int", "f_stay", "f_hol", "label",
];

const CSV_TIME: &str = "%d/%m/%Y %H:%M:%S";
const ISO_TIME: &str = "%Y-%m-%dT%H:%M:%SZ";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowFault {
    FieldCount(usize),
    MalformedTimestamp(String),
    MalformedNumber(String),
    CoordinateOutOfRange,
    InvertedInterval,
}

impl fmt::Display for RowFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowFault::FieldCount(n) => write!(f, "field_count ({n} fields, expected 7)"),
            RowFault::MalformedTimestamp(s) => write!(f, "malformed_timestamp ({s:?})"),
            RowFault::MalformedNumber(s) => write!(f, "malformed_number ({s:?})"),
            RowFault::CoordinateOutOfRange => f.write_str("coordinate_out_of_range"),
            RowFault::InvertedInterval => f.write_str("inverted_interval"),
        }
    }
}

/// A rejected data row; rows are numbered from 1 after the header.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("row {row}: {fault}")]
pub struct RowError {
    pub row: usize,
    pub fault: RowFault,
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unexpected header {found:?}, expected {expected:?}")]
    Header { found: Vec<String>, expected: Vec<String> },
    #[error(transparent)]
    Row(#[from] RowError),
    #[error("malformed CSV")]
    Csv(#[from] csv::Error),
    #[error("malformed JSON{}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Json {
        line: Option<usize>,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Abort on the first bad row.
    #[default]
    Strict,
    /// Drop bad rows and report them.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Parsed {
    pub records: Vec<StayRecord>,
    pub skipped: Vec<RowError>,
}

pub fn parse_timestamp(s: &str) -> Option<Instant> {
    NaiveDateTime::parse_from_str(s.trim(), CSV_TIME)
        .ok()
        .map(|t| t.and_utc().timestamp())
}

pub fn format_timestamp(t: Instant) -> String {
    DateTime::from_timestamp(t, 0)
        .expect("timestamp in range")
        .format(CSV_TIME)
        .to_string()
}

pub fn iso8601(t: Instant) -> String {
    DateTime::from_timestamp(t, 0)
        .expect("timestamp in range")
        .format(ISO_TIME)
        .to_string()
}

pub fn parse_iso8601(s: &str) -> Option<Instant> {
    DateTime::parse_from_rfc3339(s).ok().map(|t| t.timestamp())
}

fn parse_row(fields: &csv::StringRecord) -> Result<StayRecord, RowFault> {
    if fields.len() != STAY_HEADER.len() {
        return Err(RowFault::FieldCount(fields.len()));
    }
    let time =
        |i: usize| parse_timestamp(&fields[i]).ok_or_else(|| RowFault::MalformedTimestamp(fields[i].to_string()));
    let num = |i: usize| {
        fields[i]
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| RowFault::MalformedNumber(fields[i].to_string()))
    };
    let start_time = time(1)?;
    let start = LatLon {
        lat: num(2)?,
        lon: num(3)?,
    };
    let stop_time = time(4)?;
    let stop = LatLon {
        lat: num(5)?,
        lon: num(6)?,
    };
    if !start.is_valid() || !stop.is_valid() {
        return Err(RowFault::CoordinateOutOfRange);
    }
    if stop_time <= start_time {
        return Err(RowFault::InvertedInterval);
    }
    Ok(StayRecord {
        user_id: UserId(fields[0].trim().to_string()),
        start_time,
        stop_time,
        start,
        stop,
    })
}

pub fn parse_stays_from<R: Read>(input: R, mode: ParseMode) -> Result<Parsed, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut rows = rdr.records();
    let header = match rows.next() {
        Some(h) => h?,
        None => csv::StringRecord::new(),
    };
    let found: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    if found != STAY_HEADER {
        return Err(IoError::Header {
            found,
            expected: STAY_HEADER.iter().map(|s| s.to_string()).collect(),
        });
    }
    let mut out = Parsed::default();
    for (i, row) in rows.enumerate() {
        match parse_row(&row?) {
            Ok(r) => out.records.push(r),
            Err(fault) => {
                let err = RowError { row: i + 1, fault };
                match mode {
                    ParseMode::Strict => return Err(err.into()),
                    ParseMode::Skip => out.skipped.push(err),
                }
            }
        }
    }
    Ok(out)
}

/// Parses stay-record CSV text with the fixed header.
pub fn parse_stays(text: &str, mode: ParseMode) -> Result<Parsed, IoError> {
    parse_stays_from(text.as_bytes(), mode)
}

pub fn read_stays(path: &Path, mode: ParseMode) -> Result<Parsed, IoError> {
    parse_stays_from(open(path)?, mode)
}

pub fn write_stays_to<W: Write>(out: W, records: &[StayRecord]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STAY_HEADER)?;
    for r in records {
        w.write_record([
            r.user_id.0.clone(),
            format_timestamp(r.start_time),
            r.start.lat.to_string(),
            r.start.lon.to_string(),
            format_timestamp(r.stop_time),
            r.stop.lat.to_string(),
            r.stop.lon.to_string(),
        ])?;
    }
    w.flush().map_err(|e| IoError::Csv(e.into()))?;
    Ok(())
}

/// Serializes records in the input CSV format. Coordinates use the shortest
/// decimal form that parses back to the same `f64`.
pub fn stays_to_csv(records: &[StayRecord]) -> String {
    let mut buf = Vec::new();
    write_stays_to(&mut buf, records).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

pub fn write_stays(path: &Path, records: &[StayRecord]) -> Result<(), IoError> {
    write_stays_to(create(path)?, records)
}

/// One record of the JSON-lines export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayLine {
    pub user_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub member: Option<usize>,
    pub start_time: String,
    pub stop_time: String,
    pub start_lat: f64,
    pub start_lon: f64,
    pub stop_lat: f64,
    pub stop_lon: f64,
}

impl StayLine {
    pub fn new(r: &StayRecord, member: Option<usize>) -> Self {
        StayLine {
            user_id: r.user_id.0.clone(),
            member,
            start_time: iso8601(r.start_time),
            stop_time: iso8601(r.stop_time),
            start_lat: r.start.lat,
            start_lon: r.start.lon,
            stop_lat: r.stop.lat,
            stop_lon: r.stop.lon,
        }
    }

    pub fn to_record(&self) -> Option<StayRecord> {
        let r = StayRecord {
            user_id: UserId(self.user_id.clone()),
            start_time: parse_iso8601(&self.start_time)?,
            stop_time: parse_iso8601(&self.stop_time)?,
            start: LatLon {
                lat: self.start_lat,
                lon: self.start_lon,
            },
            stop: LatLon {
                lat: self.stop_lat,
                lon: self.stop_lon,
            },
        };
        r.validate().ok().map(|_| r)
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<(), IoError> {
    let mut w = std::io::BufWriter::new(create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(|source| IoError::Json { line: None, source })?;
        w.write_all(b"\n").map_err(|source| file_err(path, source))?;
    }
    w.flush().map_err(|source| file_err(path, source))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let text = fs::read_to_string(path).map_err(|source| file_err(path, source))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| IoError::Json {
                line: Some(i + 1),
                source,
            })
        })
        .collect()
}

pub fn read_friends(path: &Path) -> Result<Vec<(UserId, UserId)>, IoError> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let found: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if found != FRIENDS_HEADER {
        return Err(IoError::Header {
            found,
            expected: FRIENDS_HEADER.iter().map(|s| s.to_string()).collect(),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(RowError {
                row: i + 1,
                fault: RowFault::FieldCount(rec.len()),
            }
            .into());
        }
        out.push((UserId(rec[0].trim().to_string()), UserId(rec[1].trim().to_string())));
    }
    Ok(out)
}

pub fn write_friends(path: &Path, edges: &[(UserId, UserId)]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(FRIENDS_HEADER)?;
    for (a, b) in edges {
        w.write_record([&a.0, &b.0])?;
    }
    w.flush().map_err(|source| file_err(path, source))
}

pub fn write_features(path: &Path, rows: &[PairFeatures]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(FEATURES_HEADER)?;
    for r in rows {
        let mut rec = vec![r.user_a.0.clone(), r.user_b.0.clone()];
        rec.extend(r.values().iter().map(|v| v.to_string()));
        rec.push(r.label.map(|l| (l as u8).to_string()).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| file_err(path, source))
}

pub fn read_features(path: &Path) -> Result<Vec<PairFeatures>, IoError> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let found: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
    if found != FEATURES_HEADER {
        return Err(IoError::Header {
            found,
            expected: FEATURES_HEADER.iter().map(|s| s.to_string()).collect(),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |fault| IoError::Row(RowError { row: i + 1, fault });
        if rec.len() != FEATURES_HEADER.len() {
            return Err(bad(RowFault::FieldCount(rec.len())));
        }
        let mut v = [0.0; 6];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = rec[k + 2]
                .parse()
                .map_err(|_| bad(RowFault::MalformedNumber(rec[k + 2].to_string())))?;
        }
        let label = match &rec[8] {
            "" => None,
            "1" => Some(true),
            "0" => Some(false),
            other => return Err(bad(RowFault::MalformedNumber(other.to_string()))),
        };
        out.push(PairFeatures {
            user_a: UserId(rec[0].to_string()),
            user_b: UserId(rec[1].to_string()),
            f_fre: v[0],
            f_pop: v[1],
            f_div: v[2],
            f_int: v[3],
            f_stay: v[4],
            f_hol: v[5],
            label,
        });
    }
    Ok(out)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json { line: None, source })?;
    text.push('\n');
    fs::write(path, text).map_err(|source| file_err(path, source))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|source| file_err(path, source))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json { line: None, source })
}

/// Writes rows of displayable cells as CSV.
pub fn write_table<R, C>(path: &Path, header: &[&str], rows: R) -> Result<(), IoError>
where
    R: IntoIterator<Item = Vec<C>>,
    C: ToString,
{
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|c| c.to_string()))?;
    }
    w.flush().map_err(|source| file_err(path, source))
}

fn file_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::File {
        path: path.to_path_buf(),
        source,
    }
}

fn open(path: &Path) -> Result<fs::File, IoError> {
    fs::File::open(path).map_err(|source| file_err(path, source))
}

fn create(path: &Path) -> Result<fs::File, IoError> {
    fs::File::create(path).map_err(|source| file_err(path, source))
}
