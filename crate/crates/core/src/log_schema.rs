//! Connection-log data model and its JSONL/CSV serialization.
//!
//! One [`ConnectionAttempt`] is one logged set-up process: the context the
//! attempt happened in (hour, RSSI, associated devices, device and AP model,
//! encryption, public/private label, band), how it ended, and, for
//! instrumented attempts, the per-phase time split.
//!
//! A `ConnectionAttempt` can only be built through validation, so the
//! outcome/time coupling and the RSSI clamp hold on every value in memory.
//! [`AttemptRecord`] is the unchecked wire form.

use std::fmt;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{DEFAULT_TIMEOUT_MS, RSSI_CLAMP_DBM};

/// CSV column order. The header row of every CSV corpus is exactly this list.
pub const CSV_COLUMNS: [&str; 16] = [
    "attempt_id",
    "user_id",
    "hour_of_day",
    "rssi_dbm",
    "num_devices",
    "device_model",
    "ap_model",
    "encrypted",
    "is_public",
    "band",
    "outcome",
    "connection_time_ms",
    "scan_ms",
    "assoc_ms",
    "auth_ms",
    "dhcp_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    Timeout,
    DhcpFailure,
    WrongPassword,
    SwitchedToAnotherWifi,
    ForgotWifi,
    SwitchedOffWifi,
    Unknown,
}

impl Outcome {
    pub const ALL: [Outcome; 8] = [
        Outcome::Success,
        Outcome::Timeout,
        Outcome::DhcpFailure,
        Outcome::WrongPassword,
        Outcome::SwitchedToAnotherWifi,
        Outcome::ForgotWifi,
        Outcome::SwitchedOffWifi,
        Outcome::Unknown,
    ];

    /// Outcomes of attempts the user actually wanted to complete.
    pub fn is_willing(self) -> bool {
        matches!(
            self,
            Outcome::Success | Outcome::Timeout | Outcome::DhcpFailure
        )
    }

    pub fn is_success(self) -> bool {
        self == Outcome::Success
    }

    pub fn name(self) -> &'static str {
        match self {
            Outcome::Success => "Success",
            Outcome::Timeout => "Timeout",
            Outcome::DhcpFailure => "DhcpFailure",
            Outcome::WrongPassword => "WrongPassword",
            Outcome::SwitchedToAnotherWifi => "SwitchedToAnotherWifi",
            Outcome::ForgotWifi => "ForgotWifi",
            Outcome::SwitchedOffWifi => "SwitchedOffWifi",
            Outcome::Unknown => "Unknown",
        }
    }

    pub fn from_name(s: &str) -> Option<Outcome> {
        Outcome::ALL.into_iter().find(|o| o.name() == s)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Band {
    #[serde(rename = "2.4GHz")]
    Band2_4GHz,
    #[serde(rename = "5GHz")]
    Band5GHz,
}

impl Band {
    pub fn name(self) -> &'static str {
        match self {
            Band::Band2_4GHz => "2.4GHz",
            Band::Band5GHz => "5GHz",
        }
    }
}

impl FromStr for Band {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "2.4GHz" => Ok(Band::Band2_4GHz),
            "5GHz" => Ok(Band::Band5GHz),
            other => Err(format!("unknown band {other:?}")),
        }
    }
}

/// Milliseconds spent in each set-up phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub scan_ms: u32,
    pub assoc_ms: u32,
    pub auth_ms: u32,
    pub dhcp_ms: u32,
}

impl PhaseTiming {
    pub fn total_ms(&self) -> u64 {
        self.scan_ms as u64 + self.assoc_ms as u64 + self.auth_ms as u64 + self.dhcp_ms as u64
    }

    pub fn as_array(&self) -> [u32; 4] {
        [self.scan_ms, self.assoc_ms, self.auth_ms, self.dhcp_ms]
    }
}

/// Unvalidated wire form of a log row. Field names are the JSONL keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt_id: String,
    pub user_id: String,
    pub hour_of_day: u8,
    pub rssi_dbm: i32,
    pub num_devices: u32,
    pub device_model: String,
    pub ap_model: String,
    pub encrypted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_public: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<Band>,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connection_time_ms: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases: Option<PhaseTiming>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("attempt_id is empty")]
    EmptyId,
    #[error("hour_of_day {0} outside 0..=23")]
    HourOutOfRange(u8),
    #[error("outcome Success requires connection_time_ms")]
    MissingTime,
    #[error("connection_time_ms {0} exceeds the {limit} ms timeout", limit = DEFAULT_TIMEOUT_MS)]
    TimeAboveTimeout(u32),
    #[error("outcome {0} must not carry connection_time_ms")]
    UnexpectedTime(Outcome),
    #[error("phase durations sum to {phases} ms but connection_time_ms is {total}")]
    PhaseSumMismatch { phases: u64, total: u32 },
}

/// A validated log row.
///
/// Holds on every instance: `rssi_dbm <= -55`, `hour_of_day <= 23`, a
/// connection time present exactly when the outcome is `Success` (and at
/// most 30 s), and phase durations summing to that time when present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ConnectionAttempt(AttemptRecord);

impl ConnectionAttempt {
    /// Validates `record`, clamping an RSSI stronger than -55 dBm.
    pub fn new(mut record: AttemptRecord) -> Result<Self, SchemaError> {
        if record.attempt_id.is_empty() {
            return Err(SchemaError::EmptyId);
        }
        if record.hour_of_day > 23 {
            return Err(SchemaError::HourOutOfRange(record.hour_of_day));
        }
        record.rssi_dbm = record.rssi_dbm.min(RSSI_CLAMP_DBM);
        match (record.outcome, record.connection_time_ms) {
            (Outcome::Success, None) => return Err(SchemaError::MissingTime),
            (Outcome::Success, Some(t)) if t > DEFAULT_TIMEOUT_MS => {
                return Err(SchemaError::TimeAboveTimeout(t))
            }
            (Outcome::Success, Some(t)) => {
                if let Some(p) = record.phases {
                    if p.total_ms() != t as u64 {
                        return Err(SchemaError::PhaseSumMismatch {
                            phases: p.total_ms(),
                            total: t,
                        });
                    }
                }
            }
            (other, Some(_)) => return Err(SchemaError::UnexpectedTime(other)),
            (_, None) => {}
        }
        Ok(ConnectionAttempt(record))
    }

    pub fn record(&self) -> &AttemptRecord {
        &self.0
    }

    pub fn into_record(self) -> AttemptRecord {
        self.0
    }
}

impl Deref for ConnectionAttempt {
    type Target = AttemptRecord;

    fn deref(&self) -> &AttemptRecord {
        &self.0
    }
}

impl<'de> Deserialize<'de> for ConnectionAttempt {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let record = AttemptRecord::deserialize(d)?;
        ConnectionAttempt::new(record).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format {other:?} (expected jsonl or csv)")),
        }
    }
}

/// What happened to one input row. `row` is the 1-based physical line number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowDiagnostic {
    pub row: u64,
    pub kind: DiagnosticKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiagnosticKind {
    /// RSSI above the clamp; the row was kept with -55 dBm.
    RssiClamped { original: i32 },
    /// Unrecognized outcome string; the row was kept as `Unknown`.
    UnknownOutcome { value: String },
    /// The row was dropped.
    Rejected { reason: String },
}

#[derive(Debug, Default)]
pub struct IngestReport {
    pub attempts: Vec<ConnectionAttempt>,
    /// Rows that were dropped, with the reason.
    pub rejected: Vec<RowDiagnostic>,
    /// Rows that were kept after a repair (clamp, unknown outcome).
    pub repaired: Vec<RowDiagnostic>,
}

impl IngestReport {
    pub fn clamped_count(&self) -> usize {
        self.repaired
            .iter()
            .filter(|d| matches!(d.kind, DiagnosticKind::RssiClamped { .. }))
            .count()
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read corpus: {0}")]
    Io(#[from] io::Error),
    #[error("CSV header mismatch: expected {expected:?}, found {found:?}")]
    Header { expected: String, found: String },
}

/// Field values before typing; shared by the JSONL and CSV paths.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRow {
    attempt_id: String,
    user_id: String,
    hour_of_day: i64,
    rssi_dbm: i64,
    num_devices: i64,
    device_model: String,
    ap_model: String,
    encrypted: bool,
    #[serde(default)]
    is_public: Option<bool>,
    #[serde(default)]
    band: Option<String>,
    outcome: String,
    #[serde(default)]
    connection_time_ms: Option<i64>,
    #[serde(default)]
    phases: Option<RawPhases>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhases {
    scan_ms: i64,
    assoc_ms: i64,
    auth_ms: i64,
    dhcp_ms: i64,
}

fn to_u32(name: &str, v: i64) -> Result<u32, String> {
    u32::try_from(v).map_err(|_| format!("{name} {v} is not a non-negative 32-bit integer"))
}

/// Types a raw row. Returns the record plus any repair notes.
fn type_row(raw: RawRow) -> Result<(ConnectionAttempt, Vec<DiagnosticKind>), String> {
    let mut notes = Vec::new();
    let hour = u8::try_from(raw.hour_of_day)
        .ok()
        .filter(|h| *h <= 23)
        .ok_or_else(|| format!("hour_of_day {} outside 0..=23", raw.hour_of_day))?;
    let rssi = i32::try_from(raw.rssi_dbm)
        .map_err(|_| format!("rssi_dbm {} out of range", raw.rssi_dbm))?;
    if rssi > RSSI_CLAMP_DBM {
        notes.push(DiagnosticKind::RssiClamped { original: rssi });
    }
    let outcome = match Outcome::from_name(&raw.outcome) {
        Some(o) => o,
        None => {
            notes.push(DiagnosticKind::UnknownOutcome {
                value: raw.outcome.clone(),
            });
            Outcome::Unknown
        }
    };
    let band = raw.band.map(|b| b.parse::<Band>()).transpose()?;
    let phases = raw
        .phases
        .map(|p| -> Result<PhaseTiming, String> {
            Ok(PhaseTiming {
                scan_ms: to_u32("scan_ms", p.scan_ms)?,
                assoc_ms: to_u32("assoc_ms", p.assoc_ms)?,
                auth_ms: to_u32("auth_ms", p.auth_ms)?,
                dhcp_ms: to_u32("dhcp_ms", p.dhcp_ms)?,
            })
        })
        .transpose()?;
    let record = AttemptRecord {
        attempt_id: raw.attempt_id,
        user_id: raw.user_id,
        hour_of_day: hour,
        rssi_dbm: rssi,
        num_devices: to_u32("num_devices", raw.num_devices)?,
        device_model: raw.device_model,
        ap_model: raw.ap_model,
        encrypted: raw.encrypted,
        is_public: raw.is_public,
        band,
        outcome,
        connection_time_ms: raw
            .connection_time_ms
            .map(|t| to_u32("connection_time_ms", t))
            .transpose()?,
        phases,
    };
    let attempt = ConnectionAttempt::new(record).map_err(|e| e.to_string())?;
    Ok((attempt, notes))
}

fn push_row(report: &mut IngestReport, row: u64, parsed: Result<RawRow, String>) {
    match parsed.and_then(type_row) {
        Ok((attempt, notes)) => {
            report.attempts.push(attempt);
            report
                .repaired
                .extend(notes.into_iter().map(|kind| RowDiagnostic { row, kind }));
        }
        Err(reason) => report.rejected.push(RowDiagnostic {
            row,
            kind: DiagnosticKind::Rejected { reason },
        }),
    }
}

/// Reads a corpus. Bad rows are reported in [`IngestReport::rejected`];
/// only an unreadable stream or a wrong CSV header is fatal.
pub fn ingest<R: Read>(reader: R, format: Format) -> Result<IngestReport, IngestError> {
    match format {
        Format::Jsonl => ingest_jsonl(reader),
        Format::Csv => ingest_csv(reader),
    }
}

fn ingest_jsonl<R: Read>(reader: R) -> Result<IngestReport, IngestError> {
    let mut report = IngestReport::default();
    let mut reader = BufReader::new(reader);
    let mut buf = Vec::new();
    let mut line_no = 0u64;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let parsed = std::str::from_utf8(&buf)
            .map_err(|e| format!("invalid UTF-8: {e}"))
            .and_then(|line| {
                let line = line.trim();
                if line.is_empty() {
                    Ok(None)
                } else {
                    serde_json::from_str::<RawRow>(line)
                        .map(Some)
                        .map_err(|e| e.to_string())
                }
            });
        match parsed {
            Ok(None) => {}
            Ok(Some(raw)) => push_row(&mut report, line_no, Ok(raw)),
            Err(reason) => push_row(&mut report, line_no, Err(reason)),
        }
    }
    Ok(report)
}

fn csv_field<T: FromStr>(rec: &csv::StringRecord, idx: usize) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    let s = rec.get(idx).unwrap_or("");
    s.trim()
        .parse::<T>()
        .map_err(|e| format!("{}: cannot parse {s:?}: {e}", CSV_COLUMNS[idx]))
}

fn csv_opt<T: FromStr>(rec: &csv::StringRecord, idx: usize) -> Result<Option<T>, String>
where
    T::Err: fmt::Display,
{
    match rec.get(idx).map(str::trim) {
        None | Some("") => Ok(None),
        Some(_) => csv_field(rec, idx).map(Some),
    }
}

fn csv_raw_row(rec: &csv::StringRecord) -> Result<RawRow, String> {
    if rec.len() != CSV_COLUMNS.len() {
        return Err(format!(
            "expected {} fields, found {}",
            CSV_COLUMNS.len(),
            rec.len()
        ));
    }
    let phase_cols: [Option<i64>; 4] = [
        csv_opt(rec, 12)?,
        csv_opt(rec, 13)?,
        csv_opt(rec, 14)?,
        csv_opt(rec, 15)?,
    ];
    let phases = match phase_cols {
        [None, None, None, None] => None,
        [Some(s), Some(a), Some(u), Some(d)] => Some(RawPhases {
            scan_ms: s,
            assoc_ms: a,
            auth_ms: u,
            dhcp_ms: d,
        }),
        _ => return Err("phase columns must be all present or all empty".into()),
    };
    let text = |idx: usize| rec.get(idx).unwrap_or("").to_string();
    Ok(RawRow {
        attempt_id: text(0),
        user_id: text(1),
        hour_of_day: csv_field(rec, 2)?,
        rssi_dbm: csv_field(rec, 3)?,
        num_devices: csv_field(rec, 4)?,
        device_model: text(5),
        ap_model: text(6),
        encrypted: csv_field(rec, 7)?,
        is_public: csv_opt(rec, 8)?,
        band: csv_opt(rec, 9)?,
        outcome: text(10),
        connection_time_ms: csv_opt(rec, 11)?,
        phases,
    })
}

fn ingest_csv<R: Read>(reader: R) -> Result<IngestReport, IngestError> {
    let mut report = IngestReport::default();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    match records.next() {
        None => return Ok(report),
        Some(Err(e)) => return Err(csv_fatal(e)),
        Some(Ok(header)) => {
            let found: Vec<&str> = header.iter().collect();
            if found != CSV_COLUMNS {
                return Err(IngestError::Header {
                    expected: CSV_COLUMNS.join(","),
                    found: found.join(","),
                });
            }
        }
    }
    for rec in records {
        match rec {
            Ok(rec) => {
                let row = rec.position().map_or(0, |p| p.line());
                push_row(&mut report, row, csv_raw_row(&rec));
            }
            Err(e) if e.is_io_error() => return Err(csv_fatal(e)),
            Err(e) => {
                let row = e.position().map_or(0, |p| p.line());
                push_row(&mut report, row, Err(e.to_string()));
            }
        }
    }
    Ok(report)
}

fn csv_fatal(e: csv::Error) -> IngestError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IngestError::Io(io),
        other => IngestError::Io(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("{other:?}"),
        )),
    }
}

/// Writes `attempts` in `format`. An empty slice writes nothing, in either format.
pub fn emit<W: Write>(attempts: &[ConnectionAttempt], format: Format, out: W) -> io::Result<()> {
    match format {
        Format::Jsonl => emit_jsonl(attempts, out),
        Format::Csv => emit_csv(attempts, out),
    }
}

fn emit_jsonl<W: Write>(attempts: &[ConnectionAttempt], out: W) -> io::Result<()> {
    let mut out = io::BufWriter::new(out);
    for a in attempts {
        serde_json::to_writer(&mut out, a.record())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

fn emit_csv<W: Write>(attempts: &[ConnectionAttempt], out: W) -> io::Result<()> {
    if attempts.is_empty() {
        return Ok(());
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for a in attempts {
        let p = a.phases;
        let row: [String; 16] = [
            a.attempt_id.clone(),
            a.user_id.clone(),
            a.hour_of_day.to_string(),
            a.rssi_dbm.to_string(),
            a.num_devices.to_string(),
            a.device_model.clone(),
            a.ap_model.clone(),
            a.encrypted.to_string(),
            opt(a.is_public.map(|b| b.to_string())),
            opt(a.band.map(|b| b.name().to_string())),
            a.outcome.name().to_string(),
            opt(a.connection_time_ms.map(|t| t.to_string())),
            opt(p.map(|p| p.scan_ms.to_string())),
            opt(p.map(|p| p.assoc_ms.to_string())),
            opt(p.map(|p| p.auth_ms.to_string())),
            opt(p.map(|p| p.dhcp_ms.to_string())),
        ];
        w.write_record(&row)?;
    }
    w.flush()
}
