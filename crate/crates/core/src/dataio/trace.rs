//! Testbed trace records and their CSV form.
//!
//! Canonical header:
//!
//! ```text
//! time,latitude,longitude,altitude_ft,heading_deg,speed_mph,transmission_type,message_type,direction[,msg_id]
//! ```
//!
//! Headers are matched case-insensitively and by name, so columns may come in
//! any order; common aliases (`lat`, `speed (mph)`, `msg_type`, ...) are
//! accepted. Altitude stays in feet and speed in mph until projection.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};

use crate::dataio::projection::GeoPoint;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransmissionType {
    Dsrc,
    Cv2x,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageType {
    Bsm,
    Spat,
}

/// Whether the logging unit sent or received the message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageDirection {
    Sent,
    Received,
}

macro_rules! text_enum {
    ($ty:ty, $what:literal, { $($variant:path => $canon:literal $(| $alias:literal)*),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self {
                    $($variant => $canon),+
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let key = s.trim().to_ascii_lowercase();
                match key.as_str() {
                    $($canon $(| $alias)* => Ok($variant),)+
                    _ => Err(Error::domain(format!(concat!("unknown ", $what, " `{}`"), s))),
                }
            }
        }
    };
}

text_enum!(TransmissionType, "transmission type", {
    TransmissionType::Dsrc => "DSRC" | "dsrc",
    TransmissionType::Cv2x => "C-V2X" | "c-v2x" | "cv2x" | "c_v2x",
});

text_enum!(MessageType, "message type", {
    MessageType::Bsm => "BSM" | "bsm",
    MessageType::Spat => "SPaT" | "spat",
});

text_enum!(MessageDirection, "direction", {
    MessageDirection::Sent => "sent" | "send" | "tx" | "transmitted",
    MessageDirection::Received => "received" | "recv" | "rx" | "receive",
});

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: DateTime<Utc>,
    pub latitude: f64,
    pub longitude: f64,
    pub altitude_ft: f64,
    pub heading_deg: f64,
    pub speed_mph: f64,
    pub transmission_type: TransmissionType,
    pub message_type: MessageType,
    pub direction: MessageDirection,
    /// Message identifier, when the log carries one.
    pub msg_id: Option<String>,
}

impl TraceRecord {
    pub fn geo(&self) -> GeoPoint {
        GeoPoint::new(self.latitude, self.longitude, self.altitude_ft)
    }

    /// Range checks on one record. Returns the offending column name and a
    /// message.
    fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        if !(self.latitude.is_finite() && self.latitude.abs() <= 90.0) {
            return Err(("latitude", format!("{} outside [-90, 90]", self.latitude)));
        }
        if !(self.longitude.is_finite() && self.longitude.abs() <= 180.0) {
            return Err((
                "longitude",
                format!("{} outside [-180, 180]", self.longitude),
            ));
        }
        if !self.altitude_ft.is_finite() {
            return Err(("altitude_ft", "not finite".into()));
        }
        if !(self.heading_deg.is_finite() && (0.0..360.0).contains(&self.heading_deg)) {
            return Err((
                "heading_deg",
                format!("{} outside [0, 360)", self.heading_deg),
            ));
        }
        if !(self.speed_mph.is_finite() && self.speed_mph >= 0.0) {
            return Err(("speed_mph", format!("{} is negative", self.speed_mph)));
        }
        Ok(())
    }
}

/// Time-ordered trace plus the RSU it was recorded against.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    records: Vec<TraceRecord>,
    rsu: GeoPoint,
}

impl Trace {
    /// Validates ordering, record ranges, and the two-record minimum.
    pub fn new(records: Vec<TraceRecord>, rsu: GeoPoint) -> Result<Self> {
        rsu.validate()?;
        if records.len() < 2 {
            return Err(Error::document(
                "trace",
                format!("need at least 2 records, got {}", records.len()),
            ));
        }
        for (i, rec) in records.iter().enumerate() {
            rec.check()
                .map_err(|(col, msg)| Error::row(i + 1, col, msg))?;
        }
        if let Some(i) = first_out_of_order(&records) {
            return Err(Error::document(
                "trace",
                format!("record {} is earlier than the record before it", i + 1),
            ));
        }
        Ok(Trace { records, rsu })
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn rsu(&self) -> &GeoPoint {
        &self.rsu
    }

    pub fn into_records(self) -> Vec<TraceRecord> {
        self.records
    }
}

fn first_out_of_order(records: &[TraceRecord]) -> Option<usize> {
    records
        .windows(2)
        .position(|w| w[1].time < w[0].time)
        .map(|i| i + 1)
}

/// How the `time` column is encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeFormat {
    /// ISO 8601 / RFC 3339, fractional seconds allowed; a missing offset is
    /// read as UTC.
    #[default]
    Iso8601,
    /// Integer milliseconds since the Unix epoch.
    EpochMillis,
}

const ISO_OUT: &str = "%Y-%m-%dT%H:%M:%S%.6fZ";

pub fn format_time(t: &DateTime<Utc>) -> String {
    t.format(ISO_OUT).to_string()
}

pub fn parse_time(text: &str, format: TimeFormat) -> std::result::Result<DateTime<Utc>, String> {
    let s = text.trim();
    match format {
        TimeFormat::EpochMillis => {
            let ms: i64 = s
                .parse()
                .map_err(|_| format!("`{s}` is not integer milliseconds"))?;
            Utc.timestamp_millis_opt(ms)
                .single()
                .ok_or_else(|| format!("{ms} ms is out of range"))
        }
        TimeFormat::Iso8601 => {
            if let Ok(t) = DateTime::parse_from_rfc3339(s) {
                return Ok(t.with_timezone(&Utc));
            }
            for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
                if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
                    return Ok(Utc.from_utc_datetime(&naive));
                }
            }
            Err(format!("`{s}` is not an ISO 8601 timestamp"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Column {
    Time,
    Latitude,
    Longitude,
    Altitude,
    Heading,
    Speed,
    Transmission,
    MessageType,
    Direction,
    MsgId,
}

impl Column {
    const MANDATORY: [Column; 9] = [
        Column::Time,
        Column::Latitude,
        Column::Longitude,
        Column::Altitude,
        Column::Heading,
        Column::Speed,
        Column::Transmission,
        Column::MessageType,
        Column::Direction,
    ];

    fn canonical(self) -> &'static str {
        match self {
            Column::Time => "time",
            Column::Latitude => "latitude",
            Column::Longitude => "longitude",
            Column::Altitude => "altitude_ft",
            Column::Heading => "heading_deg",
            Column::Speed => "speed_mph",
            Column::Transmission => "transmission_type",
            Column::MessageType => "message_type",
            Column::Direction => "direction",
            Column::MsgId => "msg_id",
        }
    }

    fn from_header(raw: &str) -> Option<Column> {
        let key = normalize_header(raw);
        Some(match key.as_str() {
            "time" | "timestamp" | "datetime" | "utc_time" | "time_utc" => Column::Time,
            "latitude" | "lat" | "latitude_deg" => Column::Latitude,
            "longitude" | "lon" | "lng" | "long" | "longitude_deg" => Column::Longitude,
            "altitude_ft" | "altitude" | "alt" | "alt_ft" | "elevation_ft" => Column::Altitude,
            "heading_deg" | "heading" => Column::Heading,
            "speed_mph" | "speed" => Column::Speed,
            "transmission_type"
            | "message_transmission_type"
            | "transmission"
            | "tx_type"
            | "radio" => Column::Transmission,
            "message_type" | "msg_type" | "type" => Column::MessageType,
            "direction" | "dir" | "event" => Column::Direction,
            "msg_id" | "message_id" | "id" => Column::MsgId,
            _ => return None,
        })
    }
}

/// Lower-case, with every run of non-alphanumerics collapsed to `_`.
fn normalize_header(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending = false;
    for ch in raw.trim().chars() {
        if ch.is_ascii_alphanumeric() {
            if pending && !out.is_empty() {
                out.push('_');
            }
            pending = false;
            out.push(ch.to_ascii_lowercase());
        } else {
            pending = true;
        }
    }
    out
}

/// Parse a testbed trace document. Row numbers in diagnostics are 1-based
/// line numbers (the header is line 1).
pub fn parse_trace_csv(document: &str, rsu: GeoPoint, time_format: TimeFormat) -> Result<Trace> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(document.as_bytes());
    let headers = reader.headers()?.clone();
    let mut index: HashMap<Column, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        if let Some(col) = Column::from_header(h) {
            index.entry(col).or_insert(i);
        }
    }
    if let Some(missing) = Column::MANDATORY.iter().find(|c| !index.contains_key(c)) {
        return Err(Error::document(
            "trace header",
            format!("missing mandatory column `{}`", missing.canonical()),
        ));
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row?;
        let field = |c: Column| row.get(index[&c]).unwrap_or("");
        let num = |c: Column| -> Result<f64> {
            let text = field(c);
            text.parse::<f64>()
                .map_err(|_| Error::row(line, c.canonical(), format!("`{text}` is not a number")))
        };
        let time = parse_time(field(Column::Time), time_format)
            .map_err(|m| Error::row(line, "time", m))?;
        let msg_id = index
            .get(&Column::MsgId)
            .and_then(|&j| row.get(j))
            .filter(|s| !s.is_empty())
            .map(str::to_owned);
        let rec = TraceRecord {
            time,
            latitude: num(Column::Latitude)?,
            longitude: num(Column::Longitude)?,
            altitude_ft: num(Column::Altitude)?,
            heading_deg: num(Column::Heading)?,
            speed_mph: num(Column::Speed)?,
            transmission_type: field(Column::Transmission)
                .parse()
                .map_err(|e: Error| Error::row(line, "transmission_type", e.to_string()))?,
            message_type: field(Column::MessageType)
                .parse()
                .map_err(|e: Error| Error::row(line, "message_type", e.to_string()))?,
            direction: field(Column::Direction)
                .parse()
                .map_err(|e: Error| Error::row(line, "direction", e.to_string()))?,
            msg_id,
        };
        rec.check()
            .map_err(|(col, msg)| Error::row(line, col, msg))?;
        records.push(rec);
    }
    if let Some(i) = first_out_of_order(&records) {
        return Err(Error::document(
            "trace",
            format!("timestamps out of order at row {}", i + 2),
        ));
    }
    Trace::new(records, rsu)
}

/// Serialize a trace with the canonical header. The `msg_id` column is
/// written only when at least one record carries an id.
pub fn export_trace_csv(trace: &Trace) -> String {
    let with_id = trace.records.iter().any(|r| r.msg_id.is_some());
    let mut out = String::from(
        "time,latitude,longitude,altitude_ft,heading_deg,speed_mph,transmission_type,message_type,direction",
    );
    if with_id {
        out.push_str(",msg_id");
    }
    out.push('\n');
    for r in &trace.records {
        out.push_str(&format!(
            "{},{:.9},{:.9},{:.3},{:.3},{:.3},{},{},{}",
            format_time(&r.time),
            r.latitude,
            r.longitude,
            r.altitude_ft,
            r.heading_deg,
            r.speed_mph,
            r.transmission_type,
            r.message_type,
            r.direction,
        ));
        if with_id {
            out.push(',');
            out.push_str(r.msg_id.as_deref().unwrap_or(""));
        }
        out.push('\n');
    }
    out
}
