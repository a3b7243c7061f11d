//! CSV serialization of delivery logs, PDR curves, and heatmaps.
//!
//! All writers use a fixed column order and fixed decimal places so output
//! is byte-identical across runs and platforms. Every writer has a matching
//! parser; `export(parse(export(x))) == export(x)` holds for all of them.
//!
//! Schemas (header row always present):
//!
//! ```text
//! log:     timestamp_s,direction,tx_x_m,tx_y_m,tx_z_m,rx_x_m,rx_y_m,rx_z_m,distance_m,rx_power_dbm,delivered,reason
//! pdr:     bin_start_m,bin_end_m,sent,delivered,pdr_percent
//! heatmap: cell_m,ix,iy,center_x_m,center_y_m,sent,delivered,pdr_percent
//! ```
//!
//! Empty PDR bins carry `NA` in `pdr_percent`. Heatmap documents list only
//! cells that saw at least one packet.

use std::collections::BTreeMap;

use crate::dataio::projection::EnuPoint;
use crate::error::{Error, Result};
use crate::simulator::{DeliveryLog, DeliveryRecord, HeatmapGrid, PdrCurve};

pub const LOG_HEADER: &str = "timestamp_s,direction,tx_x_m,tx_y_m,tx_z_m,rx_x_m,rx_y_m,rx_z_m,distance_m,rx_power_dbm,delivered,reason";
pub const PDR_HEADER: &str = "bin_start_m,bin_end_m,sent,delivered,pdr_percent";
pub const HEATMAP_HEADER: &str = "cell_m,ix,iy,center_x_m,center_y_m,sent,delivered,pdr_percent";

/// Marker for a bin or cell without traffic.
pub const EMPTY_MARKER: &str = "NA";

/// Lengths are written with six decimals, i.e. to the micrometre.
const LENGTH_QUANTUM: f64 = 1e-6;
/// A parsed distance may disagree with its endpoints by rounding of the
/// seven written coordinates.
const DISTANCE_TOL: f64 = 1e-5;

fn fmt_pdr(p: Option<f64>) -> String {
    p.map_or_else(|| EMPTY_MARKER.to_string(), |v| format!("{v:.6}"))
}

fn fmt_power(p: f64) -> String {
    if p.is_finite() {
        format!("{p:.6}")
    } else if p < 0.0 {
        "-inf".into()
    } else {
        "inf".into()
    }
}

pub fn export_log_csv(log: &DeliveryLog) -> String {
    let mut out = String::with_capacity(64 + log.len() * 120);
    out.push_str(LOG_HEADER);
    out.push('\n');
    for r in &log.records {
        out.push_str(&format!(
            "{:.6},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{}\n",
            r.timestamp,
            r.direction,
            r.tx_position.x,
            r.tx_position.y,
            r.tx_position.z,
            r.rx_position.x,
            r.rx_position.y,
            r.rx_position.z,
            r.distance,
            fmt_power(r.rx_power_dbm),
            u8::from(r.delivered),
            r.reason,
        ));
    }
    out
}

pub fn export_pdr_csv(curve: &PdrCurve) -> String {
    let mut out = String::from(PDR_HEADER);
    out.push('\n');
    for b in &curve.bins {
        out.push_str(&format!(
            "{:.6},{:.6},{},{},{}\n",
            b.bin_start,
            b.bin_end,
            b.sent,
            b.delivered,
            fmt_pdr(b.pdr())
        ));
    }
    out
}

pub fn export_heatmap_csv(grid: &HeatmapGrid) -> String {
    let mut out = String::from(HEATMAP_HEADER);
    out.push('\n');
    for c in grid.non_empty() {
        out.push_str(&format!(
            "{:.6},{},{},{:.6},{:.6},{},{},{}\n",
            grid.cell_size,
            c.ix,
            c.iy,
            c.center_x,
            c.center_y,
            c.sent,
            c.delivered,
            fmt_pdr(c.pdr())
        ));
    }
    out
}

/// Reads a headed CSV whose columns must match `header` exactly.
fn read_rows(document: &str, header: &str, what: &str) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(document.as_bytes());
    let got: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    let want: Vec<&str> = header.split(',').collect();
    if got != want {
        return Err(Error::document(
            what,
            format!("expected header `{header}`, found `{}`", got.join(",")),
        ));
    }
    reader
        .records()
        .enumerate()
        .map(|(i, r)| Ok((i + 2, r?)))
        .collect()
}

struct Row<'a> {
    line: usize,
    rec: &'a csv::StringRecord,
    names: Vec<&'a str>,
}

impl<'a> Row<'a> {
    fn new(line: usize, rec: &'a csv::StringRecord, header: &'a str) -> Self {
        Row {
            line,
            rec,
            names: header.split(',').collect(),
        }
    }

    fn text(&self, i: usize) -> &'a str {
        self.rec.get(i).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, i: usize) -> Result<T> {
        let t = self.text(i);
        t.parse()
            .map_err(|_| Error::row(self.line, self.names[i], format!("cannot parse `{t}`")))
    }

    fn f64(&self, i: usize) -> Result<f64> {
        let t = self.text(i);
        match t {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            _ => self.parse(i),
        }
    }

    fn err(&self, i: usize, msg: impl Into<String>) -> Error {
        Error::row(self.line, self.names[i], msg)
    }

    fn pdr_matches(&self, i: usize, sent: u64, delivered: u64) -> Result<()> {
        let t = self.text(i);
        match (t, sent) {
            (EMPTY_MARKER, 0) => Ok(()),
            (EMPTY_MARKER, _) => Err(self.err(i, "empty marker on a bin with traffic")),
            (_, 0) => Err(self.err(i, format!("expected `{EMPTY_MARKER}` for an empty bin"))),
            _ => {
                let p: f64 = self.parse(i)?;
                let expect = 100.0 * delivered as f64 / sent as f64;
                if (p - expect).abs() > 1e-6 {
                    return Err(self.err(i, format!("{p} disagrees with {delivered}/{sent}")));
                }
                Ok(())
            }
        }
    }
}

fn quantize(v: f64, quantum: f64) -> f64 {
    (v / quantum).round() * quantum
}

pub fn parse_log_csv(document: &str) -> Result<DeliveryLog> {
    let mut records = Vec::new();
    for (line, rec) in read_rows(document, LOG_HEADER, "delivery log")? {
        let row = Row::new(line, &rec, LOG_HEADER);
        let point = |i: usize| -> Result<EnuPoint> {
            Ok(EnuPoint::new(row.f64(i)?, row.f64(i + 1)?, row.f64(i + 2)?))
        };
        let delivered = match row.text(10) {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(row.err(10, format!("`{other}` is not 0/1"))),
        };
        let r = DeliveryRecord {
            timestamp: row.f64(0)?,
            direction: row
                .text(1)
                .parse()
                .map_err(|e: Error| row.err(1, e.to_string()))?,
            tx_position: point(2)?,
            rx_position: point(5)?,
            distance: row.f64(8)?,
            rx_power_dbm: row.f64(9)?,
            delivered,
            reason: row
                .text(11)
                .parse()
                .map_err(|e: Error| row.err(11, e.to_string()))?,
        };
        if r.delivered != (r.reason == crate::propagation::ReceptionReason::Delivered) {
            return Err(row.err(11, "reason disagrees with delivered flag"));
        }
        if (r.distance - r.tx_position.distance(&r.rx_position)).abs() > DISTANCE_TOL {
            return Err(row.err(8, "distance disagrees with endpoints"));
        }
        records.push(r);
    }
    Ok(DeliveryLog { records })
}

/// Parse a PDR curve. The bin width is inferred from the rows; when
/// `expected_bin_width` is given it must match (and it is the width of an
/// empty document).
pub fn parse_pdr_csv(document: &str, expected_bin_width: Option<f64>) -> Result<PdrCurve> {
    let rows = read_rows(document, PDR_HEADER, "pdr curve")?;
    let mut parsed = Vec::with_capacity(rows.len());
    for (line, rec) in &rows {
        let row = Row::new(*line, rec, PDR_HEADER);
        let (start, end) = (row.f64(0)?, row.f64(1)?);
        if !(end > start) {
            return Err(row.err(1, "bin_end must exceed bin_start"));
        }
        let sent: u64 = row.parse(2)?;
        let delivered: u64 = row.parse(3)?;
        if delivered > sent {
            return Err(row.err(3, "delivered exceeds sent"));
        }
        row.pdr_matches(4, sent, delivered)?;
        parsed.push((row, start, end, sent, delivered));
    }
    // Each edge is rounded on its own, so a single row only pins the width
    // to about one quantum; the outermost edge pins it much tighter.
    let width = match (parsed.first(), expected_bin_width) {
        (Some((_, s, e, ..)), Some(w)) if ((e - s) - w).abs() > 1.5 * LENGTH_QUANTUM => {
            return Err(Error::Incompatible(format!(
                "curve bin width {} m does not match configured {w} m",
                quantize(e - s, LENGTH_QUANTUM)
            )))
        }
        (_, Some(w)) => w,
        (Some((_, s, e, ..)), None) => {
            let rough = e - s;
            let (_, s, e, ..) = parsed
                .iter()
                .max_by(|a, b| a.2.total_cmp(&b.2))
                .expect("non-empty");
            let index = (s / rough).round();
            if index >= 0.0 {
                e / (index + 1.0)
            } else {
                rough
            }
        }
        (None, None) => {
            return Err(Error::document(
                "pdr curve",
                "empty curve and no bin width to assume",
            ))
        }
    };
    let mut counts = BTreeMap::new();
    for (row, start, end, sent, delivered) in &parsed {
        let index = (start / width).round();
        if index < 0.0 || (index * width - start).abs() > LENGTH_QUANTUM {
            return Err(row.err(0, "bin_start is not a multiple of the bin width from 0"));
        }
        if ((index + 1.0) * width - end).abs() > LENGTH_QUANTUM {
            return Err(row.err(
                1,
                format!(
                    "bin width {} differs from {width}",
                    quantize(end - start, LENGTH_QUANTUM)
                ),
            ));
        }
        if counts.insert(index as u64, (*sent, *delivered)).is_some() {
            return Err(row.err(0, "duplicate bin"));
        }
    }
    if counts.keys().copied().ne(0..rows.len() as u64) {
        return Err(Error::document(
            "pdr curve",
            "bins must be contiguous and start at 0",
        ));
    }
    // Trailing empty bins carry no information.
    while counts
        .last_key_value()
        .is_some_and(|(_, &(sent, _))| sent == 0)
    {
        counts.pop_last();
    }
    PdrCurve::from_counts(width, &counts)
}

/// Parse a heatmap. Cells absent from the document are empty.
pub fn parse_heatmap_csv(document: &str, expected_cell: Option<f64>) -> Result<HeatmapGrid> {
    let mut cell: Option<f64> = expected_cell;
    let mut counts = BTreeMap::new();
    for (line, rec) in read_rows(document, HEATMAP_HEADER, "heatmap")? {
        let row = Row::new(line, &rec, HEATMAP_HEADER);
        let size = row.f64(0)?;
        match cell {
            None => cell = Some(size),
            Some(c) if (c - size).abs() > LENGTH_QUANTUM => {
                return Err(row.err(0, format!("cell size {size} differs from {c}")));
            }
            _ => {}
        }
        let ix: i64 = row.parse(1)?;
        let iy: i64 = row.parse(2)?;
        let sent: u64 = row.parse(5)?;
        let delivered: u64 = row.parse(6)?;
        if sent == 0 {
            return Err(row.err(5, "heatmap rows must have traffic"));
        }
        if delivered > sent {
            return Err(row.err(6, "delivered exceeds sent"));
        }
        row.pdr_matches(7, sent, delivered)?;
        if counts.insert((ix, iy), (sent, delivered)).is_some() {
            return Err(row.err(1, "duplicate cell"));
        }
    }
    let cell = cell.ok_or_else(|| Error::document("heatmap", "empty heatmap and no cell size"))?;
    HeatmapGrid::from_counts(cell, &counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::ReceptionReason;
    use crate::simulator::{heatmap, pdr_curve, Direction};
    use proptest::prelude::*;

    #[test]
    fn empty_curve_is_header_only() {
        let doc = export_pdr_csv(&PdrCurve::empty(20.0));
        assert_eq!(doc, format!("{PDR_HEADER}\n"));
        let back = parse_pdr_csv(&doc, Some(20.0)).unwrap();
        assert!(back.bins.is_empty());
        assert!(parse_pdr_csv(&doc, None).is_err());
    }

    #[test]
    fn pdr_csv_layout() {
        let mut counts = BTreeMap::new();
        counts.insert(0, (3, 1));
        counts.insert(2, (4, 4));
        let curve = PdrCurve::from_counts(20.0, &counts).unwrap();
        let doc = export_pdr_csv(&curve);
        assert_eq!(
            doc,
            "bin_start_m,bin_end_m,sent,delivered,pdr_percent\n\
             0.000000,20.000000,3,1,33.333333\n\
             20.000000,40.000000,0,0,NA\n\
             40.000000,60.000000,4,4,100.000000\n"
        );
        assert_eq!(parse_pdr_csv(&doc, None).unwrap(), curve);
    }

    #[test]
    fn pdr_csv_rejects_inconsistent_rows() {
        let bad = "bin_start_m,bin_end_m,sent,delivered,pdr_percent\n0,20,3,1,50.0\n";
        assert!(matches!(parse_pdr_csv(bad, None), Err(Error::Row { .. })));
        let gap =
            "bin_start_m,bin_end_m,sent,delivered,pdr_percent\n0,20,3,1,33.333333\n40,60,1,1,100\n";
        assert!(parse_pdr_csv(gap, None).is_err());
        let ok = "bin_start_m,bin_end_m,sent,delivered,pdr_percent\n0,20,3,1,33.333333\n";
        assert!(matches!(
            parse_pdr_csv(ok, Some(10.0)),
            Err(Error::Incompatible(_))
        ));
    }

    #[test]
    fn width_finer_than_written_precision() {
        let w = 58.746233999999994;
        let counts: BTreeMap<u64, (u64, u64)> = (0..40).map(|i| (i, (5, i % 6))).collect();
        let curve = PdrCurve::from_counts(w, &counts).unwrap();
        let doc = export_pdr_csv(&curve);
        assert_eq!(parse_pdr_csv(&doc, Some(w)).unwrap(), curve);
        let inferred = parse_pdr_csv(&doc, None).unwrap();
        assert!((inferred.bin_width - w).abs() < 1e-7);
        assert_eq!(export_pdr_csv(&inferred), doc);
    }

    #[test]
    fn heatmap_rows_are_non_empty_cells() {
        let mut counts = BTreeMap::new();
        counts.insert((-1, 0), (2, 1));
        counts.insert((3, 2), (5, 0));
        let grid = HeatmapGrid::from_counts(25.0, &counts).unwrap();
        assert!(grid.cells.len() > 2);
        let doc = export_heatmap_csv(&grid);
        assert_eq!(doc.lines().count(), 1 + grid.non_empty().count());
        assert_eq!(parse_heatmap_csv(&doc, None).unwrap(), grid);
    }

    #[test]
    fn log_rejects_reason_mismatch() {
        let doc = format!("{LOG_HEADER}\n0.0,bsm,1,0,0,0,0,0,1,-50,1,below_snr\n");
        assert!(matches!(parse_log_csv(&doc), Err(Error::Row { .. })));
        let doc = format!("{LOG_HEADER}\n0.0,bsm,1,0,0,0,0,0,5,-50,1,delivered\n");
        assert!(parse_log_csv(&doc).is_err());
    }

    fn arb_record() -> impl Strategy<Value = DeliveryRecord> {
        (
            0.0f64..1000.0,
            any::<bool>(),
            (-2000.0f64..2000.0, -2000.0f64..2000.0, -10.0f64..10.0),
            -200.0f64..0.0,
            0u8..3,
        )
            .prop_map(|(t, bsm, (x, y, z), p, reason)| {
                let vehicle = EnuPoint::new(x, y, z);
                let (tx, rx, direction) = if bsm {
                    (vehicle, EnuPoint::ORIGIN, Direction::VehicleToRsu)
                } else {
                    (EnuPoint::ORIGIN, vehicle, Direction::RsuToVehicle)
                };
                let reason = [
                    ReceptionReason::Delivered,
                    ReceptionReason::BelowSensitivity,
                    ReceptionReason::BelowSnr,
                ][reason as usize];
                DeliveryRecord {
                    timestamp: t,
                    direction,
                    tx_position: tx,
                    rx_position: rx,
                    distance: tx.distance(&rx),
                    rx_power_dbm: p,
                    delivered: reason == ReceptionReason::Delivered,
                    reason,
                }
            })
    }

    proptest! {
        #[test]
        fn log_round_trip(records in proptest::collection::vec(arb_record(), 0..50)) {
            let log = DeliveryLog { records };
            let doc = export_log_csv(&log);
            let back = parse_log_csv(&doc).unwrap();
            prop_assert_eq!(back.len(), log.len());
            for (a, b) in log.records.iter().zip(&back.records) {
                prop_assert_eq!(a.direction, b.direction);
                prop_assert_eq!(a.reason, b.reason);
                prop_assert!((a.distance - b.distance).abs() <= 5e-7);
                prop_assert!((a.rx_power_dbm - b.rx_power_dbm).abs() <= 5e-7);
            }
            prop_assert_eq!(export_log_csv(&back), doc);
        }

        #[test]
        fn curve_and_heatmap_round_trip(
            records in proptest::collection::vec(arb_record(), 1..80),
            width_mm in 1_000u32..100_000,
        ) {
            let w = width_mm as f64 / 1000.0;
            let log = DeliveryLog { records };
            let curve = pdr_curve(&log, w).unwrap();
            let doc = export_pdr_csv(&curve);
            let back = parse_pdr_csv(&doc, None).unwrap();
            prop_assert_eq!(export_pdr_csv(&back), doc);
            prop_assert_eq!(back.bins.len(), curve.bins.len());
            for (a, b) in curve.bins.iter().zip(&back.bins) {
                prop_assert_eq!((a.index, a.sent, a.delivered), (b.index, b.sent, b.delivered));
            }

            let grid = heatmap(&log, w).unwrap();
            let doc = export_heatmap_csv(&grid);
            let back = parse_heatmap_csv(&doc, None).unwrap();
            prop_assert_eq!(export_heatmap_csv(&back), doc);
            prop_assert_eq!(back.total_sent(), grid.total_sent());
        }
    }
}
