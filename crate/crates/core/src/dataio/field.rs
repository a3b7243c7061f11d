//! Observed PDR curves from testbed logs.
//!
//! Two ways to turn an on-board log into a PDR curve:
//!
//! * pairing by id: each `Sent` record with an id counts as one send, and
//!   it is delivered if a `Received` record with the same id exists;
//! * expected cadence: `Received` records are counted per distance bin and
//!   divided by the number of messages the sender should have emitted while
//!   the vehicle was in that bin (time in bin x message rate).

use std::collections::{BTreeMap, HashSet};

use crate::dataio::projection::{EnuPoint, ProjectedTrace};
use crate::dataio::trace::{MessageDirection, MessageType};
use crate::error::{Error, Result};
use crate::simulator::PdrCurve;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldPdrMode {
    PairById,
    ExpectedCadence { rate_hz: f64 },
}

fn bin_of(p: &EnuPoint, rsu: &EnuPoint, width: f64) -> u64 {
    (p.distance(rsu) / width).floor().max(0.0) as u64
}

/// Observed PDR per distance bin for messages of `message_type`.
pub fn field_pdr_curve(
    trace: &ProjectedTrace,
    rsu: &EnuPoint,
    bin_width: f64,
    message_type: MessageType,
    mode: FieldPdrMode,
) -> Result<PdrCurve> {
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(Error::domain("bin width must be > 0"));
    }
    let of_type = trace
        .samples
        .iter()
        .filter(|s| s.message_type == message_type);
    let mut counts: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    match mode {
        FieldPdrMode::PairById => {
            let received: HashSet<&str> = of_type
                .clone()
                .filter(|s| s.direction == MessageDirection::Received)
                .filter_map(|s| s.msg_id.as_deref())
                .collect();
            let mut any = false;
            for s in of_type.filter(|s| s.direction == MessageDirection::Sent) {
                let Some(id) = s.msg_id.as_deref() else {
                    continue;
                };
                any = true;
                let e = counts
                    .entry(bin_of(&s.position, rsu, bin_width))
                    .or_default();
                e.0 += 1;
                e.1 += u64::from(received.contains(id));
            }
            if !any {
                return Err(Error::document(
                    "field pdr",
                    format!("no sent {message_type} records carry a msg_id"),
                ));
            }
        }
        FieldPdrMode::ExpectedCadence { rate_hz } => {
            if !(rate_hz.is_finite() && rate_hz > 0.0) {
                return Err(Error::domain("message rate must be > 0"));
            }
            // Time spent per bin, attributing each inter-sample interval to
            // the bin of its midpoint.
            let mut dwell: BTreeMap<u64, f64> = BTreeMap::new();
            for w in trace.samples.windows(2) {
                let dt = w[1].t - w[0].t;
                if dt > 0.0 {
                    let mid = w[0].position.lerp(&w[1].position, 0.5);
                    *dwell.entry(bin_of(&mid, rsu, bin_width)).or_default() += dt;
                }
            }
            let mut received: BTreeMap<u64, u64> = BTreeMap::new();
            for s in of_type.filter(|s| s.direction == MessageDirection::Received) {
                *received
                    .entry(bin_of(&s.position, rsu, bin_width))
                    .or_default() += 1;
            }
            let bins: std::collections::BTreeSet<u64> =
                dwell.keys().chain(received.keys()).copied().collect();
            for b in bins {
                let expected = (dwell.get(&b).copied().unwrap_or(0.0) * rate_hz).round() as u64;
                let got = received.get(&b).copied().unwrap_or(0);
                let sent = expected.max(got);
                if sent > 0 {
                    counts.insert(b, (sent, got));
                }
            }
        }
    }
    PdrCurve::from_counts(bin_width, &counts)
}
