//! Ground-truth datasets with planted channel parameters.
//!
//! A vehicle shuttles back and forth along a polyline route; the resulting
//! trace is replayed through the simulator with the planted parameters. The
//! trace is normalised through its own CSV form before simulation, so a
//! dataset written to disk and read back replays identically.

use chrono::{DateTime, TimeZone, Utc};

use crate::dataio::projection::MPH_TO_MPS;
use crate::dataio::projection::{enu_to_geo, project_enu, EnuPoint, GeoPoint, ProjectedTrace};
use crate::dataio::trace::{
    export_trace_csv, parse_trace_csv, MessageDirection, MessageType, TimeFormat, Trace,
    TraceRecord, TransmissionType,
};
use crate::error::{Error, Result};
use crate::propagation::{FadingParams, RadioParams};
use crate::simulator::{pdr_curve, run_scenario, DeliveryLog, PdrCurve, ScenarioConfig};

/// Route vertex in the RSU-anchored ENU frame. `speed_mps` applies to the leg
/// that starts here (the last vertex's speed is unused).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub speed_mps: f64,
}

impl Waypoint {
    pub fn new(x: f64, y: f64, speed_mps: f64) -> Self {
        Waypoint { x, y, speed_mps }
    }
}

/// Default testbed anchor (an intersection on an urban corridor).
pub const DEFAULT_RSU: GeoPoint = GeoPoint {
    lat_deg: 35.045_6,
    lon_deg: -85.309_7,
    alt_ft: 680.0,
};

/// 30 mph, m/s.
pub const DRIVE_BY_SPEED_MPS: f64 = 13.4;

pub const DRIVE_BY_HALF_LENGTH_M: f64 = 999.8;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub radio: RadioParams,
    pub fading: FadingParams,
    pub waypoints: Vec<Waypoint>,
    pub duration_s: f64,
    /// Simulation seed for the planted run.
    pub seed: u64,
    /// Trace sampling rate, Hz.
    pub sample_rate_hz: f64,
    pub rsu: GeoPoint,
    pub start_time: DateTime<Utc>,
}

impl SyntheticSpec {
    /// Straight 2 km pass at 13.4 m/s, 15 m abreast of the RSU at its
    /// closest point, using the calibrated channel. The ends stop just short
    /// of 1000 m from the RSU so the last 20 m bin is not a sliver.
    pub fn drive_by() -> Self {
        SyntheticSpec {
            radio: RadioParams::table_calibrated(),
            fading: FadingParams::table_calibrated(),
            waypoints: vec![
                Waypoint::new(-DRIVE_BY_HALF_LENGTH_M, 15.0, DRIVE_BY_SPEED_MPS),
                Waypoint::new(DRIVE_BY_HALF_LENGTH_M, 15.0, DRIVE_BY_SPEED_MPS),
            ],
            duration_s: 2.0 * DRIVE_BY_HALF_LENGTH_M / DRIVE_BY_SPEED_MPS,
            seed: 2022,
            sample_rate_hz: 10.0,
            rsu: DEFAULT_RSU,
            start_time: Utc.with_ymd_and_hms(2022, 6, 1, 14, 0, 0).unwrap(),
        }
    }

    /// Time to drive the route once, end to end.
    pub fn one_way_duration(&self) -> f64 {
        route_legs(&self.waypoints).iter().map(|l| l.duration).sum()
    }

    /// Set the duration to `passes` one-way traversals (the vehicle turns
    /// around at each end).
    pub fn with_passes(mut self, passes: u32) -> Self {
        self.duration_s = f64::from(passes) * self.one_way_duration();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::config(format!(
                "duration must be > 0 s, got {}",
                self.duration_s
            )));
        }
        if self.waypoints.len() < 2 {
            return Err(Error::config(format!(
                "route needs at least 2 waypoints, got {}",
                self.waypoints.len()
            )));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::config("sample_rate must be > 0"));
        }
        for (i, w) in self.waypoints.iter().enumerate() {
            if !(w.x.is_finite() && w.y.is_finite()) {
                return Err(Error::config(format!("waypoint {i} is not finite")));
            }
            if i + 1 < self.waypoints.len() && !(w.speed_mps.is_finite() && w.speed_mps > 0.0) {
                return Err(Error::config(format!("waypoint {i}: speed must be > 0")));
            }
        }
        if route_legs(&self.waypoints).iter().all(|l| l.length == 0.0) {
            return Err(Error::config("route has zero length"));
        }
        self.radio.validate()?;
        self.fading.validate()?;
        self.rsu.validate()
    }
}

struct Leg {
    from: EnuPoint,
    to: EnuPoint,
    length: f64,
    duration: f64,
}

fn route_legs(waypoints: &[Waypoint]) -> Vec<Leg> {
    waypoints
        .windows(2)
        .map(|w| {
            let from = EnuPoint::new(w[0].x, w[0].y, 0.0);
            let to = EnuPoint::new(w[1].x, w[1].y, 0.0);
            let length = from.distance(&to);
            Leg {
                from,
                to,
                length,
                duration: length / w[0].speed_mps,
            }
        })
        .collect()
}

/// Vehicle state at time `t` when shuttling along the route: position,
/// heading in degrees clockwise from north, speed in m/s.
fn shuttle_state(legs: &[Leg], t: f64) -> (EnuPoint, f64, f64) {
    let one_way: f64 = legs.iter().map(|l| l.duration).sum();
    let phase = t.rem_euclid(2.0 * one_way);
    let (forward, mut u) = if phase <= one_way {
        (true, phase)
    } else {
        (false, 2.0 * one_way - phase)
    };
    let moving = legs.iter().filter(|l| l.length > 0.0);
    let last = moving.clone().last().expect("route has length");
    let mut leg = last;
    for l in moving {
        if u <= l.duration {
            leg = l;
            break;
        }
        u -= l.duration;
    }
    let frac = (u / leg.duration).clamp(0.0, 1.0);
    let position = leg.from.lerp(&leg.to, frac);
    let (dx, dy) = if forward {
        (leg.to.x - leg.from.x, leg.to.y - leg.from.y)
    } else {
        (leg.from.x - leg.to.x, leg.from.y - leg.to.y)
    };
    // Snap to the written precision so 359.9999 does not print as 360.000.
    let heading = (dx.atan2(dy).to_degrees().rem_euclid(360.0) * 1e3).round() / 1e3;
    let heading = if heading >= 360.0 { 0.0 } else { heading };
    (position, heading, leg.length / leg.duration)
}

/// Mobility trace only, without simulation.
pub fn synthetic_trace(spec: &SyntheticSpec) -> Result<Trace> {
    spec.validate()?;
    let legs = route_legs(&spec.waypoints);
    let n = (spec.duration_s * spec.sample_rate_hz + 1e-9).floor() as u64 + 1;
    let step_us = 1e6 / spec.sample_rate_hz;
    let mut records = Vec::with_capacity(n as usize);
    for k in 0..n {
        let offset_us = (k as f64 * step_us).round() as i64;
        let t = offset_us as f64 * 1e-6;
        let (pos, heading, speed) = shuttle_state(&legs, t);
        let geo = enu_to_geo(&spec.rsu, &pos);
        records.push(TraceRecord {
            time: spec.start_time + chrono::Duration::microseconds(offset_us),
            latitude: geo.lat_deg,
            longitude: geo.lon_deg,
            altitude_ft: geo.alt_ft,
            heading_deg: heading,
            speed_mph: speed / MPH_TO_MPS,
            transmission_type: TransmissionType::Dsrc,
            message_type: MessageType::Bsm,
            direction: MessageDirection::Sent,
            msg_id: None,
        });
    }
    let raw = Trace::new(records, spec.rsu)?;
    // Round to the on-disk precision.
    parse_trace_csv(&export_trace_csv(&raw), spec.rsu, TimeFormat::Iso8601)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub trace: Trace,
    pub projected: ProjectedTrace,
    pub log: DeliveryLog,
    pub curve: PdrCurve,
}

/// Build the trace, replay it with the planted parameters (seeded by
/// `spec.seed`), and aggregate the observed curve at `scenario.bin_width_m`.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    scenario: &ScenarioConfig,
) -> Result<SyntheticDataset> {
    let trace = synthetic_trace(spec)?;
    let projected = project_enu(&trace)?;
    let planted = ScenarioConfig {
        master_seed: spec.seed,
        ..*scenario
    };
    let log = run_scenario(&projected, &planted, &spec.radio, &spec.fading)?;
    let curve = pdr_curve(&log, scenario.bin_width_m)?;
    Ok(SyntheticDataset {
        trace,
        projected,
        log,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drive_by_shape() {
        let spec = SyntheticSpec::drive_by();
        let trace = synthetic_trace(&spec).unwrap();
        let p = project_enu(&trace).unwrap();
        let first = p.samples.first().unwrap();
        let last = p.samples.last().unwrap();
        assert!((first.position.x + DRIVE_BY_HALF_LENGTH_M).abs() < 1e-3);
        assert!((last.position.x - DRIVE_BY_HALF_LENGTH_M).abs() < 1.5);
        assert!(p.max_distance_from(&EnuPoint::ORIGIN) < 1000.0);
        assert!((first.position.y - 15.0).abs() < 1e-3);
        assert!((first.heading_deg - 90.0).abs() < 1e-9);
        assert!((first.speed_mps - DRIVE_BY_SPEED_MPS).abs() < 1e-3);
    }

    #[test]
    fn shuttles_back() {
        let spec = SyntheticSpec::drive_by().with_passes(3);
        let trace = synthetic_trace(&spec).unwrap();
        let p = project_enu(&trace).unwrap();
        let last = p.samples.last().unwrap();
        assert!(
            (last.position.x - DRIVE_BY_HALF_LENGTH_M).abs() < 1.5,
            "{}",
            last.position.x
        );
        let mid = &p.samples[p.samples.len() / 2];
        assert!(mid.position.x.abs() < 2.0, "{}", mid.position.x);
        assert!((mid.heading_deg - 270.0).abs() < 1e-9);
    }

    #[test]
    fn decays_with_distance() {
        let spec = SyntheticSpec::drive_by();
        let ds = generate_synthetic(&spec, &ScenarioConfig::default()).unwrap();
        let near: Vec<f64> = ds.curve.bins[..5].iter().filter_map(|b| b.pdr()).collect();
        let far: Vec<f64> = ds.curve.bins[ds.curve.bins.len() - 5..]
            .iter()
            .filter_map(|b| b.pdr())
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&near) > 95.0, "{near:?}");
        assert!(mean(&far) < mean(&near) - 30.0, "{far:?}");
    }

    #[test]
    fn validation_errors() {
        let mut spec = SyntheticSpec::drive_by();
        spec.duration_s = 0.0;
        assert!(generate_synthetic(&spec, &ScenarioConfig::default()).is_err());
        let mut spec = SyntheticSpec::drive_by();
        spec.waypoints.truncate(1);
        assert!(synthetic_trace(&spec).is_err());
        let mut spec = SyntheticSpec::drive_by();
        spec.waypoints[0].speed_mps = 0.0;
        assert!(synthetic_trace(&spec).is_err());
    }

    #[test]
    fn deterministic() {
        let spec = SyntheticSpec::drive_by();
        let a = generate_synthetic(&spec, &ScenarioConfig::default()).unwrap();
        let b = generate_synthetic(&spec, &ScenarioConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
