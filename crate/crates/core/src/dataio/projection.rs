//! Local equirectangular projection about the RSU.

use crate::dataio::trace::{MessageDirection, MessageType, Trace};
use crate::error::{Error, Result};

/// Mean Earth radius used by the projection, m.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
pub const FEET_TO_METERS: f64 = 0.3048;
pub const MPH_TO_MPS: f64 = 0.44704;
/// Records farther than this from the RSU are rejected.
pub const MAX_PROJECTION_RADIUS_M: f64 = 50_000.0;

/// Geodetic position. Altitude is in feet, like the trace records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub alt_ft: f64,
}

impl GeoPoint {
    pub fn new(lat_deg: f64, lon_deg: f64, alt_ft: f64) -> Self {
        GeoPoint {
            lat_deg,
            lon_deg,
            alt_ft,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lat_deg.is_finite() && self.lat_deg.abs() <= 90.0) {
            return Err(Error::domain(format!(
                "latitude {} out of range",
                self.lat_deg
            )));
        }
        if !(self.lon_deg.is_finite() && self.lon_deg.abs() <= 180.0) {
            return Err(Error::domain(format!(
                "longitude {} out of range",
                self.lon_deg
            )));
        }
        if !self.alt_ft.is_finite() {
            return Err(Error::domain("altitude must be finite"));
        }
        Ok(())
    }
}

/// Local East-North-Up coordinates in metres.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnuPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl EnuPoint {
    pub const ORIGIN: EnuPoint = EnuPoint {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        EnuPoint { x, y, z }
    }

    pub fn distance(&self, other: &EnuPoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn lerp(&self, other: &EnuPoint, frac: f64) -> EnuPoint {
        EnuPoint {
            x: self.x + (other.x - self.x) * frac,
            y: self.y + (other.y - self.y) * frac,
            z: self.z + (other.z - self.z) * frac,
        }
    }
}

/// Project `point` into the ENU frame anchored at `anchor`.
pub fn geo_to_enu(anchor: &GeoPoint, point: &GeoPoint) -> EnuPoint {
    let dlat = (point.lat_deg - anchor.lat_deg).to_radians();
    let dlon = (point.lon_deg - anchor.lon_deg).to_radians();
    EnuPoint {
        x: EARTH_RADIUS_M * dlon * anchor.lat_deg.to_radians().cos(),
        y: EARTH_RADIUS_M * dlat,
        z: (point.alt_ft - anchor.alt_ft) * FEET_TO_METERS,
    }
}

/// Inverse of [`geo_to_enu`].
pub fn enu_to_geo(anchor: &GeoPoint, point: &EnuPoint) -> GeoPoint {
    let lat = anchor.lat_deg + (point.y / EARTH_RADIUS_M).to_degrees();
    let lon = anchor.lon_deg
        + (point.x / (EARTH_RADIUS_M * anchor.lat_deg.to_radians().cos())).to_degrees();
    GeoPoint {
        lat_deg: lat,
        lon_deg: lon,
        alt_ft: anchor.alt_ft + point.z / FEET_TO_METERS,
    }
}

/// One trace record after projection. Time is seconds since the first
/// record of the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedSample {
    pub t: f64,
    pub position: EnuPoint,
    pub speed_mps: f64,
    pub heading_deg: f64,
    pub message_type: MessageType,
    pub direction: MessageDirection,
    pub msg_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProjectedTrace {
    pub samples: Vec<ProjectedSample>,
}

impl ProjectedTrace {
    /// Builds a trace from bare `(time, position)` pairs.
    pub fn from_positions(points: impl IntoIterator<Item = (f64, EnuPoint)>) -> Self {
        ProjectedTrace {
            samples: points
                .into_iter()
                .map(|(t, position)| ProjectedSample {
                    t,
                    position,
                    speed_mps: 0.0,
                    heading_deg: 0.0,
                    message_type: MessageType::Bsm,
                    direction: MessageDirection::Sent,
                    msg_id: None,
                })
                .collect(),
        }
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Largest distance from `anchor` over all samples.
    pub fn max_distance_from(&self, anchor: &EnuPoint) -> f64 {
        self.samples
            .iter()
            .map(|s| s.position.distance(anchor))
            .fold(0.0, f64::max)
    }
}

/// Project every record of `trace` into metres relative to the RSU, with
/// altitude converted from feet and speed from mph.
pub fn project_enu(trace: &Trace) -> Result<ProjectedTrace> {
    let rsu = trace.rsu();
    rsu.validate()?;
    let records = trace.records();
    let Some(first) = records.first() else {
        return Ok(ProjectedTrace::default());
    };
    let t0 = first.time;
    let mut samples = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let position = geo_to_enu(rsu, &rec.geo());
        let horizontal = position.x.hypot(position.y);
        if horizontal > MAX_PROJECTION_RADIUS_M {
            return Err(Error::document(
                "projection",
                format!(
                    "record {} lies {:.0} m from the RSU (limit {MAX_PROJECTION_RADIUS_M} m)",
                    i + 1,
                    horizontal
                ),
            ));
        }
        let dt = rec.time - t0;
        let t = dt
            .num_microseconds()
            .map(|us| us as f64 * 1e-6)
            .ok_or_else(|| Error::document("projection", "trace spans too long a time interval"))?;
        samples.push(ProjectedSample {
            t,
            position,
            speed_mps: rec.speed_mph * MPH_TO_MPS,
            heading_deg: rec.heading_deg,
            message_type: rec.message_type,
            direction: rec.direction,
            msg_id: rec.msg_id.clone(),
        });
    }
    Ok(ProjectedTrace { samples })
}
