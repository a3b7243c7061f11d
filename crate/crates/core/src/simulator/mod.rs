//! Trace replay against a single fixed RSU.
//!
//! The vehicle sends BSMs to the RSU and the RSU sends SPaT to the vehicle,
//! each at its own fixed cadence. Every packet runs through the propagation
//! cascade and the reception decision, producing a [`DeliveryLog`].

mod aggregate;

pub use aggregate::{
    heatmap, heatmap_filtered, pdr_curve, pdr_curve_filtered, rmse, DirectionFilter, HeatmapCell,
    HeatmapGrid, PdrBin, PdrCurve,
};

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataio::projection::{EnuPoint, ProjectedTrace};
use crate::error::{Error, Result};
use crate::propagation::{
    cascade_rx_power, is_received, FadingParams, RadioParams, ReceptionReason,
};

/// Default BSM and SPaT cadence, Hz.
pub const DEFAULT_MESSAGE_RATE_HZ: f64 = 10.0;
/// Default width of a PDR distance bin, m.
pub const DEFAULT_BIN_WIDTH_M: f64 = 20.0;
/// Default heatmap cell edge, m.
pub const DEFAULT_HEATMAP_CELL_M: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioConfig {
    pub rsu_position: EnuPoint,
    pub bsm_rate_hz: f64,
    pub spat_rate_hz: f64,
    pub master_seed: u64,
    pub bin_width_m: f64,
    pub heatmap_cell_m: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            rsu_position: EnuPoint::ORIGIN,
            bsm_rate_hz: DEFAULT_MESSAGE_RATE_HZ,
            spat_rate_hz: DEFAULT_MESSAGE_RATE_HZ,
            master_seed: 1,
            bin_width_m: DEFAULT_BIN_WIDTH_M,
            heatmap_cell_m: DEFAULT_HEATMAP_CELL_M,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be > 0, got {v}")))
            }
        };
        positive("bsm_rate", self.bsm_rate_hz)?;
        positive("spat_rate", self.spat_rate_hz)?;
        positive("bin_width", self.bin_width_m)?;
        positive("heatmap_cell", self.heatmap_cell_m)?;
        let p = self.rsu_position;
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(Error::config("rsu_position must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    /// BSM, vehicle to RSU.
    VehicleToRsu,
    /// SPaT, RSU to vehicle.
    RsuToVehicle,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::VehicleToRsu => "bsm",
            Direction::RsuToVehicle => "spat",
        }
    }

    fn stream_tag(self) -> u64 {
        match self {
            Direction::VehicleToRsu => 0x4253_4d00,
            Direction::RsuToVehicle => 0x5350_6154,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bsm" | "vehicle_to_rsu" | "v2i" => Ok(Direction::VehicleToRsu),
            "spat" | "rsu_to_vehicle" | "i2v" => Ok(Direction::RsuToVehicle),
            _ => Err(Error::domain(format!("unknown direction `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeliveryRecord {
    /// Seconds since scenario start.
    pub timestamp: f64,
    pub direction: Direction,
    pub tx_position: EnuPoint,
    pub rx_position: EnuPoint,
    pub distance: f64,
    pub rx_power_dbm: f64,
    pub delivered: bool,
    pub reason: ReceptionReason,
}

impl DeliveryRecord {
    /// The vehicle end of the link, whichever direction the packet went.
    pub fn vehicle_position(&self) -> EnuPoint {
        match self.direction {
            Direction::VehicleToRsu => self.tx_position,
            Direction::RsuToVehicle => self.rx_position,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeliveryLog {
    pub records: Vec<DeliveryRecord>,
}

impl DeliveryLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn delivered(&self) -> usize {
        self.records.iter().filter(|r| r.delivered).count()
    }

    /// Overall PDR in percent, `None` for an empty log.
    pub fn overall_pdr(&self) -> Option<f64> {
        (!self.is_empty()).then(|| 100.0 * self.delivered() as f64 / self.len() as f64)
    }
}

/// Random stream for packet `index` of `direction`. Streams of the two
/// directions are disjoint, so adding packets of one kind never shifts the
/// draws of the other.
pub fn packet_rng(master_seed: u64, direction: Direction, index: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&direction.stream_tag().to_le_bytes());
    seed[16..24].copy_from_slice(&index.to_le_bytes());
    seed[24..].copy_from_slice(b"v2xpkt\0\0");
    ChaCha8Rng::from_seed(seed)
}

/// Number of transmissions at `rate` in `[0, duration)`.
pub fn message_count(duration: f64, rate: f64) -> u64 {
    if duration <= 0.0 {
        return 0;
    }
    // Guard against 10.0 * 10.0 landing a hair under 100.
    let exact = duration * rate;
    let n = (exact + 1e-9 * exact.max(1.0)).floor();
    n as u64
}

/// Linear interpolation along a time-sorted trace, with a moving cursor so a
/// forward sweep is linear overall.
struct Interpolator<'a> {
    trace: &'a ProjectedTrace,
    cursor: usize,
}

impl<'a> Interpolator<'a> {
    fn new(trace: &'a ProjectedTrace) -> Self {
        Interpolator { trace, cursor: 0 }
    }

    fn at(&mut self, t: f64) -> EnuPoint {
        let s = &self.trace.samples;
        if t < s[self.cursor].t {
            self.cursor = 0;
        }
        while self.cursor + 1 < s.len() && s[self.cursor + 1].t <= t {
            self.cursor += 1;
        }
        let a = &s[self.cursor];
        match s.get(self.cursor + 1) {
            Some(b) if b.t > a.t => a.position.lerp(&b.position, (t - a.t) / (b.t - a.t)),
            _ => a.position,
        }
    }
}

fn check_trace(trace: &ProjectedTrace) -> Result<()> {
    if trace.samples.is_empty() {
        return Err(Error::domain("trace is empty"));
    }
    for (i, w) in trace.samples.windows(2).enumerate() {
        if !(w[1].t >= w[0].t) {
            return Err(Error::domain(format!(
                "trace timestamps not monotone at sample {}",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Replay `trace`, sending BSMs from the interpolated vehicle position and
/// SPaT from the RSU, and decide each packet's fate.
///
/// Transmission `k` of a direction happens at `t0 + k / rate` for every
/// instant in `[t0, t_end)`. Records come out ordered by time, BSM first on
/// ties. The result depends only on the inputs and `scenario.master_seed`.
pub fn run_scenario(
    trace: &ProjectedTrace,
    scenario: &ScenarioConfig,
    radio: &RadioParams,
    fading: &FadingParams,
) -> Result<DeliveryLog> {
    scenario.validate()?;
    check_trace(trace)?;
    radio.validate()?;
    fading.validate()?;

    let t0 = trace.samples[0].t;
    let duration = trace.duration();
    let mut records = Vec::with_capacity(
        (message_count(duration, scenario.bsm_rate_hz)
            + message_count(duration, scenario.spat_rate_hz)) as usize,
    );
    for (direction, rate) in [
        (Direction::VehicleToRsu, scenario.bsm_rate_hz),
        (Direction::RsuToVehicle, scenario.spat_rate_hz),
    ] {
        let mut interp = Interpolator::new(trace);
        for k in 0..message_count(duration, rate) {
            let offset = k as f64 / rate;
            let vehicle = interp.at(t0 + offset);
            let (tx_position, rx_position) = match direction {
                Direction::VehicleToRsu => (vehicle, scenario.rsu_position),
                Direction::RsuToVehicle => (scenario.rsu_position, vehicle),
            };
            let distance = tx_position.distance(&rx_position);
            let mut rng = packet_rng(scenario.master_seed, direction, k);
            // Co-located endpoints sit at the reference-distance cap.
            let link_distance = distance.max(f64::MIN_POSITIVE);
            let rx_power = cascade_rx_power(radio, fading, link_distance, &mut rng)?;
            let reception = is_received(rx_power, radio);
            records.push(DeliveryRecord {
                timestamp: offset,
                direction,
                tx_position,
                rx_position,
                distance,
                rx_power_dbm: rx_power,
                delivered: reception.delivered,
                reason: reception.reason,
            });
        }
    }
    records.sort_by(|a, b| {
        a.timestamp
            .total_cmp(&b.timestamp)
            .then(a.direction.cmp(&b.direction))
    });
    Ok(DeliveryLog { records })
}
