//! Radio propagation: free-space reference power, Lognormal shadowing,
//! Nakagami-m fast fading, their cascade, and the per-packet reception
//! decision.
//!
//! Power levels are carried in dBm and gains in dB unless a name says
//! otherwise. The Lognormal stage works in the dB domain and the Nakagami
//! stage in linear milliwatts, each in its native formulation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default DSRC carrier (channel 178), Hz.
pub const DSRC_CARRIER_HZ: f64 = 5.9e9;

/// Lower and upper edge of the 5.9 GHz DSRC band, Hz.
pub const DSRC_BAND_HZ: (f64, f64) = (5.85e9, 5.925e9);

/// Upper bound accepted for transmit power, mW.
pub const MAX_TX_POWER_MW: f64 = 1000.0;

/// Minimum SNR (dB) needed to decode at each 802.11p data rate.
///
/// These are typical 802.11p-class figures; override them through
/// [`RadioParams::snr_thresholds`] when a different receiver is modelled.
pub const DEFAULT_SNR_THRESHOLDS_DB: SnrThresholds = SnrThresholds {
    mbps6: 5.0,
    mbps12: 11.0,
    mbps18: 15.0,
    mbps27: 20.0,
};

/// Convert a linear power ratio (or mW) to dB (or dBm).
#[inline]
pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Convert dB (or dBm) to a linear power ratio (or mW).
#[inline]
pub fn to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// OFDM data rates available on a 10 MHz DSRC channel that the search
/// space considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DataRate {
    Mbps6,
    Mbps12,
    Mbps18,
    Mbps27,
}

impl DataRate {
    pub const ALL: [DataRate; 4] = [
        DataRate::Mbps6,
        DataRate::Mbps12,
        DataRate::Mbps18,
        DataRate::Mbps27,
    ];

    pub fn mbps(self) -> u32 {
        match self {
            DataRate::Mbps6 => 6,
            DataRate::Mbps12 => 12,
            DataRate::Mbps18 => 18,
            DataRate::Mbps27 => 27,
        }
    }

    pub fn from_mbps(mbps: u32) -> Result<Self> {
        match mbps {
            6 => Ok(DataRate::Mbps6),
            12 => Ok(DataRate::Mbps12),
            18 => Ok(DataRate::Mbps18),
            27 => Ok(DataRate::Mbps27),
            other => Err(Error::domain(format!(
                "data rate {other} Mbps is not one of 6, 12, 18, 27"
            ))),
        }
    }
}

impl fmt::Display for DataRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.mbps())
    }
}

impl FromStr for DataRate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim();
        let digits = trimmed
            .strip_suffix("Mbps")
            .or_else(|| trimmed.strip_suffix("mbps"))
            .unwrap_or(trimmed)
            .trim();
        let mbps: u32 = digits
            .parse()
            .map_err(|_| Error::domain(format!("cannot parse data rate `{s}`")))?;
        DataRate::from_mbps(mbps)
    }
}

/// Per-rate SNR decoding thresholds in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrThresholds {
    pub mbps6: f64,
    pub mbps12: f64,
    pub mbps18: f64,
    pub mbps27: f64,
}

impl SnrThresholds {
    pub fn get(&self, rate: DataRate) -> f64 {
        match rate {
            DataRate::Mbps6 => self.mbps6,
            DataRate::Mbps12 => self.mbps12,
            DataRate::Mbps18 => self.mbps18,
            DataRate::Mbps27 => self.mbps27,
        }
    }

    pub fn set(&mut self, rate: DataRate, db: f64) {
        match rate {
            DataRate::Mbps6 => self.mbps6 = db,
            DataRate::Mbps12 => self.mbps12 = db,
            DataRate::Mbps18 => self.mbps18 = db,
            DataRate::Mbps27 => self.mbps27 = db,
        }
    }
}

impl Default for SnrThresholds {
    fn default() -> Self {
        DEFAULT_SNR_THRESHOLDS_DB
    }
}

/// Transmitter / receiver physical-layer configuration. The link is
/// treated as symmetric: both ends use the same values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioParams {
    pub tx_power_mw: f64,
    /// Linear antenna gains (1.0 = 0 dBi).
    pub antenna_gain_tx: f64,
    pub antenna_gain_rx: f64,
    pub carrier_frequency_hz: f64,
    pub data_rate: DataRate,
    pub noise_floor_dbm: f64,
    pub rx_sensitivity_dbm: f64,
    pub snr_thresholds: SnrThresholds,
}

impl RadioParams {
    /// Out-of-the-box simulator values (20 mW, 6 Mbps, -110 dBm noise and
    /// sensitivity).
    pub fn table_default() -> Self {
        RadioParams {
            tx_power_mw: 20.0,
            antenna_gain_tx: 1.0,
            antenna_gain_rx: 1.0,
            carrier_frequency_hz: DSRC_CARRIER_HZ,
            data_rate: DataRate::Mbps6,
            noise_floor_dbm: -110.0,
            rx_sensitivity_dbm: -110.0,
            snr_thresholds: DEFAULT_SNR_THRESHOLDS_DB,
        }
    }

    /// Values found by the field calibration (30.16 mW, 18 Mbps, -90 dBm
    /// noise, -114 dBm sensitivity).
    pub fn table_calibrated() -> Self {
        RadioParams {
            tx_power_mw: 30.16,
            data_rate: DataRate::Mbps18,
            noise_floor_dbm: -90.0,
            rx_sensitivity_dbm: -114.0,
            ..Self::table_default()
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency_hz
    }

    pub fn tx_power_dbm(&self) -> f64 {
        to_db(self.tx_power_mw)
    }

    /// Received power needed for a packet to survive both the sensitivity
    /// and the SNR test.
    pub fn decode_threshold_dbm(&self) -> f64 {
        self.rx_sensitivity_dbm
            .max(self.noise_floor_dbm + self.snr_thresholds.get(self.data_rate))
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.tx_power_mw,
            self.antenna_gain_tx,
            self.antenna_gain_rx,
            self.carrier_frequency_hz,
            self.noise_floor_dbm,
            self.rx_sensitivity_dbm,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::domain("radio parameters must be finite"));
        }
        if !(self.tx_power_mw > 0.0 && self.tx_power_mw <= MAX_TX_POWER_MW) {
            return Err(Error::domain(format!(
                "tx_power {} mW outside (0, {MAX_TX_POWER_MW}]",
                self.tx_power_mw
            )));
        }
        if self.antenna_gain_tx <= 0.0 || self.antenna_gain_rx <= 0.0 {
            return Err(Error::domain("antenna gains must be > 0"));
        }
        if self.carrier_frequency_hz <= 0.0 {
            return Err(Error::domain("carrier_frequency must be > 0"));
        }
        if self.noise_floor_dbm >= 0.0 || self.rx_sensitivity_dbm >= 0.0 {
            return Err(Error::domain(
                "noise_floor and rx_sensitivity must be below 0 dBm",
            ));
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus the DSRC band check on the carrier.
    pub fn validate_dsrc(&self) -> Result<()> {
        self.validate()?;
        let (lo, hi) = DSRC_BAND_HZ;
        if !(lo..=hi).contains(&self.carrier_frequency_hz) {
            return Err(Error::domain(format!(
                "carrier {} Hz outside the DSRC band [{lo}, {hi}]",
                self.carrier_frequency_hz
            )));
        }
        Ok(())
    }
}

/// Large-scale (slow) fading model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlowModel {
    /// Friis free-space decay (inverse square) from the reference distance.
    FreeSpaceOnly,
    /// Log-distance decay with exponent alpha plus Normal(0, sigma) dB shadowing.
    Lognormal,
}

/// Small-scale (fast) fading model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FastModel {
    None,
    Nakagami,
}

impl SlowModel {
    pub const ALL: [SlowModel; 2] = [SlowModel::FreeSpaceOnly, SlowModel::Lognormal];

    pub fn as_str(self) -> &'static str {
        match self {
            SlowModel::FreeSpaceOnly => "fsm",
            SlowModel::Lognormal => "lognormal",
        }
    }
}

impl FastModel {
    pub const ALL: [FastModel; 2] = [FastModel::None, FastModel::Nakagami];

    pub fn as_str(self) -> &'static str {
        match self {
            FastModel::None => "none",
            FastModel::Nakagami => "nakagami",
        }
    }
}

impl fmt::Display for SlowModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for FastModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SlowModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fsm" | "freespace" | "free_space" | "freespaceonly" | "free-space" => {
                Ok(SlowModel::FreeSpaceOnly)
            }
            "lognormal" | "lnm" | "log-normal" => Ok(SlowModel::Lognormal),
            _ => Err(Error::domain(format!("unknown slow fading model `{s}`"))),
        }
    }
}

impl FromStr for FastModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "-" | "off" => Ok(FastModel::None),
            "nakagami" => Ok(FastModel::Nakagami),
            _ => Err(Error::domain(format!("unknown fast fading model `{s}`"))),
        }
    }
}

/// Closed ranges the calibration search space allows for the continuous
/// fading parameters.
pub const ALPHA_RANGE: (f64, f64) = (1.0, 3.0);
pub const SYSTEM_LOSS_RANGE_DB: (f64, f64) = (0.0, 3.0);
pub const SIGMA_RANGE_DB: (f64, f64) = (1.0, 10.0);
pub const NAKAGAMI_M_RANGE: (f64, f64) = (1.0, 3.5);

/// Cascaded channel configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingParams {
    pub slow_model: SlowModel,
    pub fast_model: FastModel,
    /// Path-loss exponent of the log-distance stage.
    pub alpha: f64,
    pub system_loss_db: f64,
    pub sigma_db: f64,
    pub nakagami_m: f64,
    pub reference_distance_m: f64,
}

impl FadingParams {
    /// Checked constructor: every continuous value must lie inside the
    /// calibration search space.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        slow_model: SlowModel,
        fast_model: FastModel,
        alpha: f64,
        system_loss_db: f64,
        sigma_db: f64,
        nakagami_m: f64,
        reference_distance_m: f64,
    ) -> Result<Self> {
        let p = Self::new_unchecked(
            slow_model,
            fast_model,
            alpha,
            system_loss_db,
            sigma_db,
            nakagami_m,
            reference_distance_m,
        );
        for (name, value, (lo, hi)) in [
            ("alpha", alpha, ALPHA_RANGE),
            ("system_loss", system_loss_db, SYSTEM_LOSS_RANGE_DB),
            ("sigma", sigma_db, SIGMA_RANGE_DB),
            ("nakagami_m", nakagami_m, NAKAGAMI_M_RANGE),
        ] {
            if !(lo..=hi).contains(&value) {
                return Err(Error::domain(format!(
                    "{name} = {value} outside [{lo}, {hi}]"
                )));
            }
        }
        p.validate()?;
        Ok(p)
    }

    /// Builds the parameter set without range checks. Only the physical
    /// preconditions in [`validate`](Self::validate) are enforced later, at
    /// use.
    #[allow(clippy::too_many_arguments)]
    pub fn new_unchecked(
        slow_model: SlowModel,
        fast_model: FastModel,
        alpha: f64,
        system_loss_db: f64,
        sigma_db: f64,
        nakagami_m: f64,
        reference_distance_m: f64,
    ) -> Self {
        FadingParams {
            slow_model,
            fast_model,
            alpha,
            system_loss_db,
            sigma_db,
            nakagami_m,
            reference_distance_m,
        }
    }

    pub fn table_default() -> Self {
        FadingParams {
            slow_model: SlowModel::FreeSpaceOnly,
            fast_model: FastModel::None,
            alpha: 1.0,
            system_loss_db: 0.0,
            sigma_db: 2.0,
            nakagami_m: 1.0,
            reference_distance_m: 1.0,
        }
    }

    pub fn table_calibrated() -> Self {
        FadingParams {
            slow_model: SlowModel::Lognormal,
            fast_model: FastModel::Nakagami,
            alpha: 1.51,
            system_loss_db: 0.13,
            sigma_db: 6.03,
            nakagami_m: 2.0,
            reference_distance_m: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reference_distance_m.is_finite() && self.reference_distance_m > 0.0) {
            return Err(Error::domain("reference_distance must be > 0"));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::domain("alpha must be finite and > 0"));
        }
        if !(self.system_loss_db.is_finite() && self.system_loss_db >= 0.0) {
            return Err(Error::domain("system_loss must be >= 0 dB"));
        }
        if !(self.sigma_db.is_finite() && self.sigma_db >= 0.0) {
            return Err(Error::domain("sigma must be >= 0 dB"));
        }
        if !(self.nakagami_m.is_finite() && self.nakagami_m >= 0.5) {
            return Err(Error::domain("nakagami_m must be >= 0.5"));
        }
        Ok(())
    }
}

/// Received power at the reference distance, dBm (Friis with system loss).
pub fn free_space_rx_power(radio: &RadioParams, fading: &FadingParams) -> Result<f64> {
    radio.validate()?;
    fading.validate()?;
    let lambda = radio.wavelength();
    let d0 = fading.reference_distance_m;
    let loss = to_linear(fading.system_loss_db);
    let pr_mw = radio.tx_power_mw * radio.antenna_gain_tx * radio.antenna_gain_rx * lambda * lambda
        / ((4.0 * PI).powi(2) * d0 * d0 * loss);
    Ok(to_db(pr_mw))
}

fn check_distance(distance: f64) -> Result<()> {
    if !distance.is_finite() || distance <= 0.0 {
        return Err(Error::domain(format!(
            "distance must be finite and > 0, got {distance}"
        )));
    }
    Ok(())
}

/// Mean (non-random) received power of the slow-fading stage, dBm.
/// Distances below the reference distance are clamped to it.
pub fn slow_fading_mean_power(
    radio: &RadioParams,
    fading: &FadingParams,
    distance: f64,
) -> Result<f64> {
    check_distance(distance)?;
    let reference = free_space_rx_power(radio, fading)?;
    let ratio = distance.max(fading.reference_distance_m) / fading.reference_distance_m;
    let exponent = match fading.slow_model {
        SlowModel::FreeSpaceOnly => 2.0,
        SlowModel::Lognormal => fading.alpha,
    };
    Ok(reference - 10.0 * exponent * ratio.log10())
}

/// One Lognormal-shadowed received power sample at `distance`, dBm.
///
/// Always consumes exactly one standard-normal draw from `rng`, so runs that
/// differ only in `sigma` see the same underlying shadowing sequence.
pub fn lognormal_rx_power<R: Rng + ?Sized>(
    radio: &RadioParams,
    fading: &FadingParams,
    distance: f64,
    rng: &mut R,
) -> Result<f64> {
    let mean = slow_fading_mean_power(
        radio,
        &FadingParams {
            slow_model: SlowModel::Lognormal,
            ..*fading
        },
        distance,
    )?;
    let z: f64 = StandardNormal.sample(rng);
    Ok(mean + fading.sigma_db * z)
}

/// One Nakagami-m received power sample, mW, with mean power `omega`.
///
/// The squared Nakagami envelope is Gamma(m, omega / m), so the power is drawn
/// from that Gamma directly.
pub fn nakagami_power_sample<R: Rng + ?Sized>(omega: f64, m: f64, rng: &mut R) -> Result<f64> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::domain(format!("omega must be > 0, got {omega}")));
    }
    if !(m.is_finite() && m >= 0.5) {
        return Err(Error::domain(format!("nakagami m must be >= 0.5, got {m}")));
    }
    let gamma = Gamma::new(m, omega / m).map_err(|e| Error::domain(e.to_string()))?;
    Ok(gamma.sample(rng))
}

/// Full cascade: slow-fading stage, then (optionally) Nakagami fading around
/// the slow-fading power. Returns dBm.
pub fn cascade_rx_power<R: Rng + ?Sized>(
    radio: &RadioParams,
    fading: &FadingParams,
    distance: f64,
    rng: &mut R,
) -> Result<f64> {
    let slow = match fading.slow_model {
        SlowModel::FreeSpaceOnly => slow_fading_mean_power(radio, fading, distance)?,
        SlowModel::Lognormal => lognormal_rx_power(radio, fading, distance, rng)?,
    };
    match fading.fast_model {
        FastModel::None => Ok(slow),
        FastModel::Nakagami => {
            let omega = to_linear(slow);
            let p = nakagami_power_sample(omega, fading.nakagami_m, rng)?;
            Ok(to_db(p))
        }
    }
}

/// Deterministic part of the link gain at `distance`: mean slow-fading
/// power minus transmit power, dB. Shadowing and fast fading are excluded.
/// A positive value means the model amplifies the signal.
pub fn deterministic_gain_db(
    radio: &RadioParams,
    fading: &FadingParams,
    distance: f64,
) -> Result<f64> {
    Ok(slow_fading_mean_power(radio, fading, distance)? - radio.tx_power_dbm())
}

/// Why a packet was or was not decoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReceptionReason {
    Delivered,
    BelowSensitivity,
    BelowSnr,
}

impl ReceptionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ReceptionReason::Delivered => "delivered",
            ReceptionReason::BelowSensitivity => "below_sensitivity",
            ReceptionReason::BelowSnr => "below_snr",
        }
    }
}

impl FromStr for ReceptionReason {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "delivered" => Ok(ReceptionReason::Delivered),
            "below_sensitivity" => Ok(ReceptionReason::BelowSensitivity),
            "below_snr" => Ok(ReceptionReason::BelowSnr),
            _ => Err(Error::domain(format!("unknown reception reason `{s}`"))),
        }
    }
}

impl fmt::Display for ReceptionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Reception {
    pub delivered: bool,
    pub reason: ReceptionReason,
}

/// Reception decision. Both comparisons are inclusive; sensitivity is
/// checked first.
pub fn is_received(rx_power_dbm: f64, radio: &RadioParams) -> Reception {
    let reason = if !(rx_power_dbm >= radio.rx_sensitivity_dbm) {
        ReceptionReason::BelowSensitivity
    } else if rx_power_dbm - radio.noise_floor_dbm < radio.snr_thresholds.get(radio.data_rate) {
        ReceptionReason::BelowSnr
    } else {
        ReceptionReason::Delivered
    };
    Reception {
        delivered: reason == ReceptionReason::Delivered,
        reason,
    }
}
