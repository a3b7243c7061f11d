//! Plain-text `key = value` run configuration.
//!
//! Lines are applied in order, so a later line overrides an earlier one;
//! `#` starts a comment. `preset = default|calibrated` loads one column of
//! the parameter table at that point. [`RunConfig::to_config_string`]
//! writes every key with shortest round-trip numbers, so the echo of a
//! resolved configuration parses back to the same configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use chrono::{DateTime, Utc};

use crate::calibration::{GaConfig, Gene, GeneValue, Genome, SearchSpace};
use crate::dataio::projection::GeoPoint;
use crate::dataio::synthetic::{SyntheticSpec, Waypoint};
use crate::dataio::trace::{format_time, parse_time, TimeFormat};
use crate::error::{Error, Result};
use crate::propagation::{DataRate, FadingParams, RadioParams};
use crate::simulator::{DirectionFilter, ScenarioConfig};

/// The two columns of the parameter table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Default,
    Calibrated,
}

impl Preset {
    pub fn genome(self) -> Genome {
        match self {
            Preset::Default => Genome::table_default(),
            Preset::Calibrated => Genome::table_calibrated(),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "default" => Ok(Preset::Default),
            "calibrated" => Ok(Preset::Calibrated),
            _ => Err(Error::config(format!(
                "unknown preset `{s}` (expected default or calibrated)"
            ))),
        }
    }
}

/// Route and sampling of a synthetic dataset; the planted channel is the
/// configuration's radio/fading section.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRoute {
    pub waypoints: Vec<Waypoint>,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub seed: u64,
    pub start_time: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub radio: RadioParams,
    pub fading: FadingParams,
    pub scenario: ScenarioConfig,
    pub ga: GaConfig,
    /// Pinned genes, with their resolved values.
    pub freeze: BTreeMap<Gene, GeneValue>,
    pub rsu: GeoPoint,
    pub time_format: TimeFormat,
    pub direction: DirectionFilter,
    pub synth: SynthRoute,
}

impl Default for RunConfig {
    fn default() -> Self {
        let drive_by = SyntheticSpec::drive_by();
        RunConfig {
            radio: RadioParams::table_default(),
            fading: FadingParams::table_default(),
            scenario: ScenarioConfig::default(),
            ga: GaConfig::default(),
            freeze: BTreeMap::new(),
            rsu: drive_by.rsu,
            time_format: TimeFormat::Iso8601,
            direction: DirectionFilter::Both,
            synth: SynthRoute {
                waypoints: drive_by.waypoints,
                duration_s: drive_by.duration_s,
                sample_rate_hz: drive_by.sample_rate_hz,
                seed: drive_by.seed,
                start_time: drive_by.start_time,
            },
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse `{value}`")))
}

fn parse_waypoints(value: &str) -> Result<Vec<Waypoint>> {
    value
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let parts: Vec<&str> = item.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(Error::config(format!(
                    "waypoints: `{item}` is not `x, y, speed`"
                )));
            }
            Ok(Waypoint::new(
                parse_num("waypoints", parts[0])?,
                parse_num("waypoints", parts[1])?,
                parse_num("waypoints", parts[2])?,
            ))
        })
        .collect()
}

/// `gene` or `gene=value`; without a value the gene is pinned at whatever
/// the configuration holds once all layers are applied.
pub fn parse_freeze_item(item: &str) -> Result<(Gene, Option<GeneValue>)> {
    match item.split_once('=') {
        Some((g, v)) => {
            let gene: Gene = g.parse()?;
            Ok((gene, Some(GeneValue::parse(gene, v)?)))
        }
        None => Ok((item.parse()?, None)),
    }
}

fn time_format_str(f: TimeFormat) -> &'static str {
    match f {
        TimeFormat::Iso8601 => "iso8601",
        TimeFormat::EpochMillis => "epoch_ms",
    }
}

fn gene_config_text(v: GeneValue) -> String {
    match v {
        GeneValue::Real(x) => format!("{x}"),
        GeneValue::Rate(r) => r.mbps().to_string(),
        GeneValue::Slow(m) => m.to_string(),
        GeneValue::Fast(m) => m.to_string(),
    }
}

/// Accumulates layers, then resolves into a validated [`RunConfig`].
#[derive(Debug, Clone, Default)]
pub struct ConfigBuilder {
    config: RunConfig,
    passes: Option<u32>,
    freeze: Vec<(Gene, Option<GeneValue>)>,
}

impl ConfigBuilder {
    pub fn new() -> Self {
        ConfigBuilder::default()
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        let (radio, fading) = preset
            .genome()
            .to_params(&self.config.radio, &self.config.fading);
        self.config.radio = radio;
        self.config.fading = fading;
    }

    pub fn freeze(&mut self, gene: Gene, value: Option<GeneValue>) {
        self.freeze.push((gene, value));
    }

    /// Apply every line of a configuration document. `context` names the
    /// document in diagnostics.
    pub fn apply_document(&mut self, context: &str, document: &str) -> Result<()> {
        for (i, raw) in document.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::document(context, format!("line {}: expected `key = value`", i + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::document(context, format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    /// Apply one `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let c = &mut self.config;
        let k = key.to_ascii_lowercase();
        let snr = |k: &str| -> Option<DataRate> {
            k.strip_prefix("snr_threshold_")
                .and_then(|r| r.trim_end_matches("mbps").parse::<u32>().ok())
                .and_then(|m| DataRate::from_mbps(m).ok())
        };
        match k.as_str() {
            "preset" => {
                let p: Preset = value.parse()?;
                self.apply_preset(p);
            }
            "tx_power" => c.radio.tx_power_mw = parse_num(&k, value)?,
            "antenna_gain_tx" => c.radio.antenna_gain_tx = parse_num(&k, value)?,
            "antenna_gain_rx" => c.radio.antenna_gain_rx = parse_num(&k, value)?,
            "carrier_frequency" => c.radio.carrier_frequency_hz = parse_num(&k, value)?,
            "data_rate" => c.radio.data_rate = value.parse()?,
            "noise_floor" => c.radio.noise_floor_dbm = parse_num(&k, value)?,
            "rx_sensitivity" => c.radio.rx_sensitivity_dbm = parse_num(&k, value)?,
            _ if snr(&k).is_some() => {
                c.radio
                    .snr_thresholds
                    .set(snr(&k).unwrap(), parse_num(&k, value)?);
            }
            "slow_model" => c.fading.slow_model = value.parse()?,
            "fast_model" => c.fading.fast_model = value.parse()?,
            "alpha" => c.fading.alpha = parse_num(&k, value)?,
            "system_loss" => c.fading.system_loss_db = parse_num(&k, value)?,
            "sigma" => c.fading.sigma_db = parse_num(&k, value)?,
            "nakagami_m" => c.fading.nakagami_m = parse_num(&k, value)?,
            "reference_distance" => c.fading.reference_distance_m = parse_num(&k, value)?,
            "rsu_x" => c.scenario.rsu_position.x = parse_num(&k, value)?,
            "rsu_y" => c.scenario.rsu_position.y = parse_num(&k, value)?,
            "rsu_z" => c.scenario.rsu_position.z = parse_num(&k, value)?,
            "bsm_rate" => c.scenario.bsm_rate_hz = parse_num(&k, value)?,
            "spat_rate" => c.scenario.spat_rate_hz = parse_num(&k, value)?,
            "master_seed" => c.scenario.master_seed = parse_num(&k, value)?,
            "bin_width" => c.scenario.bin_width_m = parse_num(&k, value)?,
            "heatmap_cell" => c.scenario.heatmap_cell_m = parse_num(&k, value)?,
            "population_size" => c.ga.population_size = parse_num(&k, value)?,
            "generations" => c.ga.generations = parse_num(&k, value)?,
            "tournament_size" => c.ga.tournament_size = parse_num(&k, value)?,
            "crossover_prob" => c.ga.crossover_prob = parse_num(&k, value)?,
            "mutation_prob_per_gene" => c.ga.mutation_prob_per_gene = parse_num(&k, value)?,
            "mutation_sigma_fraction" => c.ga.mutation_sigma_fraction = parse_num(&k, value)?,
            "elite_count" => c.ga.elite_count = parse_num(&k, value)?,
            "ga_seed" => c.ga.master_seed = parse_num(&k, value)?,
            "freeze" => {
                for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let (g, v) = parse_freeze_item(item)?;
                    self.freeze.push((g, v));
                }
            }
            "rsu_lat" => c.rsu.lat_deg = parse_num(&k, value)?,
            "rsu_lon" => c.rsu.lon_deg = parse_num(&k, value)?,
            "rsu_alt_ft" => c.rsu.alt_ft = parse_num(&k, value)?,
            "time_format" => {
                c.time_format = match value.trim().to_ascii_lowercase().as_str() {
                    "iso8601" | "iso" => TimeFormat::Iso8601,
                    "epoch_ms" => TimeFormat::EpochMillis,
                    _ => return Err(Error::config(format!("time_format: unknown `{value}`"))),
                }
            }
            "direction" => c.direction = value.parse()?,
            "waypoints" => c.synth.waypoints = parse_waypoints(value)?,
            "duration" => {
                c.synth.duration_s = parse_num(&k, value)?;
                self.passes = None;
            }
            "passes" => {
                self.passes = Some(parse_num(&k, value)?);
            }
            "sample_rate" => c.synth.sample_rate_hz = parse_num(&k, value)?,
            "synth_seed" => c.synth.seed = parse_num(&k, value)?,
            "start_time" => {
                c.synth.start_time = parse_time(value, TimeFormat::Iso8601)
                    .map_err(|e| Error::config(format!("start_time: {e}")))?
            }
            _ => return Err(Error::config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn build(self) -> Result<RunConfig> {
        let mut c = self.config;
        if let Some(p) = self.passes {
            if p == 0 {
                return Err(Error::config("passes must be >= 1"));
            }
            c.synth.duration_s = c.synthetic_spec().with_passes(p).duration_s;
        }
        let current = Genome::from_params(&c.radio, &c.fading);
        for (gene, value) in self.freeze {
            c.freeze
                .insert(gene, value.unwrap_or_else(|| current.get(gene)));
        }
        c.validate()?;
        Ok(c)
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.radio.validate()?;
        self.fading.validate()?;
        self.scenario.validate()?;
        self.ga.validate()?;
        self.rsu.validate()?;
        self.search_space()?;
        Ok(())
    }

    /// The parameter-table search space with this configuration's pins.
    pub fn search_space(&self) -> Result<SearchSpace> {
        let mut space = SearchSpace::table();
        for (&g, &v) in &self.freeze {
            space.freeze(g, v)?;
        }
        Ok(space)
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            radio: self.radio,
            fading: self.fading,
            waypoints: self.synth.waypoints.clone(),
            duration_s: self.synth.duration_s,
            seed: self.synth.seed,
            sample_rate_hz: self.synth.sample_rate_hz,
            rsu: self.rsu,
            start_time: self.synth.start_time,
        }
    }

    pub fn from_document(context: &str, document: &str) -> Result<Self> {
        let mut b = ConfigBuilder::new();
        b.apply_document(context, document)?;
        b.build()
    }

    /// Every key, one per line, in a fixed order.
    pub fn to_config_string(&self) -> String {
        let r = &self.radio;
        let f = &self.fading;
        let s = &self.scenario;
        let g = &self.ga;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        kv("tx_power", format!("{}", r.tx_power_mw));
        kv("antenna_gain_tx", format!("{}", r.antenna_gain_tx));
        kv("antenna_gain_rx", format!("{}", r.antenna_gain_rx));
        kv("carrier_frequency", format!("{}", r.carrier_frequency_hz));
        kv("data_rate", r.data_rate.mbps().to_string());
        kv("noise_floor", format!("{}", r.noise_floor_dbm));
        kv("rx_sensitivity", format!("{}", r.rx_sensitivity_dbm));
        for rate in DataRate::ALL {
            kv(
                &format!("snr_threshold_{}", rate.mbps()),
                format!("{}", r.snr_thresholds.get(rate)),
            );
        }
        kv("slow_model", f.slow_model.to_string());
        kv("fast_model", f.fast_model.to_string());
        kv("alpha", format!("{}", f.alpha));
        kv("system_loss", format!("{}", f.system_loss_db));
        kv("sigma", format!("{}", f.sigma_db));
        kv("nakagami_m", format!("{}", f.nakagami_m));
        kv("reference_distance", format!("{}", f.reference_distance_m));
        kv("rsu_x", format!("{}", s.rsu_position.x));
        kv("rsu_y", format!("{}", s.rsu_position.y));
        kv("rsu_z", format!("{}", s.rsu_position.z));
        kv("bsm_rate", format!("{}", s.bsm_rate_hz));
        kv("spat_rate", format!("{}", s.spat_rate_hz));
        kv("master_seed", s.master_seed.to_string());
        kv("bin_width", format!("{}", s.bin_width_m));
        kv("heatmap_cell", format!("{}", s.heatmap_cell_m));
        kv("population_size", g.population_size.to_string());
        kv("generations", g.generations.to_string());
        kv("tournament_size", g.tournament_size.to_string());
        kv("crossover_prob", format!("{}", g.crossover_prob));
        kv(
            "mutation_prob_per_gene",
            format!("{}", g.mutation_prob_per_gene),
        );
        kv(
            "mutation_sigma_fraction",
            format!("{}", g.mutation_sigma_fraction),
        );
        kv("elite_count", g.elite_count.to_string());
        kv("ga_seed", g.master_seed.to_string());
        let pins: Vec<String> = self
            .freeze
            .iter()
            .map(|(g, v)| format!("{g}={}", gene_config_text(*v)))
            .collect();
        kv("freeze", pins.join(", "));
        kv("rsu_lat", format!("{}", self.rsu.lat_deg));
        kv("rsu_lon", format!("{}", self.rsu.lon_deg));
        kv("rsu_alt_ft", format!("{}", self.rsu.alt_ft));
        kv("time_format", time_format_str(self.time_format).to_owned());
        kv("direction", self.direction.to_string());
        let wps: Vec<String> = self
            .synth
            .waypoints
            .iter()
            .map(|w| format!("{}, {}, {}", w.x, w.y, w.speed_mps))
            .collect();
        kv("waypoints", wps.join("; "));
        kv("duration", format!("{}", self.synth.duration_s));
        kv("sample_rate", format!("{}", self.synth.sample_rate_hz));
        kv("synth_seed", self.synth.seed.to_string());
        kv("start_time", format_time(&self.synth.start_time));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::{FastModel, SlowModel};
    use proptest::prelude::*;

    #[test]
    fn defaults_echo_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let text = c.to_config_string();
        assert_eq!(RunConfig::from_document("echo", &text).unwrap(), c);
    }

    #[test]
    fn preset_binds_table_column() {
        let c = RunConfig::from_document("t", "preset = calibrated\n").unwrap();
        assert_eq!(
            Genome::from_params(&c.radio, &c.fading),
            Genome::table_calibrated()
        );
        // A later line overrides the preset; an earlier one does not.
        let c =
            RunConfig::from_document("t", "alpha = 2\npreset = calibrated\nsigma = 4\n").unwrap();
        assert_eq!((c.fading.alpha, c.fading.sigma_db), (1.51, 4.0));
    }

    #[test]
    fn comments_passes_and_freeze() {
        let doc = "# comment\npasses = 3   # trailing\nfreeze = noise_floor, alpha=1.5\npreset = calibrated\n";
        let c = RunConfig::from_document("t", doc).unwrap();
        let one_way = SyntheticSpec::drive_by().one_way_duration();
        assert!((c.synth.duration_s - 3.0 * one_way).abs() < 1e-9);
        assert_eq!(c.freeze[&Gene::NoiseFloor], GeneValue::Real(-90.0));
        assert_eq!(c.freeze[&Gene::Alpha], GeneValue::Real(1.5));
        let back = RunConfig::from_document("echo", &c.to_config_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn errors_name_the_line() {
        let err = RunConfig::from_document("cfg.txt", "alpha = 1\nbogus = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("cfg.txt") && msg.contains("line 2") && msg.contains("bogus"),
            "{msg}"
        );
        assert!(RunConfig::from_document("t", "alpha\n").is_err());
        assert!(RunConfig::from_document("t", "generations = 0\n").is_err());
        assert!(RunConfig::from_document("t", "freeze = alpha=9\n").is_err());
        assert!(RunConfig::from_document("t", "waypoints = 1,2\n").is_err());
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        (
            (
                20.0f64..40.0,
                -110.0f64..-90.0,
                -120.0f64..-90.0,
                0usize..4,
                any::<bool>(),
                any::<bool>(),
            ),
            (
                1.0f64..3.0,
                0.0f64..3.0,
                1.0f64..10.0,
                1.0f64..3.5,
                0.1f64..5.0,
            ),
            (
                any::<u64>(),
                any::<u64>(),
                any::<u64>(),
                1.0f64..50.0,
                0.5f64..40.0,
            ),
            proptest::collection::vec((-2000.0f64..2000.0, -2000.0f64..2000.0, 0.5f64..40.0), 2..5),
            (0i64..2_000_000_000_000_000, 3usize..40, any::<bool>()),
        )
            .prop_map(|(a, b, c, w, d)| {
                let mut cfg = RunConfig::default();
                cfg.radio.tx_power_mw = a.0;
                cfg.radio.noise_floor_dbm = a.1;
                cfg.radio.rx_sensitivity_dbm = a.2;
                cfg.radio.data_rate = DataRate::ALL[a.3];
                cfg.fading.slow_model = if a.4 {
                    SlowModel::Lognormal
                } else {
                    SlowModel::FreeSpaceOnly
                };
                cfg.fading.fast_model = if a.5 {
                    FastModel::Nakagami
                } else {
                    FastModel::None
                };
                cfg.fading.alpha = b.0;
                cfg.fading.system_loss_db = b.1;
                cfg.fading.sigma_db = b.2;
                cfg.fading.nakagami_m = b.3;
                cfg.fading.reference_distance_m = b.4;
                cfg.scenario.master_seed = c.0;
                cfg.ga.master_seed = c.1;
                cfg.synth.seed = c.2;
                cfg.scenario.bin_width_m = c.3;
                cfg.synth.sample_rate_hz = c.4;
                cfg.synth.waypoints = w
                    .into_iter()
                    .map(|(x, y, s)| Waypoint::new(x, y, s))
                    .collect();
                cfg.synth.start_time = DateTime::from_timestamp_micros(d.0).unwrap();
                cfg.ga.population_size = d.1;
                if d.2 {
                    cfg.freeze
                        .insert(Gene::Sigma, GeneValue::Real(cfg.fading.sigma_db));
                    cfg.freeze
                        .insert(Gene::SlowModel, GeneValue::Slow(cfg.fading.slow_model));
                }
                cfg
            })
    }

    proptest! {
        #[test]
        fn echo_is_lossless(cfg in arb_config()) {
            let text = cfg.to_config_string();
            let back = RunConfig::from_document("echo", &text).unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(back.to_config_string(), text);
        }
    }
}
