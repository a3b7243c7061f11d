//! The ten-gene parameter vector and its search space.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::propagation::{
    DataRate, FadingParams, FastModel, RadioParams, SlowModel, ALPHA_RANGE, NAKAGAMI_M_RANGE,
    SIGMA_RANGE_DB, SYSTEM_LOSS_RANGE_DB,
};

/// Continuous genes are kept on a 1e-6 grid so that the fixed six-decimal
/// history CSV reproduces them exactly.
pub const GENE_QUANTUM: f64 = 1e-6;

pub(crate) fn quantize_gene(v: f64) -> f64 {
    format!("{v:.6}").parse().expect("formatted float parses")
}

/// Gene identifiers in canonical order. The names double as configuration
/// keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Gene {
    TxPower,
    DataRate,
    NoiseFloor,
    RxSensitivity,
    SlowModel,
    FastModel,
    Alpha,
    SystemLoss,
    Sigma,
    NakagamiM,
}

impl Gene {
    pub const ALL: [Gene; 10] = [
        Gene::TxPower,
        Gene::DataRate,
        Gene::NoiseFloor,
        Gene::RxSensitivity,
        Gene::SlowModel,
        Gene::FastModel,
        Gene::Alpha,
        Gene::SystemLoss,
        Gene::Sigma,
        Gene::NakagamiM,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Gene::TxPower => "tx_power",
            Gene::DataRate => "data_rate",
            Gene::NoiseFloor => "noise_floor",
            Gene::RxSensitivity => "rx_sensitivity",
            Gene::SlowModel => "slow_model",
            Gene::FastModel => "fast_model",
            Gene::Alpha => "alpha",
            Gene::SystemLoss => "system_loss",
            Gene::Sigma => "sigma",
            Gene::NakagamiM => "nakagami_m",
        }
    }

    pub fn is_categorical(self) -> bool {
        matches!(self, Gene::DataRate | Gene::SlowModel | Gene::FastModel)
    }
}

impl fmt::Display for Gene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Gene {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        let alias = match key.as_str() {
            "noise" => "noise_floor",
            "sensitivity" => "rx_sensitivity",
            "m" | "shape" => "nakagami_m",
            other => other,
        };
        Gene::ALL
            .into_iter()
            .find(|g| g.name() == alias)
            .ok_or_else(|| Error::config(format!("unknown gene `{s}`")))
    }
}

/// A single gene value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneValue {
    Real(f64),
    Rate(DataRate),
    Slow(SlowModel),
    Fast(FastModel),
}

impl fmt::Display for GeneValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneValue::Real(v) => write!(f, "{v:.6}"),
            GeneValue::Rate(r) => write!(f, "{r}"),
            GeneValue::Slow(m) => write!(f, "{m}"),
            GeneValue::Fast(m) => write!(f, "{m}"),
        }
    }
}

impl GeneValue {
    pub fn parse(gene: Gene, text: &str) -> Result<Self> {
        Ok(match gene {
            Gene::DataRate => GeneValue::Rate(text.parse()?),
            Gene::SlowModel => GeneValue::Slow(text.parse()?),
            Gene::FastModel => GeneValue::Fast(text.parse()?),
            _ => GeneValue::Real(
                text.trim()
                    .parse()
                    .map_err(|_| Error::config(format!("{gene}: `{text}` is not a number")))?,
            ),
        })
    }
}

/// One candidate channel configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Genome {
    pub tx_power_mw: f64,
    pub data_rate: DataRate,
    pub noise_floor_dbm: f64,
    pub rx_sensitivity_dbm: f64,
    pub slow_model: SlowModel,
    pub fast_model: FastModel,
    pub alpha: f64,
    pub system_loss_db: f64,
    pub sigma_db: f64,
    pub nakagami_m: f64,
}

impl Genome {
    /// Out-of-the-box simulator column of the parameter table.
    pub fn table_default() -> Self {
        Genome::from_params(
            &RadioParams::table_default(),
            &FadingParams::table_default(),
        )
    }

    /// Field-calibrated column of the parameter table.
    pub fn table_calibrated() -> Self {
        Genome::from_params(
            &RadioParams::table_calibrated(),
            &FadingParams::table_calibrated(),
        )
    }

    pub fn from_params(radio: &RadioParams, fading: &FadingParams) -> Self {
        Genome {
            tx_power_mw: radio.tx_power_mw,
            data_rate: radio.data_rate,
            noise_floor_dbm: radio.noise_floor_dbm,
            rx_sensitivity_dbm: radio.rx_sensitivity_dbm,
            slow_model: fading.slow_model,
            fast_model: fading.fast_model,
            alpha: fading.alpha,
            system_loss_db: fading.system_loss_db,
            sigma_db: fading.sigma_db,
            nakagami_m: fading.nakagami_m,
        }
    }

    /// Overlay the genes on `radio` / `fading`; fields without a gene
    /// (antenna gains, carrier, reference distance, SNR table) come from
    /// the bases.
    pub fn to_params(
        &self,
        radio: &RadioParams,
        fading: &FadingParams,
    ) -> (RadioParams, FadingParams) {
        (
            RadioParams {
                tx_power_mw: self.tx_power_mw,
                data_rate: self.data_rate,
                noise_floor_dbm: self.noise_floor_dbm,
                rx_sensitivity_dbm: self.rx_sensitivity_dbm,
                ..*radio
            },
            FadingParams {
                slow_model: self.slow_model,
                fast_model: self.fast_model,
                alpha: self.alpha,
                system_loss_db: self.system_loss_db,
                sigma_db: self.sigma_db,
                nakagami_m: self.nakagami_m,
                ..*fading
            },
        )
    }

    pub fn get(&self, gene: Gene) -> GeneValue {
        match gene {
            Gene::TxPower => GeneValue::Real(self.tx_power_mw),
            Gene::DataRate => GeneValue::Rate(self.data_rate),
            Gene::NoiseFloor => GeneValue::Real(self.noise_floor_dbm),
            Gene::RxSensitivity => GeneValue::Real(self.rx_sensitivity_dbm),
            Gene::SlowModel => GeneValue::Slow(self.slow_model),
            Gene::FastModel => GeneValue::Fast(self.fast_model),
            Gene::Alpha => GeneValue::Real(self.alpha),
            Gene::SystemLoss => GeneValue::Real(self.system_loss_db),
            Gene::Sigma => GeneValue::Real(self.sigma_db),
            Gene::NakagamiM => GeneValue::Real(self.nakagami_m),
        }
    }

    pub fn set(&mut self, gene: Gene, value: GeneValue) -> Result<()> {
        match (gene, value) {
            (Gene::DataRate, GeneValue::Rate(r)) => self.data_rate = r,
            (Gene::SlowModel, GeneValue::Slow(m)) => self.slow_model = m,
            (Gene::FastModel, GeneValue::Fast(m)) => self.fast_model = m,
            (g, GeneValue::Real(v)) if !g.is_categorical() => *self.real_mut(g) = v,
            (g, v) => {
                return Err(Error::config(format!("gene {g} cannot take value {v}")));
            }
        }
        Ok(())
    }

    fn real_mut(&mut self, gene: Gene) -> &mut f64 {
        match gene {
            Gene::TxPower => &mut self.tx_power_mw,
            Gene::NoiseFloor => &mut self.noise_floor_dbm,
            Gene::RxSensitivity => &mut self.rx_sensitivity_dbm,
            Gene::Alpha => &mut self.alpha,
            Gene::SystemLoss => &mut self.system_loss_db,
            Gene::Sigma => &mut self.sigma_db,
            Gene::NakagamiM => &mut self.nakagami_m,
            g => unreachable!("{g} is categorical"),
        }
    }

    /// Bit-exact key for memoising fitness.
    pub(crate) fn key(&self) -> [u64; 10] {
        [
            self.tx_power_mw.to_bits(),
            u64::from(self.data_rate.mbps()),
            self.noise_floor_dbm.to_bits(),
            self.rx_sensitivity_dbm.to_bits(),
            self.slow_model as u64,
            self.fast_model as u64,
            self.alpha.to_bits(),
            self.system_loss_db.to_bits(),
            self.sigma_db.to_bits(),
            self.nakagami_m.to_bits(),
        ]
    }
}

/// Bounds of every gene plus optional pins.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub tx_power_mw: (f64, f64),
    pub noise_floor_dbm: (f64, f64),
    pub rx_sensitivity_dbm: (f64, f64),
    pub alpha: (f64, f64),
    pub system_loss_db: (f64, f64),
    pub sigma_db: (f64, f64),
    pub nakagami_m: (f64, f64),
    pub data_rates: Vec<DataRate>,
    pub slow_models: Vec<SlowModel>,
    pub fast_models: Vec<FastModel>,
    /// Genes held at a fixed value for the whole search.
    pub frozen: BTreeMap<Gene, GeneValue>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace::table()
    }
}

impl SearchSpace {
    /// The ranges of the calibration parameter table.
    pub fn table() -> Self {
        SearchSpace {
            tx_power_mw: (20.0, 40.0),
            noise_floor_dbm: (-110.0, -90.0),
            rx_sensitivity_dbm: (-120.0, -90.0),
            alpha: ALPHA_RANGE,
            system_loss_db: SYSTEM_LOSS_RANGE_DB,
            sigma_db: SIGMA_RANGE_DB,
            nakagami_m: NAKAGAMI_M_RANGE,
            data_rates: DataRate::ALL.to_vec(),
            slow_models: SlowModel::ALL.to_vec(),
            fast_models: FastModel::ALL.to_vec(),
            frozen: BTreeMap::new(),
        }
    }

    /// Range of a continuous gene, `None` for categorical ones.
    pub fn range(&self, gene: Gene) -> Option<(f64, f64)> {
        match gene {
            Gene::TxPower => Some(self.tx_power_mw),
            Gene::NoiseFloor => Some(self.noise_floor_dbm),
            Gene::RxSensitivity => Some(self.rx_sensitivity_dbm),
            Gene::Alpha => Some(self.alpha),
            Gene::SystemLoss => Some(self.system_loss_db),
            Gene::Sigma => Some(self.sigma_db),
            Gene::NakagamiM => Some(self.nakagami_m),
            _ => None,
        }
    }

    /// Pin `gene` to `value`. The value must lie inside the space.
    pub fn freeze(&mut self, gene: Gene, value: GeneValue) -> Result<()> {
        if !self.allows(gene, value) {
            return Err(Error::config(format!(
                "cannot freeze {gene} at {value}: outside the search space"
            )));
        }
        let value = match value {
            GeneValue::Real(v) => GeneValue::Real(quantize_gene(v)),
            other => other,
        };
        self.frozen.insert(gene, value);
        Ok(())
    }

    pub fn is_frozen(&self, gene: Gene) -> bool {
        self.frozen.contains_key(&gene)
    }

    fn allows(&self, gene: Gene, value: GeneValue) -> bool {
        match (gene, value) {
            (Gene::DataRate, GeneValue::Rate(r)) => self.data_rates.contains(&r),
            (Gene::SlowModel, GeneValue::Slow(m)) => self.slow_models.contains(&m),
            (Gene::FastModel, GeneValue::Fast(m)) => self.fast_models.contains(&m),
            (g, GeneValue::Real(v)) => self
                .range(g)
                .is_some_and(|(lo, hi)| v.is_finite() && v >= lo && v <= hi),
            _ => false,
        }
    }

    pub fn contains(&self, genome: &Genome) -> bool {
        Gene::ALL.iter().all(|&g| {
            let v = genome.get(g);
            self.allows(g, v) && self.frozen.get(&g).is_none_or(|f| *f == v)
        })
    }

    pub fn validate(&self) -> Result<()> {
        for g in Gene::ALL {
            if let Some((lo, hi)) = self.range(g) {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::config(format!("{g}: bad range [{lo}, {hi}]")));
                }
            }
        }
        if self.data_rates.is_empty() || self.slow_models.is_empty() || self.fast_models.is_empty()
        {
            return Err(Error::config("categorical gene with no allowed values"));
        }
        for (&g, &v) in &self.frozen {
            if !self.allows(g, v) {
                return Err(Error::config(format!("frozen {g} = {v} outside the space")));
            }
        }
        Ok(())
    }

    /// Uniform draw of one gene (ignores pins).
    pub(crate) fn sample_gene<R: Rng + ?Sized>(&self, gene: Gene, rng: &mut R) -> GeneValue {
        match gene {
            Gene::DataRate => {
                GeneValue::Rate(self.data_rates[rng.random_range(0..self.data_rates.len())])
            }
            Gene::SlowModel => {
                GeneValue::Slow(self.slow_models[rng.random_range(0..self.slow_models.len())])
            }
            Gene::FastModel => {
                GeneValue::Fast(self.fast_models[rng.random_range(0..self.fast_models.len())])
            }
            g => {
                let (lo, hi) = self.range(g).expect("continuous gene");
                let u: f64 = rng.random();
                GeneValue::Real(self.clamp_real(g, lo + u * (hi - lo)))
            }
        }
    }

    /// Quantize to the gene grid, then clamp into the range (whose bounds
    /// may themselves be off-grid).
    pub(crate) fn clamp_real(&self, gene: Gene, v: f64) -> f64 {
        let (lo, hi) = self.range(gene).expect("continuous gene");
        let q = quantize_gene(v);
        if q < lo {
            lo
        } else if q > hi {
            hi
        } else {
            q
        }
    }

    /// A genome with every free gene drawn uniformly and every pinned gene
    /// at its pin. Genes are drawn in canonical order.
    pub fn random_genome<R: Rng + ?Sized>(&self, rng: &mut R) -> Genome {
        let mut g = Genome::table_default();
        for gene in Gene::ALL {
            let v = match self.frozen.get(&gene) {
                Some(&pinned) => pinned,
                None => self.sample_gene(gene, rng),
            };
            g.set(gene, v).expect("gene/value kinds match");
        }
        g
    }
}
