//! PDR-vs-distance curves, spatial heatmaps, and curve RMSE.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::{DeliveryLog, DeliveryRecord, Direction};
use crate::error::{Error, Result};

/// Relative tolerance when comparing bin geometry of two curves.
const GEOMETRY_TOL: f64 = 1e-9;

/// Which message directions an aggregation includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DirectionFilter {
    #[default]
    Both,
    Bsm,
    Spat,
}

impl DirectionFilter {
    pub fn accepts(self, direction: Direction) -> bool {
        match self {
            DirectionFilter::Both => true,
            DirectionFilter::Bsm => direction == Direction::VehicleToRsu,
            DirectionFilter::Spat => direction == Direction::RsuToVehicle,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DirectionFilter::Both => "both",
            DirectionFilter::Bsm => "bsm",
            DirectionFilter::Spat => "spat",
        }
    }
}

impl fmt::Display for DirectionFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DirectionFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "both" | "all" => Ok(DirectionFilter::Both),
            "bsm" => Ok(DirectionFilter::Bsm),
            "spat" => Ok(DirectionFilter::Spat),
            _ => Err(Error::domain(format!(
                "unknown direction filter `{s}` (expected both, bsm, spat)"
            ))),
        }
    }
}

fn pdr_percent(sent: u64, delivered: u64) -> Option<f64> {
    (sent > 0).then(|| 100.0 * delivered as f64 / sent as f64)
}

/// One distance bin `[bin_start, bin_end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdrBin {
    pub index: u64,
    pub bin_start: f64,
    pub bin_end: f64,
    pub sent: u64,
    pub delivered: u64,
}

impl PdrBin {
    /// Percent delivered, `None` for a bin nothing was sent in.
    pub fn pdr(&self) -> Option<f64> {
        pdr_percent(self.sent, self.delivered)
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.bin_start + self.bin_end)
    }
}

/// Contiguous ascending distance bins, from bin 0 to the farthest occupied
/// bin. Empty bins inside that range are kept, with no PDR.
#[derive(Debug, Clone, PartialEq)]
pub struct PdrCurve {
    pub bin_width: f64,
    pub bins: Vec<PdrBin>,
}

impl PdrCurve {
    pub fn empty(bin_width: f64) -> Self {
        PdrCurve {
            bin_width,
            bins: Vec::new(),
        }
    }

    /// Build from per-bin counts keyed by bin index. Fills the gaps between
    /// bin 0 and the largest index with empty bins.
    pub fn from_counts(bin_width: f64, counts: &BTreeMap<u64, (u64, u64)>) -> Result<Self> {
        check_width(bin_width)?;
        let Some(&last) = counts.keys().next_back() else {
            return Ok(PdrCurve::empty(bin_width));
        };
        let mut bins = Vec::with_capacity(last as usize + 1);
        for index in 0..=last {
            let (sent, delivered) = counts.get(&index).copied().unwrap_or((0, 0));
            if delivered > sent {
                return Err(Error::domain(format!(
                    "bin {index}: delivered {delivered} exceeds sent {sent}"
                )));
            }
            bins.push(PdrBin {
                index,
                bin_start: index as f64 * bin_width,
                bin_end: (index + 1) as f64 * bin_width,
                sent,
                delivered,
            });
        }
        Ok(PdrCurve { bin_width, bins })
    }

    pub fn total_sent(&self) -> u64 {
        self.bins.iter().map(|b| b.sent).sum()
    }

    pub fn total_delivered(&self) -> u64 {
        self.bins.iter().map(|b| b.delivered).sum()
    }

    pub fn non_empty(&self) -> impl Iterator<Item = &PdrBin> {
        self.bins.iter().filter(|b| b.sent > 0)
    }

    pub fn is_empty(&self) -> bool {
        self.bins.iter().all(|b| b.sent == 0)
    }
}

fn check_width(w: f64) -> Result<()> {
    if w.is_finite() && w > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("bin width must be > 0, got {w}")))
    }
}

fn bin_index(distance: f64, width: f64) -> u64 {
    (distance / width).floor().max(0.0) as u64
}

/// PDR per distance bin over every record in `log`.
pub fn pdr_curve(log: &DeliveryLog, bin_width: f64) -> Result<PdrCurve> {
    pdr_curve_filtered(log, bin_width, DirectionFilter::Both)
}

pub fn pdr_curve_filtered(
    log: &DeliveryLog,
    bin_width: f64,
    filter: DirectionFilter,
) -> Result<PdrCurve> {
    check_width(bin_width)?;
    let mut counts: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    for r in log.records.iter().filter(|r| filter.accepts(r.direction)) {
        let e = counts.entry(bin_index(r.distance, bin_width)).or_default();
        e.0 += 1;
        e.1 += u64::from(r.delivered);
    }
    PdrCurve::from_counts(bin_width, &counts)
}

/// RMSE in percentage points over the bins that are non-empty in both
/// curves. Both curves must share bin width and origin.
pub fn rmse(observed: &PdrCurve, simulated: &PdrCurve) -> Result<f64> {
    let scale = observed.bin_width.abs().max(simulated.bin_width.abs());
    if (observed.bin_width - simulated.bin_width).abs() > GEOMETRY_TOL * scale {
        return Err(Error::Incompatible(format!(
            "bin widths differ: {} vs {}",
            observed.bin_width, simulated.bin_width
        )));
    }
    let sim: BTreeMap<u64, f64> = simulated
        .bins
        .iter()
        .filter_map(|b| b.pdr().map(|p| (b.index, p)))
        .collect();
    let (mut sum, mut n) = (0.0, 0usize);
    for b in observed.non_empty() {
        if let (Some(obs), Some(&s)) = (b.pdr(), sim.get(&b.index)) {
            sum += (obs - s).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Incompatible(
            "no distance bin is non-empty in both curves".into(),
        ));
    }
    Ok((sum / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapCell {
    pub ix: i64,
    pub iy: i64,
    pub center_x: f64,
    pub center_y: f64,
    pub sent: u64,
    pub delivered: u64,
}

impl HeatmapCell {
    pub fn pdr(&self) -> Option<f64> {
        pdr_percent(self.sent, self.delivered)
    }
}

/// Square-cell grid over the bounding box of the occupied cells, row-major
/// from the south-west corner.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    pub cell_size: f64,
    pub min_ix: i64,
    pub min_iy: i64,
    pub nx: usize,
    pub ny: usize,
    pub cells: Vec<HeatmapCell>,
}

impl HeatmapGrid {
    pub fn from_counts(cell_size: f64, counts: &BTreeMap<(i64, i64), (u64, u64)>) -> Result<Self> {
        check_width(cell_size)?;
        if counts.is_empty() {
            return Ok(HeatmapGrid {
                cell_size,
                min_ix: 0,
                min_iy: 0,
                nx: 0,
                ny: 0,
                cells: Vec::new(),
            });
        }
        let min_ix = counts.keys().map(|k| k.0).min().unwrap();
        let max_ix = counts.keys().map(|k| k.0).max().unwrap();
        let min_iy = counts.keys().map(|k| k.1).min().unwrap();
        let max_iy = counts.keys().map(|k| k.1).max().unwrap();
        let nx = (max_ix - min_ix + 1) as usize;
        let ny = (max_iy - min_iy + 1) as usize;
        let mut cells = Vec::with_capacity(nx * ny);
        for iy in min_iy..=max_iy {
            for ix in min_ix..=max_ix {
                let (sent, delivered) = counts.get(&(ix, iy)).copied().unwrap_or((0, 0));
                if delivered > sent {
                    return Err(Error::domain(format!(
                        "cell ({ix}, {iy}): delivered {delivered} exceeds sent {sent}"
                    )));
                }
                cells.push(HeatmapCell {
                    ix,
                    iy,
                    center_x: (ix as f64 + 0.5) * cell_size,
                    center_y: (iy as f64 + 0.5) * cell_size,
                    sent,
                    delivered,
                });
            }
        }
        Ok(HeatmapGrid {
            cell_size,
            min_ix,
            min_iy,
            nx,
            ny,
            cells,
        })
    }

    pub fn get(&self, ix: i64, iy: i64) -> Option<&HeatmapCell> {
        let dx = ix.checked_sub(self.min_ix)?;
        let dy = iy.checked_sub(self.min_iy)?;
        if dx < 0 || dy < 0 || dx as usize >= self.nx || dy as usize >= self.ny {
            return None;
        }
        self.cells.get(dy as usize * self.nx + dx as usize)
    }

    pub fn non_empty(&self) -> impl Iterator<Item = &HeatmapCell> {
        self.cells.iter().filter(|c| c.sent > 0)
    }

    pub fn total_sent(&self) -> u64 {
        self.cells.iter().map(|c| c.sent).sum()
    }
}

fn cell_of(r: &DeliveryRecord, cell: f64) -> (i64, i64) {
    let p = r.vehicle_position();
    ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
}

/// Bucket records by the vehicle's position (for both directions) into
/// square cells of edge `cell`.
pub fn heatmap(log: &DeliveryLog, cell: f64) -> Result<HeatmapGrid> {
    heatmap_filtered(log, cell, DirectionFilter::Both)
}

pub fn heatmap_filtered(
    log: &DeliveryLog,
    cell: f64,
    filter: DirectionFilter,
) -> Result<HeatmapGrid> {
    check_width(cell)?;
    let mut counts: BTreeMap<(i64, i64), (u64, u64)> = BTreeMap::new();
    for r in log.records.iter().filter(|r| filter.accepts(r.direction)) {
        let e = counts.entry(cell_of(r, cell)).or_default();
        e.0 += 1;
        e.1 += u64::from(r.delivered);
    }
    HeatmapGrid::from_counts(cell, &counts)
}
