//! Quasi-invariant region extraction.
//!
//! Every grid cell gets one symbol per reading — arc, sector, or exterior —
//! and regions are the equivalence classes of identical symbol vectors.
//! Moving an obstacle anywhere inside a region leaves every reading's
//! classification of it unchanged, which is what makes the regions usable
//! as Bayes-network variables.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry;
use crate::world::{Cell, GridSpec, ReadingId, SensorParams, SonarReading};

/// Per-reading classification of a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Label {
    Arc,
    Sector,
    Exterior,
}

impl Label {
    pub fn symbol(self) -> char {
        match self {
            Label::Arc => 'A',
            Label::Sector => 'S',
            Label::Exterior => 'E',
        }
    }
}

/// Full symbol vector of a cell (or region), one entry per reading.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct CellLabel {
    symbols: BTreeMap<ReadingId, Label>,
}

impl CellLabel {
    pub fn new(symbols: BTreeMap<ReadingId, Label>) -> Self {
        CellLabel { symbols }
    }

    pub fn symbol_for(&self, reading: ReadingId) -> Label {
        self.symbols.get(&reading).copied().unwrap_or(Label::Exterior)
    }

    pub fn entries(&self) -> impl Iterator<Item = (ReadingId, Label)> + '_ {
        self.symbols.iter().map(|(&r, &l)| (r, l))
    }

    pub fn is_all_exterior(&self) -> bool {
        self.symbols.values().all(|&l| l == Label::Exterior)
    }

    /// Render as e.g. "A0.S1.E2".
    pub fn label_string(&self) -> String {
        let mut out = String::new();
        for (i, (r, l)) in self.symbols.iter().enumerate() {
            if i > 0 {
                out.push('.');
            }
            let _ = write!(out, "{}{}", l.symbol(), r);
        }
        out
    }
}

pub type RegionId = u32;

#[derive(Clone, Debug)]
pub struct Region {
    pub id: RegionId,
    pub label: CellLabel,
    pub cells: BTreeSet<Cell>,
    /// Physical area: cell count times cell_size squared.
    pub area: f64,
    /// P(not free) from the area-based prior.
    pub prior_occupied: f64,
}

/// Area-based prior parameters: occupancy ramps linearly from `p_min` with
/// slope `k` per unit area and saturates at `p_max`.
#[derive(Clone, Copy, Debug)]
pub struct PriorParams {
    pub p_min: f64,
    pub p_max: f64,
    pub k: f64,
}

/// P(not free) for a region of the given area: min(p_min + k*area, p_max).
pub fn prior_occupancy(area: f64, prior: &PriorParams) -> Result<f64> {
    if area <= 0.0 {
        return Err(Error::NonpositiveArea(area));
    }
    Ok((prior.p_min + prior.k * area).min(prior.p_max))
}

/// P(not free) under the exponential assignment, the unique area-based prior
/// for which disjoint regions stay independent: 1 - e^(-c*area).
pub fn exponential_prior(area: f64, c: f64) -> f64 {
    1.0 - (-c * area).exp()
}

/// Classify one cell against one reading.
///
/// Arc: inside the beam cone and within epsilon of the observed range.
/// Sector: inside the cone, strictly closer than the arc. Max-range readings
/// never produce an arc — they carry no detection, only a swept sector.
pub fn label_cell(
    grid: &GridSpec,
    cell: Cell,
    reading: &SonarReading,
    sensor: &SensorParams,
) -> Label {
    let center = grid.cell_center(cell);
    let origin = reading.pose.position;
    let d = origin.dist(center);
    let to_cell = (center.y - origin.y).atan2(center.x - origin.x).to_degrees();
    let in_cone = d == 0.0
        || geometry::angle_diff_deg(to_cell, reading.bearing_deg) <= sensor.beam_half_width_deg;
    if !in_cone {
        return Label::Exterior;
    }
    let near = reading.range - sensor.epsilon;
    if !reading.is_max_range && d >= near && d <= reading.range + sensor.epsilon {
        Label::Arc
    } else if d < near {
        Label::Sector
    } else {
        Label::Exterior
    }
}

#[derive(Clone, Debug)]
pub struct RegionPartition {
    grid: GridSpec,
    prior: PriorParams,
    reading_ids: Vec<ReadingId>,
    regions: BTreeMap<RegionId, Region>,
    cell_to_region: BTreeMap<Cell, RegionId>,
    traversed: BTreeSet<Cell>,
    next_id: RegionId,
}

impl RegionPartition {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn prior_params(&self) -> &PriorParams {
        &self.prior
    }

    pub fn reading_ids(&self) -> &[ReadingId] {
        &self.reading_ids
    }

    /// Regions in ascending id order.
    pub fn regions(&self) -> impl Iterator<Item = &Region> {
        self.regions.values()
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    pub fn region(&self, id: RegionId) -> Option<&Region> {
        self.regions.get(&id)
    }

    pub fn region_of_cell(&self, cell: Cell) -> Option<&Region> {
        self.cell_to_region.get(&cell).and_then(|id| self.regions.get(id))
    }

    pub fn traversed(&self) -> &BTreeSet<Cell> {
        &self.traversed
    }

    /// Regions whose cells lie in the arc or sector of `reading`.
    pub fn regions_for_reading(&self, reading: ReadingId) -> impl Iterator<Item = &Region> {
        self.regions
            .values()
            .filter(move |r| r.label.symbol_for(reading) != Label::Exterior)
    }

    /// One region per line: id, label string, cell count, area, prior.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for region in self.regions.values() {
            let _ = writeln!(
                out,
                "{} {} {} {} {}",
                region.id,
                region.label.label_string(),
                region.cells.len(),
                region.area,
                region.prior_occupied
            );
        }
        out
    }

    fn insert_region(&mut self, label: CellLabel, cells: BTreeSet<Cell>) -> Result<()> {
        debug_assert!(!cells.is_empty());
        let id = self.next_id;
        self.next_id += 1;
        let area = cells.len() as f64 * self.grid.cell_size * self.grid.cell_size;
        let prior_occupied = prior_occupancy(area, &self.prior)?;
        for &cell in &cells {
            self.cell_to_region.insert(cell, id);
        }
        self.regions.insert(
            id,
            Region {
                id,
                label,
                cells,
                area,
                prior_occupied,
            },
        );
        Ok(())
    }

    /// Extend the partition with one more reading without relabeling old
    /// readings: regions the new cone misses keep their ids, regions it cuts
    /// are split into fresh ones, and newly covered cells form new regions.
    pub fn add_reading(&self, reading: &SonarReading, sensor: &SensorParams) -> Result<Self> {
        if self.reading_ids.contains(&reading.id) {
            return Err(Error::DuplicateReading(reading.id));
        }
        let mut next = self.clone();
        next.reading_ids.push(reading.id);

        let old_ids: Vec<RegionId> = self.regions.keys().copied().collect();
        for id in old_ids {
            let region = &self.regions[&id];
            let mut groups: BTreeMap<Label, BTreeSet<Cell>> = BTreeMap::new();
            for &cell in &region.cells {
                let l = label_cell(&self.grid, cell, reading, sensor);
                groups.entry(l).or_default().insert(cell);
            }
            if groups.len() == 1 {
                // Untouched or uniformly relabeled: id, cells and prior stay.
                let (&l, _) = groups.iter().next().unwrap();
                let target = next.regions.get_mut(&id).unwrap();
                let mut symbols: BTreeMap<ReadingId, Label> =
                    target.label.entries().collect();
                symbols.insert(reading.id, l);
                target.label = CellLabel::new(symbols);
            } else {
                next.regions.remove(&id);
                for (l, cells) in groups {
                    let mut symbols: BTreeMap<ReadingId, Label> =
                        region.label.entries().collect();
                    symbols.insert(reading.id, l);
                    next.insert_region(CellLabel::new(symbols), cells)?;
                }
            }
        }

        // Cells the new cone touches that no previous cone did.
        let mut fresh: BTreeMap<Label, BTreeSet<Cell>> = BTreeMap::new();
        for cell in self.grid.cells() {
            if next.traversed.contains(&cell) || next.cell_to_region.contains_key(&cell) {
                continue;
            }
            let l = label_cell(&self.grid, cell, reading, sensor);
            if l != Label::Exterior {
                fresh.entry(l).or_default().insert(cell);
            }
        }
        for (l, cells) in fresh {
            let mut symbols: BTreeMap<ReadingId, Label> = self
                .reading_ids
                .iter()
                .map(|&r| (r, Label::Exterior))
                .collect();
            symbols.insert(reading.id, l);
            next.insert_region(CellLabel::new(symbols), cells)?;
        }

        Ok(next)
    }

    /// The family of region cell sets, for order-insensitive comparison.
    pub fn cell_set_family(&self) -> BTreeSet<BTreeSet<Cell>> {
        self.regions.values().map(|r| r.cells.clone()).collect()
    }

    /// Check the partition properties: regions disjoint, every region cell
    /// mapped back to it, and regions plus traversed covering exactly the
    /// cells labeled arc or sector by at least one reading.
    pub fn validate(&self, readings: &[SonarReading], sensor: &SensorParams) -> Result<()> {
        let mut seen: BTreeSet<Cell> = BTreeSet::new();
        for region in self.regions.values() {
            if region.cells.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "region {} is empty",
                    region.id
                )));
            }
            if region.label.is_all_exterior() {
                return Err(Error::InvalidArgument(format!(
                    "region {} is all-exterior",
                    region.id
                )));
            }
            for &cell in &region.cells {
                if !seen.insert(cell) {
                    return Err(Error::InvalidArgument(format!(
                        "cell {cell:?} in more than one region"
                    )));
                }
                if self.cell_to_region.get(&cell) != Some(&region.id) {
                    return Err(Error::InvalidArgument(format!(
                        "cell {cell:?} not indexed to region {}",
                        region.id
                    )));
                }
                if self.traversed.contains(&cell) {
                    return Err(Error::InvalidArgument(format!(
                        "traversed cell {cell:?} inside region {}",
                        region.id
                    )));
                }
            }
        }
        for cell in self.grid.cells() {
            let touched = readings
                .iter()
                .any(|r| label_cell(&self.grid, cell, r, sensor) != Label::Exterior);
            let in_region = seen.contains(&cell);
            let traversed = self.traversed.contains(&cell);
            if touched && !in_region && !traversed {
                return Err(Error::InvalidArgument(format!(
                    "covered cell {cell:?} not in any region"
                )));
            }
            if in_region && !touched {
                return Err(Error::InvalidArgument(format!(
                    "cell {cell:?} in a region but outside every cone"
                )));
            }
        }
        Ok(())
    }
}

/// Label every non-traversed cell against all readings and group identical
/// symbol vectors into regions. The all-exterior class is never materialized.
pub fn build_partition(
    grid: &GridSpec,
    readings: &[SonarReading],
    sensor: &SensorParams,
    prior: &PriorParams,
    traversed: &BTreeSet<Cell>,
) -> Result<RegionPartition> {
    if readings.is_empty() {
        return Err(Error::InvalidArgument("no readings to partition".into()));
    }
    let mut ids_seen = BTreeSet::new();
    for r in readings {
        if !ids_seen.insert(r.id) {
            return Err(Error::DuplicateReading(r.id));
        }
    }

    let mut groups: BTreeMap<Vec<Label>, BTreeSet<Cell>> = BTreeMap::new();
    for cell in grid.cells() {
        if traversed.contains(&cell) {
            continue;
        }
        let labels: Vec<Label> = readings
            .iter()
            .map(|r| label_cell(grid, cell, r, sensor))
            .collect();
        if labels.iter().all(|&l| l == Label::Exterior) {
            continue;
        }
        groups.entry(labels).or_default().insert(cell);
    }

    let mut partition = RegionPartition {
        grid: *grid,
        prior: *prior,
        reading_ids: readings.iter().map(|r| r.id).collect(),
        regions: BTreeMap::new(),
        cell_to_region: BTreeMap::new(),
        traversed: traversed.clone(),
        next_id: 0,
    };
    for (labels, cells) in groups {
        let symbols: BTreeMap<ReadingId, Label> = readings
            .iter()
            .map(|r| r.id)
            .zip(labels)
            .collect();
        partition.insert_region(CellLabel::new(symbols), cells)?;
    }
    Ok(partition)
}
