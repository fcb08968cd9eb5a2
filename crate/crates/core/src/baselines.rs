//! Grid-point-independence baselines: per-cell Bayesian updates and
//! Dempster-Shafer belief combination. Both update every cell on its own,
//! which is exactly the assumption the region network drops.

use crate::error::{Error, Result};
use crate::mapper::OccupancyMap;
use crate::partition::{label_cell, Label};
use crate::world::{ScenarioWorld, SonarReading};

/// Likelihoods for the independent per-cell update, split by whether the
/// cell sits in a reading's detection arc or free sector.
#[derive(Clone, Copy, Debug)]
pub struct ElfesParams {
    pub arc_obs_given_occ: f64,
    pub arc_obs_given_free: f64,
    pub sector_obs_given_occ: f64,
    pub sector_obs_given_free: f64,
    pub initial: f64,
}

impl Default for ElfesParams {
    fn default() -> Self {
        ElfesParams {
            arc_obs_given_occ: 0.9,
            arc_obs_given_free: 0.3,
            sector_obs_given_occ: 0.1,
            sector_obs_given_free: 0.9,
            initial: 0.3,
        }
    }
}

/// One Bayes step on a single cell's occupancy probability.
pub fn elfes_update(p_old: f64, p_obs_given_occ: f64, p_obs_given_free: f64) -> Result<f64> {
    let numerator = p_obs_given_occ * p_old;
    let denominator = numerator + p_obs_given_free * (1.0 - p_old);
    if denominator == 0.0 {
        return Err(Error::ContradictoryEvidence);
    }
    Ok(numerator / denominator)
}

/// Independent occupancy map: every cell starts at the initial probability
/// and is updated per reading with arc or sector likelihoods. Cells the
/// robot body traversed are forced free.
pub fn elfes_map(
    world: &ScenarioWorld,
    readings: &[SonarReading],
    params: &ElfesParams,
) -> Result<OccupancyMap> {
    let grid = &world.grid;
    let mut map = OccupancyMap::new(grid.width, grid.height, params.initial);
    for reading in readings {
        for cell in grid.cells() {
            let (po, pf) = match label_cell(grid, cell, reading, &world.sensor) {
                Label::Arc => (params.arc_obs_given_occ, params.arc_obs_given_free),
                Label::Sector => (params.sector_obs_given_occ, params.sector_obs_given_free),
                Label::Exterior => continue,
            };
            let updated = elfes_update(map.get(cell), po, pf)?;
            map.set(cell, updated);
        }
    }
    for &cell in &world.traversed_cells() {
        map.set(cell, 0.0);
    }
    Ok(map)
}

/// Dempster-Shafer cell state: belief the cell is occupied and belief it is
/// free; the rest of the mass is uncommitted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DsCell {
    pub h_o: f64,
    pub h_f: f64,
}

impl DsCell {
    pub fn new(h_o: f64, h_f: f64) -> Result<Self> {
        if !(h_o >= 0.0 && h_f >= 0.0 && h_o + h_f <= 1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "belief pair ({h_o}, {h_f}) violates h_o, h_f >= 0, h_o + h_f <= 1"
            )));
        }
        Ok(DsCell { h_o, h_f })
    }

    pub fn vacuous() -> Self {
        DsCell { h_o: 0.0, h_f: 0.0 }
    }

    pub fn h_u(&self) -> f64 {
        (1.0 - self.h_o - self.h_f).max(0.0)
    }
}

/// Dempster's rule for the two-hypothesis frame, with the conflict mass
/// renormalized away by delta.
pub fn ds_update(cell: DsCell, obs: DsCell) -> Result<DsCell> {
    let delta = 1.0 - (cell.h_o * obs.h_f + cell.h_f * obs.h_o);
    if delta == 0.0 {
        return Err(Error::TotalConflict { cell: None });
    }
    let h_o = (cell.h_o * obs.h_o + cell.h_o * obs.h_u() + cell.h_u() * obs.h_o) / delta;
    let h_f = (cell.h_f * obs.h_f + cell.h_f * obs.h_u() + cell.h_u() * obs.h_f) / delta;
    Ok(DsCell { h_o, h_f })
}

/// Observation strengths for arc and sector cells. Defaults mirror the
/// independent-update likelihood ratios; the source scheme leaves them open.
#[derive(Clone, Copy, Debug)]
pub struct DsObsModel {
    pub arc: DsCell,
    pub sector: DsCell,
}

impl Default for DsObsModel {
    fn default() -> Self {
        DsObsModel {
            arc: DsCell { h_o: 0.6, h_f: 0.0 },
            sector: DsCell { h_o: 0.0, h_f: 0.8 },
        }
    }
}

/// Per-cell Dempster-Shafer combination over all readings. The exported
/// occupancy value is the occupied belief h_o; traversed cells export 0.
pub fn ds_map(
    world: &ScenarioWorld,
    readings: &[SonarReading],
    obs_model: &DsObsModel,
) -> Result<OccupancyMap> {
    let grid = &world.grid;
    let mut cells = vec![DsCell::vacuous(); (grid.width * grid.height) as usize];
    for reading in readings {
        for cell in grid.cells() {
            let obs = match label_cell(grid, cell, reading, &world.sensor) {
                Label::Arc => obs_model.arc,
                Label::Sector => obs_model.sector,
                Label::Exterior => continue,
            };
            let idx = (cell.1 * grid.width + cell.0) as usize;
            cells[idx] = ds_update(cells[idx], obs).map_err(|e| match e {
                Error::TotalConflict { .. } => Error::TotalConflict { cell: Some(cell) },
                other => other,
            })?;
        }
    }
    let mut map = OccupancyMap::new(grid.width, grid.height, 0.0);
    for cell in grid.cells() {
        let idx = (cell.1 * grid.width + cell.0) as usize;
        map.set(cell, cells[idx].h_o.clamp(0.0, 1.0));
    }
    for &cell in &world.traversed_cells() {
        map.set(cell, 0.0);
    }
    Ok(map)
}
