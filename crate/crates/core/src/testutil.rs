//! Shared builders for unit tests: synthetic regions and readings that skip
//! the geometry pipeline.

use std::collections::{BTreeMap, BTreeSet};

use crate::geometry::Point;
use crate::partition::{CellLabel, Label, Region, RegionId};
use crate::world::{Pose, Provenance, ReadingId, SensorParams, SonarReading};

pub fn sensor() -> SensorParams {
    SensorParams {
        r_min: 1.0,
        r_max: 40.0,
        epsilon: 1.5,
        beam_half_width_deg: 12.5,
        p_true: 0.9,
        p_dropout: 0.1,
        p_spurious: 0.05,
    }
}

/// Region with a synthetic label map for network-only tests.
pub fn synthetic_region(id: RegionId, prior: f64, labels: &[(ReadingId, Label)]) -> Region {
    let map: BTreeMap<ReadingId, Label> = labels.iter().copied().collect();
    let mut cells = BTreeSet::new();
    cells.insert((id, 0));
    Region {
        id,
        label: CellLabel::new(map),
        cells,
        area: 1.0,
        prior_occupied: prior,
    }
}

pub fn synthetic_reading(id: ReadingId) -> SonarReading {
    SonarReading {
        id,
        pose: Pose {
            position: Point::new(0.0, 0.0),
            heading_deg: 0.0,
        },
        bearing_deg: 0.0,
        range: 10.0,
        is_max_range: false,
        provenance: Provenance::Detected,
    }
}
