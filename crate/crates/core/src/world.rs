//! Simulated segment world and the wide-beam sonar that interrogates it.
//!
//! A reading is produced by fanning rays across the beam, keeping the nearest
//! intersection per ray, and discarding hits whose incidence exceeds the
//! surface's critical angle. When no ray yields a detectable echo the sonar
//! reports a dropout (max range) or, rarely, a spurious range.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::geometry::{self, Point};
use crate::partition::PriorParams;

pub type ReadingId = u32;

/// Grid cell address `(x, y)`, origin at the lower-left corner.
pub type Cell = (u32, u32);

/// Number of rays fanned across the beam when casting one sonar pulse.
pub const BEAM_RAY_COUNT: usize = 26;

/// Radius of the robot body in grid units; cells inside it along the path
/// are known free and are excluded from region labeling.
pub const ROBOT_RADIUS: f64 = 9.0;

#[derive(Clone, Copy, Debug)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
    /// Degrees from the surface perpendicular beyond which no echo returns.
    pub critical_angle_deg: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct Pose {
    pub position: Point,
    /// Degrees counterclockwise from +x.
    pub heading_deg: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct SensorParams {
    pub r_min: f64,
    pub r_max: f64,
    /// Half-thickness of the detection arc.
    pub epsilon: f64,
    pub beam_half_width_deg: f64,
    /// Probability that an object in the arc produces the observed reading.
    pub p_true: f64,
    /// Prior that an occupied sector yields the observed (bogus) value.
    pub p_dropout: f64,
    /// Probability of the observed value with nothing in the cone.
    pub p_spurious: f64,
}

/// A firing instruction: pose index plus bearing relative to the pose heading.
#[derive(Clone, Copy, Debug)]
pub struct Firing {
    pub pose: usize,
    pub bearing_deg: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct GridSpec {
    pub width: u32,
    pub height: u32,
    /// Grid units per cell side.
    pub cell_size: f64,
}

impl GridSpec {
    pub fn cell_center(&self, cell: Cell) -> Point {
        Point::new(
            (cell.0 as f64 + 0.5) * self.cell_size,
            (cell.1 as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let w = self.width;
        (0..self.height).flat_map(move |y| (0..w).map(move |x| (x, y)))
    }

    pub fn contains_point(&self, p: Point) -> bool {
        p.x >= 0.0
            && p.y >= 0.0
            && p.x <= self.width as f64 * self.cell_size
            && p.y <= self.height as f64 * self.cell_size
    }
}

/// How a reading came to be; carried for debug output only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Detected,
    Dropout,
    Spurious,
}

#[derive(Clone, Copy, Debug)]
pub struct SonarReading {
    pub id: ReadingId,
    pub pose: Pose,
    /// Absolute bearing in degrees.
    pub bearing_deg: f64,
    /// Observed range in grid units, quantized to the grid resolution.
    pub range: f64,
    pub is_max_range: bool,
    pub provenance: Provenance,
}

#[derive(Clone, Debug)]
pub struct ScenarioWorld {
    pub grid: GridSpec,
    pub segments: Vec<Segment>,
    pub path: Vec<Pose>,
    pub firings: Vec<Firing>,
    pub sensor: SensorParams,
    pub prior: PriorParams,
    pub seed: u64,
}

mod raw {
    use serde::Deserialize;

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Scenario {
        pub grid: Grid,
        pub segments: Vec<Segment>,
        pub path: Vec<Pose>,
        pub firings: Vec<Firing>,
        pub sensor: Sensor,
        pub prior: Prior,
        pub seed: u64,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Grid {
        pub width: u32,
        pub height: u32,
        #[serde(default = "one")]
        pub cell_size: f64,
    }

    fn one() -> f64 {
        1.0
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Segment {
        pub x1: f64,
        pub y1: f64,
        pub x2: f64,
        pub y2: f64,
        pub critical_angle_deg: f64,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Pose {
        pub x: f64,
        pub y: f64,
        pub heading_deg: f64,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Firing {
        pub pose: usize,
        pub bearing_deg: f64,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Sensor {
        pub r_min: f64,
        pub r_max: f64,
        pub epsilon: f64,
        pub beam_half_width_deg: f64,
        pub p_true: f64,
        pub p_dropout: f64,
        pub p_spurious: f64,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Prior {
        pub p_min: f64,
        pub p_max: f64,
        pub k: Option<f64>,
    }
}

/// Parse and validate a scenario file. Unknown keys are rejected and every
/// invariant violation is reported by name.
pub fn load_scenario(text: &str) -> Result<ScenarioWorld> {
    let raw: raw::Scenario = serde_json::from_str(text)?;
    let invalid = |msg: String| Error::InvalidScenario(msg);

    if raw.grid.width == 0 || raw.grid.height == 0 {
        return Err(invalid("grid dimensions must be positive".into()));
    }
    if raw.grid.cell_size <= 0.0 {
        return Err(invalid("grid cell_size must be positive".into()));
    }
    let grid = GridSpec {
        width: raw.grid.width,
        height: raw.grid.height,
        cell_size: raw.grid.cell_size,
    };

    let mut segments = Vec::with_capacity(raw.segments.len());
    for (i, s) in raw.segments.iter().enumerate() {
        let a = Point::new(s.x1, s.y1);
        let b = Point::new(s.x2, s.y2);
        if a == b {
            return Err(invalid(format!("segment {i}: endpoints must be distinct")));
        }
        if !(s.critical_angle_deg > 0.0 && s.critical_angle_deg <= 90.0) {
            return Err(invalid(format!(
                "segment {i}: critical_angle_deg must be in (0, 90], got {}",
                s.critical_angle_deg
            )));
        }
        segments.push(Segment {
            a,
            b,
            critical_angle_deg: s.critical_angle_deg,
        });
    }

    let mut path = Vec::with_capacity(raw.path.len());
    for (i, p) in raw.path.iter().enumerate() {
        let position = Point::new(p.x, p.y);
        if !grid.contains_point(position) {
            return Err(invalid(format!(
                "pose {i}: position ({}, {}) outside grid bounds",
                p.x, p.y
            )));
        }
        path.push(Pose {
            position,
            heading_deg: p.heading_deg,
        });
    }

    let mut firings = Vec::with_capacity(raw.firings.len());
    for (i, f) in raw.firings.iter().enumerate() {
        if f.pose >= path.len() {
            return Err(invalid(format!(
                "firing {i}: pose index {} out of range (path has {} poses)",
                f.pose,
                path.len()
            )));
        }
        firings.push(Firing {
            pose: f.pose,
            bearing_deg: f.bearing_deg,
        });
    }

    let s = &raw.sensor;
    if !(s.r_min >= 0.0 && s.r_min < s.r_max) {
        return Err(invalid(format!(
            "sensor: need 0 <= r_min < r_max, got r_min={} r_max={}",
            s.r_min, s.r_max
        )));
    }
    if s.epsilon <= 0.0 {
        return Err(invalid("sensor: epsilon must be positive".into()));
    }
    if s.beam_half_width_deg <= 0.0 {
        return Err(invalid("sensor: beam_half_width_deg must be positive".into()));
    }
    for (name, v) in [
        ("p_true", s.p_true),
        ("p_dropout", s.p_dropout),
        ("p_spurious", s.p_spurious),
    ] {
        if !(v > 0.0 && v < 1.0) {
            return Err(invalid(format!("sensor: {name} must be in (0, 1), got {v}")));
        }
    }
    if !(s.p_spurious < s.p_dropout && s.p_dropout < s.p_true) {
        return Err(invalid(format!(
            "sensor: need p_spurious < p_dropout < p_true, got {} / {} / {}",
            s.p_spurious, s.p_dropout, s.p_true
        )));
    }
    let sensor = SensorParams {
        r_min: s.r_min,
        r_max: s.r_max,
        epsilon: s.epsilon,
        beam_half_width_deg: s.beam_half_width_deg,
        p_true: s.p_true,
        p_dropout: s.p_dropout,
        p_spurious: s.p_spurious,
    };

    let p = &raw.prior;
    if !(p.p_min > 0.0 && p.p_min < p.p_max && p.p_max < 1.0) {
        return Err(invalid(format!(
            "prior: need 0 < p_min < p_max < 1, got p_min={} p_max={}",
            p.p_min, p.p_max
        )));
    }
    // Default slope saturates the ramp at 500 cells worth of area.
    let k = p
        .k
        .unwrap_or((p.p_max - p.p_min) / (500.0 * grid.cell_size * grid.cell_size));
    if k <= 0.0 {
        return Err(invalid(format!("prior: k must be positive, got {k}")));
    }
    let prior = PriorParams {
        p_min: p.p_min,
        p_max: p.p_max,
        k,
    };

    Ok(ScenarioWorld {
        grid,
        segments,
        path,
        firings,
        sensor,
        prior,
        seed: raw.seed,
    })
}

impl ScenarioWorld {
    /// Cells covered by the robot body anywhere along the path; these are
    /// known free and excluded from labeling.
    pub fn traversed_cells(&self) -> BTreeSet<Cell> {
        let mut out = BTreeSet::new();
        for cell in self.grid.cells() {
            let c = self.grid.cell_center(cell);
            if self
                .path
                .iter()
                .any(|pose| pose.position.dist(c) < ROBOT_RADIUS)
            {
                out.insert(cell);
            }
        }
        out
    }
}

/// Deterministic RNG for a (seed, stream) pair. Streams keep firings and
/// sampling blocks independent while staying reproducible.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn quantize(range: f64, grid: &GridSpec, sensor: &SensorParams) -> f64 {
    let r = (range / grid.cell_size).round() * grid.cell_size;
    r.clamp(sensor.r_min, sensor.r_max)
}

/// Fire the sonar once from `pose` along the absolute `bearing_deg`.
///
/// Rays are fanned evenly across the beam; each keeps only its nearest
/// segment hit, and a hit echoes back only when the incidence is within the
/// surface's critical angle. No echo means a dropout: with probability
/// `p_spurious` a uniform random range, else a max-range reading.
pub fn cast_sonar(
    world: &ScenarioWorld,
    id: ReadingId,
    pose: &Pose,
    bearing_deg: f64,
    rng: &mut ChaCha12Rng,
) -> SonarReading {
    let sensor = &world.sensor;
    let hw = sensor.beam_half_width_deg;
    let mut best: Option<f64> = None;

    for k in 0..BEAM_RAY_COUNT {
        let frac = if BEAM_RAY_COUNT == 1 {
            0.5
        } else {
            k as f64 / (BEAM_RAY_COUNT - 1) as f64
        };
        let ray_deg = bearing_deg - hw + 2.0 * hw * frac;
        let dir = geometry::unit_vector(ray_deg);

        let mut nearest: Option<(f64, &Segment)> = None;
        for seg in &world.segments {
            if let Some(t) = geometry::ray_segment_hit(pose.position, dir, seg.a, seg.b) {
                if t <= sensor.r_max && nearest.is_none_or(|(bt, _)| t < bt) {
                    nearest = Some((t, seg));
                }
            }
        }
        if let Some((t, seg)) = nearest {
            let incidence = geometry::incidence_deg(dir, seg.a, seg.b);
            if incidence <= seg.critical_angle_deg && best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        }
    }

    let (range, provenance) = match best {
        Some(d) => (quantize(d, &world.grid, sensor), Provenance::Detected),
        None => {
            if rng.gen::<f64>() < sensor.p_spurious {
                let draw = rng.gen_range(sensor.r_min..=sensor.r_max);
                (quantize(draw, &world.grid, sensor), Provenance::Spurious)
            } else {
                (sensor.r_max, Provenance::Dropout)
            }
        }
    };

    SonarReading {
        id,
        pose: *pose,
        bearing_deg,
        range,
        is_max_range: range >= sensor.r_max,
        provenance,
    }
}

/// Evaluate every firing in order. Each firing draws from its own RNG
/// stream derived from the world seed, so results are reproducible and
/// independent of evaluation order.
pub fn run_firings(world: &ScenarioWorld) -> Vec<SonarReading> {
    world
        .firings
        .iter()
        .enumerate()
        .map(|(i, firing)| {
            let pose = &world.path[firing.pose];
            let bearing = pose.heading_deg + firing.bearing_deg;
            let mut rng = rng_stream(world.seed, i as u64);
            cast_sonar(world, i as ReadingId, pose, bearing, &mut rng)
        })
        .collect()
}
