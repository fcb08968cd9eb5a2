//! Display maps, PGM rendering, statistics, and the end-to-end pipeline.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::baselines::{self, DsObsModel, ElfesParams};
use crate::bayes;
use crate::error::{Error, Result};
use crate::inference::{self, Evidence, InferBudget, PosteriorMap, Strategy};
use crate::partition::{self, RegionPartition};
use crate::world::{self, Cell, ScenarioWorld, SonarReading};

/// Per-cell occupancy probability over the scenario grid.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl OccupancyMap {
    pub fn new(width: u32, height: u32, fill: f64) -> Self {
        OccupancyMap {
            width,
            height,
            values: vec![fill; (width * height) as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, cell: Cell) -> f64 {
        self.values[(cell.1 * self.width + cell.0) as usize]
    }

    pub fn set(&mut self, cell: Cell, p: f64) {
        debug_assert!((0.0..=1.0).contains(&p), "probability {p} out of range");
        self.values[(cell.1 * self.width + cell.0) as usize] = p;
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let w = self.width;
        (0..self.height).flat_map(move |y| (0..w).map(move |x| (x, y)))
    }
}

/// Translate region posteriors to a per-cell display value:
/// p_min * posterior / prior, clamped to [0, 1]. Cells in no region show the
/// global prior; traversed cells show 0.
pub fn grid_posterior(
    partition: &RegionPartition,
    posteriors: &PosteriorMap,
    p_min: f64,
) -> Result<OccupancyMap> {
    let grid = partition.grid();
    let mut map = OccupancyMap::new(grid.width, grid.height, p_min);
    for region in partition.regions() {
        if region.prior_occupied <= 0.0 {
            return Err(Error::ZeroPrior(region.id));
        }
        let posterior = posteriors
            .get(region.id)
            .ok_or(Error::MissingPosterior(region.id))?;
        let value = (p_min * posterior / region.prior_occupied).clamp(0.0, 1.0);
        for &cell in &region.cells {
            map.set(cell, value);
        }
    }
    for &cell in partition.traversed() {
        map.set(cell, 0.0);
    }
    Ok(map)
}

/// Binary 8-bit PGM, white = probability 0, black = probability 1, linear
/// in between with round-half-up quantization. Top image row is the highest
/// y row of the grid.
pub fn render_pgm(map: &OccupancyMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", map.width(), map.height()).into_bytes();
    for y in (0..map.height()).rev() {
        for x in 0..map.width() {
            let p = map.get((x, y));
            out.push((255.0 * (1.0 - p)).round() as u8);
        }
    }
    out
}

/// Hard classification: 1 where p >= t, else 0.
pub fn threshold_map(map: &OccupancyMap, t: f64) -> OccupancyMap {
    let mut out = OccupancyMap::new(map.width(), map.height(), 0.0);
    for cell in map.cells() {
        out.set(cell, if map.get(cell) >= t { 1.0 } else { 0.0 });
    }
    out
}

/// Raw readings layer: detection arcs drawn at value 1 on an empty map,
/// mirroring the presentation of the result figures.
pub fn reading_overlay(world: &ScenarioWorld, readings: &[SonarReading]) -> OccupancyMap {
    let mut map = OccupancyMap::new(world.grid.width, world.grid.height, 0.0);
    for reading in readings {
        for cell in world.grid.cells() {
            if partition::label_cell(&world.grid, cell, reading, &world.sensor)
                == partition::Label::Arc
            {
                map.set(cell, 1.0);
            }
        }
    }
    map
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    Bayes,
    Elfes,
    Ds,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Bayes => "bayes",
            Model::Elfes => "elfes",
            Model::Ds => "ds",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunStats {
    pub readings: usize,
    pub regions_total: usize,
    pub regions_nonempty: usize,
    pub support_arcs: usize,
    pub method: String,
    pub evidence_prob: Option<f64>,
    pub wall_ms: u128,
}

impl RunStats {
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "readings={}", self.readings);
        let _ = writeln!(out, "regions_total={}", self.regions_total);
        let _ = writeln!(out, "regions_nonempty={}", self.regions_nonempty);
        let _ = writeln!(out, "support_arcs={}", self.support_arcs);
        let _ = writeln!(out, "method={}", self.method);
        let _ = writeln!(
            out,
            "evidence_prob={}",
            self.evidence_prob.map(|z| z.to_string()).unwrap_or_default()
        );
        let _ = writeln!(out, "wall_ms={}", self.wall_ms);
        out
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOptions {
    pub model: Model,
    pub strategy: Strategy,
    pub samples: usize,
    /// Overrides the scenario seed when set.
    pub seed: Option<u64>,
    pub thresholds: Vec<f64>,
    pub out_dir: PathBuf,
    /// Stats destination; defaults to stats.txt in the output directory.
    pub stats_path: Option<PathBuf>,
    pub dump_regions: bool,
    pub dump_network: bool,
}

impl PipelineOptions {
    pub fn new(model: Model, out_dir: impl Into<PathBuf>) -> Self {
        PipelineOptions {
            model,
            strategy: Strategy::Auto,
            samples: InferBudget::default().n_samples,
            seed: None,
            thresholds: Vec::new(),
            out_dir: out_dir.into(),
            stats_path: None,
            dump_regions: false,
            dump_network: false,
        }
    }
}

#[derive(Debug)]
pub struct PipelineRun {
    /// Maps in output order as (file stem, map).
    pub maps: Vec<(String, OccupancyMap)>,
    pub stats: RunStats,
    pub readings: Vec<SonarReading>,
}

/// Load a scenario, fire the sonar, run the requested model, and write the
/// PGM images, stats, and optional dumps into the output directory.
pub fn run_pipeline(scenario_path: &Path, opts: &PipelineOptions) -> Result<PipelineRun> {
    let text = fs::read_to_string(scenario_path)?;
    let mut world = world::load_scenario(&text)?;
    if let Some(seed) = opts.seed {
        world.seed = seed;
    }

    let start = Instant::now();
    let readings = world::run_firings(&world);
    let mut maps: Vec<(String, OccupancyMap)> = Vec::new();
    let mut dumps: Vec<(&str, String)> = Vec::new();

    let stats = match opts.model {
        Model::Bayes => {
            if readings.is_empty() {
                return Err(Error::InvalidArgument(
                    "bayes pipeline needs at least one firing".into(),
                ));
            }
            let traversed = world.traversed_cells();
            let partition = partition::build_partition(
                &world.grid,
                &readings,
                &world.sensor,
                &world.prior,
                &traversed,
            )?;
            let (net, net_stats) = bayes::build_network(&partition, &readings, &world.sensor)?;
            let evidence = Evidence::all_obs(&net);
            let budget = InferBudget {
                n_samples: opts.samples,
                seed: world.seed,
                ..InferBudget::default()
            };
            let outcome = inference::infer(&net, &evidence, opts.strategy, &budget)?;
            let map = grid_posterior(&partition, &outcome.posterior, world.prior.p_min)?;
            maps.push(("map".into(), map));
            if opts.dump_regions {
                dumps.push(("regions.txt", partition.dump()));
            }
            if opts.dump_network {
                dumps.push(("network.txt", net.dump()));
            }
            RunStats {
                readings: readings.len(),
                regions_total: partition.region_count(),
                regions_nonempty: partition.regions().filter(|r| !r.cells.is_empty()).count(),
                support_arcs: net_stats.support_arcs,
                method: outcome.method.name().to_string(),
                evidence_prob: Some(outcome.evidence_prob),
                wall_ms: 0,
            }
        }
        Model::Elfes => {
            let params = ElfesParams {
                initial: world.prior.p_min,
                ..ElfesParams::default()
            };
            let map = baselines::elfes_map(&world, &readings, &params)?;
            maps.push(("map".into(), map));
            RunStats {
                readings: readings.len(),
                regions_total: 0,
                regions_nonempty: 0,
                support_arcs: 0,
                method: "elfes".into(),
                evidence_prob: None,
                wall_ms: 0,
            }
        }
        Model::Ds => {
            let map = baselines::ds_map(&world, &readings, &DsObsModel::default())?;
            maps.push(("map".into(), map));
            RunStats {
                readings: readings.len(),
                regions_total: 0,
                regions_nonempty: 0,
                support_arcs: 0,
                method: "ds".into(),
                evidence_prob: None,
                wall_ms: 0,
            }
        }
    };

    let base_map = maps[0].1.clone();
    for &t in &opts.thresholds {
        maps.push((format!("map_t{t}"), threshold_map(&base_map, t)));
    }
    maps.push(("readings".into(), reading_overlay(&world, &readings)));

    let mut stats = stats;
    stats.wall_ms = start.elapsed().as_millis();

    fs::create_dir_all(&opts.out_dir)?;
    for (stem, map) in &maps {
        fs::write(opts.out_dir.join(format!("{stem}.pgm")), render_pgm(map))?;
    }
    let stats_path = opts
        .stats_path
        .clone()
        .unwrap_or_else(|| opts.out_dir.join("stats.txt"));
    fs::write(stats_path, stats.to_key_values())?;
    for (name, content) in dumps {
        fs::write(opts.out_dir.join(name), content)?;
    }

    Ok(PipelineRun {
        maps,
        stats,
        readings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    use crate::partition::{build_partition, PriorParams, RegionId};
    use crate::testutil::{sensor, synthetic_reading};
    use crate::world::GridSpec;

    fn toy_partition() -> (RegionPartition, RegionId, RegionId) {
        let grid = GridSpec {
            width: 60,
            height: 40,
            cell_size: 1.0,
        };
        let mut r = synthetic_reading(0);
        r.pose.position = crate::geometry::Point::new(10.0, 20.5);
        r.range = 15.0;
        let prior = PriorParams {
            p_min: 0.3,
            p_max: 0.8,
            k: 0.005,
        };
        let mut traversed = std::collections::BTreeSet::new();
        traversed.insert((0u32, 0u32));
        let partition =
            build_partition(&grid, &[r], &sensor(), &prior, &traversed).unwrap();
        let ids: Vec<RegionId> = partition.regions().map(|r| r.id).collect();
        let (first, second) = (ids[0], ids[1]);
        (partition, first, second)
    }

    #[test]
    fn grid_posterior_ratio_and_endpoints() {
        let (partition, a, s) = toy_partition();
        let prior_a = partition.region(a).unwrap().prior_occupied;
        let prior_s = partition.region(s).unwrap().prior_occupied;

        // Posterior equal to the prior displays as p_min; posterior 0 as 0.
        let mut posts = BTreeMap::new();
        posts.insert(a, prior_a);
        posts.insert(s, 0.0);
        let map = grid_posterior(&partition, &PosteriorMap(posts), 0.3).unwrap();
        let cell_a = *partition.region(a).unwrap().cells.iter().next().unwrap();
        let cell_s = *partition.region(s).unwrap().cells.iter().next().unwrap();
        assert!((map.get(cell_a) - 0.3).abs() < 1e-12);
        assert_eq!(map.get(cell_s), 0.0);
        // Traversed cells show 0, untouched cells show p_min.
        assert_eq!(map.get((0, 0)), 0.0);
        assert_eq!(map.get((59, 39)), 0.3);

        // The ratio can exceed 1/p_min; the display value clamps at 1.
        let mut posts = BTreeMap::new();
        posts.insert(a, 1.0);
        posts.insert(s, prior_s);
        let map = grid_posterior(&partition, &PosteriorMap(posts), 0.9).unwrap();
        assert_eq!(map.get(cell_a), 1.0);
    }

    #[test]
    fn grid_posterior_requires_prior_and_posterior() {
        let (partition, a, s) = toy_partition();
        let only_one: BTreeMap<RegionId, f64> = [(a, 0.5)].into_iter().collect();
        assert!(matches!(
            grid_posterior(&partition, &PosteriorMap(only_one), 0.3),
            Err(Error::MissingPosterior(id)) if id == s
        ));
    }

    #[test]
    fn pgm_paper_endpoints_and_midpoint() {
        let mut map = OccupancyMap::new(3, 1, 0.0);
        map.set((0, 0), 0.0);
        map.set((1, 0), 1.0);
        map.set((2, 0), 0.5);
        let bytes = render_pgm(&map);
        assert_eq!(&bytes[..11], b"P5\n3 1\n255\n");
        let pixels = &bytes[bytes.len() - 3..];
        assert_eq!(pixels, &[255, 0, 128]);
    }

    #[test]
    fn pgm_rows_run_top_down() {
        let mut map = OccupancyMap::new(1, 2, 0.0);
        map.set((0, 1), 1.0); // top row black
        let bytes = render_pgm(&map);
        let pixels = &bytes[bytes.len() - 2..];
        assert_eq!(pixels, &[0, 255]);
    }

    #[test]
    fn pgm_round_trips_through_a_parser() {
        let mut map = OccupancyMap::new(4, 3, 0.3);
        map.set((1, 1), 0.635);
        map.set((3, 2), 0.11);
        let bytes = render_pgm(&map);

        // Minimal P5 parse.
        let header_end = bytes
            .windows(4)
            .position(|w| w == b"255\n")
            .map(|i| i + 4)
            .unwrap();
        let header = std::str::from_utf8(&bytes[..header_end]).unwrap();
        let mut parts = header.split_ascii_whitespace();
        assert_eq!(parts.next(), Some("P5"));
        let w: u32 = parts.next().unwrap().parse().unwrap();
        let h: u32 = parts.next().unwrap().parse().unwrap();
        assert_eq!((w, h), (4, 3));
        let pixels = &bytes[header_end..];
        assert_eq!(pixels.len(), 12);
        for y in 0..3u32 {
            for x in 0..4u32 {
                let expect = (255.0 * (1.0 - map.get((x, y)))).round() as u8;
                let got = pixels[((2 - y) * 4 + x) as usize];
                assert_eq!(got, expect);
            }
        }
    }

    #[test]
    fn threshold_edges() {
        let mut map = OccupancyMap::new(2, 1, 0.0);
        map.set((0, 0), 0.635);
        map.set((1, 0), 0.2);
        let all = threshold_map(&map, 0.0);
        assert_eq!(all.get((0, 0)), 1.0);
        assert_eq!(all.get((1, 0)), 1.0);
        let t = threshold_map(&map, 0.35);
        assert_eq!(t.get((0, 0)), 1.0);
        assert_eq!(t.get((1, 0)), 0.0);
        let exact = threshold_map(&map, 1.0);
        assert_eq!(exact.get((0, 0)), 0.0);
    }

    #[test]
    fn threshold_monotone_in_t() {
        let mut map = OccupancyMap::new(8, 8, 0.0);
        for (i, cell) in map.cells().collect::<Vec<_>>().into_iter().enumerate() {
            map.set(cell, (i as f64 / 63.0).clamp(0.0, 1.0));
        }
        let t1 = threshold_map(&map, 0.25);
        let t2 = threshold_map(&map, 0.65);
        for cell in map.cells() {
            // Occupied at the higher threshold implies occupied at the lower.
            assert!(t1.get(cell) >= t2.get(cell));
        }
    }
}
