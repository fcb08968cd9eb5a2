//! Three-level Bayes network over region occupancies and readings.
//!
//! Region roots are independent binary variables (true = occupied). Each
//! reading leaf has two OR-aggregated parents: "pro" collects the regions in
//! its detection arc, "con" the regions in its free sector. Cause attachment
//! keeps fan-in at two by splicing intermediate OR nodes, and the whole net
//! is built in the causal direction: regions before readings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::partition::{CellLabel, Label, Region, RegionId, RegionPartition};
use crate::world::{ReadingId, SensorParams, SonarReading};

pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarity {
    Pro,
    Con,
}

impl Polarity {
    pub fn name(self) -> &'static str {
        match self {
            Polarity::Pro => "pro",
            Polarity::Con => "con",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NodeKind {
    RegionRoot { region: RegionId },
    Or { polarity: Polarity },
    ReadingLeaf { reading: ReadingId },
}

/// Conditional probability table over binary states. Row index packs the
/// parent states little-endian (parent 0 is bit 0); each row is
/// [P(false), P(true)] — for reading leaves, [P(other), P(obs)].
#[derive(Clone, Debug)]
pub struct Cpt {
    rows: Vec<[f64; 2]>,
}

impl Cpt {
    pub fn new(rows: Vec<[f64; 2]>) -> Self {
        assert!(rows.len().is_power_of_two());
        for row in &rows {
            debug_assert!((row[0] + row[1] - 1.0).abs() < 1e-12, "row must sum to 1");
        }
        Cpt { rows }
    }

    /// Root CPT with the given P(true).
    pub fn root(p_true: f64) -> Self {
        Cpt::new(vec![[1.0 - p_true, p_true]])
    }

    /// Deterministic OR over `parents` inputs; with zero parents the node is
    /// fixed false.
    pub fn or(parents: usize) -> Self {
        let rows = (0..1usize << parents)
            .map(|row| if row == 0 { [1.0, 0.0] } else { [0.0, 1.0] })
            .collect();
        Cpt::new(rows)
    }

    /// Reading leaf over parents [pro, con]: dropouts dominate, otherwise a
    /// detection is either true-positive or spurious.
    pub fn reading_leaf(sensor: &SensorParams) -> Self {
        let obs = |p: f64| [1.0 - p, p];
        Cpt::new(vec![
            obs(sensor.p_spurious), // pro=F con=F
            obs(sensor.p_true),     // pro=T con=F
            obs(sensor.p_dropout),  // pro=F con=T
            obs(sensor.p_dropout),  // pro=T con=T
        ])
    }

    pub fn p(&self, parent_row: usize, state: bool) -> f64 {
        self.rows[parent_row][usize::from(state)]
    }

    pub fn rows(&self) -> &[[f64; 2]] {
        &self.rows
    }

    pub fn parent_count(&self) -> usize {
        self.rows.len().trailing_zeros() as usize
    }

    pub fn is_deterministic(&self) -> bool {
        self.rows
            .iter()
            .all(|r| (r[0] == 0.0 || r[0] == 1.0) && (r[1] == 0.0 || r[1] == 1.0))
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub parents: Vec<NodeId>,
    pub cpt: Cpt,
}

/// Per-reading bookkeeping: the leaf plus the current heads of the two OR
/// chains (the heads are the leaf's direct parents).
#[derive(Clone, Copy, Debug)]
pub struct ReadingNodes {
    pub leaf: NodeId,
    pub pro_head: NodeId,
    pub con_head: NodeId,
}

#[derive(Clone, Debug, Default)]
pub struct BayesNetwork {
    nodes: Vec<Node>,
    region_index: BTreeMap<RegionId, NodeId>,
    region_labels: BTreeMap<RegionId, CellLabel>,
    reading_index: BTreeMap<ReadingId, ReadingNodes>,
    support_arcs: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NetworkStats {
    pub region_nodes: usize,
    pub reading_nodes: usize,
    pub or_nodes: usize,
    /// Number of region-to-polarity attachments (add_cause calls); spliced
    /// intermediate edges are not counted.
    pub support_arcs: usize,
}

impl BayesNetwork {
    pub fn new() -> Self {
        BayesNetwork::default()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn support_arcs(&self) -> usize {
        self.support_arcs
    }

    /// Region roots as (region id, node id), ascending by region id.
    pub fn region_roots(&self) -> impl Iterator<Item = (RegionId, NodeId)> + '_ {
        self.region_index.iter().map(|(&r, &n)| (r, n))
    }

    pub fn region_node(&self, region: RegionId) -> Option<NodeId> {
        self.region_index.get(&region).copied()
    }

    pub fn reading_nodes(&self, reading: ReadingId) -> Option<ReadingNodes> {
        self.reading_index.get(&reading).copied()
    }

    /// Reading leaves as (reading id, node id), ascending by reading id.
    pub fn leaves(&self) -> impl Iterator<Item = (ReadingId, NodeId)> + '_ {
        self.reading_index.iter().map(|(&r, &n)| (r, n.leaf))
    }

    pub fn stats(&self) -> NetworkStats {
        let or_nodes = self
            .nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Or { .. }))
            .count();
        NetworkStats {
            region_nodes: self.region_index.len(),
            reading_nodes: self.reading_index.len(),
            or_nodes,
            support_arcs: self.support_arcs,
        }
    }

    fn push_node(&mut self, kind: NodeKind, parents: Vec<NodeId>, cpt: Cpt) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node {
            id,
            kind,
            parents,
            cpt,
        });
        id
    }

    /// Root node for a region; state true means the region is occupied.
    pub fn add_region_node(&mut self, region: &Region) -> Result<NodeId> {
        if self.region_index.contains_key(&region.id) {
            return Err(Error::DuplicateRegion(region.id));
        }
        let id = self.push_node(
            NodeKind::RegionRoot { region: region.id },
            Vec::new(),
            Cpt::root(region.prior_occupied),
        );
        self.region_index.insert(region.id, id);
        self.region_labels.insert(region.id, region.label.clone());
        Ok(id)
    }

    /// Leaf plus its (initially parentless, fixed-false) pro and con OR nodes.
    pub fn add_reading_node(
        &mut self,
        reading: &SonarReading,
        sensor: &SensorParams,
    ) -> Result<NodeId> {
        if self.reading_index.contains_key(&reading.id) {
            return Err(Error::DuplicateReading(reading.id));
        }
        let pro = self.push_node(NodeKind::Or { polarity: Polarity::Pro }, Vec::new(), Cpt::or(0));
        let con = self.push_node(NodeKind::Or { polarity: Polarity::Con }, Vec::new(), Cpt::or(0));
        let leaf = self.push_node(
            NodeKind::ReadingLeaf { reading: reading.id },
            vec![pro, con],
            Cpt::reading_leaf(sensor),
        );
        self.reading_index.insert(
            reading.id,
            ReadingNodes {
                leaf,
                pro_head: pro,
                con_head: con,
            },
        );
        Ok(leaf)
    }

    /// Attach a region as a cause of a reading. When the chain head is full
    /// a fresh OR node taking [old head, new cause] becomes the leaf's
    /// parent, so fan-in never exceeds two anywhere.
    pub fn add_cause(
        &mut self,
        region: RegionId,
        reading: ReadingId,
        polarity: Polarity,
    ) -> Result<()> {
        let root = *self
            .region_index
            .get(&region)
            .ok_or(Error::UnknownRegion(region))?;
        let entry = *self
            .reading_index
            .get(&reading)
            .ok_or(Error::UnknownReading(reading))?;

        let label = self.region_labels[&region].symbol_for(reading);
        let expected = match polarity {
            Polarity::Pro => Label::Arc,
            Polarity::Con => Label::Sector,
        };
        if label != expected {
            return Err(Error::PolarityMismatch {
                region,
                reading,
                polarity: polarity.name(),
                label: label.symbol(),
            });
        }

        let head = match polarity {
            Polarity::Pro => entry.pro_head,
            Polarity::Con => entry.con_head,
        };
        let fan_in = self.nodes[head].parents.len();
        if fan_in < 2 {
            self.nodes[head].parents.push(root);
            self.nodes[head].cpt = Cpt::or(fan_in + 1);
        } else {
            let new_head = self.push_node(
                NodeKind::Or { polarity },
                vec![head, root],
                Cpt::or(2),
            );
            let slot = match polarity {
                Polarity::Pro => 0,
                Polarity::Con => 1,
            };
            self.nodes[entry.leaf].parents[slot] = new_head;
            let entry = self.reading_index.get_mut(&reading).unwrap();
            match polarity {
                Polarity::Pro => entry.pro_head = new_head,
                Polarity::Con => entry.con_head = new_head,
            }
        }
        self.support_arcs += 1;
        Ok(())
    }

    /// Nodes in a deterministic parents-before-children order.
    pub fn topo_order(&self) -> Vec<NodeId> {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for node in &self.nodes {
            for &p in &node.parents {
                indegree[node.id] += 1;
                children[p].push(node.id);
            }
        }
        let mut ready: std::collections::BTreeSet<NodeId> = (0..n)
            .filter(|&i| indegree[i] == 0)
            .collect();
        let mut order = Vec::with_capacity(n);
        while let Some(&next) = ready.iter().next() {
            ready.remove(&next);
            order.push(next);
            for &c in &children[next] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        assert_eq!(order.len(), n, "network must be acyclic");
        order
    }

    /// Text dump, one node per line, sufficient to reconstruct the net.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for node in &self.nodes {
            let kind = match &node.kind {
                NodeKind::RegionRoot { region } => format!("region {region}"),
                NodeKind::Or { polarity } => format!("or {}", polarity.name()),
                NodeKind::ReadingLeaf { reading } => format!("leaf {reading}"),
            };
            let parents = node
                .parents
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(",");
            let cpt = node
                .cpt
                .rows()
                .iter()
                .map(|r| format!("{},{}", r[0], r[1]))
                .collect::<Vec<_>>()
                .join(";");
            let _ = writeln!(out, "{} {} parents={} cpt={}", node.id, kind, parents, cpt);
        }
        out
    }
}

/// Build the full network for a partition: one root per region, one leaf per
/// reading, and a cause edge for every non-exterior (region, reading) pair —
/// arc labels attach pro, sector labels attach con.
pub fn build_network(
    partition: &RegionPartition,
    readings: &[SonarReading],
    sensor: &SensorParams,
) -> Result<(BayesNetwork, NetworkStats)> {
    for r in readings {
        if !partition.reading_ids().contains(&r.id) {
            return Err(Error::UnknownReading(r.id));
        }
    }
    let mut net = BayesNetwork::new();
    for region in partition.regions() {
        net.add_region_node(region)?;
    }
    for reading in readings {
        net.add_reading_node(reading, sensor)?;
    }
    for region in partition.regions() {
        for (reading, label) in region.label.entries() {
            match label {
                Label::Arc => net.add_cause(region.id, reading, Polarity::Pro)?,
                Label::Sector => net.add_cause(region.id, reading, Polarity::Con)?,
                Label::Exterior => {}
            }
        }
    }
    let stats = net.stats();
    Ok((net, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    use crate::testutil::{sensor, synthetic_reading, synthetic_region};

    #[test]
    fn region_root_carries_prior() {
        let mut net = BayesNetwork::new();
        let r = synthetic_region(0, 0.3, &[]);
        let id = net.add_region_node(&r).unwrap();
        assert_eq!(net.node(id).cpt.rows(), &[[0.7, 0.3]]);
        assert!(net.node(id).parents.is_empty());

        // Two regions: independent roots, no edges between them.
        let r2 = synthetic_region(1, 0.5, &[]);
        let id2 = net.add_region_node(&r2).unwrap();
        assert!(net.node(id2).parents.is_empty());
        assert!(matches!(
            net.add_region_node(&r),
            Err(Error::DuplicateRegion(0))
        ));

        // Prior 0 root is always free.
        let r3 = synthetic_region(2, 0.0, &[]);
        let id3 = net.add_region_node(&r3).unwrap();
        assert_eq!(net.node(id3).cpt.p(0, true), 0.0);
    }

    #[test]
    fn reading_leaf_cpt_from_operating_point() {
        let mut net = BayesNetwork::new();
        let leaf = net
            .add_reading_node(&synthetic_reading(0), &sensor())
            .unwrap();
        let cpt = &net.node(leaf).cpt;
        // (pro, con) rows: con gives the dropout likelihood regardless of pro.
        assert_eq!(cpt.p(0b00, true), 0.05);
        assert_eq!(cpt.p(0b01, true), 0.9);
        assert_eq!(cpt.p(0b10, true), 0.1);
        assert_eq!(cpt.p(0b11, true), 0.1);
        assert!(matches!(
            net.add_reading_node(&synthetic_reading(0), &sensor()),
            Err(Error::DuplicateReading(0))
        ));
    }

    #[test]
    fn parentless_or_nodes_are_fixed_false() {
        let mut net = BayesNetwork::new();
        net.add_reading_node(&synthetic_reading(0), &sensor()).unwrap();
        let nodes = net.reading_nodes(0).unwrap();
        assert_eq!(net.node(nodes.pro_head).cpt.rows(), &[[1.0, 0.0]]);
        assert_eq!(net.node(nodes.con_head).cpt.rows(), &[[1.0, 0.0]]);
    }

    #[test]
    fn add_cause_checks_ids_and_polarity() {
        let mut net = BayesNetwork::new();
        net.add_region_node(&synthetic_region(0, 0.4, &[(0, Label::Arc)]))
            .unwrap();
        net.add_reading_node(&synthetic_reading(0), &sensor()).unwrap();
        assert!(matches!(
            net.add_cause(9, 0, Polarity::Pro),
            Err(Error::UnknownRegion(9))
        ));
        assert!(matches!(
            net.add_cause(0, 9, Polarity::Pro),
            Err(Error::UnknownReading(9))
        ));
        assert!(matches!(
            net.add_cause(0, 0, Polarity::Con),
            Err(Error::PolarityMismatch { .. })
        ));
        net.add_cause(0, 0, Polarity::Pro).unwrap();
        assert_eq!(net.support_arcs(), 1);
    }

    /// Walk the chain feeding `head` and OR together every region root
    /// reachable from it under the given assignment.
    fn chain_value(net: &BayesNetwork, head: NodeId, assignment: &BTreeMap<RegionId, bool>) -> bool {
        match &net.node(head).kind {
            NodeKind::RegionRoot { region } => assignment[region],
            _ => net
                .node(head)
                .parents
                .iter()
                .any(|&p| chain_value(net, p, assignment)),
        }
    }

    #[test]
    fn or_chains_stay_binary_and_preserve_semantics() {
        for k in 1..=6usize {
            let mut net = BayesNetwork::new();
            let labels: Vec<(ReadingId, Label)> = vec![(0, Label::Arc)];
            for region in 0..k {
                net.add_region_node(&synthetic_region(region as RegionId, 0.4, &labels))
                    .unwrap();
            }
            net.add_reading_node(&synthetic_reading(0), &sensor()).unwrap();
            for region in 0..k {
                net.add_cause(region as RegionId, 0, Polarity::Pro).unwrap();
            }
            // Fan-in bound and DAG hold after every construction.
            for node in net.nodes() {
                assert!(node.parents.len() <= 2, "fan-in exceeded at {}", node.id);
            }
            net.topo_order();
            assert_eq!(net.support_arcs(), k);

            // Exhaustive truth-table check of the chain output.
            let head = net.reading_nodes(0).unwrap().pro_head;
            for mask in 0..1usize << k {
                let assignment: BTreeMap<RegionId, bool> = (0..k)
                    .map(|i| (i as RegionId, mask >> i & 1 == 1))
                    .collect();
                let expect = mask != 0;
                assert_eq!(chain_value(&net, head, &assignment), expect, "k={k} mask={mask}");
            }
        }
    }

    #[test]
    fn three_causes_splice_one_intermediate() {
        let mut net = BayesNetwork::new();
        let labels: Vec<(ReadingId, Label)> = vec![(0, Label::Arc)];
        for region in 0..3 {
            net.add_region_node(&synthetic_region(region, 0.4, &labels)).unwrap();
        }
        net.add_reading_node(&synthetic_reading(0), &sensor()).unwrap();
        let before = net.nodes().len();
        for region in 0..3 {
            net.add_cause(region, 0, Polarity::Pro).unwrap();
        }
        // Exactly one intermediate OR node appears for the third cause.
        assert_eq!(net.nodes().len(), before + 1);
        let stats = net.stats();
        assert_eq!(stats.or_nodes, 3); // pro chain of 2 + empty con
        assert_eq!(stats.support_arcs, 3);
    }

    #[test]
    fn build_network_over_a_real_partition() {
        use crate::partition::{build_partition, PriorParams};
        use crate::world::GridSpec;
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
        let partition = build_partition(
            &grid,
            &[r],
            &sensor(),
            &prior,
            &std::collections::BTreeSet::new(),
        )
        .unwrap();
        let (net, stats) = build_network(&partition, &[r], &sensor()).unwrap();
        // Single reading over two regions: two roots, two OR nodes, one leaf.
        assert_eq!(stats.region_nodes, 2);
        assert_eq!(stats.or_nodes, 2);
        assert_eq!(stats.reading_nodes, 1);
        assert_eq!(stats.support_arcs, 2);
        assert_eq!(net.nodes().len(), 5);
        net.topo_order();

        // A reading the partition does not know is rejected.
        let stray = synthetic_reading(9);
        assert!(matches!(
            build_network(&partition, &[stray], &sensor()),
            Err(Error::UnknownReading(9))
        ));
    }

    #[test]
    fn dump_round_trips_structure() {
        let mut net = BayesNetwork::new();
        net.add_region_node(&synthetic_region(0, 0.4, &[(0, Label::Arc)])).unwrap();
        net.add_reading_node(&synthetic_reading(0), &sensor()).unwrap();
        net.add_cause(0, 0, Polarity::Pro).unwrap();
        let dump = net.dump();
        assert_eq!(
            dump,
            "0 region 0 parents= cpt=0.6,0.4\n\
             1 or pro parents=0 cpt=1,0;0,1\n\
             2 or con parents= cpt=1,0\n\
             3 leaf 0 parents=1,2 cpt=0.95,0.05;0.09999999999999998,0.9;0.9,0.1;0.9,0.1\n"
        );
    }
}
