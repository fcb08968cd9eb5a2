//! Posterior region occupancy given the readings.
//!
//! Three routes: brute-force enumeration over root assignments (the oracle,
//! guarded to small nets), exact variable elimination with a min-fill
//! ordering, and likelihood weighting for nets too wide for exact methods.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::bayes::{BayesNetwork, NodeId, NodeKind};
use crate::error::{Error, Result};
use crate::partition::RegionId;
use crate::world::rng_stream;

/// Hard cap on enumeration: guards against accidental exponential blowups.
pub const ENUMERATION_ROOT_LIMIT: usize = 24;

/// Samples are drawn in fixed-size blocks, one RNG stream per block, so a
/// parallel split over blocks reproduces the sequential result bit-exactly.
const SAMPLE_BLOCK: usize = 8192;

/// Observed state per reading leaf. In this artifact every leaf observes
/// "obs" (true), but the structure carries general binary evidence.
#[derive(Clone, Debug, Default)]
pub struct Evidence {
    states: BTreeMap<NodeId, bool>,
}

impl Evidence {
    /// Every reading leaf set to its observed value.
    pub fn all_obs(net: &BayesNetwork) -> Self {
        Evidence {
            states: net.leaves().map(|(_, leaf)| (leaf, true)).collect(),
        }
    }

    pub fn state_of(&self, node: NodeId) -> Option<bool> {
        self.states.get(&node).copied()
    }

    /// Evidence must cover every reading leaf exactly once and nothing else.
    pub fn validate(&self, net: &BayesNetwork) -> Result<()> {
        let leaves: BTreeSet<NodeId> = net.leaves().map(|(_, leaf)| leaf).collect();
        let covered: BTreeSet<NodeId> = self.states.keys().copied().collect();
        if leaves != covered {
            return Err(Error::BadEvidence(format!(
                "{} leaves, {} evidence entries",
                leaves.len(),
                covered.len()
            )));
        }
        Ok(())
    }
}

/// Posterior P(occupied | evidence) per region.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PosteriorMap(pub BTreeMap<RegionId, f64>);

impl PosteriorMap {
    pub fn get(&self, region: RegionId) -> Option<f64> {
        self.0.get(&region).copied()
    }
}

// ---------------------------------------------------------------------------
// Enumeration oracle

/// Drive `sink(values, weight)` over every root assignment, with OR nodes
/// propagated deterministically and leaf likelihoods folded into the weight.
fn enumerate_assignments<F: FnMut(&[bool], f64)>(
    net: &BayesNetwork,
    evidence: &Evidence,
    mut sink: F,
) -> Result<()> {
    evidence.validate(net)?;
    let roots: Vec<NodeId> = net.region_roots().map(|(_, n)| n).collect();
    if roots.len() > ENUMERATION_ROOT_LIMIT {
        return Err(Error::TooManyRoots {
            roots: roots.len(),
            limit: ENUMERATION_ROOT_LIMIT,
        });
    }
    let order = net.topo_order();
    let mut values = vec![false; net.nodes().len()];

    for mask in 0..1u64 << roots.len() {
        let mut weight = 1.0;
        for (bit, &root) in roots.iter().enumerate() {
            values[root] = mask >> bit & 1 == 1;
        }
        for &id in &order {
            let node = net.node(id);
            match node.kind {
                NodeKind::RegionRoot { .. } => {
                    let prior = node.cpt.p(0, true);
                    weight *= if values[id] { prior } else { 1.0 - prior };
                }
                NodeKind::Or { .. } => {
                    // Deterministic propagation; independent of the CPT
                    // machinery that variable elimination exercises.
                    values[id] = node.parents.iter().any(|&p| values[p]);
                }
                NodeKind::ReadingLeaf { .. } => {
                    let row = parent_row(node.parents.as_slice(), &values);
                    let state = evidence.state_of(id).expect("validated evidence");
                    weight *= node.cpt.p(row, state);
                }
            }
        }
        sink(&values, weight);
    }
    Ok(())
}

fn parent_row(parents: &[NodeId], values: &[bool]) -> usize {
    parents
        .iter()
        .enumerate()
        .fold(0, |row, (bit, &p)| row | usize::from(values[p]) << bit)
}

/// Exact posterior by direct summation over all root assignments.
pub fn enumerate_posterior(net: &BayesNetwork, evidence: &Evidence) -> Result<PosteriorMap> {
    let regions: Vec<(RegionId, NodeId)> = net.region_roots().collect();
    let mut occupied = vec![0.0; regions.len()];
    let mut total = 0.0;
    enumerate_assignments(net, evidence, |values, weight| {
        total += weight;
        for (i, &(_, node)) in regions.iter().enumerate() {
            if values[node] {
                occupied[i] += weight;
            }
        }
    })?;
    if total == 0.0 {
        return Err(Error::ImpossibleEvidence);
    }
    Ok(PosteriorMap(
        regions
            .iter()
            .zip(&occupied)
            .map(|(&(region, _), &mass)| (region, mass / total))
            .collect(),
    ))
}

/// The oracle's evidence normalizer P(evidence).
pub fn enumerate_evidence_probability(net: &BayesNetwork, evidence: &Evidence) -> Result<f64> {
    let mut total = 0.0;
    enumerate_assignments(net, evidence, |_, weight| total += weight)?;
    Ok(total)
}

/// Exact marginal P(node = true | evidence) for arbitrary nodes, including
/// OR nodes. Same enumeration route as `enumerate_posterior`.
pub fn enumerate_node_marginals(
    net: &BayesNetwork,
    evidence: &Evidence,
    query: &[NodeId],
) -> Result<BTreeMap<NodeId, f64>> {
    let mut mass = vec![0.0; query.len()];
    let mut total = 0.0;
    enumerate_assignments(net, evidence, |values, weight| {
        total += weight;
        for (i, &q) in query.iter().enumerate() {
            if values[q] {
                mass[i] += weight;
            }
        }
    })?;
    if total == 0.0 {
        return Err(Error::ImpossibleEvidence);
    }
    Ok(query
        .iter()
        .zip(&mass)
        .map(|(&q, &m)| (q, m / total))
        .collect())
}

// ---------------------------------------------------------------------------
// Variable elimination

/// Discrete factor over binary variables; `vars` are in ascending NodeId
/// order and variable j occupies bit j of the table index.
#[derive(Clone, Debug)]
pub struct Factor {
    vars: Vec<NodeId>,
    values: Vec<f64>,
}

impl Factor {
    fn scalar(value: f64) -> Self {
        Factor {
            vars: Vec::new(),
            values: vec![value],
        }
    }

    fn from_node(node: &crate::bayes::Node) -> Self {
        let mut vars: Vec<NodeId> = node.parents.clone();
        vars.push(node.id);
        let sorted = {
            let mut s = vars.clone();
            s.sort_unstable();
            s
        };
        let p = node.parents.len();
        let mut values = vec![0.0; 1 << vars.len()];
        for idx in 0..values.len() {
            // idx is over the unsorted (parents..., node) layout first.
            let row = idx & ((1 << p) - 1);
            let state = idx >> p & 1 == 1;
            let v = node.cpt.p(row, state);
            // Re-index into the sorted variable order.
            let mut out = 0usize;
            for (bit, &var) in vars.iter().enumerate() {
                if idx >> bit & 1 == 1 {
                    let pos = sorted.binary_search(&var).unwrap();
                    out |= 1 << pos;
                }
            }
            values[out] = v;
        }
        Factor {
            vars: sorted,
            values,
        }
    }

    fn contains(&self, var: NodeId) -> bool {
        self.vars.binary_search(&var).is_ok()
    }

    fn product(&self, other: &Factor, limit: usize) -> Result<Factor> {
        let mut vars: Vec<NodeId> = self.vars.clone();
        for &v in &other.vars {
            if !vars.contains(&v) {
                vars.push(v);
            }
        }
        vars.sort_unstable();
        if vars.len() > limit {
            return Err(Error::ExactBudgetExceeded {
                vars: vars.len(),
                limit,
            });
        }
        let pos = |f: &Factor, out_idx: usize| -> usize {
            let mut idx = 0usize;
            for (bit, &v) in f.vars.iter().enumerate() {
                let out_bit = vars.binary_search(&v).unwrap();
                if out_idx >> out_bit & 1 == 1 {
                    idx |= 1 << bit;
                }
            }
            idx
        };
        let mut values = vec![0.0; 1 << vars.len()];
        for (out_idx, slot) in values.iter_mut().enumerate() {
            *slot = self.values[pos(self, out_idx)] * other.values[pos(other, out_idx)];
        }
        Ok(Factor { vars, values })
    }

    fn sum_out(&self, var: NodeId) -> Factor {
        let bit = self
            .vars
            .binary_search(&var)
            .expect("variable present in factor");
        let vars: Vec<NodeId> = self
            .vars
            .iter()
            .copied()
            .filter(|&v| v != var)
            .collect();
        let mut values = vec![0.0; 1 << vars.len()];
        let low_mask = (1usize << bit) - 1;
        for (out_idx, slot) in values.iter_mut().enumerate() {
            let base = (out_idx & low_mask) | ((out_idx & !low_mask) << 1);
            *slot = self.values[base] + self.values[base | 1 << bit];
        }
        Factor { vars, values }
    }

    fn restrict(&self, var: NodeId, state: bool) -> Factor {
        let bit = self
            .vars
            .binary_search(&var)
            .expect("variable present in factor");
        let vars: Vec<NodeId> = self
            .vars
            .iter()
            .copied()
            .filter(|&v| v != var)
            .collect();
        let mut values = vec![0.0; 1 << vars.len()];
        let low_mask = (1usize << bit) - 1;
        let fixed = usize::from(state) << bit;
        for (out_idx, slot) in values.iter_mut().enumerate() {
            let base = (out_idx & low_mask) | ((out_idx & !low_mask) << 1);
            *slot = self.values[base | fixed];
        }
        Factor { vars, values }
    }
}

/// Min-fill elimination order over the factor scopes, ties broken by id.
/// Returns the order and the induced width (max live neighborhood size).
fn min_fill_order(scopes: &[Vec<NodeId>], keep: Option<NodeId>) -> (Vec<NodeId>, usize) {
    let mut adjacency: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    for scope in scopes {
        for &a in scope {
            adjacency.entry(a).or_default();
            for &b in scope {
                if a != b {
                    adjacency.entry(a).or_default().insert(b);
                }
            }
        }
    }
    let mut remaining: BTreeSet<NodeId> = adjacency.keys().copied().collect();
    if let Some(k) = keep {
        remaining.remove(&k);
    }
    let mut order = Vec::with_capacity(remaining.len());
    let mut width = 0usize;
    while !remaining.is_empty() {
        let mut best: Option<(usize, NodeId)> = None;
        for &v in &remaining {
            let neighbors: Vec<NodeId> = adjacency[&v]
                .iter()
                .copied()
                .filter(|n| remaining.contains(n) || keep == Some(*n))
                .collect();
            let mut fill = 0usize;
            for i in 0..neighbors.len() {
                for j in i + 1..neighbors.len() {
                    if !adjacency[&neighbors[i]].contains(&neighbors[j]) {
                        fill += 1;
                    }
                }
            }
            if best.is_none_or(|(bf, bv)| fill < bf || (fill == bf && v < bv)) {
                best = Some((fill, v));
            }
        }
        let (_, v) = best.unwrap();
        let neighbors: Vec<NodeId> = adjacency[&v]
            .iter()
            .copied()
            .filter(|n| remaining.contains(n) || keep == Some(*n))
            .collect();
        width = width.max(neighbors.len());
        for i in 0..neighbors.len() {
            for j in i + 1..neighbors.len() {
                let (a, b) = (neighbors[i], neighbors[j]);
                adjacency.get_mut(&a).unwrap().insert(b);
                adjacency.get_mut(&b).unwrap().insert(a);
            }
        }
        remaining.remove(&v);
        order.push(v);
    }
    (order, width)
}

/// Evidence-restricted node factors.
fn initial_factors(net: &BayesNetwork, evidence: &Evidence) -> Vec<Factor> {
    net.nodes()
        .iter()
        .map(|node| {
            let f = Factor::from_node(node);
            match evidence.state_of(node.id) {
                Some(state) => f.restrict(node.id, state),
                None => f,
            }
        })
        .collect()
}

/// Eliminate everything except `keep` (or everything when `None`), returning
/// the final factor: over [keep] with two entries, or a scalar.
fn eliminate(net: &BayesNetwork, evidence: &Evidence, keep: Option<NodeId>, limit: usize) -> Result<Factor> {
    let mut factors = initial_factors(net, evidence);
    let scopes: Vec<Vec<NodeId>> = factors.iter().map(|f| f.vars.clone()).collect();
    let (order, _) = min_fill_order(&scopes, keep);

    for var in order {
        let mut combined = Factor::scalar(1.0);
        let mut rest = Vec::with_capacity(factors.len());
        for f in factors {
            if f.contains(var) {
                combined = combined.product(&f, limit)?;
            } else {
                rest.push(f);
            }
        }
        rest.push(combined.sum_out(var));
        factors = rest;
    }

    let mut result = Factor::scalar(1.0);
    for f in &factors {
        result = result.product(f, limit)?;
    }
    Ok(result)
}

/// Exact posteriors for the given regions via variable elimination. Matches
/// the enumeration oracle wherever both apply.
pub fn variable_elimination(
    net: &BayesNetwork,
    evidence: &Evidence,
    queries: &[RegionId],
) -> Result<PosteriorMap> {
    variable_elimination_budgeted(net, evidence, queries, usize::MAX)
}

fn variable_elimination_budgeted(
    net: &BayesNetwork,
    evidence: &Evidence,
    queries: &[RegionId],
    max_factor_vars: usize,
) -> Result<PosteriorMap> {
    evidence.validate(net)?;
    let mut out = BTreeMap::new();
    for &region in queries {
        let node = net
            .region_node(region)
            .ok_or(Error::UnknownRegion(region))?;
        let f = eliminate(net, evidence, Some(node), max_factor_vars)?;
        // The query's own prior factor always survives elimination, so the
        // result is exactly one variable wide.
        let (p_false, p_true) = match f.vars.len() {
            1 => (f.values[0], f.values[1]),
            _ => unreachable!("elimination leaves exactly the query variable"),
        };
        let z = p_false + p_true;
        if z == 0.0 {
            return Err(Error::ImpossibleEvidence);
        }
        out.insert(region, p_true / z);
    }
    Ok(PosteriorMap(out))
}

/// P(evidence) computed by eliminating every variable.
pub fn ve_evidence_probability(net: &BayesNetwork, evidence: &Evidence) -> Result<f64> {
    evidence.validate(net)?;
    let f = eliminate(net, evidence, None, usize::MAX)?;
    Ok(f.values[0])
}

/// Estimated induced width of the evidence-restricted net under min-fill.
pub fn induced_width_estimate(net: &BayesNetwork, evidence: &Evidence) -> usize {
    let scopes: Vec<Vec<NodeId>> = initial_factors(net, evidence)
        .iter()
        .map(|f| f.vars.clone())
        .collect();
    min_fill_order(&scopes, None).1
}

// ---------------------------------------------------------------------------
// Likelihood weighting

/// Forward-sample roots and OR nodes, weighting each sample by the
/// likelihood of the observed leaves. Deterministic given the seed.
pub fn likelihood_weighting(
    net: &BayesNetwork,
    evidence: &Evidence,
    n_samples: usize,
    seed: u64,
) -> Result<PosteriorMap> {
    evidence.validate(net)?;
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    let regions: Vec<(RegionId, NodeId)> = net.region_roots().collect();
    let order = net.topo_order();
    let mut values = vec![false; net.nodes().len()];
    let mut occupied = vec![0.0; regions.len()];
    let mut total = 0.0;

    let blocks = n_samples.div_ceil(SAMPLE_BLOCK);
    for block in 0..blocks {
        let mut rng = rng_stream(seed, block as u64);
        let in_block = SAMPLE_BLOCK.min(n_samples - block * SAMPLE_BLOCK);
        // Block-local accumulators merge in block order, so a parallel
        // split over blocks would reproduce this result exactly.
        let mut block_occupied = vec![0.0; regions.len()];
        let mut block_total = 0.0;
        for _ in 0..in_block {
            let mut weight = 1.0;
            for &id in &order {
                let node = net.node(id);
                match node.kind {
                    NodeKind::RegionRoot { .. } => {
                        values[id] = rng.gen::<f64>() < node.cpt.p(0, true);
                    }
                    NodeKind::Or { .. } => {
                        values[id] = node.parents.iter().any(|&p| values[p]);
                    }
                    NodeKind::ReadingLeaf { .. } => {
                        let row = parent_row(node.parents.as_slice(), &values);
                        let state = evidence.state_of(id).expect("validated evidence");
                        weight *= node.cpt.p(row, state);
                    }
                }
            }
            block_total += weight;
            for (i, &(_, node)) in regions.iter().enumerate() {
                if values[node] {
                    block_occupied[i] += weight;
                }
            }
        }
        total += block_total;
        for (acc, b) in occupied.iter_mut().zip(&block_occupied) {
            *acc += b;
        }
    }

    if total == 0.0 {
        return Err(Error::DegenerateWeights);
    }
    Ok(PosteriorMap(
        regions
            .iter()
            .zip(&occupied)
            .map(|(&(region, _), &mass)| (region, mass / total))
            .collect(),
    ))
}

/// Mean sample weight, an unbiased estimate of P(evidence).
pub fn lw_evidence_probability(
    net: &BayesNetwork,
    evidence: &Evidence,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    evidence.validate(net)?;
    let order = net.topo_order();
    let mut values = vec![false; net.nodes().len()];
    let mut total = 0.0;
    let blocks = n_samples.div_ceil(SAMPLE_BLOCK);
    for block in 0..blocks {
        let mut rng = rng_stream(seed, block as u64);
        let in_block = SAMPLE_BLOCK.min(n_samples - block * SAMPLE_BLOCK);
        let mut block_total = 0.0;
        for _ in 0..in_block {
            let mut weight = 1.0;
            for &id in &order {
                let node = net.node(id);
                match node.kind {
                    NodeKind::RegionRoot { .. } => {
                        values[id] = rng.gen::<f64>() < node.cpt.p(0, true);
                    }
                    NodeKind::Or { .. } => {
                        values[id] = node.parents.iter().any(|&p| values[p]);
                    }
                    NodeKind::ReadingLeaf { .. } => {
                        let row = parent_row(node.parents.as_slice(), &values);
                        let state = evidence.state_of(id).expect("validated evidence");
                        weight *= node.cpt.p(row, state);
                    }
                }
            }
            block_total += weight;
        }
        total += block_total;
    }
    Ok(total / n_samples as f64)
}

// ---------------------------------------------------------------------------
// Strategy dispatch

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Exact,
    Sampling,
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodUsed {
    Exact,
    Sampling,
}

impl MethodUsed {
    pub fn name(self) -> &'static str {
        match self {
            MethodUsed::Exact => "exact",
            MethodUsed::Sampling => "sampling",
        }
    }
}

/// Resource knobs for `infer`.
#[derive(Clone, Copy, Debug)]
pub struct InferBudget {
    /// Auto strategy uses exact inference up to this induced width.
    pub width_cap: usize,
    /// Sample count for the sampling fallback.
    pub n_samples: usize,
    pub seed: u64,
    /// Forced exact inference aborts rather than building a factor over
    /// more variables than this.
    pub max_factor_vars: usize,
}

impl Default for InferBudget {
    fn default() -> Self {
        InferBudget {
            width_cap: 20,
            n_samples: 200_000,
            seed: 0,
            max_factor_vars: 24,
        }
    }
}

#[derive(Clone, Debug)]
pub struct InferenceOutcome {
    pub posterior: PosteriorMap,
    pub method: MethodUsed,
    pub evidence_prob: f64,
    pub induced_width: usize,
    pub samples_used: Option<usize>,
    pub wall: Duration,
}

impl InferenceOutcome {
    /// Machine-readable key=value trace lines.
    pub fn trace(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "method={}", self.method.name());
        let _ = writeln!(out, "induced_width={}", self.induced_width);
        let _ = writeln!(out, "evidence_prob={}", self.evidence_prob);
        let _ = writeln!(out, "samples={}", self.samples_used.unwrap_or(0));
        let _ = writeln!(out, "wall_ms={}", self.wall.as_millis());
        out
    }
}

/// Run inference for every region under the chosen strategy. Auto picks
/// exact inference when the estimated induced width is within the cap and
/// falls back to likelihood weighting otherwise; forced exact never
/// silently approximates — it completes or aborts on budget.
pub fn infer(
    net: &BayesNetwork,
    evidence: &Evidence,
    strategy: Strategy,
    budget: &InferBudget,
) -> Result<InferenceOutcome> {
    evidence.validate(net)?;
    let start = Instant::now();
    let width = induced_width_estimate(net, evidence);
    let use_exact = match strategy {
        Strategy::Exact => true,
        Strategy::Sampling => false,
        Strategy::Auto => width <= budget.width_cap,
    };
    let queries: Vec<RegionId> = net.region_roots().map(|(r, _)| r).collect();
    let outcome = if use_exact {
        let posterior =
            variable_elimination_budgeted(net, evidence, &queries, budget.max_factor_vars)?;
        let z = ve_evidence_probability(net, evidence)?;
        InferenceOutcome {
            posterior,
            method: MethodUsed::Exact,
            evidence_prob: z,
            induced_width: width,
            samples_used: None,
            wall: start.elapsed(),
        }
    } else {
        let posterior = likelihood_weighting(net, evidence, budget.n_samples, budget.seed)?;
        let z = lw_evidence_probability(net, evidence, budget.n_samples, budget.seed)?;
        InferenceOutcome {
            posterior,
            method: MethodUsed::Sampling,
            evidence_prob: z,
            induced_width: width,
            samples_used: Some(budget.n_samples),
            wall: start.elapsed(),
        }
    };
    Ok(outcome)
}
