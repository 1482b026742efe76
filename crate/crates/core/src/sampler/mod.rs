//! Temporal, fanout-bounded neighbor sampling seeded at task instances.
//!
//! Every seed gets its own subgraph: nodes reached from two seeds appear once
//! per seed, each copy owned by the seed whose frontier reached it. This keeps
//! one seed's cutoff from admitting nodes into another seed's neighborhood.

mod audit;
mod export;
mod negatives;

use std::collections::{HashMap, HashSet};

use rand::seq::index::sample as sample_indices;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeKey, HeteroGraph, Role};
use crate::rdb::{Table, Timestamp};

pub use audit::{audit_batch, LeakKind, LeakViolation};
pub use export::{export_batches, read_batch_file, read_manifest, BatchFileEntry, BatchManifest, ExportOptions, BATCH_MANIFEST};
pub use negatives::sample_negatives;

pub const DEFAULT_MAX_HOPS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl LabelValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            LabelValue::Int(v) => Some(*v as f64),
            LabelValue::Float(v) => Some(*v),
            LabelValue::Text(_) => None,
        }
    }
}

/// The target cell `(k, i, j)` of a seed and, for supervised export, its value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRef {
    pub column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<LabelValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub id: String,
    pub node_type: String,
    pub node_index: u32,
    #[serde(default)]
    pub cutoff: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_ref: Option<LabelRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborOrder {
    #[default]
    UniformRandom,
    MostRecent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FanoutPlan {
    pub hops: usize,
    /// Per-hop cap on neighbors chosen per (node, edge type).
    pub fanout_per_hop: Vec<usize>,
    #[serde(default)]
    pub replacement: bool,
    #[serde(default)]
    pub neighbor_order: NeighborOrder,
}

impl FanoutPlan {
    pub fn uniform(hops: usize, fanout: usize) -> Self {
        FanoutPlan {
            hops,
            fanout_per_hop: vec![fanout; hops],
            replacement: false,
            neighbor_order: NeighborOrder::UniformRandom,
        }
    }

    pub fn check(&self, max_hops: usize) -> Result<()> {
        if self.hops == 0 || self.hops > max_hops {
            return Err(Error::Config(format!("hops must be in 1..={max_hops}, got {}", self.hops)));
        }
        if self.fanout_per_hop.len() != self.hops {
            return Err(Error::Config(format!(
                "fanout_per_hop has {} entries for {} hops",
                self.fanout_per_hop.len(),
                self.hops
            )));
        }
        if self.fanout_per_hop.contains(&0) {
            return Err(Error::Config("fanouts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNodes {
    pub node_type: String,
    /// Node index in the full graph, per local node.
    pub global: Vec<u32>,
    /// Position of the owning seed in the batch.
    pub seed: Vec<u32>,
    pub features: Table,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchEdges {
    pub key: EdgeKey,
    /// Local endpoints within the batch node lists of `key.src` / `key.dst`.
    pub src: Vec<u32>,
    pub dst: Vec<u32>,
    /// Edge index in the full graph.
    pub edge_id: Vec<u32>,
    /// Hop (0-based) at which the edge was sampled.
    pub hop: Vec<u8>,
    pub seed: Vec<u32>,
    pub features: Option<Table>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExcludedFeature {
    pub node_type: String,
    pub local: u32,
    pub column: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphBatch {
    pub seeds: Vec<Seed>,
    /// Local index of each seed's own node within its type's list.
    pub seed_locals: Vec<u32>,
    /// One entry per graph node type, in graph order.
    pub node_types: Vec<BatchNodes>,
    /// One entry per graph edge type, in graph order.
    pub edge_types: Vec<BatchEdges>,
    pub excluded_features: Vec<ExcludedFeature>,
    pub negatives: Option<Vec<Vec<u32>>>,
}

impl SubgraphBatch {
    pub fn labels(&self) -> Vec<Option<LabelValue>> {
        self.seeds
            .iter()
            .map(|s| s.label_ref.as_ref().and_then(|l| l.value.clone()))
            .collect()
    }

    pub fn node_type(&self, name: &str) -> Option<&BatchNodes> {
        self.node_types.iter().find(|n| n.node_type == name)
    }
}

/// Per edge type, outgoing edges grouped by source node.
struct Csr {
    offsets: Vec<usize>,
    edges: Vec<u32>,
}

impl Csr {
    fn build(src: &[u32], n: usize) -> Csr {
        let mut offsets = vec![0usize; n + 1];
        for &s in src {
            offsets[s as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut edges = vec![0u32; src.len()];
        for (e, &s) in src.iter().enumerate() {
            edges[fill[s as usize]] = e as u32;
            fill[s as usize] += 1;
        }
        Csr { offsets, edges }
    }

    fn out(&self, node: u32) -> &[u32] {
        &self.edges[self.offsets[node as usize]..self.offsets[node as usize + 1]]
    }
}

/// Reusable sampling state over one graph.
pub struct Sampler<'g> {
    g: &'g HeteroGraph,
    csr: Vec<Csr>,
    /// Edge types leaving each node type.
    outgoing: Vec<Vec<usize>>,
    edge_src_type: Vec<usize>,
    edge_dst_type: Vec<usize>,
    max_hops: usize,
    temporal: bool,
}

struct SeedSubgraph {
    nodes: Vec<Vec<u32>>,
    root_local: u32,
    edges: Vec<Vec<(u32, u32, u32, u8)>>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Deterministic sub-seed for stream `index` of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    stream_rng(seed, index).next_u64()
}

impl<'g> Sampler<'g> {
    pub fn new(g: &'g HeteroGraph) -> Result<Self> {
        let type_index: HashMap<&str, usize> = g
            .node_types
            .iter()
            .enumerate()
            .map(|(i, n)| (n.name.as_str(), i))
            .collect();
        let mut outgoing = vec![Vec::new(); g.node_types.len()];
        let mut csr = Vec::new();
        let (mut edge_src_type, mut edge_dst_type) = (Vec::new(), Vec::new());
        for (e, et) in g.edge_types.iter().enumerate() {
            let s = type_index[et.key.src.as_str()];
            let d = type_index[et.key.dst.as_str()];
            outgoing[s].push(e);
            edge_src_type.push(s);
            edge_dst_type.push(d);
            csr.push(Csr::build(&et.src, g.node_types[s].count()));
        }
        let temporal = g.node_types.iter().any(|n| n.features.schema.time_column().is_some())
            || g.edge_types
                .iter()
                .any(|e| e.features.as_ref().is_some_and(|f| f.schema.time_column().is_some()));
        Ok(Sampler {
            g,
            csr,
            outgoing,
            edge_src_type,
            edge_dst_type,
            max_hops: DEFAULT_MAX_HOPS,
            temporal,
        })
    }

    pub fn with_max_hops(mut self, max_hops: usize) -> Self {
        self.max_hops = max_hops;
        self
    }

    fn check_seed(&self, seed: &Seed) -> Result<usize> {
        let t = self.g.node_type_index(&seed.node_type).ok_or_else(|| Error::UnknownNode {
            kind: "seed node type",
            name: seed.node_type.clone(),
        })?;
        let nt = &self.g.node_types[t];
        if seed.node_index as usize >= nt.count() {
            return Err(Error::UnknownNode {
                kind: "seed node",
                name: format!("{}[{}]", seed.node_type, seed.node_index),
            });
        }
        if self.temporal && seed.cutoff.is_none() {
            return Err(Error::Data(format!("seed `{}` has no cutoff on a temporal graph", seed.id)));
        }
        if let (Some(ts), Some(c)) = (nt.timestamp(seed.node_index as usize), seed.cutoff) {
            if ts > c {
                return Err(Error::Data(format!("seed `{}`: node timestamp {ts} is after its cutoff {c}", seed.id)));
            }
        }
        Ok(t)
    }

    /// Edge types whose edges at the seed node encode the seed's FK target.
    fn target_edge_types(&self, seed: &Seed, seed_type: usize) -> Vec<(usize, bool)> {
        let Some(label) = &seed.label_ref else { return Vec::new() };
        let table = &self.g.node_types[seed_type].provenance.table;
        let mut out = Vec::new();
        for (e, et) in self.g.edge_types.iter().enumerate() {
            let fwd = &self.g.edge_types[self.g.feature_owner(e)];
            if fwd.provenance.role == Role::ForeignKey
                && &fwd.provenance.table == table
                && fwd.provenance.columns == [label.column.clone()]
                && fwd.key.src == seed.node_type
            {
                out.push((e, et.reverse_of.is_some()));
            }
        }
        out
    }

    fn eligible(&self, e: usize, edge: u32, neighbor_type: usize, neighbor: u32, cutoff: Option<Timestamp>) -> bool {
        let Some(c) = cutoff else { return true };
        if self.g.edge_timestamp(e, edge as usize).is_some_and(|ts| ts > c) {
            return false;
        }
        !self.g.node_types[neighbor_type].timestamp(neighbor as usize).is_some_and(|ts| ts > c)
    }

    /// Sort key for `most_recent`: newest first, ties by edge index.
    fn recency(&self, e: usize, edge: u32, neighbor_type: usize, neighbor: u32) -> Timestamp {
        self.g
            .edge_timestamp(e, edge as usize)
            .or_else(|| self.g.node_types[neighbor_type].timestamp(neighbor as usize))
            .unwrap_or(Timestamp::MIN)
    }

    fn sample_seed(&self, seed: &Seed, seed_type: usize, plan: &FanoutPlan, rng: &mut ChaCha8Rng) -> SeedSubgraph {
        let g = self.g;
        let mut nodes: Vec<Vec<u32>> = vec![Vec::new(); g.node_types.len()];
        let mut local: HashMap<(usize, u32), u32> = HashMap::new();
        let mut edges: Vec<Vec<(u32, u32, u32, u8)>> = vec![Vec::new(); g.edge_types.len()];
        let mut taken: HashSet<(usize, u32)> = HashSet::new();
        let excluded: HashMap<usize, bool> = self.target_edge_types(seed, seed_type).into_iter().collect();

        nodes[seed_type].push(seed.node_index);
        local.insert((seed_type, seed.node_index), 0);
        let mut frontier = vec![(seed_type, seed.node_index)];
        let mut eligible: Vec<(u32, u32)> = Vec::new();
        for (hop, &fanout) in plan.fanout_per_hop.iter().enumerate().take(plan.hops) {
            let mut next = Vec::new();
            for &(t, node) in &frontier {
                let node_local = local[&(t, node)];
                for &e in &self.outgoing[t] {
                    let d = self.edge_dst_type[e];
                    let et = &g.edge_types[e];
                    eligible.clear();
                    for &edge in self.csr[e].out(node) {
                        let nb = et.dst[edge as usize];
                        if let Some(&reverse) = excluded.get(&e) {
                            // forward FK edges leave the seed node; reverse ones enter it
                            let hits_seed = if reverse {
                                nb == seed.node_index && d == seed_type
                            } else {
                                node == seed.node_index && t == seed_type
                            };
                            if hits_seed {
                                continue;
                            }
                        }
                        if self.eligible(e, edge, d, nb, seed.cutoff) {
                            eligible.push((edge, nb));
                        }
                    }
                    if eligible.is_empty() {
                        continue;
                    }
                    let chosen: Vec<(u32, u32)> = match plan.neighbor_order {
                        NeighborOrder::MostRecent => {
                            eligible.sort_by_key(|&(edge, nb)| (std::cmp::Reverse(self.recency(e, edge, d, nb)), edge));
                            eligible.iter().take(fanout).copied().collect()
                        }
                        NeighborOrder::UniformRandom if plan.replacement => {
                            (0..fanout).map(|_| eligible[rng.gen_range(0..eligible.len())]).collect()
                        }
                        NeighborOrder::UniformRandom if eligible.len() <= fanout => eligible.clone(),
                        NeighborOrder::UniformRandom => {
                            let mut idx = sample_indices(rng, eligible.len(), fanout).into_vec();
                            idx.sort_unstable();
                            idx.into_iter().map(|i| eligible[i]).collect()
                        }
                    };
                    for (edge, nb) in chosen {
                        if !taken.insert((e, edge)) {
                            continue;
                        }
                        let nb_local = *local.entry((d, nb)).or_insert_with(|| {
                            nodes[d].push(nb);
                            next.push((d, nb));
                            (nodes[d].len() - 1) as u32
                        });
                        edges[e].push((node_local, nb_local, edge, hop as u8));
                    }
                }
            }
            frontier = next;
        }
        SeedSubgraph {
            nodes,
            root_local: 0,
            edges,
        }
    }

    /// Samples one subgraph per seed and masks each seed's target cell.
    pub fn sample(&self, seeds: &[Seed], plan: &FanoutPlan, rng_seed: u64) -> Result<SubgraphBatch> {
        plan.check(self.max_hops)?;
        let types = seeds.iter().map(|s| self.check_seed(s)).collect::<Result<Vec<_>>>()?;
        let subs: Vec<SeedSubgraph> = seeds
            .par_iter()
            .zip(&types)
            .enumerate()
            .map(|(i, (seed, &t))| {
                let mut rng = stream_rng(rng_seed, i as u64);
                self.sample_seed(seed, t, plan, &mut rng)
            })
            .collect();

        let g = self.g;
        let mut global: Vec<Vec<u32>> = vec![Vec::new(); g.node_types.len()];
        let mut owner: Vec<Vec<u32>> = vec![Vec::new(); g.node_types.len()];
        let mut seed_locals = Vec::with_capacity(seeds.len());
        let mut edge_rows: Vec<Vec<(u32, u32, u32, u8, u32)>> = vec![Vec::new(); g.edge_types.len()];
        for (i, sub) in subs.iter().enumerate() {
            let base: Vec<u32> = global.iter().map(|v| v.len() as u32).collect();
            seed_locals.push(base[types[i]] + sub.root_local);
            for (t, list) in sub.nodes.iter().enumerate() {
                global[t].extend_from_slice(list);
                owner[t].extend(std::iter::repeat_n(i as u32, list.len()));
            }
            for (e, list) in sub.edges.iter().enumerate() {
                let (bs, bd) = (base[self.edge_src_type[e]], base[self.edge_dst_type[e]]);
                edge_rows[e].extend(list.iter().map(|&(s, d, id, hop)| (bs + s, bd + d, id, hop, i as u32)));
            }
        }

        let node_types = g
            .node_types
            .iter()
            .zip(global.into_iter().zip(owner))
            .map(|(nt, (global, seed))| {
                let rows: Vec<usize> = global.iter().map(|&x| x as usize).collect();
                BatchNodes {
                    node_type: nt.name.clone(),
                    features: nt.features.take(&rows),
                    global,
                    seed,
                }
            })
            .collect();
        let edge_types = g
            .edge_types
            .iter()
            .enumerate()
            .zip(edge_rows)
            .map(|((e, et), rows)| {
                let ids: Vec<usize> = rows.iter().map(|r| r.2 as usize).collect();
                BatchEdges {
                    key: et.key.clone(),
                    src: rows.iter().map(|r| r.0).collect(),
                    dst: rows.iter().map(|r| r.1).collect(),
                    edge_id: rows.iter().map(|r| r.2).collect(),
                    hop: rows.iter().map(|r| r.3).collect(),
                    seed: rows.iter().map(|r| r.4).collect(),
                    features: g.edge_features(e).map(|f| f.take(&ids)),
                }
            })
            .collect();
        let mut batch = SubgraphBatch {
            seeds: seeds.to_vec(),
            seed_locals,
            node_types,
            edge_types,
            excluded_features: Vec::new(),
            negatives: None,
        };
        for i in 0..seeds.len() {
            exclude_target(&mut batch, i)?;
        }
        Ok(batch)
    }
}

/// Default receptive field: the largest type-level hop distance from
/// `node_type` to any reachable node type (at least 1, at most `max_hops`).
pub fn schema_width(g: &HeteroGraph, node_type: &str, max_hops: usize) -> Result<usize> {
    let start = g.node_type_index(node_type).ok_or_else(|| Error::UnknownNode {
        kind: "node type",
        name: node_type.to_string(),
    })?;
    let mut dist = vec![usize::MAX; g.node_types.len()];
    dist[start] = 0;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(t) = queue.pop_front() {
        for et in &g.edge_types {
            if et.key.src != g.node_types[t].name {
                continue;
            }
            let d = g.node_type_index(&et.key.dst).expect("edge endpoints exist");
            if dist[d] == usize::MAX {
                dist[d] = dist[t] + 1;
                queue.push_back(d);
            }
        }
    }
    let width = dist.into_iter().filter(|&d| d != usize::MAX).max().unwrap_or(0);
    Ok(width.clamp(1, max_hops))
}

/// Samples with a fresh [`Sampler`] and the default hop limit.
pub fn temporal_sample(g: &HeteroGraph, seeds: &[Seed], plan: &FanoutPlan, rng_seed: u64) -> Result<SubgraphBatch> {
    Sampler::new(g)?.sample(seeds, plan, rng_seed)
}

/// Masks seed `seed`'s target cell (to null) and records it in
/// `excluded_features`. Target columns that are not node features, such as
/// FK targets already removed during sampling, are recorded only. Applying
/// it twice is the same as applying it once.
pub fn exclude_target(batch: &mut SubgraphBatch, seed: usize) -> Result<()> {
    let s = batch
        .seeds
        .get(seed)
        .ok_or_else(|| Error::Data(format!("seed position {seed} not in batch")))?;
    let Some(label) = &s.label_ref else { return Ok(()) };
    let local = batch.seed_locals[seed];
    let entry = ExcludedFeature {
        node_type: s.node_type.clone(),
        local,
        column: label.column.clone(),
    };
    let nodes = batch
        .node_types
        .iter_mut()
        .find(|n| n.node_type == s.node_type)
        .ok_or_else(|| Error::UnknownNode {
            kind: "node type",
            name: s.node_type.clone(),
        })?;
    if let Some(idx) = nodes.features.schema.column_index(&label.column) {
        nodes.features.columns[idx].set_null(local as usize);
    }
    if !batch.excluded_features.contains(&entry) {
        batch.excluded_features.push(entry);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeType, NodeType, Provenance};
    use crate::rdb::{ColumnData, ColumnSpec, DType, TableSchema};

    /// Hub node 0 of type H linked to 5 leaves of type L; leaf i has a
    /// timestamp of 10 * (i + 1).
    fn star() -> HeteroGraph {
        let mut g = HeteroGraph::new();
        let hub = Table::new(
            TableSchema::new("H", vec![ColumnSpec::new("y", DType::Float)]),
            vec![ColumnData::Float(vec![Some(1.0)])],
        )
        .unwrap();
        let leaves = Table::new(
            TableSchema::new("L", vec![ColumnSpec::time("ts")]),
            vec![ColumnData::Datetime((1..=5).map(|i| Some(10 * i)).collect())],
        )
        .unwrap();
        for (name, t) in [("H", hub), ("L", leaves)] {
            g.add_node_type(NodeType {
                name: name.into(),
                features: t,
                provenance: Provenance::synthetic(name),
            })
            .unwrap();
        }
        let idx = g
            .add_edge_type(EdgeType {
                key: EdgeKey::new("L", "to_hub", "H"),
                src: vec![0, 1, 2, 3, 4],
                dst: vec![0; 5],
                features: None,
                reverse_of: None,
                provenance: Provenance::synthetic("to_hub"),
            })
            .unwrap();
        g.add_reverse(idx).unwrap();
        g
    }

    fn seed(cutoff: i64) -> Seed {
        Seed {
            id: "s".into(),
            node_type: "H".into(),
            node_index: 0,
            cutoff: Some(cutoff),
            label_ref: Some(LabelRef {
                column: "y".into(),
                value: Some(LabelValue::Float(1.0)),
            }),
        }
    }

    #[test]
    fn cutoff_before_everything_keeps_only_seed() {
        let b = temporal_sample(&star(), &[seed(5)], &FanoutPlan::uniform(2, 10), 1).unwrap();
        assert_eq!(b.node_type("H").unwrap().global, vec![0]);
        assert!(b.node_type("L").unwrap().global.is_empty());
    }

    #[test]
    fn fanout_caps_per_edge_type() {
        let b = temporal_sample(&star(), &[seed(100)], &FanoutPlan::uniform(2, 2), 7).unwrap();
        assert_eq!(b.node_type("L").unwrap().global.len(), 2);
    }

    #[test]
    fn most_recent_picks_latest_eligible() {
        let mut plan = FanoutPlan::uniform(1, 2);
        plan.neighbor_order = NeighborOrder::MostRecent;
        let b = temporal_sample(&star(), &[seed(35)], &plan, 0).unwrap();
        let mut got = b.node_type("L").unwrap().global.clone();
        got.sort();
        assert_eq!(got, vec![1, 2]);
    }

    #[test]
    fn target_cell_is_masked_and_idempotent() {
        let mut b = temporal_sample(&star(), &[seed(100)], &FanoutPlan::uniform(1, 5), 0).unwrap();
        assert!(b.node_type("H").unwrap().features.columns[0].is_null(0));
        let once = b.clone();
        exclude_target(&mut b, 0).unwrap();
        assert_eq!(b, once);
        assert_eq!(b.excluded_features.len(), 1);
    }

    #[test]
    fn schema_width_of_star_is_one() {
        assert_eq!(schema_width(&star(), "H", 6).unwrap(), 1);
    }

    #[test]
    fn unknown_seed_and_deep_plans_are_rejected() {
        let mut s = seed(100);
        s.node_index = 9;
        assert!(temporal_sample(&star(), &[s], &FanoutPlan::uniform(1, 1), 0).is_err());
        assert!(temporal_sample(&star(), &[seed(100)], &FanoutPlan::uniform(7, 1), 0).is_err());
        let mut missing = seed(100);
        missing.cutoff = None;
        assert!(temporal_sample(&star(), &[missing], &FanoutPlan::uniform(1, 1), 0).is_err());
    }
}
