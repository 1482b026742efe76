use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ExcludedFeature, FanoutPlan, SubgraphBatch};
use crate::graph::HeteroGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakKind {
    /// Node timestamp after its seed's cutoff.
    FutureNode,
    /// Edge timestamp after its seed's cutoff.
    FutureEdge,
    /// Edge endpoint outside the batch node lists or owned by another seed.
    DanglingEdge,
    /// Batch edge does not match the graph edge it claims to be.
    EndpointMismatch,
    /// A seed's target cell is not masked or not listed as excluded.
    UnmaskedTarget,
    /// More neighbors chosen for a (node, edge type, hop) than the plan allows.
    FanoutExceeded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakViolation {
    pub kind: LeakKind,
    pub seed: u32,
    pub detail: String,
}

/// Checks a batch against the graph it was sampled from: temporal validity,
/// subgraph validity, target masking and, given a plan, fanout bounds.
pub fn audit_batch(g: &HeteroGraph, batch: &SubgraphBatch, plan: Option<&FanoutPlan>) -> Vec<LeakViolation> {
    let mut out = Vec::new();
    let mut push = |kind, seed: u32, detail: String| out.push(LeakViolation { kind, seed, detail });
    let cutoff = |s: u32| batch.seeds[s as usize].cutoff;

    let type_pos: HashMap<&str, usize> = batch
        .node_types
        .iter()
        .enumerate()
        .map(|(i, n)| (n.node_type.as_str(), i))
        .collect();
    for (t, nodes) in batch.node_types.iter().enumerate() {
        let nt = &g.node_types[t];
        for (l, (&u, &s)) in nodes.global.iter().zip(&nodes.seed).enumerate() {
            if let (Some(ts), Some(c)) = (nt.timestamp(u as usize), cutoff(s)) {
                if ts > c {
                    push(LeakKind::FutureNode, s, format!("{}[{u}] (local {l}) at {ts} > {c}", nt.name));
                }
            }
        }
    }

    for (e, edges) in batch.edge_types.iter().enumerate() {
        let et = &g.edge_types[e];
        let sn = &batch.node_types[type_pos[et.key.src.as_str()]];
        let dn = &batch.node_types[type_pos[et.key.dst.as_str()]];
        let mut per_node: HashMap<(u32, u8), usize> = HashMap::new();
        for k in 0..edges.src.len() {
            let (s, d, id, seed) = (edges.src[k] as usize, edges.dst[k] as usize, edges.edge_id[k] as usize, edges.seed[k]);
            if s >= sn.global.len() || d >= dn.global.len() || sn.seed[s] != seed || dn.seed[d] != seed {
                push(LeakKind::DanglingEdge, seed, format!("{} edge {k}", et.key));
                continue;
            }
            if id >= et.len() || et.src[id] != sn.global[s] || et.dst[id] != dn.global[d] {
                push(LeakKind::EndpointMismatch, seed, format!("{} edge {k}", et.key));
                continue;
            }
            if let (Some(ts), Some(c)) = (g.edge_timestamp(e, id), cutoff(seed)) {
                if ts > c {
                    push(LeakKind::FutureEdge, seed, format!("{} edge {id} at {ts} > {c}", et.key));
                }
            }
            *per_node.entry((s as u32, edges.hop[k])).or_default() += 1;
        }
        if let Some(plan) = plan {
            for (&(s, hop), &n) in &per_node {
                let cap = plan.fanout_per_hop.get(hop as usize).copied().unwrap_or(0);
                if n > cap {
                    push(LeakKind::FanoutExceeded, sn.seed[s as usize], format!("{} node {s} hop {hop}: {n} > {cap}", et.key));
                }
            }
        }
    }

    for (i, seed) in batch.seeds.iter().enumerate() {
        let Some(label) = &seed.label_ref else { continue };
        let local = batch.seed_locals[i];
        let entry = ExcludedFeature {
            node_type: seed.node_type.clone(),
            local,
            column: label.column.clone(),
        };
        let listed = batch.excluded_features.contains(&entry);
        let masked = batch
            .node_type(&seed.node_type)
            .map(|n| n.features.column(&label.column).map_or(true, |c| c.is_null(local as usize)))
            .unwrap_or(false);
        if !listed || !masked {
            push(LeakKind::UnmaskedTarget, i as u32, format!("{}.{}", seed.node_type, label.column));
        }
    }
    out
}
