use std::collections::BTreeMap;

use super::{EdgeKey, HeteroGraph};
use crate::rdb::{ColumnData, DType, Table};

/// Order-independent form of a graph for isomorphism checks under the
/// canonical labeling (node type, source row index). Types are keyed by name,
/// edges are sorted, and cells are rendered as text with categoricals by
/// label, so dictionary order and type order do not matter. Provenance is
/// ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalGraph {
    pub node_types: BTreeMap<String, CanonicalNodes>,
    pub edge_types: BTreeMap<EdgeKey, CanonicalEdges>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalNodes {
    /// (name, dtype, is time column)
    pub columns: Vec<(String, DType, bool)>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalEdges {
    pub columns: Vec<(String, DType, bool)>,
    pub is_reverse: bool,
    /// (src, dst, feature cells), sorted.
    pub edges: Vec<(u32, u32, Vec<String>)>,
}

fn cell(data: &ColumnData, row: usize) -> String {
    if data.is_null(row) {
        "\u{0}null".to_string()
    } else {
        data.format_cell(row)
    }
}

fn columns(t: Option<&Table>) -> Vec<(String, DType, bool)> {
    t.map(|t| {
        t.schema
            .columns
            .iter()
            .map(|c| (c.name.clone(), c.dtype, c.is_time_column))
            .collect()
    })
    .unwrap_or_default()
}

fn row(t: Option<&Table>, r: usize) -> Vec<String> {
    t.map(|t| t.columns.iter().map(|c| cell(c, r)).collect()).unwrap_or_default()
}

pub fn canonical_form(g: &HeteroGraph) -> CanonicalGraph {
    let node_types = g
        .node_types
        .iter()
        .map(|n| {
            let rows = (0..n.count()).map(|r| row(Some(&n.features), r)).collect();
            (
                n.name.clone(),
                CanonicalNodes {
                    columns: columns(Some(&n.features)),
                    rows,
                },
            )
        })
        .collect();
    let edge_types = g
        .edge_types
        .iter()
        .map(|e| {
            let is_reverse = e.reverse_of.is_some();
            let f = if is_reverse { None } else { e.features.as_ref() };
            let mut edges: Vec<_> = (0..e.len()).map(|k| (e.src[k], e.dst[k], row(f, k))).collect();
            edges.sort();
            (
                e.key.clone(),
                CanonicalEdges {
                    columns: columns(f),
                    is_reverse,
                    edges,
                },
            )
        })
        .collect();
    CanonicalGraph { node_types, edge_types }
}
