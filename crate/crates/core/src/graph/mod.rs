//! Heterogeneous graphs built from a database.
//!
//! Node `i` of a node type is row `i` of the table it came from, so node ids
//! are stable and recoverable. Node features live in a [`Table`] whose time
//! column (if any) doubles as the node timestamp; table-derived edges work the
//! same way. Reverse edge types carry no features of their own: edge `i` of a
//! reverse type mirrors edge `i` of its forward type.

mod canonical;
mod extract;
mod io;
mod prop;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rdb::{Table, Timestamp};

pub use canonical::{canonical_form, CanonicalEdges, CanonicalGraph, CanonicalNodes};
pub use extract::{extract_graph, fk_relation, row2node, row2nve, ExtractorConfig, ExtractorKind, HyperedgePolicy};
pub use io::{export_graph, load_graph, GRAPH_MANIFEST};
pub use prop::{encode_graph_as_table, normalize_2nf, star_expand, GraphSchema, GRAPH_SCHEMA_KEY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Each row of `table` is a node.
    Rows,
    /// Each non-null FK cell in `columns` is an edge.
    ForeignKey,
    /// Each row of `table` is an edge between the targets of `columns`.
    RowsAsEdges,
    /// Built in code rather than extracted.
    Synthetic,
}

/// Where a node or edge type came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub table: String,
    pub columns: Vec<String>,
    pub role: Role,
}

impl Provenance {
    pub fn synthetic(name: &str) -> Self {
        Provenance {
            table: name.to_string(),
            columns: Vec::new(),
            role: Role::Synthetic,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeType {
    pub name: String,
    /// One row per node.
    pub features: Table,
    pub provenance: Provenance,
}

impl NodeType {
    pub fn count(&self) -> usize {
        self.features.row_count
    }

    pub fn timestamp(&self, node: usize) -> Option<Timestamp> {
        self.features.timestamps().and_then(|t| t[node])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeKey {
    pub src: String,
    pub relation: String,
    pub dst: String,
}

impl EdgeKey {
    pub fn new(src: impl Into<String>, relation: impl Into<String>, dst: impl Into<String>) -> Self {
        EdgeKey {
            src: src.into(),
            relation: relation.into(),
            dst: dst.into(),
        }
    }
}

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -[{}]-> {}", self.src, self.relation, self.dst)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeType {
    pub key: EdgeKey,
    pub src: Vec<u32>,
    pub dst: Vec<u32>,
    /// One row per edge. Always `None` on reverse types.
    pub features: Option<Table>,
    /// Index of the forward type this one mirrors.
    pub reverse_of: Option<usize>,
    pub provenance: Provenance,
}

impl EdgeType {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HeteroGraph {
    pub node_types: Vec<NodeType>,
    pub edge_types: Vec<EdgeType>,
    /// Rows of edge tables skipped because an endpoint FK was null.
    pub dropped_rows: BTreeMap<String, usize>,
}

impl HeteroGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_type_index(&self, name: &str) -> Option<usize> {
        self.node_types.iter().position(|n| n.name == name)
    }

    pub fn node_type(&self, name: &str) -> Result<&NodeType> {
        self.node_types
            .iter()
            .find(|n| n.name == name)
            .ok_or_else(|| Error::UnknownNode {
                kind: "node type",
                name: name.to_string(),
            })
    }

    pub fn edge_type_index(&self, key: &EdgeKey) -> Option<usize> {
        self.edge_types.iter().position(|e| &e.key == key)
    }

    pub fn num_nodes(&self) -> usize {
        self.node_types.iter().map(NodeType::count).sum()
    }

    pub fn num_edges(&self) -> usize {
        self.edge_types.iter().map(EdgeType::len).sum()
    }

    pub fn add_node_type(&mut self, node_type: NodeType) -> Result<usize> {
        if self.node_type_index(&node_type.name).is_some() {
            return Err(Error::Schema(format!("duplicate node type `{}`", node_type.name)));
        }
        self.node_types.push(node_type);
        Ok(self.node_types.len() - 1)
    }

    /// Adds an edge type after checking endpoints, lengths and features.
    pub fn add_edge_type(&mut self, edge_type: EdgeType) -> Result<usize> {
        let key = &edge_type.key;
        if self.edge_type_index(key).is_some() {
            return Err(Error::Schema(format!("duplicate edge type {key}")));
        }
        let src_n = self.node_type(&key.src)?.count();
        let dst_n = self.node_type(&key.dst)?.count();
        if edge_type.src.len() != edge_type.dst.len() {
            return Err(Error::Schema(format!("edge type {key}: src and dst lengths differ")));
        }
        if let Some(i) = edge_type.src.iter().find(|&&i| i as usize >= src_n) {
            return Err(Error::Schema(format!("edge type {key}: source node {i} out of range")));
        }
        if let Some(i) = edge_type.dst.iter().find(|&&i| i as usize >= dst_n) {
            return Err(Error::Schema(format!("edge type {key}: target node {i} out of range")));
        }
        if let Some(f) = &edge_type.features {
            if edge_type.reverse_of.is_some() {
                return Err(Error::Schema(format!("reverse edge type {key} must not carry features")));
            }
            if f.row_count != edge_type.len() {
                return Err(Error::Schema(format!("edge type {key}: feature rows differ from edge count")));
            }
        }
        if let Some(fwd) = edge_type.reverse_of {
            let f = self
                .edge_types
                .get(fwd)
                .ok_or_else(|| Error::Schema(format!("edge type {key}: bad reverse_of index {fwd}")))?;
            if f.src != edge_type.dst || f.dst != edge_type.src {
                return Err(Error::Schema(format!("edge type {key} does not mirror {}", f.key)));
            }
        }
        self.edge_types.push(edge_type);
        Ok(self.edge_types.len() - 1)
    }

    /// Adds the reverse of forward edge type `idx`, named `{relation}_rev`.
    pub fn add_reverse(&mut self, idx: usize) -> Result<usize> {
        let fwd = &self.edge_types[idx];
        let rev = EdgeType {
            key: EdgeKey::new(&fwd.key.dst, format!("{}_rev", fwd.key.relation), &fwd.key.src),
            src: fwd.dst.clone(),
            dst: fwd.src.clone(),
            features: None,
            reverse_of: Some(idx),
            provenance: fwd.provenance.clone(),
        };
        self.add_edge_type(rev)
    }

    /// The forward type holding features and timestamps for edge type `idx`.
    pub fn feature_owner(&self, idx: usize) -> usize {
        self.edge_types[idx].reverse_of.unwrap_or(idx)
    }

    pub fn edge_features(&self, idx: usize) -> Option<&Table> {
        self.edge_types[self.feature_owner(idx)].features.as_ref()
    }

    pub fn edge_timestamp(&self, idx: usize, edge: usize) -> Option<Timestamp> {
        self.edge_features(idx).and_then(Table::timestamps).and_then(|t| t[edge])
    }

    pub fn summary(&self) -> GraphSummary {
        GraphSummary {
            node_types: self.node_types.iter().map(|n| (n.name.clone(), n.count())).collect(),
            edge_types: self.edge_types.iter().map(|e| (e.key.to_string(), e.len())).collect(),
            dropped_rows: self.dropped_rows.clone(),
        }
    }
}

/// Per-type counts, as reported by the command line tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub node_types: BTreeMap<String, usize>,
    pub edge_types: BTreeMap<String, usize>,
    pub dropped_rows: BTreeMap<String, usize>,
}
