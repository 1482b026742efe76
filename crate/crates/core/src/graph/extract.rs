use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{EdgeKey, EdgeType, HeteroGraph, NodeType, Provenance, Role};
use crate::error::{Error, Result};
use crate::rdb::{validate_database, Database, KeyValue, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorKind {
    /// Every row is a node, every FK cell an edge.
    Row2node,
    /// As `Row2node`, except tables with exactly two FKs and no PK become edges.
    Row2nve,
}

/// What to do with PK-less tables that have three or more FKs under `Row2nve`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HyperedgePolicy {
    /// Keep them as node types, like `Row2node` does.
    #[default]
    FallbackNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractorConfig {
    pub kind: ExtractorKind,
    #[serde(default = "default_true")]
    pub reverse_edges: bool,
    #[serde(default)]
    pub hyperedge_policy: HyperedgePolicy,
}

fn default_true() -> bool {
    true
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig {
            kind: ExtractorKind::Row2node,
            reverse_edges: true,
            hyperedge_policy: HyperedgePolicy::FallbackNode,
        }
    }
}

/// Relation name of the edges induced by FK column `column` of `table`.
pub fn fk_relation(table: &str, column: &str) -> String {
    format!("{table}.{column}")
}

pub fn row2node(db: &Database, reverse_edges: bool) -> Result<HeteroGraph> {
    extract_graph(
        db,
        &ExtractorConfig {
            kind: ExtractorKind::Row2node,
            reverse_edges,
            ..Default::default()
        },
    )
}

pub fn row2nve(db: &Database, reverse_edges: bool) -> Result<HeteroGraph> {
    extract_graph(
        db,
        &ExtractorConfig {
            kind: ExtractorKind::Row2nve,
            reverse_edges,
            ..Default::default()
        },
    )
}

fn is_edge_table(table: &Table) -> bool {
    table.schema.primary_key().is_none() && table.schema.foreign_keys().count() == 2
}

/// Non-key columns, which become node or edge features.
fn feature_table(table: &Table, rows: Option<&[usize]>) -> Table {
    let keep: Vec<usize> = (0..table.schema.columns.len())
        .filter(|&i| !table.schema.columns[i].dtype.is_key())
        .collect();
    let mut out = table.project(table.name(), &keep);
    if let Some(rows) = rows {
        out = out.take(rows);
    }
    out
}

pub fn extract_graph(db: &Database, config: &ExtractorConfig) -> Result<HeteroGraph> {
    if let Some(v) = validate_database(db).first() {
        return Err(Error::Data(format!(
            "cannot extract a graph from an invalid database: {:?} at {}.{} row {:?}",
            v.kind, v.table, v.column, v.row
        )));
    }
    let as_edges = |t: &Table| config.kind == ExtractorKind::Row2nve && is_edge_table(t);

    let mut g = HeteroGraph::new();
    let mut pk_index: HashMap<&str, HashMap<&KeyValue, u32>> = HashMap::new();
    for t in db.tables.values() {
        if as_edges(t) {
            continue;
        }
        g.add_node_type(NodeType {
            name: t.name().to_string(),
            features: feature_table(t, None),
            provenance: Provenance {
                table: t.name().to_string(),
                columns: Vec::new(),
                role: Role::Rows,
            },
        })?;
        if let Some(keys) = t.primary_key_values() {
            let map = keys
                .iter()
                .enumerate()
                .filter_map(|(i, k)| k.as_ref().map(|k| (k, i as u32)))
                .collect();
            pk_index.insert(t.name(), map);
        }
    }

    let resolve = |target: &str, key: &KeyValue| -> Result<u32> {
        pk_index
            .get(target)
            .and_then(|m| m.get(key))
            .copied()
            .ok_or_else(|| Error::Data(format!("key {key} not found in `{target}`")))
    };

    let mut forward = Vec::new();
    for t in db.tables.values() {
        let fks: Vec<(usize, String, String)> = t
            .schema
            .foreign_keys()
            .map(|(i, s)| (i, s.name.clone(), s.fk_target.as_ref().expect("validated").table.clone()))
            .collect();
        if as_edges(t) {
            let (a, b) = (&fks[0], &fks[1]);
            let ka = t.columns[a.0].as_keys().expect("key column");
            let kb = t.columns[b.0].as_keys().expect("key column");
            let mut rows = Vec::new();
            let (mut src, mut dst) = (Vec::new(), Vec::new());
            for r in 0..t.row_count {
                if let (Some(x), Some(y)) = (&ka[r], &kb[r]) {
                    rows.push(r);
                    src.push(resolve(&a.2, x)?);
                    dst.push(resolve(&b.2, y)?);
                }
            }
            let dropped = t.row_count - rows.len();
            if dropped > 0 {
                log::info!("{}: dropped {dropped} rows with a null endpoint", t.name());
                g.dropped_rows.insert(t.name().to_string(), dropped);
            }
            let idx = g.add_edge_type(EdgeType {
                key: EdgeKey::new(&a.2, t.name(), &b.2),
                src,
                dst,
                features: Some(feature_table(t, Some(&rows))),
                reverse_of: None,
                provenance: Provenance {
                    table: t.name().to_string(),
                    columns: vec![a.1.clone(), b.1.clone()],
                    role: Role::RowsAsEdges,
                },
            })?;
            forward.push(idx);
            continue;
        }
        for (col, name, target) in &fks {
            let keys = t.columns[*col].as_keys().expect("key column");
            let (mut src, mut dst) = (Vec::new(), Vec::new());
            for (r, k) in keys.iter().enumerate() {
                if let Some(k) = k {
                    src.push(r as u32);
                    dst.push(resolve(target, k)?);
                }
            }
            let idx = g.add_edge_type(EdgeType {
                key: EdgeKey::new(t.name(), fk_relation(t.name(), name), target),
                src,
                dst,
                features: None,
                reverse_of: None,
                provenance: Provenance {
                    table: t.name().to_string(),
                    columns: vec![name.clone()],
                    role: Role::ForeignKey,
                },
            })?;
            forward.push(idx);
        }
    }
    if config.reverse_edges {
        for idx in forward {
            g.add_reverse(idx)?;
        }
    }
    Ok(g)
}
