//! Graph <-> table round trip.
//!
//! [`encode_graph_as_table`] flattens a graph into one unnormalized table with
//! a row per edge (plus a row per isolated node). [`normalize_2nf`] splits
//! that table back into one node table per node type, keyed by the global
//! node id `u`, and one PK-less edge table per relation with FKs `src` and
//! `dst`. Extracting with [`row2nve`](super::row2nve) recovers the original
//! graph, and [`star_expand`] turns every table-derived edge type into a node
//! type so the result matches [`row2node`](super::row2node).

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::extract::fk_relation;
use super::{EdgeKey, EdgeType, HeteroGraph, NodeType, Provenance, Role};
use crate::error::{Error, Result};
use crate::rdb::{CategoricalColumn, ColumnData, ColumnSpec, DType, Database, KeyValue, Table, TableSchema};

/// Metadata key holding the [`GraphSchema`] of an encoded graph.
pub const GRAPH_SCHEMA_KEY: &str = "graph.schema";

const ENCODED_TABLE: &str = "graph";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSchema {
    pub node_types: Vec<TypeSchema>,
    pub edge_types: Vec<EdgeSchema>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeSchema {
    pub name: String,
    pub columns: Vec<ColumnSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSchema {
    pub src: String,
    pub relation: String,
    pub dst: String,
    pub columns: Vec<ColumnSpec>,
}

fn x_col(side: &str, node_type: &str, column: &str) -> String {
    format!("x_{side}.{node_type}.{column}")
}

fn z_col(relation: &str, column: &str) -> String {
    format!("z.{relation}.{column}")
}

fn plain(spec: &ColumnSpec, name: String) -> ColumnSpec {
    ColumnSpec {
        name,
        is_time_column: false,
        ..spec.clone()
    }
}

/// Flattens a graph into a single table. Reverse edge types are skipped since
/// extraction rebuilds them. Fails on parallel edges within one relation and
/// on names that would collide after normalization.
pub fn encode_graph_as_table(g: &HeteroGraph) -> Result<Database> {
    let forward: Vec<usize> = (0..g.edge_types.len()).filter(|&i| g.edge_types[i].reverse_of.is_none()).collect();

    let mut names = HashSet::new();
    for n in &g.node_types {
        names.insert(n.name.as_str());
        if n.features.schema.column("u").is_some() {
            return Err(Error::Schema(format!("node type `{}` has a feature named `u`", n.name)));
        }
    }
    for &e in &forward {
        let et = &g.edge_types[e];
        if !names.insert(et.key.relation.as_str()) {
            return Err(Error::Schema(format!(
                "relation `{}` is not unique across node types and relations",
                et.key.relation
            )));
        }
        if let Some(f) = &et.features {
            if f.schema.column("src").is_some() || f.schema.column("dst").is_some() {
                return Err(Error::Schema(format!("relation `{}` has a feature named src or dst", et.key.relation)));
            }
        }
    }

    let mut offset = HashMap::new();
    let mut next = 0i64;
    for (t, n) in g.node_types.iter().enumerate() {
        offset.insert(n.name.as_str(), (t, next));
        next += n.count() as i64;
    }

    struct Row {
        u: (usize, usize),
        w: Option<(usize, usize)>,
        e: Option<(usize, usize)>,
    }
    let mut rows = Vec::new();
    let mut touched: Vec<Vec<bool>> = g.node_types.iter().map(|n| vec![false; n.count()]).collect();
    for &e in &forward {
        let et = &g.edge_types[e];
        let (st, _) = offset[et.key.src.as_str()];
        let (dt, _) = offset[et.key.dst.as_str()];
        let mut seen = HashSet::new();
        for i in 0..et.len() {
            let (s, d) = (et.src[i] as usize, et.dst[i] as usize);
            if !seen.insert((s, d)) {
                return Err(Error::Schema(format!("parallel edges {s}->{d} in {}", et.key)));
            }
            touched[st][s] = true;
            touched[dt][d] = true;
            rows.push(Row {
                u: (st, s),
                w: Some((dt, d)),
                e: Some((e, i)),
            });
        }
    }
    for (t, flags) in touched.iter().enumerate() {
        for (i, _) in flags.iter().enumerate().filter(|(_, &hit)| !hit) {
            rows.push(Row {
                u: (t, i),
                w: None,
                e: None,
            });
        }
    }

    let gid = |(t, i): (usize, usize)| offset[g.node_types[t].name.as_str()].1 + i as i64;
    let tname = |(t, _): (usize, usize)| g.node_types[t].name.as_str();
    let mut specs = vec![
        ColumnSpec::new("u", DType::Int),
        ColumnSpec::new("w", DType::Int),
        ColumnSpec::new("v_u", DType::Categorical),
        ColumnSpec::new("v_w", DType::Categorical),
        ColumnSpec::new("e", DType::Categorical),
    ];
    let mut cols = vec![
        ColumnData::Int(rows.iter().map(|r| Some(gid(r.u))).collect()),
        ColumnData::Int(rows.iter().map(|r| r.w.map(gid)).collect()),
        ColumnData::Categorical(CategoricalColumn::from_strings(
            &rows.iter().map(|r| Some(tname(r.u))).collect::<Vec<_>>(),
        )),
        ColumnData::Categorical(CategoricalColumn::from_strings(
            &rows.iter().map(|r| r.w.map(tname)).collect::<Vec<_>>(),
        )),
        ColumnData::Categorical(CategoricalColumn::from_strings(
            &rows
                .iter()
                .map(|r| r.e.map(|(e, _)| g.edge_types[e].key.relation.as_str()))
                .collect::<Vec<_>>(),
        )),
    ];
    for (t, n) in g.node_types.iter().enumerate() {
        for (side, pick) in [("u", 0), ("w", 1)] {
            let sel: Vec<Option<usize>> = rows
                .iter()
                .map(|r| {
                    let node = if pick == 0 { Some(r.u) } else { r.w };
                    node.filter(|(nt, _)| *nt == t).map(|(_, i)| i)
                })
                .collect();
            for (spec, data) in n.features.schema.columns.iter().zip(&n.features.columns) {
                specs.push(plain(spec, x_col(side, &n.name, &spec.name)));
                cols.push(data.take_opt(&sel));
            }
        }
    }
    for &e in &forward {
        let et = &g.edge_types[e];
        let Some(f) = &et.features else { continue };
        let sel: Vec<Option<usize>> = rows
            .iter()
            .map(|r| r.e.filter(|(re, _)| *re == e).map(|(_, i)| i))
            .collect();
        for (spec, data) in f.schema.columns.iter().zip(&f.columns) {
            specs.push(plain(spec, z_col(&et.key.relation, &spec.name)));
            cols.push(data.take_opt(&sel));
        }
    }

    let schema = GraphSchema {
        node_types: g
            .node_types
            .iter()
            .map(|n| TypeSchema {
                name: n.name.clone(),
                columns: n.features.schema.columns.clone(),
            })
            .collect(),
        edge_types: forward
            .iter()
            .map(|&e| {
                let et = &g.edge_types[e];
                EdgeSchema {
                    src: et.key.src.clone(),
                    relation: et.key.relation.clone(),
                    dst: et.key.dst.clone(),
                    columns: et.features.as_ref().map(|f| f.schema.columns.clone()).unwrap_or_default(),
                }
            })
            .collect(),
    };
    let mut db = Database::new(ENCODED_TABLE);
    db.add_table(Table::new(TableSchema::new(ENCODED_TABLE, specs), cols)?)?;
    db.metadata.insert(
        GRAPH_SCHEMA_KEY.to_string(),
        serde_json::to_value(&schema).expect("schema serializes"),
    );
    Ok(db)
}

fn shape_error(msg: impl std::fmt::Display) -> Error {
    Error::Schema(format!("not a single-table graph encoding: {msg}"))
}

fn int_col<'a>(t: &'a Table, name: &str) -> Result<&'a [Option<i64>]> {
    match t.column(name).map_err(shape_error)? {
        ColumnData::Int(v) => Ok(v),
        _ => Err(shape_error(format!("column `{name}` is not int"))),
    }
}

fn labels<'a>(t: &'a Table, name: &str) -> Result<Vec<Option<&'a str>>> {
    match t.column(name).map_err(shape_error)? {
        ColumnData::Categorical(c) => Ok(c.codes.iter().map(|x| x.map(|x| c.label(x))).collect()),
        _ => Err(shape_error(format!("column `{name}` is not categorical"))),
    }
}

/// Splits an encoded graph table into node and edge tables.
pub fn normalize_2nf(db: &Database) -> Result<Database> {
    if db.tables.len() != 1 {
        return Err(shape_error(format!("expected one table, found {}", db.tables.len())));
    }
    let t = db.tables.values().next().expect("one table");
    let schema: GraphSchema = db
        .metadata
        .get(GRAPH_SCHEMA_KEY)
        .cloned()
        .ok_or_else(|| shape_error(format!("metadata `{GRAPH_SCHEMA_KEY}` missing")))
        .and_then(|v| serde_json::from_value(v).map_err(shape_error))?;
    let u = int_col(t, "u")?;
    let w = int_col(t, "w")?;
    let v_u = labels(t, "v_u")?;
    let v_w = labels(t, "v_w")?;
    let e = labels(t, "e")?;

    let mut out = Database::new(&db.name);
    for nt in &schema.node_types {
        // (global id, source side, row); side 0 reads x_u, side 1 reads x_w
        let mut nodes: Vec<(i64, usize, usize)> = Vec::new();
        for r in 0..t.row_count {
            if v_u[r] == Some(nt.name.as_str()) {
                let id = u[r].ok_or_else(|| shape_error(format!("row {r}: null u")))?;
                nodes.push((id, 0, r));
            }
            if v_w[r] == Some(nt.name.as_str()) {
                let id = w[r].ok_or_else(|| shape_error(format!("row {r}: null w")))?;
                nodes.push((id, 1, r));
            }
        }
        nodes.sort_unstable();
        nodes.dedup_by_key(|n| n.0);
        let mut specs = vec![ColumnSpec::new("u", DType::PrimaryKey)];
        let mut cols = vec![ColumnData::Key(nodes.iter().map(|n| Some(KeyValue::Int(n.0))).collect())];
        let picks: Vec<Option<(usize, usize)>> = nodes.iter().map(|&(_, side, r)| Some((side, r))).collect();
        for spec in &nt.columns {
            let a = t.column(&x_col("u", &nt.name, &spec.name)).map_err(shape_error)?;
            let b = t.column(&x_col("w", &nt.name, &spec.name)).map_err(shape_error)?;
            specs.push(spec.clone());
            cols.push(ColumnData::gather(&[a, b], &picks));
        }
        out.add_table(Table::new(TableSchema::new(&nt.name, specs), cols)?)?;
    }
    for es in &schema.edge_types {
        let rows: Vec<usize> = (0..t.row_count).filter(|&r| e[r] == Some(es.relation.as_str())).collect();
        let ids = |col: &[Option<i64>]| -> Result<ColumnData> {
            rows.iter()
                .map(|&r| col[r].map(|x| Some(KeyValue::Int(x))).ok_or_else(|| shape_error(format!("row {r}: null endpoint"))))
                .collect::<Result<Vec<_>>>()
                .map(ColumnData::Key)
        };
        let mut specs = vec![
            ColumnSpec::foreign_key("src", &es.src, "u"),
            ColumnSpec::foreign_key("dst", &es.dst, "u"),
        ];
        let mut cols = vec![ids(u)?, ids(w)?];
        for spec in &es.columns {
            specs.push(spec.clone());
            cols.push(t.column(&z_col(&es.relation, &spec.name)).map_err(shape_error)?.take(&rows));
        }
        out.add_table(Table::new(TableSchema::new(&es.relation, specs), cols)?)?;
    }
    Ok(out)
}

/// Replaces every table-derived edge type by a node type with one node per
/// edge and two FK-style edge types to its endpoints.
pub fn star_expand(g: &HeteroGraph) -> Result<HeteroGraph> {
    let is_star = |e: &EdgeType| e.provenance.role == Role::RowsAsEdges && e.reverse_of.is_none();
    let star: BTreeSet<usize> = (0..g.edge_types.len()).filter(|&i| is_star(&g.edge_types[i])).collect();
    let reversed: HashSet<usize> = g.edge_types.iter().filter_map(|e| e.reverse_of).collect();

    let mut out = HeteroGraph {
        node_types: g.node_types.clone(),
        edge_types: Vec::new(),
        dropped_rows: g.dropped_rows.clone(),
    };
    // (new edge type, whether to add its reverse)
    let mut pending: Vec<(EdgeType, bool)> = Vec::new();
    for (i, et) in g.edge_types.iter().enumerate() {
        if et.reverse_of.is_some() {
            continue;
        }
        if !star.contains(&i) {
            pending.push((et.clone(), reversed.contains(&i)));
            continue;
        }
        let table = et.provenance.table.clone();
        let [src_col, dst_col] = et.provenance.columns.as_slice() else {
            return Err(Error::Schema(format!("edge type {} lacks its two FK columns", et.key)));
        };
        let features = et
            .features
            .clone()
            .unwrap_or_else(|| Table::with_row_count(TableSchema::new(&table, vec![]), vec![], et.len()).expect("empty schema"));
        out.add_node_type(NodeType {
            name: table.clone(),
            features,
            provenance: Provenance {
                table: table.clone(),
                columns: Vec::new(),
                role: Role::Rows,
            },
        })?;
        out.dropped_rows.remove(&table);
        let ids: Vec<u32> = (0..et.len() as u32).collect();
        for (col, target, dst) in [(src_col, &et.key.src, &et.src), (dst_col, &et.key.dst, &et.dst)] {
            pending.push((
                EdgeType {
                    key: EdgeKey::new(&table, fk_relation(&table, col), target),
                    src: ids.clone(),
                    dst: dst.clone(),
                    features: None,
                    reverse_of: None,
                    provenance: Provenance {
                        table: table.clone(),
                        columns: vec![col.clone()],
                        role: Role::ForeignKey,
                    },
                },
                reversed.contains(&i),
            ));
        }
    }
    let mut to_reverse = Vec::new();
    for (et, rev) in pending {
        let idx = out.add_edge_type(et)?;
        if rev {
            to_reverse.push(idx);
        }
    }
    for idx in to_reverse {
        out.add_reverse(idx)?;
    }
    Ok(out)
}
