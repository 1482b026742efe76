//! On-disk graph layout: `manifest.json` plus one RDBC file per node type
//! (`nodes/{i}.rdbc`), per edge index (`edges/{i}.rdbc`, columns `src` and
//! `dst`) and per edge feature table (`edges/{i}.features.rdbc`).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EdgeKey, EdgeType, HeteroGraph, NodeType, Provenance};
use crate::error::{Error, Result};
use crate::rdb::rdbc::{decode_table, encode_table};
use crate::rdb::{ColumnData, ColumnSpec, DType, Table, TableSchema};

pub const GRAPH_MANIFEST: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    node_types: Vec<NodeEntry>,
    edge_types: Vec<EdgeEntry>,
    #[serde(default)]
    dropped_rows: BTreeMap<String, usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeEntry {
    name: String,
    count: usize,
    file: String,
    provenance: Provenance,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeEntry {
    key: EdgeKey,
    count: usize,
    file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reverse_of: Option<usize>,
    provenance: Provenance,
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_table(dir: &Path, file: &str, rows: usize) -> Result<Table> {
    let path = dir.join(file);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let t = decode_table(&bytes)?;
    Table::with_row_count(t.schema, t.columns, rows)
}

pub fn export_graph(g: &HeteroGraph, dir: &Path) -> Result<()> {
    for sub in ["nodes", "edges"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut manifest = Manifest {
        format_version: FORMAT_VERSION,
        node_types: Vec::new(),
        edge_types: Vec::new(),
        dropped_rows: g.dropped_rows.clone(),
    };
    for (i, n) in g.node_types.iter().enumerate() {
        let file = format!("nodes/{i}.rdbc");
        write(&dir.join(&file), &encode_table(&n.features))?;
        manifest.node_types.push(NodeEntry {
            name: n.name.clone(),
            count: n.count(),
            file,
            provenance: n.provenance.clone(),
        });
    }
    for (i, e) in g.edge_types.iter().enumerate() {
        let file = format!("edges/{i}.rdbc");
        let index = Table::new(
            TableSchema::new(e.key.relation.clone(), vec![ColumnSpec::new("src", DType::Int), ColumnSpec::new("dst", DType::Int)]),
            vec![
                ColumnData::Int(e.src.iter().map(|&x| Some(x as i64)).collect()),
                ColumnData::Int(e.dst.iter().map(|&x| Some(x as i64)).collect()),
            ],
        )?;
        write(&dir.join(&file), &encode_table(&index))?;
        let features_file = match &e.features {
            Some(f) => {
                let file = format!("edges/{i}.features.rdbc");
                write(&dir.join(&file), &encode_table(f))?;
                Some(file)
            }
            None => None,
        };
        manifest.edge_types.push(EdgeEntry {
            key: e.key.clone(),
            count: e.len(),
            file,
            features_file,
            reverse_of: e.reverse_of,
            provenance: e.provenance.clone(),
        });
    }
    let path = dir.join(GRAPH_MANIFEST);
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write(&path, &json)
}

fn node_ids(t: &Table, col: &str) -> Result<Vec<u32>> {
    match t.column(col)? {
        ColumnData::Int(v) => v
            .iter()
            .map(|x| {
                x.and_then(|x| u32::try_from(x).ok())
                    .ok_or_else(|| Error::Format(format!("bad node id in `{col}`")))
            })
            .collect(),
        _ => Err(Error::Format(format!("edge column `{col}` is not int"))),
    }
}

pub fn load_graph(dir: &Path) -> Result<HeteroGraph> {
    let path = dir.join(GRAPH_MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported graph format version {}", manifest.format_version)));
    }
    let mut g = HeteroGraph::new();
    g.dropped_rows = manifest.dropped_rows;
    for n in manifest.node_types {
        g.add_node_type(NodeType {
            features: read_table(dir, &n.file, n.count)?,
            name: n.name,
            provenance: n.provenance,
        })?;
    }
    for e in manifest.edge_types {
        let index = read_table(dir, &e.file, e.count)?;
        let features = e.features_file.map(|f| read_table(dir, &f, e.count)).transpose()?;
        g.add_edge_type(EdgeType {
            key: e.key,
            src: node_ids(&index, "src")?,
            dst: node_ids(&index, "dst")?,
            features,
            reverse_of: e.reverse_of,
            provenance: e.provenance,
        })?;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Role;

    #[test]
    fn round_trip_keeps_featureless_node_counts() {
        let mut g = HeteroGraph::new();
        let empty = Table::with_row_count(TableSchema::new("A", vec![]), vec![], 4).unwrap();
        g.add_node_type(NodeType {
            name: "A".into(),
            features: empty,
            provenance: Provenance::synthetic("A"),
        })
        .unwrap();
        let idx = g
            .add_edge_type(EdgeType {
                key: EdgeKey::new("A", "r", "A"),
                src: vec![0, 3],
                dst: vec![1, 2],
                features: None,
                reverse_of: None,
                provenance: Provenance {
                    table: "A".into(),
                    columns: vec!["fk".into()],
                    role: Role::ForeignKey,
                },
            })
            .unwrap();
        g.add_reverse(idx).unwrap();
        let dir = tempfile::tempdir().unwrap();
        export_graph(&g, dir.path()).unwrap();
        let back = load_graph(dir.path()).unwrap();
        assert_eq!(back, g);
    }
}
