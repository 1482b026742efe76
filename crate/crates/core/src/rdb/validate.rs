use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{ColumnData, DType, Database, KeyValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    DuplicatePk,
    NullPk,
    DanglingFk,
    /// FK target table or column is absent, or the column is not a PK.
    MissingFkTarget,
    /// Column arrays of one table have different lengths.
    Arity,
    /// Null value in a table's time column.
    NullTimestamp,
    /// Vector cell whose width differs from the declared dim.
    VectorDim,
    Schema,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub table: String,
    pub column: String,
    pub row: Option<usize>,
    pub kind: ViolationKind,
}

impl Violation {
    fn new(table: &str, column: &str, row: Option<usize>, kind: ViolationKind) -> Self {
        Violation {
            table: table.to_string(),
            column: column.to_string(),
            row,
            kind,
        }
    }
}

/// Checks every table invariant and returns the violations found, sorted.
/// An empty result means the database is consistent.
pub fn validate_database(db: &Database) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut pk_sets: HashMap<(&str, &str), HashSet<&KeyValue>> = HashMap::new();

    for table in db.tables.values() {
        let name = table.name();
        if let Err(e) = table.schema.check() {
            out.push(Violation::new(name, "", None, ViolationKind::Schema));
            log::debug!("{e}");
        }
        for (spec, data) in table.schema.columns.iter().zip(&table.columns) {
            if data.len() != table.row_count {
                out.push(Violation::new(name, &spec.name, None, ViolationKind::Arity));
            }
            if let ColumnData::Vector(v) = data {
                for (i, cell) in v.values.iter().enumerate() {
                    if cell.as_ref().is_some_and(|x| Some(x.len()) != spec.dim) {
                        out.push(Violation::new(name, &spec.name, Some(i), ViolationKind::VectorDim));
                    }
                }
            }
        }
        if let Some(idx) = table.schema.time_column() {
            let col = &table.schema.columns[idx].name;
            if let ColumnData::Datetime(v) = &table.columns[idx] {
                for (i, ts) in v.iter().enumerate() {
                    if ts.is_none() {
                        out.push(Violation::new(name, col, Some(i), ViolationKind::NullTimestamp));
                    }
                }
            }
        }
        if let Some(idx) = table.schema.primary_key() {
            let col = table.schema.columns[idx].name.as_str();
            let mut seen = HashSet::new();
            if let Some(keys) = table.columns[idx].as_keys() {
                for (i, k) in keys.iter().enumerate() {
                    match k {
                        None => out.push(Violation::new(name, col, Some(i), ViolationKind::NullPk)),
                        Some(k) => {
                            if !seen.insert(k) {
                                out.push(Violation::new(name, col, Some(i), ViolationKind::DuplicatePk));
                            }
                        }
                    }
                }
            }
            pk_sets.insert((name, col), seen);
        }
    }

    for table in db.tables.values() {
        for (idx, spec) in table.schema.foreign_keys() {
            let Some(target) = &spec.fk_target else { continue };
            let target_ok = db
                .tables
                .get(&target.table)
                .and_then(|t| t.schema.column(&target.column))
                .is_some_and(|c| c.dtype == DType::PrimaryKey);
            let Some(pks) = pk_sets.get(&(target.table.as_str(), target.column.as_str())).filter(|_| target_ok) else {
                out.push(Violation::new(table.name(), &spec.name, None, ViolationKind::MissingFkTarget));
                continue;
            };
            if let Some(keys) = table.columns[idx].as_keys() {
                for (i, k) in keys.iter().enumerate() {
                    if let Some(k) = k {
                        if !pks.contains(k) {
                            out.push(Violation::new(table.name(), &spec.name, Some(i), ViolationKind::DanglingFk));
                        }
                    }
                }
            }
        }
    }
    out.sort();
    out
}
