//! Columnar in-memory relational database.
//!
//! A [`Database`] is a set of named [`Table`]s. Every table stores one
//! [`ColumnData`] array per declared [`ColumnSpec`]; nulls are first class in
//! every dtype. Primary and foreign key columns share the [`KeyValue`]
//! representation so joins compare keys directly.
//!
//! Time is represented by at most one datetime column per table (milliseconds
//! since the epoch). There are no versioned snapshots: every downstream
//! operator takes an explicit cutoff instead.

mod column;
mod load;
pub mod rdbc;
mod stats;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use column::{CategoricalColumn, ColumnData, KeyValue, Value, VectorColumn};
pub use load::{load_database, parse_metadata, serialize_database, DatabaseMeta, StorageFormat, TableMeta};
pub use stats::{column_statistics, CategoricalStats, ColumnStats, DatetimeStats, NumericStats};
pub use validate::{validate_database, Violation, ViolationKind};

/// Milliseconds since the Unix epoch.
pub type Timestamp = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DType {
    Float,
    Int,
    Categorical,
    Datetime,
    Text,
    Vector,
    PrimaryKey,
    ForeignKey,
}

impl DType {
    pub fn is_key(self) -> bool {
        matches!(self, DType::PrimaryKey | DType::ForeignKey)
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, DType::Float | DType::Int)
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DType::Float => "float",
            DType::Int => "int",
            DType::Categorical => "categorical",
            DType::Datetime => "datetime",
            DType::Text => "text",
            DType::Vector => "vector",
            DType::PrimaryKey => "primary_key",
            DType::ForeignKey => "foreign_key",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        ColumnRef {
            table: table.into(),
            column: column.into(),
        }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub dtype: DType,
    /// Present iff `dtype` is `ForeignKey`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fk_target: Option<ColumnRef>,
    /// Vector width; present iff `dtype` is `Vector`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub is_time_column: bool,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, dtype: DType) -> Self {
        ColumnSpec {
            name: name.into(),
            dtype,
            fk_target: None,
            dim: None,
            is_time_column: false,
        }
    }

    pub fn foreign_key(name: impl Into<String>, table: impl Into<String>, column: impl Into<String>) -> Self {
        ColumnSpec {
            fk_target: Some(ColumnRef::new(table, column)),
            ..ColumnSpec::new(name, DType::ForeignKey)
        }
    }

    pub fn vector(name: impl Into<String>, dim: usize) -> Self {
        ColumnSpec {
            dim: Some(dim),
            ..ColumnSpec::new(name, DType::Vector)
        }
    }

    pub fn time(name: impl Into<String>) -> Self {
        ColumnSpec {
            is_time_column: true,
            ..ColumnSpec::new(name, DType::Datetime)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    pub name: String,
    pub columns: Vec<ColumnSpec>,
}

impl TableSchema {
    pub fn new(name: impl Into<String>, columns: Vec<ColumnSpec>) -> Self {
        TableSchema {
            name: name.into(),
            columns,
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn primary_key(&self) -> Option<usize> {
        self.columns.iter().position(|c| c.dtype == DType::PrimaryKey)
    }

    pub fn foreign_keys(&self) -> impl Iterator<Item = (usize, &ColumnSpec)> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.dtype == DType::ForeignKey)
    }

    pub fn time_column(&self) -> Option<usize> {
        self.columns.iter().position(|c| c.is_time_column)
    }

    /// Structural checks that do not need the data: unique names, one PK,
    /// one time column, dtype-specific fields.
    pub fn check(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}` in table `{}`", c.name, self.name)));
            }
            match c.dtype {
                DType::ForeignKey if c.fk_target.is_none() => {
                    return Err(Error::Schema(format!("{}.{}: foreign key without fk_target", self.name, c.name)))
                }
                DType::Vector if c.dim.unwrap_or(0) == 0 => {
                    return Err(Error::Schema(format!("{}.{}: vector column needs a positive dim", self.name, c.name)))
                }
                _ => {}
            }
            if c.dtype != DType::ForeignKey && c.fk_target.is_some() {
                return Err(Error::Schema(format!("{}.{}: fk_target on a non-FK column", self.name, c.name)));
            }
            if c.is_time_column && c.dtype != DType::Datetime {
                return Err(Error::Schema(format!("{}.{}: time column must be datetime", self.name, c.name)));
            }
        }
        if self.columns.iter().filter(|c| c.dtype == DType::PrimaryKey).count() > 1 {
            return Err(Error::Schema(format!("table `{}` has more than one primary key", self.name)));
        }
        if self.columns.iter().filter(|c| c.is_time_column).count() > 1 {
            return Err(Error::Schema(format!("table `{}` has more than one time column", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub schema: TableSchema,
    pub columns: Vec<ColumnData>,
    pub row_count: usize,
}

impl Table {
    /// Builds a table, checking that column arrays agree with the schema.
    pub fn new(schema: TableSchema, columns: Vec<ColumnData>) -> Result<Self> {
        schema.check()?;
        if schema.columns.len() != columns.len() {
            return Err(Error::Schema(format!(
                "table `{}`: {} column specs but {} arrays",
                schema.name,
                schema.columns.len(),
                columns.len()
            )));
        }
        for (spec, data) in schema.columns.iter().zip(&columns) {
            if !data.matches(spec) {
                return Err(Error::Schema(format!(
                    "{}.{}: storage does not match dtype {}",
                    schema.name, spec.name, spec.dtype
                )));
            }
        }
        let row_count = columns.first().map_or(0, ColumnData::len);
        if let Some((spec, _)) = schema.columns.iter().zip(&columns).find(|(_, c)| c.len() != row_count) {
            return Err(Error::Schema(format!(
                "{}.{}: column length differs from {row_count}",
                schema.name, spec.name
            )));
        }
        Ok(Table {
            schema,
            columns,
            row_count,
        })
    }

    /// Like [`Table::new`], but with an explicit row count so tables without
    /// columns can still carry rows.
    pub fn with_row_count(schema: TableSchema, columns: Vec<ColumnData>, row_count: usize) -> Result<Self> {
        if columns.is_empty() {
            schema.check()?;
            if !schema.columns.is_empty() {
                return Err(Error::Schema(format!("table `{}`: missing column arrays", schema.name)));
            }
            return Ok(Table {
                schema,
                columns,
                row_count,
            });
        }
        let table = Table::new(schema, columns)?;
        if table.row_count != row_count {
            return Err(Error::Schema(format!(
                "table `{}`: expected {row_count} rows, found {}",
                table.schema.name, table.row_count
            )));
        }
        Ok(table)
    }

    pub fn empty(schema: TableSchema) -> Result<Self> {
        let columns = schema.columns.iter().map(ColumnData::empty_for).collect();
        Table::new(schema, columns)
    }

    pub fn name(&self) -> &str {
        &self.schema.name
    }

    pub fn column(&self, name: &str) -> Result<&ColumnData> {
        self.schema
            .column_index(name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| Error::unknown_column(&self.schema.name, name))
    }

    pub fn column_mut(&mut self, name: &str) -> Result<&mut ColumnData> {
        match self.schema.column_index(name) {
            Some(i) => Ok(&mut self.columns[i]),
            None => Err(Error::unknown_column(&self.schema.name, name)),
        }
    }

    /// Row timestamps, if the table declares a time column.
    pub fn timestamps(&self) -> Option<&[Option<Timestamp>]> {
        let idx = self.schema.time_column()?;
        match &self.columns[idx] {
            ColumnData::Datetime(v) => Some(v),
            _ => None,
        }
    }

    pub fn primary_key_values(&self) -> Option<&[Option<KeyValue>]> {
        let idx = self.schema.primary_key()?;
        self.columns[idx].as_keys()
    }

    /// Appends a column at the end of the table.
    pub fn push_column(&mut self, spec: ColumnSpec, data: ColumnData) -> Result<()> {
        if self.schema.column_index(&spec.name).is_some() {
            return Err(Error::Schema(format!("{}.{} already exists", self.schema.name, spec.name)));
        }
        if data.len() != self.row_count || !data.matches(&spec) {
            return Err(Error::Schema(format!("{}.{}: bad appended column", self.schema.name, spec.name)));
        }
        self.schema.columns.push(spec);
        self.columns.push(data);
        Ok(())
    }

    /// Selects a subset of rows in the given order.
    pub fn take(&self, rows: &[usize]) -> Table {
        Table {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.take(rows)).collect(),
            row_count: rows.len(),
        }
    }

    /// Keeps only the named columns, in the given order.
    pub fn project(&self, name: &str, keep: &[usize]) -> Table {
        Table {
            schema: TableSchema::new(name, keep.iter().map(|&i| self.schema.columns[i].clone()).collect()),
            columns: keep.iter().map(|&i| self.columns[i].clone()).collect(),
            row_count: self.row_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Database {
    pub name: String,
    pub tables: BTreeMap<String, Table>,
    /// Free-form annotations, e.g. fitted transform parameters.
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl Database {
    pub fn new(name: impl Into<String>) -> Self {
        Database {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn add_table(&mut self, table: Table) -> Result<()> {
        let name = table.schema.name.clone();
        if self.tables.contains_key(&name) {
            return Err(Error::Schema(format!("duplicate table `{name}`")));
        }
        self.tables.insert(name, table);
        Ok(())
    }

    pub fn table(&self, name: &str) -> Result<&Table> {
        self.tables.get(name).ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn table_mut(&mut self, name: &str) -> Result<&mut Table> {
        self.tables.get_mut(name).ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn total_rows(&self) -> usize {
        self.tables.values().map(|t| t.row_count).sum()
    }

    /// Every (child table, FK column, parent table) triple in the database,
    /// in deterministic order.
    pub fn relationships(&self) -> Vec<Relationship> {
        let mut out = Vec::new();
        for t in self.tables.values() {
            for (_, spec) in t.schema.foreign_keys() {
                if let Some(target) = &spec.fk_target {
                    out.push(Relationship {
                        child: t.schema.name.clone(),
                        fk_column: spec.name.clone(),
                        parent: target.table.clone(),
                    });
                }
            }
        }
        out
    }
}

/// An FK-PK link: rows of `child` reference rows of `parent` via `fk_column`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Relationship {
    pub child: String,
    pub fk_column: String,
    pub parent: String,
}
