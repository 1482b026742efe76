use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use super::rdbc;
use super::{CategoricalColumn, ColumnData, ColumnRef, ColumnSpec, DType, Database, KeyValue, Table, TableSchema, VectorColumn};
use crate::error::{Error, Result};

/// On-disk dataset description: one entry per table with its data file and
/// full column list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatabaseMeta {
    pub name: String,
    pub tables: Vec<TableMeta>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableMeta {
    pub name: String,
    /// Data file, relative to the metadata file. `.rdbc` selects the binary
    /// format, anything else is read as CSV.
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_column: Option<String>,
    pub columns: Vec<ColumnMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMeta {
    pub name: String,
    pub dtype: DType,
    #[serde(default, deserialize_with = "de_fk_target", skip_serializing_if = "Option::is_none")]
    pub fk_target: Option<ColumnRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Persisted category dictionary; codes follow this order when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

/// Accepts either `{table, column}` or the shorthand `"Table.column"`.
fn de_fk_target<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<ColumnRef>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Dotted(String),
        Full(ColumnRef),
    }
    Ok(match Option::<Raw>::deserialize(d)? {
        None => None,
        Some(Raw::Full(r)) => Some(r),
        Some(Raw::Dotted(s)) => {
            let (t, c) = s
                .split_once('.')
                .ok_or_else(|| serde::de::Error::custom(format!("fk_target `{s}` is not `table.column`")))?;
            Some(ColumnRef::new(t, c))
        }
    })
}

impl TableMeta {
    pub fn schema(&self) -> Result<TableSchema> {
        let mut columns = Vec::with_capacity(self.columns.len());
        for c in &self.columns {
            let mut spec = ColumnSpec::new(c.name.clone(), c.dtype);
            spec.fk_target = c.fk_target.clone();
            spec.dim = c.dim;
            spec.is_time_column = self.time_column.as_deref() == Some(c.name.as_str());
            columns.push(spec);
        }
        if let Some(tc) = &self.time_column {
            if !self.columns.iter().any(|c| &c.name == tc) {
                return Err(Error::Metadata(format!("table `{}`: time_column `{tc}` is not declared", self.name)));
            }
        }
        let schema = TableSchema::new(self.name.clone(), columns);
        schema.check().map_err(|e| Error::Metadata(e.to_string()))?;
        Ok(schema)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StorageFormat {
    #[default]
    Csv,
    Rdbc,
}

impl StorageFormat {
    fn extension(self) -> &'static str {
        match self {
            StorageFormat::Csv => "csv",
            StorageFormat::Rdbc => "rdbc",
        }
    }
}

/// Parses a JSON or YAML metadata document (YAML when the extension says so).
pub fn parse_metadata(path: &Path) -> Result<DatabaseMeta> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_yaml = matches!(path.extension().and_then(|e| e.to_str()), Some("yaml" | "yml"));
    let meta: DatabaseMeta = if is_yaml {
        serde_yaml::from_str(&text).map_err(|e| Error::Metadata(format!("{}: {e}", path.display())))?
    } else {
        serde_json::from_str(&text).map_err(|e| Error::Metadata(format!("{}: {e}", path.display())))?
    };
    let mut names = std::collections::HashSet::new();
    for t in &meta.tables {
        if !names.insert(t.name.as_str()) {
            return Err(Error::Metadata(format!("duplicate table `{}`", t.name)));
        }
    }
    Ok(meta)
}

/// Loads every table named in the metadata file into columnar storage.
///
/// Missing cells become nulls. Referential integrity is not checked here;
/// see [`super::validate_database`].
pub fn load_database(metadata_path: &Path) -> Result<Database> {
    let meta = parse_metadata(metadata_path)?;
    let base = metadata_path.parent().unwrap_or(Path::new("."));
    let tables = meta
        .tables
        .par_iter()
        .map(|t| load_table(base, t))
        .collect::<Result<Vec<_>>>()?;
    let mut db = Database::new(meta.name);
    db.metadata = meta.metadata;
    for t in tables {
        db.add_table(t)?;
    }
    Ok(db)
}

fn load_table(base: &Path, meta: &TableMeta) -> Result<Table> {
    let schema = meta.schema()?;
    let path = base.join(&meta.source);
    if path.extension().and_then(|e| e.to_str()) == Some("rdbc") {
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let table = rdbc::decode_table(&bytes)?;
        let stored: Vec<_> = table.schema.columns.iter().map(|c| (&c.name, c.dtype, c.dim)).collect();
        let declared: Vec<_> = schema.columns.iter().map(|c| (&c.name, c.dtype, c.dim)).collect();
        if stored != declared {
            return Err(Error::Metadata(format!(
                "{}: stored columns do not match declared columns of `{}`",
                path.display(),
                meta.name
            )));
        }
        return Table::new(schema, table.columns);
    }
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    read_csv(file, schema, meta)
}

fn read_csv<R: std::io::Read>(reader: R, schema: TableSchema, meta: &TableMeta) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Metadata(format!("table `{}`: unreadable header: {e}", meta.name)))?
        .clone();
    let positions = schema
        .columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == c.name)
                .ok_or_else(|| Error::Metadata(format!("table `{}`: column `{}` missing from CSV header", meta.name, c.name)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut raw: Vec<Vec<Option<String>>> = vec![Vec::new(); schema.columns.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("table `{}`, row {row}: {e}", meta.name)))?;
        if record.len() != headers.len() {
            return Err(Error::Arity {
                table: meta.name.clone(),
                row,
                expected: headers.len(),
                found: record.len(),
            });
        }
        for (col, &pos) in positions.iter().enumerate() {
            let cell = &record[pos];
            raw[col].push((!cell.is_empty()).then(|| cell.to_string()));
        }
    }

    let columns = schema
        .columns
        .iter()
        .zip(raw)
        .zip(&meta.columns)
        .map(|((spec, cells), cmeta)| parse_column(&meta.name, spec, cells, cmeta.categories.clone()))
        .collect::<Result<Vec<_>>>()?;
    Table::new(schema, columns)
}

fn parse_column(
    table: &str,
    spec: &ColumnSpec,
    cells: Vec<Option<String>>,
    categories: Option<Vec<String>>,
) -> Result<ColumnData> {
    let bad = |row: usize, value: &str| Error::Parse {
        table: table.to_string(),
        column: spec.name.clone(),
        row,
        value: value.to_string(),
        dtype: spec.dtype.to_string(),
    };
    fn each<T>(cells: &[Option<String>], f: impl Fn(usize, &str) -> Result<T>) -> Result<Vec<Option<T>>> {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| c.as_deref().map(|s| f(i, s)).transpose())
            .collect()
    }
    Ok(match spec.dtype {
        DType::Float => ColumnData::Float(each(&cells, |i, s| s.trim().parse::<f64>().map_err(|_| bad(i, s)))?),
        DType::Int => ColumnData::Int(each(&cells, |i, s| s.trim().parse::<i64>().map_err(|_| bad(i, s)))?),
        DType::Datetime => ColumnData::Datetime(each(&cells, |i, s| parse_datetime(s).ok_or_else(|| bad(i, s)))?),
        DType::Text => ColumnData::Text(cells),
        DType::Categorical => ColumnData::Categorical(match categories {
            Some(dict) => CategoricalColumn::with_dictionary(&cells, dict).map_err(|v| {
                let row = cells.iter().position(|c| c.as_deref() == Some(v.as_str())).unwrap_or(0);
                bad(row, &v)
            })?,
            None => CategoricalColumn::from_strings(&cells),
        }),
        DType::Vector => {
            let dim = spec.dim.unwrap_or(0);
            let values = each(&cells, |i, s| {
                let v: Vec<f64> = serde_json::from_str(s).map_err(|_| bad(i, s))?;
                if v.len() != dim {
                    return Err(bad(i, s));
                }
                Ok(v)
            })?;
            ColumnData::Vector(VectorColumn { dim, values })
        }
        DType::PrimaryKey | DType::ForeignKey => ColumnData::Key(each(&cells, |_, s| Ok(KeyValue::parse(s)))?),
    })
}

/// Accepts integer milliseconds, RFC 3339, `YYYY-MM-DD[ HH:MM:SS[.fff]]`
/// (naive times are read as UTC).
pub(crate) fn parse_datetime(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(ms) = s.parse::<i64>() {
        return Some(ms);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp_millis());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp_millis());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp_millis())
}

/// Writes `db` to `dir` as `metadata.json` plus one data file per table and
/// returns the metadata path. Category dictionaries are persisted so a reload
/// reproduces the same codes.
pub fn serialize_database(db: &Database, dir: &Path, format: StorageFormat) -> Result<PathBuf> {
    let table_dir = dir.join("tables");
    fs::create_dir_all(&table_dir).map_err(|e| Error::io(&table_dir, e))?;
    let mut tables = Vec::new();
    for table in db.tables.values() {
        let source = format!("tables/{}.{}", table.name(), format.extension());
        let path = dir.join(&source);
        let bytes = match format {
            StorageFormat::Rdbc => rdbc::encode_table(table),
            StorageFormat::Csv => write_csv(table)?,
        };
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        tables.push(table_meta(table, source));
    }
    let meta = DatabaseMeta {
        name: db.name.clone(),
        tables,
        metadata: db.metadata.clone(),
    };
    let path = dir.join("metadata.json");
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub(crate) fn table_meta(table: &Table, source: String) -> TableMeta {
    let time_column = table.schema.time_column().map(|i| table.schema.columns[i].name.clone());
    let columns = table
        .schema
        .columns
        .iter()
        .zip(&table.columns)
        .map(|(spec, data)| ColumnMeta {
            name: spec.name.clone(),
            dtype: spec.dtype,
            fk_target: spec.fk_target.clone(),
            dim: spec.dim,
            categories: match data {
                ColumnData::Categorical(c) => Some(c.dictionary.clone()),
                _ => None,
            },
        })
        .collect();
    TableMeta {
        name: table.schema.name.clone(),
        source,
        time_column,
        columns,
    }
}

fn write_csv(table: &Table) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Data(format!("table `{}`: {e}", table.name()));
    w.write_record(table.schema.columns.iter().map(|c| c.name.as_str())).map_err(csv_err)?;
    for row in 0..table.row_count {
        w.write_record(table.columns.iter().map(|c| c.format_cell(row))).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Data(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn datetime_formats() {
        assert_eq!(parse_datetime("0"), Some(0));
        assert_eq!(parse_datetime("1970-01-02"), Some(86_400_000));
        assert_eq!(parse_datetime("1970-01-01 00:00:01"), Some(1000));
        assert_eq!(parse_datetime("1970-01-01T00:00:01.5"), Some(1500));
        assert_eq!(parse_datetime("1970-01-01T01:00:00+01:00"), Some(0));
        assert_eq!(parse_datetime("yesterday"), None);
    }

    #[test]
    fn key_parsing_round_trips() {
        assert_eq!(KeyValue::parse("42"), KeyValue::Int(42));
        assert_eq!(KeyValue::parse("-7"), KeyValue::Int(-7));
        assert_eq!(KeyValue::parse("007"), KeyValue::Str("007".into()));
        assert_eq!(KeyValue::parse("+3"), KeyValue::Str("+3".into()));
        assert_eq!(KeyValue::parse("u1"), KeyValue::Str("u1".into()));
    }

    #[test]
    fn fk_target_shorthand() {
        let c: ColumnMeta =
            serde_json::from_str(r#"{"name":"ItemID","dtype":"foreign_key","fk_target":"Product.ItemID"}"#).unwrap();
        assert_eq!(c.fk_target, Some(ColumnRef::new("Product", "ItemID")));
    }
}
