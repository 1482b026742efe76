//! Featurization and schema augmentation.
//!
//! [`apply_transforms`] runs an ordered list of steps over a copy of the
//! database. Each step records the parameters it fitted (means, dictionaries,
//! hash seeds) in a [`FittedTransforms`] log stored under
//! [`FITTED_METADATA_KEY`], and [`replay_transforms`] re-applies that log to
//! held-out data without refitting.

use std::collections::{BTreeSet, HashMap};

use chrono::{DateTime, Datelike, Timelike};
use serde::{Deserialize, Serialize};
use twox_hash::XxHash64;

use crate::error::{Error, Result};
use crate::rdb::{
    validate_database, CategoricalColumn, ColumnData, ColumnRef, ColumnSpec, DType, Database, KeyValue, Table,
    TableSchema,
};

pub const FITTED_METADATA_KEY: &str = "transform.fitted";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformConfig {
    pub steps: Vec<TransformStep>,
}

/// A `table.column` pattern; `*` and `?` glob within either part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Selector(pub String);

impl Selector {
    fn is_glob(&self) -> bool {
        self.0.contains(['*', '?'])
    }

    fn parts(&self) -> Result<(&str, &str)> {
        self.0
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("selector `{}` is not `table.column`", self.0)))
    }

    /// Matching columns in table/column order. Globs keep only columns whose
    /// dtype passes `accept`; a literal selector must name an existing column.
    fn resolve(&self, db: &Database, accept: impl Fn(&ColumnSpec) -> bool) -> Result<Vec<ColumnRef>> {
        let (tp, cp) = self.parts()?;
        if !self.is_glob() {
            let table = db.table(tp)?;
            table.column(cp)?;
            return Ok(vec![ColumnRef::new(tp, cp)]);
        }
        let mut out = Vec::new();
        for t in db.tables.values() {
            if !glob_match(tp, t.name()) {
                continue;
            }
            for c in &t.schema.columns {
                if glob_match(cp, &c.name) && accept(c) {
                    out.push(ColumnRef::new(t.name(), &c.name));
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Config(format!("selector `{}` matches no applicable column", self.0)));
        }
        Ok(out)
    }
}

fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    let (mut pi, mut ti) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '?' || p[pi] == t[ti]) {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = Some((pi, ti));
            pi += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == '*')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeStrategy {
    Mean,
    Median,
    Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DummyTableSpec {
    pub new_table: String,
    pub key_columns: Vec<ColumnRef>,
    /// Name of the new PK column; defaults to the first key column's name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pk_column: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformStep {
    NormalizeNumeric {
        target: Selector,
    },
    IndexCategorical {
        target: Selector,
        /// Values seen fewer times become null.
        #[serde(default)]
        min_count: Option<usize>,
    },
    ExpandDatetime {
        target: Selector,
    },
    HashText {
        target: Selector,
        buckets: u32,
        #[serde(default)]
        seed: u64,
    },
    Impute {
        target: Selector,
        strategy: ImputeStrategy,
    },
    MakeDummyTable(DummyTableSpec),
    DropColumn {
        target: Selector,
    },
    CanonicalizeKeys {
        target: Selector,
    },
}

/// A step with its data-dependent parameters resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedStep {
    NormalizeNumeric { column: ColumnRef, mean: f64, std: f64 },
    IndexCategorical { column: ColumnRef, dictionary: Vec<String> },
    ExpandDatetime { column: ColumnRef },
    HashText { column: ColumnRef, buckets: u32, seed: u64 },
    Impute { column: ColumnRef, fill: Fill },
    MakeDummyTable { spec: DummyTableSpec },
    DropColumn { column: ColumnRef },
    CanonicalizeKeys { column: ColumnRef },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fill {
    Float(f64),
    Category(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FittedTransforms {
    pub steps: Vec<FittedStep>,
}

/// Fits and applies `cfg` to a copy of `db`. The fitted log is stored in the
/// output's metadata; `db` itself is untouched.
pub fn apply_transforms(db: &Database, cfg: &TransformConfig) -> Result<Database> {
    let violations = validate_database(db);
    if !violations.is_empty() {
        return Err(Error::Data(format!(
            "database has {} integrity violations, first: {:?}",
            violations.len(),
            violations[0]
        )));
    }
    let mut out = db.clone();
    let mut fitted = FittedTransforms::default();
    for step in &cfg.steps {
        for f in fit_step(&out, step)? {
            apply_fitted(&mut out, &f)?;
            fitted.steps.push(f);
        }
    }
    out.metadata.insert(
        FITTED_METADATA_KEY.to_string(),
        serde_json::to_value(&fitted).expect("fitted steps serialize"),
    );
    Ok(out)
}

/// Reads the fitted log back from a transformed database's metadata.
pub fn fitted_from_metadata(db: &Database) -> Result<FittedTransforms> {
    let v = db
        .metadata
        .get(FITTED_METADATA_KEY)
        .ok_or_else(|| Error::Config(format!("no `{FITTED_METADATA_KEY}` entry in metadata")))?;
    serde_json::from_value(v.clone()).map_err(|e| Error::Config(e.to_string()))
}

/// Re-applies previously fitted parameters to another database.
pub fn replay_transforms(db: &Database, fitted: &FittedTransforms) -> Result<Database> {
    let mut out = db.clone();
    for f in &fitted.steps {
        apply_fitted(&mut out, f)?;
    }
    out.metadata.insert(
        FITTED_METADATA_KEY.to_string(),
        serde_json::to_value(fitted).expect("fitted steps serialize"),
    );
    Ok(out)
}

fn fit_step(db: &Database, step: &TransformStep) -> Result<Vec<FittedStep>> {
    let not_key = |c: &ColumnSpec| !c.dtype.is_key() && !c.is_time_column;
    Ok(match step {
        TransformStep::NormalizeNumeric { target } => {
            let cols = target.resolve(db, |c| c.dtype.is_numeric())?;
            let mut out = Vec::new();
            for col in cols {
                let data = db.table(&col.table)?.column(&col.column)?;
                if !matches!(data, ColumnData::Float(_) | ColumnData::Int(_)) {
                    return Err(Error::Config(format!("normalize_numeric on non-numeric column {col}")));
                }
                let vals: Vec<f64> = (0..data.len()).filter_map(|i| data.numeric(i)).collect();
                let (mean, std) = mean_std(&vals);
                out.push(FittedStep::NormalizeNumeric { column: col, mean, std });
            }
            out
        }
        TransformStep::IndexCategorical { target, min_count } => {
            let accept = |c: &ColumnSpec| matches!(c.dtype, DType::Categorical | DType::Int | DType::Text);
            let cols = target.resolve(db, |c| accept(c) && not_key(c))?;
            let mut out = Vec::new();
            for col in cols {
                let data = db.table(&col.table)?.column(&col.column)?;
                let labels = labels_of(data).ok_or_else(|| {
                    Error::Config(format!("index_categorical on unsupported column {col}"))
                })?;
                let mut counts: HashMap<&str, usize> = HashMap::new();
                for l in labels.iter().flatten() {
                    *counts.entry(l.as_str()).or_default() += 1;
                }
                let min = min_count.unwrap_or(1);
                let dictionary: BTreeSet<&str> = counts.into_iter().filter(|(_, n)| *n >= min).map(|(s, _)| s).collect();
                out.push(FittedStep::IndexCategorical {
                    column: col,
                    dictionary: dictionary.into_iter().map(str::to_string).collect(),
                });
            }
            out
        }
        TransformStep::ExpandDatetime { target } => target
            .resolve(db, |c| c.dtype == DType::Datetime)?
            .into_iter()
            .map(|column| FittedStep::ExpandDatetime { column })
            .collect(),
        TransformStep::HashText { target, buckets, seed } => {
            if *buckets == 0 {
                return Err(Error::Config("hash_text needs buckets >= 1".into()));
            }
            target
                .resolve(db, |c| c.dtype == DType::Text)?
                .into_iter()
                .map(|column| FittedStep::HashText {
                    column,
                    buckets: *buckets,
                    seed: *seed,
                })
                .collect()
        }
        TransformStep::Impute { target, strategy } => {
            let cols = target.resolve(db, |c| {
                not_key(c) && matches!(c.dtype, DType::Float | DType::Int | DType::Categorical)
            })?;
            let mut out = Vec::new();
            for col in cols {
                let data = db.table(&col.table)?.column(&col.column)?;
                let fill = fit_fill(data, *strategy).map_err(|m| Error::Config(format!("impute {col}: {m}")))?;
                out.push(FittedStep::Impute { column: col, fill });
            }
            out
        }
        TransformStep::MakeDummyTable(spec) => vec![FittedStep::MakeDummyTable { spec: spec.clone() }],
        TransformStep::DropColumn { target } => target
            .resolve(db, |_| true)?
            .into_iter()
            .map(|column| FittedStep::DropColumn { column })
            .collect(),
        TransformStep::CanonicalizeKeys { target } => target
            .resolve(db, |c| c.dtype == DType::PrimaryKey)?
            .into_iter()
            .map(|column| FittedStep::CanonicalizeKeys { column })
            .collect(),
    })
}

fn mean_std(vals: &[f64]) -> (f64, f64) {
    if vals.is_empty() {
        return (0.0, 0.0);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn labels_of(data: &ColumnData) -> Option<Vec<Option<String>>> {
    Some(match data {
        ColumnData::Categorical(c) => c.codes.iter().map(|x| x.map(|x| c.label(x).to_string())).collect(),
        ColumnData::Int(v) => v.iter().map(|x| x.map(|x| x.to_string())).collect(),
        ColumnData::Text(v) => v.clone(),
        _ => return None,
    })
}

fn fit_fill(data: &ColumnData, strategy: ImputeStrategy) -> std::result::Result<Fill, String> {
    match (data, strategy) {
        (ColumnData::Float(_) | ColumnData::Int(_), ImputeStrategy::Mean | ImputeStrategy::Median) => {
            let mut vals: Vec<f64> = (0..data.len()).filter_map(|i| data.numeric(i)).collect();
            if vals.is_empty() {
                return Ok(Fill::Float(0.0));
            }
            if strategy == ImputeStrategy::Mean {
                return Ok(Fill::Float(mean_std(&vals).0));
            }
            vals.sort_by(f64::total_cmp);
            let m = vals.len() / 2;
            Ok(Fill::Float(if vals.len() % 2 == 1 {
                vals[m]
            } else {
                (vals[m - 1] + vals[m]) / 2.0
            }))
        }
        (ColumnData::Categorical(c), ImputeStrategy::Mode) => {
            let mut counts = vec![0usize; c.dictionary.len()];
            c.codes.iter().flatten().for_each(|&x| counts[x as usize] += 1);
            // Ties resolve to the smallest code.
            let best = counts.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)));
            match best {
                Some((code, n)) if *n > 0 => Ok(Fill::Category(c.dictionary[code].clone())),
                _ => Err("no observed category to impute with".into()),
            }
        }
        (ColumnData::Float(_) | ColumnData::Int(_), ImputeStrategy::Mode) => {
            let mut counts: HashMap<u64, (usize, f64)> = HashMap::new();
            for v in (0..data.len()).filter_map(|i| data.numeric(i)) {
                counts.entry(v.to_bits()).or_insert((0, v)).0 += 1;
            }
            let best = counts
                .values()
                .max_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)))
                .map_or(0.0, |x| x.1);
            Ok(Fill::Float(best))
        }
        _ => Err(format!("strategy {strategy:?} does not fit this dtype")),
    }
}

fn column_index(table: &Table, col: &ColumnRef) -> Result<usize> {
    table
        .schema
        .column_index(&col.column)
        .ok_or_else(|| Error::unknown_column(&col.table, &col.column))
}

fn apply_fitted(db: &mut Database, step: &FittedStep) -> Result<()> {
    match step {
        FittedStep::NormalizeNumeric { column, mean, std } => {
            let table = db.table_mut(&column.table)?;
            let idx = column_index(table, column)?;
            let data = &table.columns[idx];
            let scale = |v: f64| if *std > 0.0 { (v - mean) / std } else { 0.0 };
            let out: Vec<Option<f64>> = match data {
                ColumnData::Float(_) | ColumnData::Int(_) => (0..data.len()).map(|i| data.numeric(i).map(scale)).collect(),
                _ => return Err(Error::Config(format!("normalize_numeric on non-numeric column {column}"))),
            };
            table.columns[idx] = ColumnData::Float(out);
            table.schema.columns[idx].dtype = DType::Float;
        }
        FittedStep::IndexCategorical { column, dictionary } => {
            let table = db.table_mut(&column.table)?;
            let idx = column_index(table, column)?;
            let labels = labels_of(&table.columns[idx])
                .ok_or_else(|| Error::Config(format!("index_categorical on unsupported column {column}")))?;
            let lookup: HashMap<&str, u32> = dictionary.iter().enumerate().map(|(i, s)| (s.as_str(), i as u32)).collect();
            let codes = labels
                .iter()
                .map(|l| l.as_deref().and_then(|s| lookup.get(s).copied()))
                .collect();
            table.columns[idx] = ColumnData::Categorical(CategoricalColumn {
                codes,
                dictionary: dictionary.clone(),
            });
            table.schema.columns[idx].dtype = DType::Categorical;
        }
        FittedStep::ExpandDatetime { column } => {
            let table = db.table_mut(&column.table)?;
            let idx = column_index(table, column)?;
            let ColumnData::Datetime(ts) = &table.columns[idx] else {
                return Err(Error::Config(format!("expand_datetime on non-datetime column {column}")));
            };
            let parts: Vec<Option<DatetimeParts>> = ts.iter().map(|t| t.and_then(datetime_parts)).collect();
            let fields: [(&str, fn(&DatetimeParts) -> i64); 5] = [
                ("year", |p| p.year),
                ("month", |p| p.month),
                ("day", |p| p.day),
                ("weekday", |p| p.weekday),
                ("hour", |p| p.hour),
            ];
            for (suffix, get) in fields {
                let values = parts.iter().map(|p| p.as_ref().map(get)).collect();
                table.push_column(
                    ColumnSpec::new(format!("{}_{suffix}", column.column), DType::Int),
                    ColumnData::Int(values),
                )?;
            }
        }
        FittedStep::HashText { column, buckets, seed } => {
            let table = db.table_mut(&column.table)?;
            let idx = column_index(table, column)?;
            let ColumnData::Text(values) = &table.columns[idx] else {
                return Err(Error::Config(format!("hash_text on non-text column {column}")));
            };
            let codes = values.iter().map(|v| v.as_deref().map(|s| hash_text(s, *buckets, *seed))).collect();
            table.columns[idx] = ColumnData::Categorical(CategoricalColumn {
                codes,
                dictionary: (0..*buckets).map(|b| b.to_string()).collect(),
            });
            table.schema.columns[idx].dtype = DType::Categorical;
        }
        FittedStep::Impute { column, fill } => {
            let table = db.table_mut(&column.table)?;
            let idx = column_index(table, column)?;
            let data = &table.columns[idx];
            let indicator: Vec<Option<i64>> = (0..data.len()).map(|i| Some(data.is_null(i) as i64)).collect();
            let filled = match (data, fill) {
                (ColumnData::Float(_) | ColumnData::Int(_), Fill::Float(f)) => {
                    let out: Vec<Option<f64>> = (0..data.len()).map(|i| Some(data.numeric(i).unwrap_or(*f))).collect();
                    table.schema.columns[idx].dtype = DType::Float;
                    ColumnData::Float(out)
                }
                (ColumnData::Categorical(c), Fill::Category(label)) => {
                    let mut c = c.clone();
                    let code = match c.dictionary.iter().position(|d| d == label) {
                        Some(p) => p as u32,
                        None => {
                            c.dictionary.push(label.clone());
                            (c.dictionary.len() - 1) as u32
                        }
                    };
                    c.codes.iter_mut().filter(|x| x.is_none()).for_each(|x| *x = Some(code));
                    ColumnData::Categorical(c)
                }
                _ => return Err(Error::Config(format!("impute fill does not match column {column}"))),
            };
            table.columns[idx] = filled;
            table.push_column(
                ColumnSpec::new(format!("{}_missing", column.column), DType::Int),
                ColumnData::Int(indicator),
            )?;
        }
        FittedStep::MakeDummyTable { spec } => {
            *db = make_dummy_table(db, spec)?;
        }
        FittedStep::DropColumn { column } => {
            let referenced = db.tables.values().any(|t| {
                t.schema
                    .foreign_keys()
                    .any(|(_, c)| c.fk_target.as_ref() == Some(column))
            });
            if referenced {
                return Err(Error::Config(format!("cannot drop {column}: referenced by a foreign key")));
            }
            let table = db.table_mut(&column.table)?;
            let idx = column_index(table, column)?;
            table.schema.columns.remove(idx);
            table.columns.remove(idx);
        }
        FittedStep::CanonicalizeKeys { column } => canonicalize_keys(db, column)?,
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatetimeParts {
    pub year: i64,
    pub month: i64,
    pub day: i64,
    /// 0 = Monday.
    pub weekday: i64,
    pub hour: i64,
}

pub fn datetime_parts(ms: i64) -> Option<DatetimeParts> {
    let dt = DateTime::from_timestamp_millis(ms)?;
    Some(DatetimeParts {
        year: dt.year() as i64,
        month: dt.month() as i64,
        day: dt.day() as i64,
        weekday: dt.weekday().num_days_from_monday() as i64,
        hour: dt.hour() as i64,
    })
}

/// Deterministic text bucketing with seeded XxHash64. Bucket 0 is reserved
/// for the empty string; non-empty text lands in `1..buckets` (or 0 when
/// there is a single bucket).
pub fn hash_text(value: &str, buckets: u32, seed: u64) -> u32 {
    if value.is_empty() || buckets <= 1 {
        return 0;
    }
    let h = XxHash64::oneshot(seed, value.as_bytes());
    1 + (h % (buckets as u64 - 1)) as u32
}

fn to_key(data: &ColumnData, row: usize) -> Option<KeyValue> {
    match data {
        ColumnData::Int(v) => v[row].map(KeyValue::Int),
        ColumnData::Categorical(c) => c.codes[row].map(|x| KeyValue::parse(c.label(x))),
        ColumnData::Text(v) => v[row].as_deref().map(KeyValue::parse),
        ColumnData::Key(v) => v[row].clone(),
        _ => None,
    }
}

/// Turns pseudo-FK columns into real FKs against a new single-column table
/// holding their deduplicated non-null values (sorted).
pub fn make_dummy_table(db: &Database, spec: &DummyTableSpec) -> Result<Database> {
    if spec.key_columns.is_empty() {
        return Err(Error::Config("dummy table needs at least one key column".into()));
    }
    if db.tables.contains_key(&spec.new_table) {
        return Err(Error::Config(format!("table `{}` already exists", spec.new_table)));
    }
    let mut dtype = None;
    for col in &spec.key_columns {
        let d = db
            .table(&col.table)?
            .schema
            .column(&col.column)
            .ok_or_else(|| Error::unknown_column(&col.table, &col.column))?
            .dtype;
        if !matches!(d, DType::Int | DType::Categorical | DType::Text | DType::ForeignKey) {
            return Err(Error::Config(format!("{col}: dtype {d} cannot key a dummy table")));
        }
        if dtype.is_some_and(|prev| prev != d) {
            return Err(Error::Config(format!("dummy table key columns disagree in dtype at {col}")));
        }
        dtype = Some(d);
    }
    let pk_name = spec.pk_column.clone().unwrap_or_else(|| spec.key_columns[0].column.clone());

    let mut out = db.clone();
    let mut domain = BTreeSet::new();
    for col in &spec.key_columns {
        let table = out.table_mut(&col.table)?;
        let idx = column_index(table, col)?;
        let keys: Vec<Option<KeyValue>> = (0..table.row_count).map(|r| to_key(&table.columns[idx], r)).collect();
        domain.extend(keys.iter().flatten().cloned());
        table.columns[idx] = ColumnData::Key(keys);
        let cs = &mut table.schema.columns[idx];
        cs.dtype = DType::ForeignKey;
        cs.fk_target = Some(ColumnRef::new(&spec.new_table, &pk_name));
    }
    let pk = ColumnData::Key(domain.into_iter().map(Some).collect());
    out.add_table(Table::new(
        TableSchema::new(&spec.new_table, vec![ColumnSpec::new(pk_name, DType::PrimaryKey)]),
        vec![pk],
    )?)?;
    Ok(out)
}

/// Rewrites a PK column to dense integers (row order) and every FK pointing
/// at it accordingly.
fn canonicalize_keys(db: &mut Database, pk: &ColumnRef) -> Result<()> {
    let table = db.table_mut(&pk.table)?;
    let idx = column_index(table, pk)?;
    let keys = table.columns[idx]
        .as_keys()
        .ok_or_else(|| Error::Config(format!("{pk} is not a key column")))?;
    let mapping: HashMap<KeyValue, i64> = keys
        .iter()
        .enumerate()
        .filter_map(|(i, k)| k.clone().map(|k| (k, i as i64)))
        .collect();
    let dense = (0..keys.len()).map(|i| keys[i].as_ref().map(|_| KeyValue::Int(i as i64))).collect();
    table.columns[idx] = ColumnData::Key(dense);
    for t in db.tables.values_mut() {
        let fk_cols: Vec<usize> = t
            .schema
            .foreign_keys()
            .filter(|(_, c)| c.fk_target.as_ref() == Some(pk))
            .map(|(i, _)| i)
            .collect();
        for i in fk_cols {
            let ColumnData::Key(values) = &mut t.columns[i] else { continue };
            for v in values.iter_mut() {
                if let Some(k) = v {
                    let mapped = *mapping
                        .get(k)
                        .ok_or_else(|| Error::Data(format!("dangling key {k} while canonicalizing {pk}")))?;
                    *v = Some(KeyValue::Int(mapped));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_column_db(spec: ColumnSpec, data: ColumnData) -> Database {
        let mut db = Database::new("d");
        db.add_table(Table::new(TableSchema::new("t", vec![spec]), vec![data]).unwrap()).unwrap();
        db
    }

    fn cfg(steps: Vec<TransformStep>) -> TransformConfig {
        TransformConfig { steps }
    }

    #[test]
    fn glob_matching() {
        assert!(glob_match("*", "anything"));
        assert!(glob_match("Vi*", "View"));
        assert!(glob_match("?iew", "View"));
        assert!(!glob_match("Vi*x", "View"));
        assert!(glob_match("*ID", "UserID"));
    }

    #[test]
    fn z_score_symmetric_case() {
        let db = one_column_db(ColumnSpec::new("x", DType::Int), ColumnData::Int(vec![Some(2), Some(4), Some(6)]));
        let out = apply_transforms(&db, &cfg(vec![TransformStep::NormalizeNumeric { target: Selector("t.x".into()) }])).unwrap();
        let v = out.table("t").unwrap().column("x").unwrap().as_floats().unwrap().to_vec();
        let expect = [-1.224_744_871_391_589, 0.0, 1.224_744_871_391_589];
        for (a, b) in v.iter().zip(expect) {
            assert!((a.unwrap() - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_variance_maps_to_zero() {
        let db = one_column_db(ColumnSpec::new("x", DType::Float), ColumnData::Float(vec![Some(3.0), None, Some(3.0)]));
        let out = apply_transforms(&db, &cfg(vec![TransformStep::NormalizeNumeric { target: Selector("t.x".into()) }])).unwrap();
        let v = out.table("t").unwrap().column("x").unwrap().as_floats().unwrap().to_vec();
        assert_eq!(v, vec![Some(0.0), None, Some(0.0)]);
    }

    #[test]
    fn normalize_rejects_text() {
        let db = one_column_db(ColumnSpec::new("x", DType::Text), ColumnData::Text(vec![Some("a".into())]));
        let err = apply_transforms(&db, &cfg(vec![TransformStep::NormalizeNumeric { target: Selector("t.x".into()) }]));
        assert!(err.is_err());
    }

    #[test]
    fn missing_target_is_an_error() {
        let db = one_column_db(ColumnSpec::new("x", DType::Float), ColumnData::Float(vec![]));
        let err = apply_transforms(&db, &cfg(vec![TransformStep::DropColumn { target: Selector("t.nope".into()) }]));
        assert!(matches!(err, Err(Error::UnknownColumn { .. })));
    }

    #[test]
    fn impute_mean_with_indicator() {
        let db = one_column_db(ColumnSpec::new("x", DType::Float), ColumnData::Float(vec![Some(1.0), None, Some(3.0)]));
        let out = apply_transforms(
            &db,
            &cfg(vec![TransformStep::Impute {
                target: Selector("t.x".into()),
                strategy: ImputeStrategy::Mean,
            }]),
        )
        .unwrap();
        let t = out.table("t").unwrap();
        assert_eq!(t.column("x").unwrap(), &ColumnData::Float(vec![Some(1.0), Some(2.0), Some(3.0)]));
        assert_eq!(t.column("x_missing").unwrap(), &ColumnData::Int(vec![Some(0), Some(1), Some(0)]));
    }

    #[test]
    fn impute_mode_on_categorical() {
        let col = CategoricalColumn::from_strings(&[Some("b"), None, Some("a"), Some("b")]);
        let db = one_column_db(ColumnSpec::new("c", DType::Categorical), ColumnData::Categorical(col));
        let out = apply_transforms(
            &db,
            &cfg(vec![TransformStep::Impute {
                target: Selector("t.c".into()),
                strategy: ImputeStrategy::Mode,
            }]),
        )
        .unwrap();
        let ColumnData::Categorical(c) = out.table("t").unwrap().column("c").unwrap() else { panic!() };
        assert_eq!(c.label(c.codes[1].unwrap()), "b");
    }

    #[test]
    fn hash_text_reserved_and_stable() {
        assert_eq!(hash_text("", 64, 17), 0);
        let h = hash_text("abc", 64, 17);
        assert!((1..64).contains(&h));
        assert_eq!(h, hash_text("abc", 64, 17));
        assert_eq!(hash_text("abc", 1, 17), 0);
    }

    #[test]
    fn index_categorical_min_count() {
        let db = one_column_db(
            ColumnSpec::new("x", DType::Int),
            ColumnData::Int(vec![Some(5), Some(5), Some(9), None]),
        );
        let out = apply_transforms(
            &db,
            &cfg(vec![TransformStep::IndexCategorical {
                target: Selector("t.x".into()),
                min_count: Some(2),
            }]),
        )
        .unwrap();
        let ColumnData::Categorical(c) = out.table("t").unwrap().column("x").unwrap() else { panic!() };
        assert_eq!(c.dictionary, vec!["5"]);
        assert_eq!(c.codes, vec![Some(0), Some(0), None, None]);
    }

    #[test]
    fn dummy_table_rejects_collision_and_mismatch() {
        let mut db = Database::new("d");
        db.add_table(
            Table::new(
                TableSchema::new("a", vec![ColumnSpec::new("u", DType::Int), ColumnSpec::new("s", DType::Text)]),
                vec![ColumnData::Int(vec![Some(1)]), ColumnData::Text(vec![Some("x".into())])],
            )
            .unwrap(),
        )
        .unwrap();
        let collide = DummyTableSpec {
            new_table: "a".into(),
            key_columns: vec![ColumnRef::new("a", "u")],
            pk_column: None,
        };
        assert!(make_dummy_table(&db, &collide).is_err());
        let mismatch = DummyTableSpec {
            new_table: "U".into(),
            key_columns: vec![ColumnRef::new("a", "u"), ColumnRef::new("a", "s")],
            pk_column: None,
        };
        assert!(make_dummy_table(&db, &mismatch).is_err());
    }

    #[test]
    fn dummy_step_parses_from_yaml() {
        let c: TransformConfig = serde_yaml::from_str(
            "steps:\n  - kind: make_dummy_table\n    new_table: User\n    key_columns:\n      - {table: View, column: UserID}\n",
        )
        .unwrap();
        assert!(matches!(&c.steps[0], TransformStep::MakeDummyTable(s) if s.new_table == "User"));
    }

    #[test]
    fn unknown_step_kind_names_the_key() {
        let err = serde_json::from_str::<TransformConfig>(r#"{"steps":[{"kind":"explode","target":"t.x"}]}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("explode"), "{err}");
    }
}
