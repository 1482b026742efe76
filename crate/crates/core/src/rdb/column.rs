use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ColumnSpec, DType, Timestamp};

/// Value of a primary or foreign key cell.
///
/// Integer keys stay integers; anything else is kept verbatim. Integers sort
/// before strings.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KeyValue {
    Int(i64),
    Str(String),
}

impl KeyValue {
    /// Parses a raw cell: canonical integers (no sign `+`, no leading zeros)
    /// become `Int`, everything else `Str`, so formatting round-trips.
    pub fn parse(raw: &str) -> KeyValue {
        match raw.parse::<i64>() {
            Ok(v) if v.to_string() == raw => KeyValue::Int(v),
            _ => KeyValue::Str(raw.to_string()),
        }
    }
}

impl fmt::Display for KeyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyValue::Int(v) => write!(f, "{v}"),
            KeyValue::Str(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CategoricalColumn {
    pub codes: Vec<Option<u32>>,
    pub dictionary: Vec<String>,
}

impl CategoricalColumn {
    /// Interns raw strings. The dictionary is the sorted set of distinct
    /// values, so codes do not depend on row order.
    pub fn from_strings<S: AsRef<str>>(values: &[Option<S>]) -> Self {
        let distinct: BTreeSet<&str> = values.iter().flatten().map(AsRef::as_ref).collect();
        let dictionary: Vec<String> = distinct.into_iter().map(str::to_string).collect();
        let lookup: HashMap<&str, u32> = dictionary
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i as u32))
            .collect();
        let codes = values
            .iter()
            .map(|v| v.as_ref().map(|s| lookup[s.as_ref()]))
            .collect();
        CategoricalColumn { codes, dictionary }
    }

    /// Interns against a fixed dictionary; `None` if a value is missing from it.
    pub fn with_dictionary<S: AsRef<str>>(values: &[Option<S>], dictionary: Vec<String>) -> Result<Self, String> {
        let lookup: HashMap<&str, u32> = dictionary
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i as u32))
            .collect();
        let mut codes = Vec::with_capacity(values.len());
        for v in values {
            codes.push(match v {
                None => None,
                Some(s) => Some(*lookup.get(s.as_ref()).ok_or_else(|| s.as_ref().to_string())?),
            });
        }
        Ok(CategoricalColumn { codes, dictionary })
    }

    pub fn label(&self, code: u32) -> &str {
        &self.dictionary[code as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorColumn {
    pub dim: usize,
    pub values: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Float(Vec<Option<f64>>),
    Int(Vec<Option<i64>>),
    Categorical(CategoricalColumn),
    Datetime(Vec<Option<Timestamp>>),
    Text(Vec<Option<String>>),
    Vector(VectorColumn),
    /// Primary and foreign key columns.
    Key(Vec<Option<KeyValue>>),
}

/// A single cell, detached from its column.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Float(f64),
    Int(i64),
    Category(u32),
    Datetime(Timestamp),
    Text(String),
    Vector(Vec<f64>),
    Key(KeyValue),
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Float(v) => Some(*v),
            Value::Int(v) | Value::Datetime(v) => Some(*v as f64),
            _ => None,
        }
    }

    /// Total order used by MIN/MAX; values of different kinds compare by kind.
    pub fn total_cmp(&self, other: &Value) -> Ordering {
        match (self, other) {
            (Value::Float(a), Value::Float(b)) => a.total_cmp(b),
            (Value::Int(a), Value::Int(b)) | (Value::Datetime(a), Value::Datetime(b)) => a.cmp(b),
            (Value::Category(a), Value::Category(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Float(_) => 1,
            Value::Int(_) => 2,
            Value::Category(_) => 3,
            Value::Datetime(_) => 4,
            Value::Text(_) => 5,
            Value::Vector(_) => 6,
            Value::Key(_) => 7,
        }
    }
}

impl ColumnData {
    pub fn empty_for(spec: &ColumnSpec) -> ColumnData {
        match spec.dtype {
            DType::Float => ColumnData::Float(Vec::new()),
            DType::Int => ColumnData::Int(Vec::new()),
            DType::Categorical => ColumnData::Categorical(CategoricalColumn::default()),
            DType::Datetime => ColumnData::Datetime(Vec::new()),
            DType::Text => ColumnData::Text(Vec::new()),
            DType::Vector => ColumnData::Vector(VectorColumn {
                dim: spec.dim.unwrap_or(1),
                values: Vec::new(),
            }),
            DType::PrimaryKey | DType::ForeignKey => ColumnData::Key(Vec::new()),
        }
    }

    /// All-null column of the given length.
    pub fn nulls_for(spec: &ColumnSpec, len: usize) -> ColumnData {
        match spec.dtype {
            DType::Float => ColumnData::Float(vec![None; len]),
            DType::Int => ColumnData::Int(vec![None; len]),
            DType::Categorical => ColumnData::Categorical(CategoricalColumn {
                codes: vec![None; len],
                dictionary: Vec::new(),
            }),
            DType::Datetime => ColumnData::Datetime(vec![None; len]),
            DType::Text => ColumnData::Text(vec![None; len]),
            DType::Vector => ColumnData::Vector(VectorColumn {
                dim: spec.dim.unwrap_or(1),
                values: vec![None; len],
            }),
            DType::PrimaryKey | DType::ForeignKey => ColumnData::Key(vec![None; len]),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnData::Float(v) => v.len(),
            ColumnData::Int(v) => v.len(),
            ColumnData::Categorical(c) => c.codes.len(),
            ColumnData::Datetime(v) => v.len(),
            ColumnData::Text(v) => v.len(),
            ColumnData::Vector(c) => c.values.len(),
            ColumnData::Key(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether the storage variant fits the declared dtype.
    pub fn matches(&self, spec: &ColumnSpec) -> bool {
        match (self, spec.dtype) {
            (ColumnData::Float(_), DType::Float)
            | (ColumnData::Int(_), DType::Int)
            | (ColumnData::Categorical(_), DType::Categorical)
            | (ColumnData::Datetime(_), DType::Datetime)
            | (ColumnData::Text(_), DType::Text)
            | (ColumnData::Key(_), DType::PrimaryKey | DType::ForeignKey) => true,
            (ColumnData::Vector(c), DType::Vector) => Some(c.dim) == spec.dim,
            _ => false,
        }
    }

    pub fn is_null(&self, row: usize) -> bool {
        match self {
            ColumnData::Float(v) => v[row].is_none(),
            ColumnData::Int(v) => v[row].is_none(),
            ColumnData::Categorical(c) => c.codes[row].is_none(),
            ColumnData::Datetime(v) => v[row].is_none(),
            ColumnData::Text(v) => v[row].is_none(),
            ColumnData::Vector(c) => c.values[row].is_none(),
            ColumnData::Key(v) => v[row].is_none(),
        }
    }

    pub fn null_count(&self) -> usize {
        (0..self.len()).filter(|&i| self.is_null(i)).count()
    }

    pub fn get(&self, row: usize) -> Value {
        match self {
            ColumnData::Float(v) => v[row].map_or(Value::Null, Value::Float),
            ColumnData::Int(v) => v[row].map_or(Value::Null, Value::Int),
            ColumnData::Categorical(c) => c.codes[row].map_or(Value::Null, Value::Category),
            ColumnData::Datetime(v) => v[row].map_or(Value::Null, Value::Datetime),
            ColumnData::Text(v) => v[row].clone().map_or(Value::Null, Value::Text),
            ColumnData::Vector(c) => c.values[row].clone().map_or(Value::Null, Value::Vector),
            ColumnData::Key(v) => v[row].clone().map_or(Value::Null, Value::Key),
        }
    }

    /// Sets a cell to null.
    pub fn set_null(&mut self, row: usize) {
        match self {
            ColumnData::Float(v) => v[row] = None,
            ColumnData::Int(v) => v[row] = None,
            ColumnData::Categorical(c) => c.codes[row] = None,
            ColumnData::Datetime(v) => v[row] = None,
            ColumnData::Text(v) => v[row] = None,
            ColumnData::Vector(c) => c.values[row] = None,
            ColumnData::Key(v) => v[row] = None,
        }
    }

    pub fn take(&self, rows: &[usize]) -> ColumnData {
        fn pick<T: Clone>(v: &[T], rows: &[usize]) -> Vec<T> {
            rows.iter().map(|&r| v[r].clone()).collect()
        }
        match self {
            ColumnData::Float(v) => ColumnData::Float(pick(v, rows)),
            ColumnData::Int(v) => ColumnData::Int(pick(v, rows)),
            ColumnData::Categorical(c) => ColumnData::Categorical(CategoricalColumn {
                codes: pick(&c.codes, rows),
                dictionary: c.dictionary.clone(),
            }),
            ColumnData::Datetime(v) => ColumnData::Datetime(pick(v, rows)),
            ColumnData::Text(v) => ColumnData::Text(pick(v, rows)),
            ColumnData::Vector(c) => ColumnData::Vector(VectorColumn {
                dim: c.dim,
                values: pick(&c.values, rows),
            }),
            ColumnData::Key(v) => ColumnData::Key(pick(v, rows)),
        }
    }

    /// Like [`ColumnData::take`], but `None` positions become nulls.
    pub fn take_opt(&self, rows: &[Option<usize>]) -> ColumnData {
        fn pick<T: Clone>(v: &[Option<T>], rows: &[Option<usize>]) -> Vec<Option<T>> {
            rows.iter().map(|r| r.and_then(|r| v[r].clone())).collect()
        }
        match self {
            ColumnData::Float(v) => ColumnData::Float(pick(v, rows)),
            ColumnData::Int(v) => ColumnData::Int(pick(v, rows)),
            ColumnData::Categorical(c) => ColumnData::Categorical(CategoricalColumn {
                codes: pick(&c.codes, rows),
                dictionary: c.dictionary.clone(),
            }),
            ColumnData::Datetime(v) => ColumnData::Datetime(pick(v, rows)),
            ColumnData::Text(v) => ColumnData::Text(pick(v, rows)),
            ColumnData::Vector(c) => ColumnData::Vector(VectorColumn {
                dim: c.dim,
                values: pick(&c.values, rows),
            }),
            ColumnData::Key(v) => ColumnData::Key(pick(v, rows)),
        }
    }

    /// Gathers cells from several columns of the same dtype: `picks[i]` is
    /// `(source, row)` or `None` for a null. Categorical dictionaries are
    /// merged into their sorted union.
    pub fn gather(sources: &[&ColumnData], picks: &[Option<(usize, usize)>]) -> ColumnData {
        fn pick<T: Clone>(srcs: &[&[Option<T>]], picks: &[Option<(usize, usize)>]) -> Vec<Option<T>> {
            picks.iter().map(|p| p.and_then(|(s, r)| srcs[s][r].clone())).collect()
        }
        macro_rules! plain {
            ($variant:ident) => {{
                let srcs: Vec<&[_]> = sources
                    .iter()
                    .map(|c| match c {
                        ColumnData::$variant(v) => v.as_slice(),
                        _ => panic!("gather over mixed dtypes"),
                    })
                    .collect();
                ColumnData::$variant(pick(&srcs, picks))
            }};
        }
        match sources[0] {
            ColumnData::Float(_) => plain!(Float),
            ColumnData::Int(_) => plain!(Int),
            ColumnData::Datetime(_) => plain!(Datetime),
            ColumnData::Text(_) => plain!(Text),
            ColumnData::Key(_) => plain!(Key),
            ColumnData::Vector(first) => {
                let srcs: Vec<&[Option<Vec<f64>>]> = sources
                    .iter()
                    .map(|c| match c {
                        ColumnData::Vector(v) => v.values.as_slice(),
                        _ => panic!("gather over mixed dtypes"),
                    })
                    .collect();
                ColumnData::Vector(VectorColumn {
                    dim: first.dim,
                    values: pick(&srcs, picks),
                })
            }
            ColumnData::Categorical(_) => {
                let cats: Vec<&CategoricalColumn> = sources
                    .iter()
                    .map(|c| match c {
                        ColumnData::Categorical(c) => c,
                        _ => panic!("gather over mixed dtypes"),
                    })
                    .collect();
                let labels: Vec<Option<&str>> = picks
                    .iter()
                    .map(|p| p.and_then(|(s, r)| cats[s].codes[r].map(|code| cats[s].label(code))))
                    .collect();
                let dictionary: BTreeSet<&str> = cats.iter().flat_map(|c| c.dictionary.iter().map(String::as_str)).collect();
                let dictionary = dictionary.into_iter().map(str::to_string).collect();
                ColumnData::Categorical(
                    CategoricalColumn::with_dictionary(&labels, dictionary).expect("labels come from the union"),
                )
            }
        }
    }

    pub fn as_keys(&self) -> Option<&[Option<KeyValue>]> {
        match self {
            ColumnData::Key(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_floats(&self) -> Option<&[Option<f64>]> {
        match self {
            ColumnData::Float(v) => Some(v),
            _ => None,
        }
    }

    /// Numeric view of a float or int column.
    pub fn numeric(&self, row: usize) -> Option<f64> {
        match self {
            ColumnData::Float(v) => v[row],
            ColumnData::Int(v) => v[row].map(|x| x as f64),
            _ => None,
        }
    }

    /// Renders a cell as CSV text; nulls become the empty string.
    pub fn format_cell(&self, row: usize) -> String {
        match self {
            ColumnData::Float(v) => v[row].map(|x| x.to_string()).unwrap_or_default(),
            ColumnData::Int(v) => v[row].map(|x| x.to_string()).unwrap_or_default(),
            ColumnData::Categorical(c) => c.codes[row].map(|x| c.label(x).to_string()).unwrap_or_default(),
            ColumnData::Datetime(v) => v[row].map(|x| x.to_string()).unwrap_or_default(),
            ColumnData::Text(v) => v[row].clone().unwrap_or_default(),
            ColumnData::Vector(c) => c.values[row]
                .as_ref()
                .map(|x| serde_json::to_string(x).expect("finite floats serialize"))
                .unwrap_or_default(),
            ColumnData::Key(v) => v[row].as_ref().map(|k| k.to_string()).unwrap_or_default(),
        }
    }
}
