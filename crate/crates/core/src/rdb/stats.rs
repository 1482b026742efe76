use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ColumnData, Database, Timestamp};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalStats {
    pub cardinality: usize,
    /// Most frequent value; ties go to the smallest code.
    pub top: String,
    pub top_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatetimeStats {
    pub min: Timestamp,
    pub max: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub count: usize,
    pub null_count: usize,
    pub numeric: Option<NumericStats>,
    pub categorical: Option<CategoricalStats>,
    pub datetime: Option<DatetimeStats>,
}

pub(crate) fn numeric_stats(values: impl Iterator<Item = f64> + Clone) -> Option<NumericStats> {
    let n = values.clone().count();
    if n == 0 {
        return None;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.clone().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let min = values.clone().fold(f64::INFINITY, f64::min);
    let max = values.fold(f64::NEG_INFINITY, f64::max);
    Some(NumericStats {
        mean,
        std: var.sqrt(),
        min,
        max,
    })
}

pub fn column_statistics(db: &Database, table: &str, column: &str) -> Result<ColumnStats> {
    let data = db.table(table)?.column(column)?;
    let count = data.len();
    let null_count = data.null_count();
    let mut stats = ColumnStats {
        count,
        null_count,
        numeric: None,
        categorical: None,
        datetime: None,
    };
    match data {
        ColumnData::Float(v) => stats.numeric = numeric_stats(v.iter().flatten().copied()),
        ColumnData::Int(v) => stats.numeric = numeric_stats(v.iter().flatten().map(|&x| x as f64)),
        ColumnData::Datetime(v) => {
            let min = v.iter().flatten().min();
            let max = v.iter().flatten().max();
            if let (Some(&min), Some(&max)) = (min, max) {
                stats.datetime = Some(DatetimeStats { min, max });
            }
        }
        ColumnData::Categorical(c) => {
            let mut counts: HashMap<u32, usize> = HashMap::new();
            for code in c.codes.iter().flatten() {
                *counts.entry(*code).or_default() += 1;
            }
            if let Some((&code, &top_count)) = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) {
                stats.categorical = Some(CategoricalStats {
                    cardinality: counts.len(),
                    top: c.label(code).to_string(),
                    top_count,
                });
            }
        }
        _ => {}
    }
    Ok(stats)
}
