//! Reference evaluation: one instance at a time, linear scans, no indexes.

use std::cmp::Ordering;

use super::{Aggregator, Direction, FeatureSpec};
use crate::error::{Error, Result};
use crate::rdb::{Database, Timestamp, Value};

fn visible(db: &Database, table: &str, row: usize, cutoff: Option<Timestamp>) -> Result<bool> {
    let t = db.table(table)?;
    Ok(match (t.timestamps().and_then(|ts| ts[row]), cutoff) {
        (Some(ts), Some(c)) => ts <= c,
        _ => true,
    })
}

fn aggregate(values: Vec<Value>, agg: Aggregator) -> Value {
    if agg == Aggregator::Count {
        return Value::Int(values.len() as i64);
    }
    let present: Vec<Value> = values.into_iter().filter(|v| !v.is_null()).collect();
    if present.is_empty() {
        return Value::Null;
    }
    match agg {
        Aggregator::Mean => {
            if let Value::Vector(first) = &present[0] {
                let mut sum = vec![0.0; first.len()];
                for v in &present {
                    if let Value::Vector(v) = v {
                        for (s, x) in sum.iter_mut().zip(v) {
                            *s += x;
                        }
                    }
                }
                let n = present.len() as f64;
                Value::Vector(sum.into_iter().map(|s| s / n).collect())
            } else {
                let sum: f64 = present.iter().filter_map(Value::as_f64).sum();
                Value::Float(sum / present.len() as f64)
            }
        }
        Aggregator::Min | Aggregator::Max => {
            if let Value::Vector(first) = &present[0] {
                let pick = |a: f64, b: f64| if agg == Aggregator::Min { a.min(b) } else { a.max(b) };
                let mut acc = first.clone();
                for v in &present[1..] {
                    if let Value::Vector(v) = v {
                        for (a, x) in acc.iter_mut().zip(v) {
                            *a = pick(*a, *x);
                        }
                    }
                }
                Value::Vector(acc)
            } else {
                let cmp = |a: &&Value, b: &&Value| a.total_cmp(b);
                let best = if agg == Aggregator::Min {
                    present.iter().min_by(cmp)
                } else {
                    present.iter().max_by(cmp)
                };
                best.cloned().unwrap_or(Value::Null)
            }
        }
        Aggregator::Mode => {
            let mut best: Option<(&Value, usize)> = None;
            for v in &present {
                let n = present.iter().filter(|w| *w == v).count();
                let better = match best {
                    None => true,
                    Some((b, bn)) => n > bn || (n == bn && v.total_cmp(b) == Ordering::Less),
                };
                if better {
                    best = Some((v, n));
                }
            }
            best.map_or(Value::Null, |(v, _)| v.clone())
        }
        Aggregator::Count => unreachable!(),
    }
}

fn eval(db: &Database, spec: &FeatureSpec, step: usize, table: &str, row: usize, cutoff: Option<Timestamp>) -> Result<Value> {
    let Some(hop) = spec.path.get(step) else {
        return Ok(db.table(table)?.column(&spec.base_column.column)?.get(row));
    };
    let here = db.table(table)?;
    match hop.direction {
        Direction::Forward => {
            let Value::Key(fk) = here.column(&hop.via.column)?.get(row) else {
                return Ok(Value::Null);
            };
            let parent = db.table(&hop.to_table)?;
            let pks = parent
                .primary_key_values()
                .ok_or_else(|| Error::Schema(format!("`{}` has no primary key", hop.to_table)))?;
            for (r, pk) in pks.iter().enumerate() {
                if pk.as_ref() == Some(&fk) {
                    if !visible(db, &hop.to_table, r, cutoff)? {
                        return Ok(Value::Null);
                    }
                    return eval(db, spec, step + 1, &hop.to_table, r, cutoff);
                }
            }
            Ok(Value::Null)
        }
        Direction::Reverse => {
            let pk = here
                .primary_key_values()
                .ok_or_else(|| Error::Schema(format!("`{table}` has no primary key")))?[row]
                .clone();
            let child = db.table(&hop.to_table)?;
            let fks = child.column(&hop.via.column)?;
            let mut values = Vec::new();
            for r in 0..child.row_count {
                let matches = pk.is_some() && fks.get(r) == pk.clone().map_or(Value::Null, Value::Key);
                if matches && visible(db, &hop.to_table, r, cutoff)? {
                    values.push(eval(db, spec, step + 1, &hop.to_table, r, cutoff)?);
                }
            }
            let inner_reverse = spec.path[step + 1..]
                .iter()
                .filter(|h| h.direction == Direction::Reverse)
                .count();
            Ok(aggregate(values, spec.aggregators[inner_reverse]))
        }
    }
}

/// Evaluates every spec for one target row by direct recursion over the
/// tables. Slow by design; used to check [`super::execute_plan`].
pub fn brute_force_dfs(
    db: &Database,
    target_table: &str,
    specs: &[FeatureSpec],
    row: usize,
    cutoff: Option<Timestamp>,
) -> Result<Vec<Value>> {
    let t = db.table(target_table)?;
    if row >= t.row_count {
        return Err(Error::Data(format!("row {row} out of range for `{target_table}`")));
    }
    specs.iter().map(|s| eval(db, s, 0, target_table, row, cutoff)).collect()
}
