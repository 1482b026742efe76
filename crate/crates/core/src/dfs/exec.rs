//! Plan execution over frames. A frame lists, for one stage, every
//! (instance, row) pair reached so far, grouped contiguously by the parent
//! frame entry it came from. Reverse hops look children up in an index sorted
//! by (parent, timestamp), so each instance's cutoff is a binary search into
//! its parent's run of children instead of a per-row filter.

use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;

use super::{Aggregator, DfsPlan, Direction};
use crate::error::{Error, Result};
use crate::rdb::{CategoricalColumn, ColumnData, ColumnRef, Database, KeyValue, Table, Timestamp, VectorColumn};

/// One row of the target table and the cutoff its features must respect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Instance {
    pub row: usize,
    pub cutoff: Option<Timestamp>,
}

struct Frame {
    inst: Vec<u32>,
    row: Vec<u32>,
    /// Entries of parent entry `e` are `offsets[e]..offsets[e + 1]`.
    offsets: Vec<usize>,
}

/// Children of each parent row, sorted by (timestamp, row); untimed first.
struct ChildIndex {
    offsets: Vec<usize>,
    rows: Vec<u32>,
    ts: Vec<Timestamp>,
}

fn pk_lookup(table: &Table) -> Result<HashMap<&KeyValue, u32>> {
    let keys = table
        .primary_key_values()
        .ok_or_else(|| Error::Schema(format!("table `{}` has no primary key", table.name())))?;
    Ok(keys
        .iter()
        .enumerate()
        .filter_map(|(i, k)| k.as_ref().map(|k| (k, i as u32)))
        .collect())
}

/// Parent row of every child row; `None` for null or dangling keys.
fn forward_index(db: &Database, via: &ColumnRef, parent: &str) -> Result<Vec<Option<u32>>> {
    let lookup = pk_lookup(db.table(parent)?)?;
    let keys = db
        .table(&via.table)?
        .column(&via.column)?
        .as_keys()
        .ok_or_else(|| Error::Schema(format!("`{via}` is not a key column")))?;
    Ok(keys.iter().map(|k| k.as_ref().and_then(|k| lookup.get(k).copied())).collect())
}

fn child_index(db: &Database, via: &ColumnRef, parent: &str) -> Result<ChildIndex> {
    let parents = forward_index(db, via, parent)?;
    let child = db.table(&via.table)?;
    let stamps = child.timestamps();
    let n_parent = db.table(parent)?.row_count;
    let ts_of = |r: usize| stamps.and_then(|t| t[r]).unwrap_or(Timestamp::MIN);
    let mut offsets = vec![0usize; n_parent + 1];
    for p in parents.iter().flatten() {
        offsets[*p as usize + 1] += 1;
    }
    for i in 0..n_parent {
        offsets[i + 1] += offsets[i];
    }
    let mut fill = offsets.clone();
    let mut rows = vec![0u32; offsets[n_parent]];
    for (r, p) in parents.iter().enumerate() {
        if let Some(p) = p {
            rows[fill[*p as usize]] = r as u32;
            fill[*p as usize] += 1;
        }
    }
    for p in 0..n_parent {
        rows[offsets[p]..offsets[p + 1]].sort_unstable_by_key(|&r| (ts_of(r as usize), r));
    }
    let ts = rows.iter().map(|&r| ts_of(r as usize)).collect();
    Ok(ChildIndex { offsets, rows, ts })
}

fn build_frames(plan: &DfsPlan, db: &Database, instances: &[Instance]) -> Result<Vec<Frame>> {
    let mut forward: HashMap<&ColumnRef, Vec<Option<u32>>> = HashMap::new();
    let mut reverse: HashMap<&ColumnRef, ChildIndex> = HashMap::new();
    for s in &plan.stages {
        let via = &s.hop.via;
        match s.hop.direction {
            Direction::Forward if !forward.contains_key(via) => {
                forward.insert(via, forward_index(db, via, &s.hop.to_table)?);
            }
            Direction::Reverse if !reverse.contains_key(via) => {
                reverse.insert(via, child_index(db, via, &s.hop.from_table)?);
            }
            _ => {}
        }
    }

    let root_inst: Vec<u32> = (0..instances.len() as u32).collect();
    let root_row: Vec<u32> = instances.iter().map(|i| i.row as u32).collect();
    let mut frames: Vec<Frame> = Vec::with_capacity(plan.stages.len());
    for s in &plan.stages {
        let (p_inst, p_row) = match s.parent {
            Some(p) => (&frames[p].inst, &frames[p].row),
            None => (&root_inst, &root_row),
        };
        let to = db.table(&s.hop.to_table)?;
        let stamps = if s.cutoff_predicate.is_some() { to.timestamps() } else { None };
        let mut frame = Frame {
            inst: Vec::new(),
            row: Vec::new(),
            offsets: Vec::with_capacity(p_inst.len() + 1),
        };
        frame.offsets.push(0);
        match s.hop.direction {
            Direction::Forward => {
                let idx = &forward[&s.hop.via];
                for (&inst, &row) in p_inst.iter().zip(p_row) {
                    if let Some(parent) = idx[row as usize] {
                        let cutoff = instances[inst as usize].cutoff;
                        let ts = stamps.and_then(|t| t[parent as usize]);
                        if !matches!((ts, cutoff), (Some(ts), Some(c)) if ts > c) {
                            frame.inst.push(inst);
                            frame.row.push(parent);
                        }
                    }
                    frame.offsets.push(frame.inst.len());
                }
            }
            Direction::Reverse => {
                let idx = &reverse[&s.hop.via];
                for (&inst, &row) in p_inst.iter().zip(p_row) {
                    let (lo, hi) = (idx.offsets[row as usize], idx.offsets[row as usize + 1]);
                    let end = match (stamps, instances[inst as usize].cutoff) {
                        (Some(_), Some(c)) => lo + idx.ts[lo..hi].partition_point(|&t| t <= c),
                        _ => hi,
                    };
                    frame.row.extend_from_slice(&idx.rows[lo..end]);
                    frame.inst.extend(std::iter::repeat_n(inst, end - lo));
                    frame.offsets.push(frame.inst.len());
                }
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

fn groups(offsets: &[usize]) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
    offsets.windows(2).map(|w| w[0]..w[1])
}

fn extreme(a: f64, b: f64, agg: Aggregator) -> f64 {
    match (a.total_cmp(&b), agg) {
        (Ordering::Greater, Aggregator::Min) | (Ordering::Less, Aggregator::Max) => b,
        _ => a,
    }
}

/// Collapses each group of `values` with `agg`. Empty groups give null
/// except for COUNT, which gives 0.
pub(crate) fn aggregate(values: &ColumnData, offsets: &[usize], agg: Aggregator) -> Result<ColumnData> {
    let unsupported = || Error::Schema(format!("{agg} over a {:?} column", std::mem::discriminant(values)));
    if agg == Aggregator::Count {
        return Ok(ColumnData::Int(groups(offsets).map(|g| Some(g.len() as i64)).collect()));
    }
    Ok(match (values, agg) {
        (ColumnData::Float(_) | ColumnData::Int(_), Aggregator::Mean) => ColumnData::Float(
            groups(offsets)
                .map(|g| {
                    let (mut sum, mut n) = (0.0, 0usize);
                    for i in g {
                        if let Some(v) = values.numeric(i) {
                            sum += v;
                            n += 1;
                        }
                    }
                    (n > 0).then(|| sum / n as f64)
                })
                .collect(),
        ),
        (ColumnData::Float(v), Aggregator::Min | Aggregator::Max) => ColumnData::Float(
            groups(offsets)
                .map(|g| v[g].iter().flatten().copied().reduce(|a, b| extreme(a, b, agg)))
                .collect(),
        ),
        (ColumnData::Int(v), Aggregator::Min) => {
            ColumnData::Int(groups(offsets).map(|g| v[g].iter().flatten().copied().min()).collect())
        }
        (ColumnData::Int(v), Aggregator::Max) => {
            ColumnData::Int(groups(offsets).map(|g| v[g].iter().flatten().copied().max()).collect())
        }
        (ColumnData::Vector(c), Aggregator::Mean | Aggregator::Min | Aggregator::Max) => {
            let values = groups(offsets)
                .map(|g| {
                    let mut present = c.values[g].iter().flatten();
                    let first = present.next()?.clone();
                    let mut n = 1.0;
                    let acc = present.fold(first, |mut acc, x| {
                        for (a, b) in acc.iter_mut().zip(x) {
                            *a = if agg == Aggregator::Mean { *a + b } else { extreme(*a, *b, agg) };
                        }
                        n += 1.0;
                        acc
                    });
                    Some(if agg == Aggregator::Mean {
                        acc.into_iter().map(|a| a / n).collect()
                    } else {
                        acc
                    })
                })
                .collect();
            ColumnData::Vector(VectorColumn { dim: c.dim, values })
        }
        (ColumnData::Categorical(c), Aggregator::Mode) => {
            let mut scratch: Vec<u32> = Vec::new();
            let codes = groups(offsets)
                .map(|g| {
                    scratch.clear();
                    scratch.extend(c.codes[g].iter().flatten());
                    scratch.sort_unstable();
                    let mut best: Option<(u32, usize)> = None;
                    for run in scratch.chunk_by(|a, b| a == b) {
                        if best.is_none_or(|(_, n)| run.len() > n) {
                            best = Some((run[0], run.len()));
                        }
                    }
                    best.map(|(code, _)| code)
                })
                .collect();
            ColumnData::Categorical(CategoricalColumn {
                codes,
                dictionary: c.dictionary.clone(),
            })
        }
        _ => return Err(unsupported()),
    })
}

fn spec_values(plan: &DfsPlan, db: &Database, frames: &[Frame], spec: usize, leaf: usize) -> Result<ColumnData> {
    let s = &plan.specs[spec];
    let base = db.table(&s.base_column.table)?.column(&s.base_column.column)?;
    let rows: Vec<usize> = frames[leaf].row.iter().map(|&r| r as usize).collect();
    let mut values = base.take(&rows);
    let mut aggs = s.aggregators.iter();
    for &st in plan.chain(leaf).iter().rev() {
        let offsets = &frames[st].offsets;
        values = match plan.stages[st].hop.direction {
            Direction::Forward => {
                let picks: Vec<Option<usize>> = groups(offsets).map(|g| (!g.is_empty()).then_some(g.start)).collect();
                values.take_opt(&picks)
            }
            Direction::Reverse => {
                let agg = *aggs.next().expect("checked at compile time");
                aggregate(&values, offsets, agg)?
            }
        };
    }
    Ok(values)
}

/// Computes the plan's features for explicit instances; output row `k`
/// corresponds to `instances[k]`.
pub fn execute_instances(plan: &DfsPlan, db: &Database, instances: &[Instance]) -> Result<Table> {
    let target = db.table(&plan.target_table)?;
    if let Some(bad) = instances.iter().find(|i| i.row >= target.row_count) {
        return Err(Error::Data(format!("instance row {} out of range", bad.row)));
    }
    let frames = build_frames(plan, db, instances)?;
    let columns: Vec<(usize, ColumnData)> = plan
        .spec_stage
        .par_iter()
        .enumerate()
        .filter_map(|(i, leaf)| leaf.map(|leaf| (i, leaf)))
        .map(|(i, leaf)| spec_values(plan, db, &frames, i, leaf).map(|v| (i, v)))
        .collect::<Result<_>>()?;
    let rows: Vec<usize> = instances.iter().map(|i| i.row).collect();
    let mut out = target.take(&rows);
    for (i, data) in columns {
        out.push_column(plan.specs[i].output_column(), data)?;
    }
    Ok(out)
}

/// Computes features for every target row, taking cutoffs from the plan's
/// cutoff column.
pub fn execute_plan(plan: &DfsPlan, db: &Database) -> Result<Table> {
    let target = db.table(&plan.target_table)?;
    let cutoffs: Vec<Option<Timestamp>> = match &plan.cutoff {
        Some(c) => match target.column(&c.column)? {
            ColumnData::Datetime(v) => v.clone(),
            _ => return Err(Error::Config(format!("cutoff column `{}` is not a datetime", c.column))),
        },
        None => vec![None; target.row_count],
    };
    if plan.cutoff.is_some() {
        if let Some(r) = cutoffs.iter().position(Option::is_none) {
            return Err(Error::Data(format!("{}: null cutoff at row {r}", plan.target_table)));
        }
    }
    let instances: Vec<Instance> = cutoffs
        .into_iter()
        .enumerate()
        .map(|(row, cutoff)| Instance { row, cutoff })
        .collect();
    execute_instances(plan, db, &instances)
}
