use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Direction, FeatureSpec, Hop};
use crate::error::{Error, Result};
use crate::rdb::{ColumnRef, DType, Database, TableSchema};

/// Column of the target table holding each instance's cutoff.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutoffColumnRef {
    pub table: String,
    pub column: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinSpec {
    /// Key on the already-joined side.
    pub left: ColumnRef,
    /// Key on the newly joined table.
    pub right: ColumnRef,
}

/// `right_table.time_column <= instance cutoff`, present whenever the joined
/// table is temporal. Instances without a cutoff pass every row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutoffPredicate {
    pub table: String,
    pub time_column: String,
}

/// One join step. Stages form a trie over spec paths: a stage extends its
/// parent stage (or the instances when `parent` is `None`) by one hop, so
/// specs sharing a path prefix share its stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub parent: Option<usize>,
    pub hop: Hop,
    pub join: JoinSpec,
    /// Reverse hops group child rows by the entry they were reached from.
    pub grouped: bool,
    pub cutoff_predicate: Option<CutoffPredicate>,
    /// Specs whose path ends at this stage.
    pub outputs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfsPlan {
    pub target_table: String,
    pub cutoff: Option<CutoffColumnRef>,
    pub specs: Vec<FeatureSpec>,
    pub stages: Vec<Stage>,
    /// Leaf stage per spec; `None` for the target's own columns.
    pub spec_stage: Vec<Option<usize>>,
    /// The target schema followed by one column per spec with a non-empty path.
    pub final_schema: TableSchema,
}

impl DfsPlan {
    /// Stage indices from the first hop to `leaf`.
    pub fn chain(&self, leaf: usize) -> Vec<usize> {
        let mut out = vec![leaf];
        while let Some(p) = self.stages[*out.last().expect("non-empty")].parent {
            out.push(p);
        }
        out.reverse();
        out
    }
}

fn mismatch(spec: &FeatureSpec, msg: impl std::fmt::Display) -> Error {
    Error::Schema(format!("feature `{}`: {msg}", spec.output_name))
}

/// Checks a spec against the schema and returns its output dtype.
fn check_spec(db: &Database, target: &str, spec: &FeatureSpec) -> Result<DType> {
    let mut table = target.to_string();
    for hop in &spec.path {
        if hop.from_table != table {
            return Err(mismatch(spec, format!("hop starts at `{}`, expected `{table}`", hop.from_table)));
        }
        let fk = db
            .table(&hop.via.table)?
            .schema
            .column(&hop.via.column)
            .filter(|c| c.dtype == DType::ForeignKey)
            .ok_or_else(|| mismatch(spec, format!("`{}` is not a foreign key", hop.via)))?;
        let parent = &fk.fk_target.as_ref().expect("fk has target").table;
        let (from, to) = match hop.direction {
            Direction::Forward => (&hop.via.table, parent),
            Direction::Reverse => (parent, &hop.via.table),
        };
        if from != &hop.from_table || to != &hop.to_table {
            return Err(mismatch(spec, format!("hop via `{}` does not join {from} to {to}", hop.via)));
        }
        table = hop.to_table.clone();
    }
    if spec.base_column.table != table {
        return Err(mismatch(spec, "base column is not on the last table of the path"));
    }
    let base = db
        .table(&table)?
        .schema
        .column(&spec.base_column.column)
        .ok_or_else(|| Error::unknown_column(&table, &spec.base_column.column))?;
    let reverse = spec.path.iter().filter(|h| h.direction == Direction::Reverse).count();
    if reverse != spec.aggregators.len() {
        return Err(mismatch(spec, "need exactly one aggregator per reverse hop"));
    }
    let mut dtype = base.dtype;
    for agg in &spec.aggregators {
        if !agg.accepts(dtype) {
            return Err(mismatch(spec, format!("{agg} does not accept {dtype}")));
        }
        dtype = agg.output_dtype(dtype);
    }
    if dtype != spec.dtype {
        return Err(mismatch(spec, format!("declared dtype {} but computes {dtype}", spec.dtype)));
    }
    Ok(dtype)
}

/// Compiles specs into a trie of join stages with cutoff predicates on every
/// temporal table reached.
pub fn compile_plan(db: &Database, target_table: &str, specs: &[FeatureSpec], cutoff: Option<CutoffColumnRef>) -> Result<DfsPlan> {
    let target = db.table(target_table)?;
    if let Some(c) = &cutoff {
        if c.table != target_table {
            return Err(Error::Config(format!("cutoff column must be on `{target_table}`, got `{}`", c.table)));
        }
        let spec = target
            .schema
            .column(&c.column)
            .ok_or_else(|| Error::unknown_column(&c.table, &c.column))?;
        if spec.dtype != DType::Datetime {
            return Err(Error::Config(format!("cutoff column `{}` is not a datetime", c.column)));
        }
    }
    let mut stages: Vec<Stage> = Vec::new();
    let mut index: HashMap<(Option<usize>, Hop), usize> = HashMap::new();
    let mut spec_stage = Vec::with_capacity(specs.len());
    let mut final_schema = target.schema.clone();
    for (i, spec) in specs.iter().enumerate() {
        check_spec(db, target_table, spec)?;
        let mut at: Option<usize> = None;
        for hop in &spec.path {
            let key = (at, hop.clone());
            let next = match index.get(&key) {
                Some(&s) => s,
                None => {
                    let to = db.table(&hop.to_table)?;
                    let (left, right) = match hop.direction {
                        Direction::Forward => {
                            let pk = to.schema.primary_key().expect("FK target has a PK");
                            (hop.via.clone(), ColumnRef::new(&hop.to_table, &to.schema.columns[pk].name))
                        }
                        Direction::Reverse => {
                            let from = db.table(&hop.from_table)?;
                            let pk = from.schema.primary_key().expect("FK target has a PK");
                            (ColumnRef::new(&hop.from_table, &from.schema.columns[pk].name), hop.via.clone())
                        }
                    };
                    let cutoff_predicate = to.schema.time_column().map(|tc| CutoffPredicate {
                        table: hop.to_table.clone(),
                        time_column: to.schema.columns[tc].name.clone(),
                    });
                    stages.push(Stage {
                        name: format!("s{}", stages.len() + 1),
                        parent: at,
                        hop: hop.clone(),
                        join: JoinSpec { left, right },
                        grouped: hop.direction == Direction::Reverse,
                        cutoff_predicate,
                        outputs: Vec::new(),
                    });
                    index.insert(key, stages.len() - 1);
                    stages.len() - 1
                }
            };
            at = Some(next);
        }
        if let Some(s) = at {
            stages[s].outputs.push(i);
            if final_schema.column(&spec.output_name).is_some() {
                return Err(mismatch(spec, "output name collides with an existing column"));
            }
            final_schema.columns.push(spec.output_column());
        }
        spec_stage.push(at);
    }
    Ok(DfsPlan {
        target_table: target_table.to_string(),
        cutoff,
        specs: specs.to_vec(),
        stages,
        spec_stage,
        final_schema,
    })
}
