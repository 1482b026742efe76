//! Deep feature synthesis with per-instance cutoffs.
//!
//! A [`FeatureSpec`] walks a path of FK hops from the target table to a base
//! column. Forward hops (FK to PK) follow a single parent row; reverse hops
//! (PK to FK) fan out to child rows and are collapsed by one aggregator each,
//! innermost first. Every row reached through a temporal table must have a
//! timestamp at or before the instance's cutoff; a parent row after the
//! cutoff behaves like a null FK.

mod exec;
mod oracle;
mod plan;
mod sql;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rdb::{ColumnRef, ColumnSpec, DType, Database};

pub use exec::{execute_instances, execute_plan, Instance};
pub use oracle::brute_force_dfs;
pub use plan::{compile_plan, CutoffColumnRef, CutoffPredicate, DfsPlan, JoinSpec, Stage};
pub use sql::{emit_sql, Dialect};

pub const DEFAULT_MAX_DEPTH: usize = 4;
pub const DEFAULT_MAX_FEATURES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Aggregator {
    Mean,
    Min,
    Max,
    Mode,
    Count,
}

impl Aggregator {
    /// Whether the aggregator accepts values of `dtype`.
    pub fn accepts(self, dtype: DType) -> bool {
        match self {
            Aggregator::Mean | Aggregator::Min | Aggregator::Max => {
                matches!(dtype, DType::Float | DType::Int | DType::Vector)
            }
            Aggregator::Mode => dtype == DType::Categorical,
            Aggregator::Count => true,
        }
    }

    pub fn output_dtype(self, input: DType) -> DType {
        match self {
            Aggregator::Mean => {
                if input == DType::Vector {
                    DType::Vector
                } else {
                    DType::Float
                }
            }
            Aggregator::Min | Aggregator::Max => input,
            Aggregator::Mode => DType::Categorical,
            Aggregator::Count => DType::Int,
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Aggregator::Mean => "MEAN",
            Aggregator::Min => "MIN",
            Aggregator::Max => "MAX",
            Aggregator::Mode => "MODE",
            Aggregator::Count => "COUNT",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// From the FK-holding table to the referenced table.
    Forward,
    /// From the referenced table to the FK-holding table.
    Reverse,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hop {
    pub from_table: String,
    pub to_table: String,
    /// The FK column realizing the hop; its table is the child side.
    pub via: ColumnRef,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub path: Vec<Hop>,
    pub base_column: ColumnRef,
    /// One per reverse hop, innermost (last reverse hop) first.
    pub aggregators: Vec<Aggregator>,
    pub output_name: String,
    pub dtype: DType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

impl FeatureSpec {
    pub fn depth(&self) -> usize {
        self.path.len()
    }

    pub fn output_column(&self) -> ColumnSpec {
        ColumnSpec {
            dim: self.dim,
            ..ColumnSpec::new(&self.output_name, self.dtype)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnumerateOptions {
    pub depth: usize,
    #[serde(default = "default_max_depth")]
    pub max_depth: usize,
    /// Enumeration stops after this many specs.
    #[serde(default = "default_max_features")]
    pub max_features: usize,
    /// Columns never used as a base value anywhere, e.g. the task label.
    #[serde(default)]
    pub exclude: Vec<ColumnRef>,
}

fn default_max_depth() -> usize {
    DEFAULT_MAX_DEPTH
}

fn default_max_features() -> usize {
    DEFAULT_MAX_FEATURES
}

impl EnumerateOptions {
    pub fn depth(depth: usize) -> Self {
        EnumerateOptions {
            depth,
            max_depth: DEFAULT_MAX_DEPTH,
            max_features: DEFAULT_MAX_FEATURES,
            exclude: Vec::new(),
        }
    }
}

/// A spec under construction, relative to the table it starts from.
struct Partial {
    path: Vec<Hop>,
    base: ColumnRef,
    aggregators: Vec<Aggregator>,
    name: String,
    dtype: DType,
    dim: Option<usize>,
}

struct Enumerator<'a> {
    db: &'a Database,
    exclude: HashSet<&'a ColumnRef>,
    /// (child table, fk column, parent table)
    relationships: Vec<(String, String, String)>,
}

const SPREAD: [Aggregator; 4] = [Aggregator::Mean, Aggregator::Min, Aggregator::Max, Aggregator::Mode];

impl Enumerator<'_> {
    fn fk_count(&self, child: &str, parent: &str) -> usize {
        self.relationships.iter().filter(|r| r.0 == child && r.2 == parent).count()
    }

    fn label(&self, table: &str, fk: &str, child: &str, parent: &str) -> String {
        if self.fk_count(child, parent) > 1 {
            format!("{table}[{fk}]")
        } else {
            table.to_string()
        }
    }

    /// Features of `table` using at most `depth` more hops; `came_via` is the
    /// FK of the previous hop, which may not be used again immediately.
    fn features_of(&self, table: &str, depth: usize, came_via: Option<&ColumnRef>) -> Vec<Partial> {
        let t = &self.db.tables[table];
        let mut out = Vec::new();
        for c in &t.schema.columns {
            let r = ColumnRef::new(table, &c.name);
            if c.dtype.is_key() || self.exclude.contains(&r) {
                continue;
            }
            out.push(Partial {
                path: Vec::new(),
                base: r,
                aggregators: Vec::new(),
                name: c.name.clone(),
                dtype: c.dtype,
                dim: c.dim,
            });
        }
        if depth == 0 {
            return out;
        }
        for (_, fk) in t.schema.foreign_keys() {
            let via = ColumnRef::new(table, &fk.name);
            if came_via == Some(&via) {
                continue;
            }
            let parent = &fk.fk_target.as_ref().expect("validated schema").table;
            let hop = Hop {
                from_table: table.to_string(),
                to_table: parent.clone(),
                via: via.clone(),
                direction: Direction::Forward,
            };
            let prefix = self.label(parent, &fk.name, table, parent);
            for sub in self.features_of(parent, depth - 1, Some(&via)) {
                let mut path = vec![hop.clone()];
                path.extend(sub.path);
                out.push(Partial {
                    path,
                    name: format!("{prefix}.{}", sub.name),
                    ..sub
                });
            }
        }
        for (child, fk, parent) in &self.relationships {
            if parent != table {
                continue;
            }
            let via = ColumnRef::new(child, fk);
            if came_via == Some(&via) {
                continue;
            }
            let hop = Hop {
                from_table: table.to_string(),
                to_table: child.clone(),
                via: via.clone(),
                direction: Direction::Reverse,
            };
            let prefix = self.label(child, fk, child, parent);
            out.push(Partial {
                path: vec![hop.clone()],
                base: via.clone(),
                aggregators: vec![Aggregator::Count],
                name: format!("COUNT({prefix})"),
                dtype: DType::Int,
                dim: None,
            });
            for sub in self.features_of(child, depth - 1, Some(&via)) {
                for agg in SPREAD {
                    if !agg.accepts(sub.dtype) {
                        continue;
                    }
                    let mut path = vec![hop.clone()];
                    path.extend(sub.path.iter().cloned());
                    let mut aggregators = sub.aggregators.clone();
                    aggregators.push(agg);
                    out.push(Partial {
                        path,
                        base: sub.base.clone(),
                        aggregators,
                        name: format!("{agg}({prefix}.{})", sub.name),
                        dtype: agg.output_dtype(sub.dtype),
                        dim: sub.dim,
                    });
                }
            }
        }
        out
    }
}

/// All dtype-compatible specs of `target_table` up to `depth` hops.
pub fn enumerate_features(db: &Database, target_table: &str, depth: usize) -> Result<Vec<FeatureSpec>> {
    enumerate_features_with(db, target_table, &EnumerateOptions::depth(depth))
}

pub fn enumerate_features_with(db: &Database, target_table: &str, options: &EnumerateOptions) -> Result<Vec<FeatureSpec>> {
    db.table(target_table)?;
    if options.depth > options.max_depth {
        return Err(Error::Config(format!(
            "DFS depth {} exceeds the maximum of {}",
            options.depth, options.max_depth
        )));
    }
    let e = Enumerator {
        db,
        exclude: options.exclude.iter().collect(),
        relationships: db
            .relationships()
            .into_iter()
            .map(|r| (r.child, r.fk_column, r.parent))
            .collect(),
    };
    let mut partials = e.features_of(target_table, options.depth, None);
    if partials.len() > options.max_features {
        log::warn!(
            "DFS enumeration produced {} features; keeping the first {}",
            partials.len(),
            options.max_features
        );
        partials.truncate(options.max_features);
    }
    let mut seen = HashSet::new();
    let specs: Vec<FeatureSpec> = partials
        .into_iter()
        .map(|p| FeatureSpec {
            path: p.path,
            base_column: p.base,
            aggregators: p.aggregators,
            output_name: p.name,
            dtype: p.dtype,
            dim: p.dim,
        })
        .collect();
    for s in &specs {
        if !seen.insert(s.output_name.as_str()) {
            return Err(Error::Schema(format!("duplicate feature name `{}`", s.output_name)));
        }
    }
    Ok(specs)
}
