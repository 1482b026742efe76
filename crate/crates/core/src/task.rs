//! Prediction tasks over a database: which cell is predicted, how instances
//! are split, and the labeled seeds handed to the sampler or DFS.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, NodeType, Provenance};
use crate::rdb::{ColumnData, DType, Database, KeyValue, Table, Timestamp};
use crate::sampler::{derive_seed, sample_negatives, LabelRef, LabelValue, Seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    EntityAttribute,
    RelationshipAttribute,
    ForeignKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningKind {
    Inductive,
    Transductive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Auc,
    Accuracy,
    Rmse,
    Mrr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitRule {
    /// Rows with timestamp `<= train_end` train, `<= val_end` validate, the
    /// rest test. Each cutoff is the row timestamp plus `cutoff_offset` ms.
    Temporal {
        train_end: Timestamp,
        val_end: Timestamp,
        #[serde(default)]
        cutoff_offset: i64,
    },
    /// Fixed row indices over a single database state. `cutoff` applies to
    /// every instance; without it, temporal target tables use row timestamps.
    Explicit {
        train: Vec<usize>,
        val: Vec<usize>,
        test: Vec<usize>,
        #[serde(default)]
        cutoff: Option<Timestamp>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub name: String,
    pub target_table: String,
    pub target_column: String,
    pub task_kind: TaskKind,
    pub learning_kind: LearningKind,
    pub metric: Metric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negatives_per_positive: Option<usize>,
    pub split_rule: SplitRule,
}

impl TaskSpec {
    /// Checks the task's internal consistency and its fit to `db`.
    pub fn check(&self, db: &Database) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("task `{}`: {msg}", self.name)));
        let fk = self.task_kind == TaskKind::ForeignKey;
        if (self.metric == Metric::Mrr) != fk {
            return bad("mrr is the metric of foreign_key tasks and only of them".into());
        }
        match self.negatives_per_positive {
            Some(0) => return bad("negatives_per_positive must be positive".into()),
            Some(_) if !fk => return bad("negatives_per_positive is only valid for foreign_key tasks".into()),
            None if fk => return bad("foreign_key tasks need negatives_per_positive".into()),
            _ => {}
        }
        let temporal = matches!(self.split_rule, SplitRule::Temporal { .. });
        if temporal != (self.learning_kind == LearningKind::Inductive) {
            return bad("inductive tasks use a temporal split rule, transductive tasks an explicit one".into());
        }
        if let SplitRule::Temporal { train_end, val_end, .. } = self.split_rule {
            if train_end > val_end {
                return bad(format!("train_end {train_end} is after val_end {val_end}"));
            }
        }
        let t = db.table(&self.target_table)?;
        let col = t
            .schema
            .column(&self.target_column)
            .ok_or_else(|| Error::unknown_column(&self.target_table, &self.target_column))?;
        match (self.task_kind, col.dtype) {
            (TaskKind::ForeignKey, DType::ForeignKey) => {}
            (TaskKind::ForeignKey, d) => return bad(format!("target column is {d}, not a foreign key")),
            (_, DType::PrimaryKey | DType::ForeignKey | DType::Vector) => {
                return bad(format!("cannot predict a {} column", col.dtype))
            }
            _ => {}
        }
        let numeric = matches!(col.dtype, DType::Int | DType::Float);
        if matches!(self.metric, Metric::Auc | Metric::Rmse) && !numeric {
            return bad(format!("{:?} needs a numeric target, found {}", self.metric, col.dtype));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitInstance {
    pub row: usize,
    pub cutoff: Option<Timestamp>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitSet {
    pub train: Vec<SplitInstance>,
    pub val: Vec<SplitInstance>,
    pub test: Vec<SplitInstance>,
}

impl SplitSet {
    pub fn get(&self, split: Split) -> &[SplitInstance] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Assigns instances to splits. Temporal rules skip rows whose target cell
/// is null; explicit rules pass indices through unchanged.
pub fn build_splits(db: &Database, spec: &TaskSpec) -> Result<SplitSet> {
    spec.check(db)?;
    let t = db.table(&spec.target_table)?;
    let target = t.column(&spec.target_column)?;
    match &spec.split_rule {
        SplitRule::Temporal {
            train_end,
            val_end,
            cutoff_offset,
        } => {
            let ts = t.timestamps().ok_or_else(|| {
                Error::Config(format!("temporal split on `{}`, which has no time column", spec.target_table))
            })?;
            let mut out = SplitSet::default();
            for (row, stamp) in ts.iter().enumerate() {
                let stamp = stamp.ok_or_else(|| Error::Data(format!("{}: row {row} has no timestamp", spec.target_table)))?;
                if target.is_null(row) {
                    continue;
                }
                let inst = SplitInstance {
                    row,
                    cutoff: Some(stamp + cutoff_offset),
                };
                if stamp <= *train_end {
                    out.train.push(inst);
                } else if stamp <= *val_end {
                    out.val.push(inst);
                } else {
                    out.test.push(inst);
                }
            }
            Ok(out)
        }
        SplitRule::Explicit { train, val, test, cutoff } => {
            let mut seen = HashSet::new();
            let ts = t.timestamps();
            let mut take = |rows: &[usize]| -> Result<Vec<SplitInstance>> {
                rows.iter()
                    .map(|&row| {
                        if row >= t.row_count {
                            return Err(Error::Config(format!("split row {row} out of range")));
                        }
                        if !seen.insert(row) {
                            return Err(Error::Config(format!("row {row} appears in more than one split")));
                        }
                        Ok(SplitInstance {
                            row,
                            cutoff: cutoff.or_else(|| ts.and_then(|ts| ts[row])),
                        })
                    })
                    .collect()
            };
            Ok(SplitSet {
                train: take(train)?,
                val: take(val)?,
                test: take(test)?,
            })
        }
    }
}

/// Seeds of one split. For foreign-key tasks `negatives[k]` lists the
/// negative parent rows of `seeds[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSeeds {
    pub split: Split,
    pub seeds: Vec<Seed>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negatives: Option<Vec<Vec<u32>>>,
}

pub fn seed_id(split: Split, row: usize) -> String {
    format!("{}:{row}", split.name())
}

fn label_of(col: &ColumnData, row: usize, parent_rows: Option<&std::collections::HashMap<&KeyValue, u32>>) -> Option<LabelValue> {
    match col {
        ColumnData::Int(v) => v[row].map(LabelValue::Int),
        ColumnData::Float(v) => v[row].map(LabelValue::Float),
        ColumnData::Categorical(c) => c.codes[row].map(|x| LabelValue::Text(c.label(x).to_string())),
        ColumnData::Datetime(v) => v[row].map(LabelValue::Int),
        ColumnData::Text(v) => v[row].clone().map(LabelValue::Text),
        ColumnData::Key(v) => {
            let key = v[row].as_ref()?;
            parent_rows?.get(key).map(|&p| LabelValue::Int(p as i64))
        }
        ColumnData::Vector(_) => None,
    }
}

fn parent_graph(parent: &Table) -> Result<HeteroGraph> {
    let mut g = HeteroGraph::new();
    g.add_node_type(NodeType {
        name: parent.name().to_string(),
        features: parent.clone(),
        provenance: Provenance::synthetic(parent.name()),
    })?;
    Ok(g)
}

/// Turns splits into seeds carrying their label. Seeds point at row `i` of
/// the target table (node type = table name). Foreign-key labels are the
/// referenced parent's row index; their negatives are parent rows that
/// exist at the seed's cutoff, drawn with a per-split RNG stream.
pub fn materialize_labels(db: &Database, spec: &TaskSpec, splits: &SplitSet, rng_seed: u64) -> Result<Vec<SplitSeeds>> {
    spec.check(db)?;
    let t = db.table(&spec.target_table)?;
    let col = t.column(&spec.target_column)?;
    let parent = match spec.task_kind {
        TaskKind::ForeignKey => {
            let target = t
                .schema
                .column(&spec.target_column)
                .and_then(|c| c.fk_target.clone())
                .expect("checked foreign key");
            Some(db.table(&target.table)?)
        }
        _ => None,
    };
    let parent_keys = parent
        .map(|p| {
            p.primary_key_values()
                .ok_or_else(|| Error::Schema(format!("`{}` has no primary key", p.name())))
                .map(|keys| {
                    keys.iter()
                        .enumerate()
                        .filter_map(|(i, k)| k.as_ref().map(|k| (k, i as u32)))
                        .collect::<std::collections::HashMap<_, _>>()
                })
        })
        .transpose()?;
    let graph = parent.map(parent_graph).transpose()?;

    let mut out = Vec::new();
    for (si, split) in Split::ALL.into_iter().enumerate() {
        let seeds = splits
            .get(split)
            .iter()
            .map(|inst| {
                let value = label_of(col, inst.row, parent_keys.as_ref()).ok_or_else(|| {
                    Error::Data(format!(
                        "{}.{}: row {} has no label",
                        spec.target_table, spec.target_column, inst.row
                    ))
                })?;
                Ok(Seed {
                    id: seed_id(split, inst.row),
                    node_type: spec.target_table.clone(),
                    node_index: inst.row as u32,
                    cutoff: inst.cutoff,
                    label_ref: Some(LabelRef {
                        column: spec.target_column.clone(),
                        value: Some(value),
                    }),
                })
            })
            .collect::<Result<Vec<Seed>>>()?;
        let negatives = match (&graph, parent, spec.negatives_per_positive) {
            (Some(g), Some(p), Some(k)) => {
                let positives: Vec<(Seed, u32)> = seeds
                    .iter()
                    .map(|s| {
                        let Some(LabelValue::Int(p)) = s.label_ref.as_ref().and_then(|l| l.value.clone()) else {
                            unreachable!("foreign-key labels are row indices")
                        };
                        (s.clone(), p as u32)
                    })
                    .collect();
                Some(sample_negatives(g, p.name(), &positives, k, derive_seed(rng_seed, si as u64), true)?)
            }
            _ => None,
        };
        out.push(SplitSeeds { split, seeds, negatives });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdb::{ColumnSpec, TableSchema};

    fn events(n: usize) -> Database {
        let mut db = Database::new("ev");
        db.add_table(
            Table::new(
                TableSchema::new(
                    "ev",
                    vec![
                        ColumnSpec::new("id", DType::PrimaryKey),
                        ColumnSpec::new("y", DType::Int),
                        ColumnSpec::time("ts"),
                    ],
                ),
                vec![
                    ColumnData::Key((0..n).map(|i| Some(KeyValue::Int(i as i64))).collect()),
                    ColumnData::Int((0..n).map(|i| Some((i % 2) as i64)).collect()),
                    ColumnData::Datetime((1..=n as i64).map(Some).collect()),
                ],
            )
            .unwrap(),
        )
        .unwrap();
        db
    }

    fn temporal(train_end: i64, val_end: i64) -> TaskSpec {
        TaskSpec {
            name: "t".into(),
            target_table: "ev".into(),
            target_column: "y".into(),
            task_kind: TaskKind::EntityAttribute,
            learning_kind: LearningKind::Inductive,
            metric: Metric::Auc,
            negatives_per_positive: None,
            split_rule: SplitRule::Temporal {
                train_end,
                val_end,
                cutoff_offset: 0,
            },
        }
    }

    #[test]
    fn ten_rows_split_seven_one_two() {
        let s = build_splits(&events(10), &temporal(7, 8)).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (7, 1, 2));
        assert_eq!(s.val[0], SplitInstance { row: 7, cutoff: Some(8) });
    }

    #[test]
    fn offset_moves_cutoffs_later() {
        let mut spec = temporal(7, 8);
        spec.split_rule = SplitRule::Temporal {
            train_end: 7,
            val_end: 8,
            cutoff_offset: 100,
        };
        let s = build_splits(&events(10), &spec).unwrap();
        assert!(s.train.iter().all(|i| i.cutoff == Some(i.row as i64 + 1 + 100)));
    }

    #[test]
    fn explicit_indices_pass_through() {
        let mut spec = temporal(0, 0);
        spec.learning_kind = LearningKind::Transductive;
        spec.split_rule = SplitRule::Explicit {
            train: vec![3, 1],
            val: vec![0],
            test: vec![9],
            cutoff: Some(50),
        };
        let s = build_splits(&events(10), &spec).unwrap();
        assert_eq!(s.train.iter().map(|i| i.row).collect::<Vec<_>>(), [3, 1]);
        assert_eq!(s.test[0].cutoff, Some(50));
        let SplitRule::Explicit { ref mut val, .. } = spec.split_rule else { unreachable!() };
        val.push(3);
        assert!(build_splits(&events(10), &spec).is_err());
    }

    #[test]
    fn inconsistent_specs_are_rejected() {
        let db = events(4);
        let mut spec = temporal(2, 1);
        assert!(build_splits(&db, &spec).is_err());
        spec = temporal(1, 2);
        spec.metric = Metric::Mrr;
        assert!(spec.check(&db).is_err());
        spec = temporal(1, 2);
        spec.negatives_per_positive = Some(3);
        assert!(spec.check(&db).is_err());
        spec = temporal(1, 2);
        spec.learning_kind = LearningKind::Transductive;
        assert!(spec.check(&db).is_err());
    }

    #[test]
    fn binary_labels_are_carried_verbatim() {
        let db = events(10);
        let spec = temporal(7, 8);
        let splits = build_splits(&db, &spec).unwrap();
        let seeds = materialize_labels(&db, &spec, &splits, 0).unwrap();
        assert_eq!(seeds.iter().map(|s| s.seeds.len()).sum::<usize>(), splits.len());
        let first = &seeds[0].seeds[1];
        assert_eq!(first.id, "train:1");
        assert_eq!(first.label_ref.as_ref().unwrap().value, Some(LabelValue::Int(1)));
    }
}
