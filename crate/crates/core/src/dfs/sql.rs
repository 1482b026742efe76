//! SQL text for a compiled plan: a chain of common table expressions that
//! mirrors the stage trie. Each stage CTE numbers its rows (`__e`) and keeps
//! the number of the entry it was reached from (`__p`) plus the instance
//! cutoff, so every aggregation groups per instance even when instances share
//! rows. Datetimes are expected as integer milliseconds and categoricals as
//! their labels.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{Aggregator, DfsPlan, Direction};
use crate::error::Result;
use crate::rdb::{DType, Database, TableSchema};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    #[default]
    Ansi,
}

fn q(ident: &str) -> String {
    format!("\"{}\"", ident.replace('"', "\"\""))
}

/// Deterministic row numbering: by parent entry, then every orderable column.
fn order_by(prefix: Option<&str>, alias: &str, schema: &TableSchema) -> String {
    let mut keys: Vec<String> = prefix.into_iter().map(str::to_string).collect();
    keys.extend(
        schema
            .columns
            .iter()
            .filter(|c| c.dtype != DType::Vector)
            .map(|c| format!("{alias}.{}", q(&c.name))),
    );
    if keys.is_empty() {
        String::new()
    } else {
        format!("ORDER BY {}", keys.join(", "))
    }
}

fn agg_expr(agg: Aggregator, value: &str) -> String {
    match agg {
        Aggregator::Count => "COUNT(*)".to_string(),
        Aggregator::Mean => format!("AVG(CAST({value} AS DOUBLE PRECISION))"),
        Aggregator::Min => format!("MIN({value})"),
        Aggregator::Max => format!("MAX({value})"),
        Aggregator::Mode => unreachable!("MODE is emitted as a ranked subquery"),
    }
}

/// Per-group mode of `value` over `source`, keyed by `__k`; ties go to the
/// smaller value.
fn mode_query(source: &str, value: &str, out: &str) -> String {
    format!(
        "SELECT \"__k\", {out} FROM (SELECT \"__p\" AS \"__k\", {value} AS {out}, \
         ROW_NUMBER() OVER (PARTITION BY \"__p\" ORDER BY COUNT(*) DESC, {value} ASC) AS \"__rn\" \
         FROM {source} WHERE {value} IS NOT NULL GROUP BY \"__p\", {value}) AS m WHERE \"__rn\" = 1"
    )
}

/// Emits a single `WITH ... SELECT` statement whose result equals
/// [`super::execute_plan`]'s output, row for row in target order. Vector
/// features are left out with a warning.
pub fn emit_sql(plan: &DfsPlan, db: &Database, dialect: Dialect) -> Result<String> {
    let Dialect::Ansi = dialect;
    let target = db.table(&plan.target_table)?;
    if plan.stages.is_empty() {
        return Ok(format!("SELECT * FROM {};\n", q(&plan.target_table)));
    }
    let target_schema = &target.schema;
    let mut ctes: Vec<(String, String)> = Vec::new();

    let cutoff = plan
        .cutoff
        .as_ref()
        .map_or("NULL".to_string(), |c| format!("t.{}", q(&c.column)));
    ctes.push((
        "__inst".into(),
        format!(
            "SELECT ROW_NUMBER() OVER ({}) AS \"__e\", NULL AS \"__p\", {cutoff} AS \"__cutoff\", t.* FROM {} AS t",
            order_by(None, "t", target_schema),
            q(&plan.target_table)
        ),
    ));
    let parent_cte = |parent: Option<usize>| parent.map_or("__inst".to_string(), |p| plan.stages[p].name.clone());

    for s in &plan.stages {
        let to = db.table(&s.hop.to_table)?;
        let mut sql = format!(
            "SELECT ROW_NUMBER() OVER ({}) AS \"__e\", p.\"__e\" AS \"__p\", p.\"__cutoff\" AS \"__cutoff\", c.* \
             FROM {} AS p JOIN {} AS c ON c.{} = p.{}",
            order_by(Some("p.\"__e\""), "c", &to.schema),
            q(&parent_cte(s.parent)),
            q(&s.hop.to_table),
            q(&s.join.right.column),
            q(&s.join.left.column),
        );
        if let Some(pred) = &s.cutoff_predicate {
            let ts = format!("c.{}", q(&pred.time_column));
            write!(sql, " WHERE ({ts} IS NULL OR p.\"__cutoff\" IS NULL OR {ts} <= p.\"__cutoff\")").unwrap();
        }
        ctes.push((s.name.clone(), sql));
    }

    // Aggregates over each leaf stage, one GROUP BY for all plain aggregators.
    let mut finals: Vec<usize> = Vec::new();
    for s in &plan.stages {
        let mut exprs = Vec::new();
        let mut modes = Vec::new();
        for &i in &s.outputs {
            let spec = &plan.specs[i];
            if spec.dtype == DType::Vector {
                log::warn!("SQL emission skips vector feature `{}`", spec.output_name);
                continue;
            }
            let value = q(&spec.base_column.column);
            let leaf_agg = match s.hop.direction {
                Direction::Forward => None,
                Direction::Reverse => Some(spec.aggregators[0]),
            };
            match leaf_agg {
                Some(Aggregator::Mode) => modes.push((i, value)),
                Some(agg) => exprs.push(format!("{} AS \"f{i}\"", agg_expr(agg, &value))),
                None => exprs.push(format!("MAX({value}) AS \"f{i}\"")),
            }
            finals.push(i);
        }
        if !exprs.is_empty() {
            let mut group = "\"__p\"".to_string();
            if s.hop.direction == Direction::Reverse {
                write!(group, ", {}", q(&s.hop.via.column)).unwrap();
            }
            ctes.push((
                format!("{}_agg", s.name),
                format!(
                    "SELECT \"__p\" AS \"__k\", {} FROM {} GROUP BY {group}",
                    exprs.join(", "),
                    q(&s.name)
                ),
            ));
        }
        for (i, value) in modes {
            ctes.push((format!("{}_mode{i}", s.name), mode_query(&q(&s.name), &value, &format!("\"f{i}\""))));
        }
    }

    // Each spec climbs from its leaf to the instances one level at a time.
    let mut columns: Vec<(String, String)> = Vec::new();
    for i in finals {
        let spec = &plan.specs[i];
        let chain = plan.chain(plan.spec_stage[i].expect("leaf stage"));
        let mut aggs = spec.aggregators.iter().copied();
        let mut prev = String::new();
        for (level, &st) in chain.iter().enumerate().rev() {
            let s = &plan.stages[st];
            let agg = match s.hop.direction {
                Direction::Forward => None,
                Direction::Reverse => aggs.next(),
            };
            let keyed = if level + 1 == chain.len() {
                if agg == Some(Aggregator::Mode) {
                    format!("{}_mode{i}", s.name)
                } else {
                    format!("{}_agg", s.name)
                }
            } else {
                let name = format!("f{i}_{level}_grp");
                let source = q(&prev);
                let body = match agg {
                    Some(Aggregator::Mode) => mode_query(&source, "\"v\"", &format!("\"f{i}\"")),
                    Some(a) => format!(
                        "SELECT \"__p\" AS \"__k\", {} AS \"f{i}\" FROM {source} GROUP BY \"__p\"",
                        agg_expr(a, "\"v\"")
                    ),
                    None => format!("SELECT \"__p\" AS \"__k\", MAX(\"v\") AS \"f{i}\" FROM {source} GROUP BY \"__p\""),
                };
                ctes.push((name.clone(), body));
                name
            };
            let value = if agg == Some(Aggregator::Count) {
                format!("COALESCE(a.\"f{i}\", 0)")
            } else {
                format!("a.\"f{i}\"")
            };
            let name = format!("f{i}_{level}");
            ctes.push((
                name.clone(),
                format!(
                    "SELECT p.\"__e\" AS \"__e\", p.\"__p\" AS \"__p\", {value} AS \"v\" FROM {} AS p LEFT JOIN {} AS a ON a.\"__k\" = p.\"__e\"",
                    q(&parent_cte(s.parent)),
                    q(&keyed)
                ),
            ));
            prev = name;
        }
        columns.push((prev, spec.output_name.clone()));
    }

    let mut select: Vec<String> = target_schema.columns.iter().map(|c| format!("i.{}", q(&c.name))).collect();
    // Scalar subqueries rather than joins: engines cap the tables per join.
    for (cte, name) in &columns {
        select.push(format!("(SELECT x.\"v\" FROM {} AS x WHERE x.\"__e\" = i.\"__e\") AS {}", q(cte), q(name)));
    }
    let mut out = String::from("WITH\n");
    let body: Vec<String> = ctes.iter().map(|(n, b)| format!("{} AS ({b})", q(n))).collect();
    out.push_str(&body.join(",\n"));
    write!(
        out,
        "\nSELECT {} FROM \"__inst\" AS i ORDER BY i.\"__e\";\n",
        select.join(", ")
    )
    .unwrap();
    Ok(out)
}
