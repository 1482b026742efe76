//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rowgraph::dfs::{brute_force_dfs, compile_plan, execute_instances, Aggregator, FeatureSpec, Instance};
use rowgraph::rdb::{ColumnData, Database, KeyValue, Table, Value};

/// Cell equality: exact, except MEAN-derived features which may differ by
/// `tol` from summation order.
pub fn cell_eq(a: &Value, b: &Value, spec: &FeatureSpec, tol: f64) -> bool {
    let mean = spec.aggregators.contains(&Aggregator::Mean);
    match (a, b) {
        (Value::Float(x), Value::Float(y)) if mean => (x - y).abs() <= tol,
        (Value::Vector(x), Value::Vector(y)) if mean => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| (p - q).abs() <= tol),
        _ => a == b,
    }
}

/// Number of (instance, spec) cells on which the engine and the oracle disagree.
pub fn oracle_mismatches(db: &Database, target: &str, specs: &[FeatureSpec], instances: &[Instance]) -> Vec<String> {
    let plan = compile_plan(db, target, specs, None).expect("plan");
    let out = execute_instances(&plan, db, instances).expect("execute");
    let mut bad = Vec::new();
    for (k, inst) in instances.iter().enumerate() {
        let expect = brute_force_dfs(db, target, specs, inst.row, inst.cutoff).expect("oracle");
        for (spec, want) in specs.iter().zip(&expect) {
            let got = out.column(&spec.output_name).expect("feature column").get(k);
            if !cell_eq(&got, want, spec, 1e-9) {
                bad.push(format!("{} row {} cutoff {:?}: got {got:?}, want {want:?}", spec.output_name, inst.row, inst.cutoff));
            }
        }
    }
    bad
}

/// Copies every table into an in-memory SQLite database. Keys become
/// integers or text, categoricals their labels, datetimes integer ms;
/// vector columns are left out.
pub fn sqlite_load(db: &Database) -> rusqlite::Connection {
    use rusqlite::types::Value as Sql;
    let conn = rusqlite::Connection::open_in_memory().expect("sqlite");
    for t in db.tables.values() {
        let cols: Vec<usize> = (0..t.columns.len()).filter(|&i| !matches!(t.columns[i], ColumnData::Vector(_))).collect();
        let names: Vec<String> = cols.iter().map(|&i| format!("\"{}\"", t.schema.columns[i].name)).collect();
        conn.execute(&format!("CREATE TABLE \"{}\" ({})", t.name(), names.join(", ")), []).expect("create");
        let marks = vec!["?"; cols.len()].join(", ");
        let mut stmt = conn
            .prepare(&format!("INSERT INTO \"{}\" VALUES ({marks})", t.name()))
            .expect("insert");
        for r in 0..t.row_count {
            let row: Vec<Sql> = cols.iter().map(|&i| to_sql(&t.columns[i], r)).collect();
            stmt.execute(rusqlite::params_from_iter(row)).expect("row");
        }
    }
    conn
}

fn to_sql(c: &ColumnData, r: usize) -> rusqlite::types::Value {
    use rusqlite::types::Value as Sql;
    match (c, c.get(r)) {
        (_, Value::Null) => Sql::Null,
        (ColumnData::Categorical(col), Value::Category(code)) => Sql::Text(col.label(code).to_string()),
        (_, Value::Float(v)) => Sql::Real(v),
        (_, Value::Int(v)) | (_, Value::Datetime(v)) | (_, Value::Key(KeyValue::Int(v))) => Sql::Integer(v),
        (_, Value::Text(s)) | (_, Value::Key(KeyValue::Str(s))) => Sql::Text(s),
        (_, v) => panic!("no SQL form for {v:?}"),
    }
}

/// The engine's cell rendered the way SQLite returns it.
pub fn expected_sql_cell(t: &Table, column: &str, row: usize) -> rusqlite::types::Value {
    to_sql(t.column(column).expect("column"), row)
}

pub fn run_sql(conn: &rusqlite::Connection, sql: &str) -> (Vec<String>, Vec<Vec<rusqlite::types::Value>>) {
    let mut stmt = conn.prepare(sql).unwrap_or_else(|e| panic!("{e}\n{sql}"));
    let names: Vec<String> = stmt.column_names().into_iter().map(str::to_string).collect();
    let n = names.len();
    let rows = stmt
        .query_map([], |row| (0..n).map(|i| row.get::<_, rusqlite::types::Value>(i)).collect())
        .expect("query")
        .collect::<Result<Vec<Vec<_>>, _>>()
        .expect("rows");
    (names, rows)
}

/// AUC by enumerating every positive-negative pair.
pub fn auc_pairwise(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0usize);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1;
                wins += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs as f64
}

/// MRR with the positive placed after every negative it does not beat,
/// by explicit sorting rather than counting.
pub fn mrr_by_sorting(queries: &[Vec<(f64, bool)>]) -> f64 {
    let mut total = 0.0;
    for q in queries {
        let mut c = q.clone();
        // descending score; among equal scores negatives come first
        c.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let rank = c.iter().position(|x| x.1).expect("one positive") + 1;
        total += 1.0 / rank as f64;
    }
    total / queries.len() as f64
}

pub fn pick_target(db: &Database, seed: u64) -> String {
    let names: Vec<&String> = db.tables.keys().collect();
    names[seed as usize % names.len()].clone()
}

pub fn random_instances(db: &Database, target: &str, seed: u64, n: usize) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = db.table(target).unwrap().row_count;
    (0..n)
        .map(|_| Instance {
            row: rng.gen_range(0..rows),
            cutoff: rng.gen_bool(0.8).then(|| rng.gen_range(-5..110)),
        })
        .collect()
}

/// Overwrites every cell of every row whose timestamp is after `cutoff`.
pub fn scramble_future(db: &Database, cutoff: i64, seed: u64) -> Database {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = db.clone();
    for t in out.tables.values_mut() {
        let Some(ts) = t.timestamps().map(|s| s.to_vec()) else { continue };
        let time_col = t.schema.time_column();
        for (r, stamp) in ts.iter().enumerate() {
            if stamp.is_some_and(|s| s > cutoff) {
                for (i, col) in t.columns.iter_mut().enumerate() {
                    match col {
                        ColumnData::Float(v) => v[r] = Some(rng.gen_range(-1e6..1e6)),
                        ColumnData::Int(v) => v[r] = Some(rng.gen_range(-1000..1000)),
                        ColumnData::Categorical(c) if !c.dictionary.is_empty() => {
                            c.codes[r] = Some(rng.gen_range(0..c.dictionary.len() as u32))
                        }
                        ColumnData::Datetime(v) if Some(i) == time_col => v[r] = Some(cutoff + rng.gen_range(1..50)),
                        _ => {}
                    }
                }
            }
        }
    }
    out
}
