//! Seeded synthetic data: random relational fixtures, random heterogeneous
//! graphs, and a customer/order/product database with a planted label.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{EdgeKey, EdgeType, HeteroGraph, NodeType, Provenance};
use crate::rdb::{CategoricalColumn, ColumnData, ColumnSpec, DType, Database, KeyValue, Table, TableSchema, Timestamp, VectorColumn};

const CATEGORIES: [&str; 4] = ["a", "b", "c", "d"];
const DAY_MS: i64 = 86_400_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomDbOptions {
    /// At least two tables are generated.
    pub max_tables: usize,
    /// Upper bound on the row count summed over all tables.
    pub max_rows: usize,
    /// Tables get a time column with this probability.
    pub temporal_fraction: f64,
    /// Fraction of nullable cells set to null.
    pub null_fraction: f64,
    pub vectors: bool,
}

impl Default for RandomDbOptions {
    fn default() -> Self {
        RandomDbOptions {
            max_tables: 5,
            max_rows: 1000,
            temporal_fraction: 0.8,
            null_fraction: 0.1,
            vectors: false,
        }
    }
}

fn maybe<T>(rng: &mut ChaCha8Rng, p_null: f64, v: T) -> Option<T> {
    (!rng.gen_bool(p_null)).then_some(v)
}

/// Tables `t0..tn` with PK `id`. Table `i > 0` holds one or two FKs to
/// earlier tables (possibly the same one twice), so the schema is acyclic but
/// may reach a table along several paths.
pub fn random_database(seed: u64, options: &RandomDbOptions) -> Database {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_tables = rng.gen_range(2..=options.max_tables.max(2));
    let per_table = (options.max_rows / n_tables).max(1);
    let p = options.null_fraction;
    let mut db = Database::new(format!("random-{seed}"));
    let mut sizes: Vec<usize> = Vec::new();
    for t in 0..n_tables {
        let rows = rng.gen_range(1..=per_table);
        let name = format!("t{t}");
        let mut specs = vec![ColumnSpec::new("id", DType::PrimaryKey)];
        // Keys are offset so row numbers and key values differ.
        let mut cols = vec![ColumnData::Key((0..rows).map(|r| Some(KeyValue::Int(r as i64 * 7 + 3))).collect())];
        if t > 0 {
            for f in 0..rng.gen_range(1..=2) {
                let parent = rng.gen_range(0..t);
                let n = sizes[parent];
                specs.push(ColumnSpec::foreign_key(format!("fk{f}"), format!("t{parent}"), "id"));
                cols.push(ColumnData::Key(
                    (0..rows)
                        .map(|_| {
                            let r = rng.gen_range(0..n) as i64;
                            maybe(&mut rng, p, KeyValue::Int(r * 7 + 3))
                        })
                        .collect(),
                ));
            }
        }
        specs.push(ColumnSpec::new("f", DType::Float));
        cols.push(ColumnData::Float(
            (0..rows)
                .map(|_| {
                    let v = (rng.gen_range(-100.0f64..100.0) * 8.0).round() / 8.0;
                    maybe(&mut rng, p, v)
                })
                .collect(),
        ));
        if rng.gen_bool(0.5) {
            specs.push(ColumnSpec::new("n", DType::Int));
            cols.push(ColumnData::Int(
                (0..rows)
                    .map(|_| {
                        let v = rng.gen_range(-5..5);
                        maybe(&mut rng, p, v)
                    })
                    .collect(),
            ));
        }
        if rng.gen_bool(0.7) {
            let values: Vec<Option<&str>> = (0..rows)
                .map(|_| {
                    let c = CATEGORIES[rng.gen_range(0..CATEGORIES.len())];
                    maybe(&mut rng, p, c)
                })
                .collect();
            specs.push(ColumnSpec::new("k", DType::Categorical));
            cols.push(ColumnData::Categorical(CategoricalColumn::from_strings(&values)));
        }
        if options.vectors && rng.gen_bool(0.3) {
            specs.push(ColumnSpec::vector("v", 2));
            cols.push(ColumnData::Vector(VectorColumn {
                dim: 2,
                values: (0..rows)
                    .map(|_| {
                        let v = vec![rng.gen_range(-4..4) as f64, rng.gen_range(-4..4) as f64];
                        maybe(&mut rng, p, v)
                    })
                    .collect(),
            }));
        }
        if rng.gen_bool(options.temporal_fraction) {
            specs.push(ColumnSpec::time("ts"));
            cols.push(ColumnData::Datetime((0..rows).map(|_| Some(rng.gen_range(0..100))).collect()));
        }
        db.add_table(Table::new(TableSchema::new(name, specs), cols).expect("consistent columns"))
            .expect("unique names");
        sizes.push(rows);
    }
    db
}

fn feature_table(rng: &mut ChaCha8Rng, name: &str, n: usize) -> Table {
    let mut specs = vec![ColumnSpec::new("x", DType::Float)];
    let x = (0..n)
        .map(|_| {
            let v = rng.gen_range(0..50) as f64 / 4.0;
            maybe(rng, 0.1, v)
        })
        .collect();
    let mut cols = vec![ColumnData::Float(x)];
    if rng.gen_bool(0.5) {
        let values: Vec<Option<&str>> = (0..n)
            .map(|_| {
                let c = CATEGORIES[rng.gen_range(0..CATEGORIES.len())];
                maybe(rng, 0.1, c)
            })
            .collect();
        specs.push(ColumnSpec::new("c", DType::Categorical));
        cols.push(ColumnData::Categorical(CategoricalColumn::from_strings(&values)));
    }
    if rng.gen_bool(0.3) {
        specs.push(ColumnSpec::time("t"));
        cols.push(ColumnData::Datetime((0..n).map(|_| Some(rng.gen_range(0..1000))).collect()));
    }
    Table::new(TableSchema::new(name, specs), cols).expect("consistent columns")
}

/// A graph with 1-4 node types and up to `max_nodes` nodes in total. Edge
/// types have no parallel edges and some carry features; `reverse` adds the
/// reverse of every edge type.
pub fn random_hetero_graph(seed: u64, max_nodes: usize, reverse: bool) -> HeteroGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_types = rng.gen_range(1..=4usize);
    let per_type = (max_nodes / n_types).max(1);
    let mut g = HeteroGraph::new();
    for t in 0..n_types {
        let name = format!("N{t}");
        let n = rng.gen_range(1..=per_type);
        let features = feature_table(&mut rng, &name, n);
        g.add_node_type(NodeType {
            name: name.clone(),
            features,
            provenance: Provenance::synthetic(&name),
        })
        .expect("fresh type");
    }
    let n_rel = rng.gen_range(1..=4usize);
    let mut forward = Vec::new();
    for r in 0..n_rel {
        let s = rng.gen_range(0..n_types);
        let d = rng.gen_range(0..n_types);
        let (ns, nd) = (g.node_types[s].count(), g.node_types[d].count());
        let mut pairs: Vec<(u32, u32)> = (0..ns as u32).flat_map(|a| (0..nd as u32).map(move |b| (a, b))).collect();
        pairs.shuffle(&mut rng);
        pairs.truncate(rng.gen_range(0..=pairs.len().min(3 * (ns + nd))));
        let relation = format!("r{r}");
        let features = rng.gen_bool(0.5).then(|| {
            let vals = (0..pairs.len())
                .map(|_| {
                    let v = rng.gen_range(0..9) as f64;
                    maybe(&mut rng, 0.1, v)
                })
                .collect();
            Table::new(TableSchema::new(&relation, vec![ColumnSpec::new("w", DType::Float)]), vec![ColumnData::Float(vals)])
                .expect("consistent columns")
        });
        let idx = g
            .add_edge_type(EdgeType {
                key: EdgeKey::new(&g.node_types[s].name, &relation, &g.node_types[d].name),
                src: pairs.iter().map(|p| p.0).collect(),
                dst: pairs.iter().map(|p| p.1).collect(),
                features,
                reverse_of: None,
                provenance: Provenance::synthetic(&relation),
            })
            .expect("valid edges");
        forward.push(idx);
    }
    if reverse {
        for idx in forward {
            g.add_reverse(idx).expect("forward type");
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommerceOptions {
    pub customers: usize,
    pub products: usize,
    pub orders: usize,
    pub seed: u64,
    /// First order timestamp; orders span one year from here.
    #[serde(default = "default_start")]
    pub start: Timestamp,
}

fn default_start() -> Timestamp {
    // 2024-01-01T00:00:00Z
    1_704_067_200_000
}

impl CommerceOptions {
    pub fn new(customers: usize, products: usize, orders: usize, seed: u64) -> Self {
        CommerceOptions {
            customers,
            products,
            orders,
            seed,
            start: default_start(),
        }
    }
}

/// `customer(id, age, segment, label)`, `product(id, price, category)` and
/// `orders(id, customer, product, quantity, ts)`. `label` is 1 when the mean
/// price of the products a customer ordered exceeds the median of that mean
/// over customers, so it is a function of a two-hop aggregate and independent
/// of everything within one hop. Every customer has at least one order.
pub fn commerce_database(options: &CommerceOptions) -> Database {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let (nc, np) = (options.customers.max(1), options.products.max(1));
    let no = options.orders.max(nc);

    let price: Vec<f64> = (0..np).map(|_| (rng.gen_range(1.0f64..100.0) * 100.0).round() / 100.0).collect();
    let category: Vec<Option<&str>> = (0..np).map(|_| Some(CATEGORIES[rng.gen_range(0..CATEGORIES.len())])).collect();

    let mut customer_of: Vec<usize> = (0..nc).collect();
    customer_of.extend((nc..no).map(|_| rng.gen_range(0..nc)));
    customer_of.shuffle(&mut rng);
    let product_of: Vec<usize> = (0..no).map(|_| rng.gen_range(0..np)).collect();
    let quantity: Vec<i64> = (0..no).map(|_| rng.gen_range(1..=5)).collect();
    let ts: Vec<Timestamp> = (0..no).map(|_| options.start + rng.gen_range(0..365 * DAY_MS)).collect();

    let mut sum = vec![0.0; nc];
    let mut count = vec![0usize; nc];
    for o in 0..no {
        sum[customer_of[o]] += price[product_of[o]];
        count[customer_of[o]] += 1;
    }
    let mean: Vec<f64> = sum.iter().zip(&count).map(|(s, &n)| s / n as f64).collect();
    let mut sorted = mean.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[nc / 2];
    let label: Vec<Option<i64>> = mean.iter().map(|&m| Some((m > median) as i64)).collect();
    let segment: Vec<Option<&str>> = (0..nc).map(|_| Some(CATEGORIES[rng.gen_range(0..CATEGORIES.len())])).collect();
    let age: Vec<Option<f64>> = (0..nc).map(|_| Some(rng.gen_range(18..80) as f64)).collect();

    let keys = |n: usize| ColumnData::Key((0..n).map(|i| Some(KeyValue::Int(i as i64))).collect());
    let refs = |v: &[usize]| ColumnData::Key(v.iter().map(|&i| Some(KeyValue::Int(i as i64))).collect());
    let mut db = Database::new("commerce");
    let tables = [
        Table::new(
            TableSchema::new(
                "customer",
                vec![
                    ColumnSpec::new("id", DType::PrimaryKey),
                    ColumnSpec::new("age", DType::Float),
                    ColumnSpec::new("segment", DType::Categorical),
                    ColumnSpec::new("label", DType::Int),
                ],
            ),
            vec![
                keys(nc),
                ColumnData::Float(age),
                ColumnData::Categorical(CategoricalColumn::from_strings(&segment)),
                ColumnData::Int(label),
            ],
        ),
        Table::new(
            TableSchema::new(
                "product",
                vec![
                    ColumnSpec::new("id", DType::PrimaryKey),
                    ColumnSpec::new("price", DType::Float),
                    ColumnSpec::new("category", DType::Categorical),
                ],
            ),
            vec![
                keys(np),
                ColumnData::Float(price.into_iter().map(Some).collect()),
                ColumnData::Categorical(CategoricalColumn::from_strings(&category)),
            ],
        ),
        Table::new(
            TableSchema::new(
                "orders",
                vec![
                    ColumnSpec::new("id", DType::PrimaryKey),
                    ColumnSpec::foreign_key("customer", "customer", "id"),
                    ColumnSpec::foreign_key("product", "product", "id"),
                    ColumnSpec::new("quantity", DType::Int),
                    ColumnSpec::time("ts"),
                ],
            ),
            vec![
                keys(no),
                refs(&customer_of),
                refs(&product_of),
                ColumnData::Int(quantity.into_iter().map(Some).collect()),
                ColumnData::Datetime(ts.into_iter().map(Some).collect()),
            ],
        ),
    ];
    for t in tables {
        db.add_table(t.expect("consistent columns")).expect("unique names");
    }
    db
}
