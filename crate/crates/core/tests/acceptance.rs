//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Runs under `cargo test` with its own harness.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rowgraph::dfs::{
    brute_force_dfs, compile_plan, enumerate_features, enumerate_features_with, execute_instances, EnumerateOptions, Instance,
};
use rowgraph::graph::{
    canonical_form, encode_graph_as_table, normalize_2nf, row2node, row2nve, star_expand, HeteroGraph,
};
use rowgraph::metrics::{auc, mrr, rmse};
use rowgraph::rdb::{ColumnData, ColumnRef, Database, KeyValue, Table, Timestamp};
use rowgraph::sampler::{audit_batch, export_batches, ExportOptions, FanoutPlan, LabelRef, LabelValue, Sampler, Seed, SubgraphBatch};
use rowgraph::synth::{commerce_database, random_database, random_hetero_graph, CommerceOptions, RandomDbOptions};

use common::{auc_pairwise, cell_eq, oracle_mismatches, pick_target, random_instances, scramble_future};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

fn run(name: &str, budget: Option<Duration>, f: fn() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let took = start.elapsed();
    let outcome = match (outcome, budget) {
        (Ok(d), Some(b)) if took > b => Err(format!("{d}; over the {:.0}s budget", b.as_secs_f64())),
        (o, _) => o,
    };
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("{tag}  {name:<18} {:>7.2}s  {detail}", took.as_secs_f64());
    outcome.is_ok()
}

fn main() {
    let criteria: [(&str, Option<u64>, fn() -> Check); 7] = [
        ("graph-roundtrip", Some(5), graph_roundtrip),
        ("dfs-oracle", Some(60), dfs_oracle),
        ("leakage", None, leakage),
        ("sampler", None, sampler),
        ("metrics", None, metrics),
        ("baseline-trend", Some(120), baseline_trend),
        ("dfs-throughput", Some(60), dfs_throughput),
    ];
    let mut failed = 0;
    for (name, budget, f) in criteria {
        if !run(name, budget.map(Duration::from_secs), f) {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

// ---------------------------------------------------------------------------

/// Graph -> single table -> 2NF -> row2nve is the identity; row2node adds a
/// node type per edge table; star expansion of the row2nve graph equals it.
fn graph_roundtrip() -> Check {
    let mut extra_types = 0;
    for seed in 0..20u64 {
        let reverse = seed % 2 == 0;
        let g = random_hetero_graph(seed, 100, reverse);
        ensure!(g.num_nodes() <= 100, "seed {seed}: {} nodes", g.num_nodes());
        let norm = normalize_2nf(&encode_graph_as_table(&g).map_err(e)?).map_err(e)?;
        let nve = row2nve(&norm, reverse).map_err(e)?;
        ensure!(canonical_form(&nve) == canonical_form(&g), "seed {seed}: row2nve round trip differs");

        let edge_tables = norm.tables.values().filter(|t| t.schema.primary_key().is_none()).count();
        let forward = g.edge_types.iter().filter(|t| t.reverse_of.is_none()).count();
        ensure!(edge_tables == forward, "seed {seed}: {edge_tables} edge tables for {forward} relations");
        let node = row2node(&norm, reverse).map_err(e)?;
        ensure!(
            node.node_types.len() == nve.node_types.len() + edge_tables,
            "seed {seed}: row2node has {} node types, row2nve {} plus {edge_tables} edge tables",
            node.node_types.len(),
            nve.node_types.len()
        );
        extra_types += edge_tables;
        let star = star_expand(&nve).map_err(e)?;
        ensure!(canonical_form(&star) == canonical_form(&node), "seed {seed}: star expansion differs from row2node");
    }
    Ok(format!("20 graphs, {extra_types} edge tables"))
}

// ---------------------------------------------------------------------------

fn dfs_oracle() -> Check {
    let mut cells = 0usize;
    let mut per_depth = [0usize; 4];
    for seed in 0..100u64 {
        let opts = RandomDbOptions {
            max_tables: 5,
            max_rows: 1000,
            vectors: seed % 4 == 0,
            ..Default::default()
        };
        let db = random_database(seed, &opts);
        ensure!(db.tables.values().any(|t| t.timestamps().is_some()), "fixture {seed} has no temporal table");
        let target = pick_target(&db, seed);
        let depth = 1 + (seed % 3) as usize;
        let specs = enumerate_features(&db, &target, depth).map_err(e)?;
        let instances = random_instances(&db, &target, seed, 40);
        let bad = oracle_mismatches(&db, &target, &specs, &instances);
        ensure!(bad.is_empty(), "fixture {seed}: {} mismatches, first: {}", bad.len(), bad[0]);
        cells += specs.len() * instances.len();
        per_depth[depth] += 1;
    }
    Ok(format!(
        "100 fixtures (depth 1/2/3: {}/{}/{}), {cells} cells, MEAN tol 1e-9",
        per_depth[1], per_depth[2], per_depth[3]
    ))
}

// ---------------------------------------------------------------------------

fn leakage() -> Check {
    let dfs_cells = dfs_leakage()?;
    let (batches, nodes) = batch_leakage()?;
    Ok(format!("{dfs_cells} DFS cells and {batches} batches ({nodes} nodes) unchanged by future perturbation"))
}

/// Every DFS feature of every target row is bit-identical after rewriting
/// all rows stamped after the cutoff.
fn dfs_leakage() -> Result<usize, String> {
    let mut cells = 0;
    for seed in 0..30u64 {
        let db = random_database(seed, &RandomDbOptions { max_rows: 300, ..Default::default() });
        let target = pick_target(&db, seed);
        let specs = enumerate_features(&db, &target, 1 + (seed % 3) as usize).map_err(e)?;
        let plan = compile_plan(&db, &target, &specs, None).map_err(e)?;
        let t = db.table(&target).map_err(e)?;
        for cutoff in [-1, 20, 50, 80, 101] {
            // an instance is never cut off before its own timestamp
            let inst: Vec<Instance> = (0..t.row_count)
                .filter(|&r| t.timestamps().is_none_or(|ts| ts[r].is_none_or(|ts| ts <= cutoff)))
                .map(|row| Instance { row, cutoff: Some(cutoff) })
                .collect();
            let before = execute_instances(&plan, &db, &inst).map_err(e)?;
            let scrambled = scramble_future(&db, cutoff, seed ^ cutoff as u64);
            let after = execute_instances(&plan, &scrambled, &inst).map_err(e)?;
            for s in &specs {
                let (a, b) = (before.column(&s.output_name).map_err(e)?, after.column(&s.output_name).map_err(e)?);
                ensure!(bits(a) == bits(b), "fixture {seed}, cutoff {cutoff}: `{}` changed", s.output_name);
            }
            cells += inst.len() * specs.len();
        }
    }
    Ok(cells)
}

/// Column contents with floats compared by bit pattern.
fn bits(c: &ColumnData) -> Vec<String> {
    (0..c.len())
        .map(|r| match c.get(r) {
            rowgraph::rdb::Value::Float(x) => format!("f{:x}", x.to_bits()),
            rowgraph::rdb::Value::Vector(v) => v.iter().map(|x| format!("{:x}", x.to_bits())).collect::<Vec<_>>().join(","),
            v => format!("{v:?}"),
        })
        .collect()
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(root).unwrap() {
        let p = entry.unwrap().path();
        out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
    }
    out
}

/// Seeds of every table whose own timestamp is at or before `cutoff`.
fn seeds_at(db: &Database, g: &HeteroGraph, cutoff: Timestamp, rng: &mut ChaCha8Rng, n: usize) -> Vec<Seed> {
    let mut seeds = Vec::new();
    for _ in 0..n * 4 {
        let t = &g.node_types[rng.gen_range(0..g.node_types.len())];
        if t.count() == 0 {
            continue;
        }
        let i = rng.gen_range(0..t.count());
        if t.timestamp(i).is_some_and(|ts| ts > cutoff) {
            continue;
        }
        let label = db.table(&t.name).ok().and_then(|tab| match tab.column("f") {
            Ok(ColumnData::Float(v)) => Some(LabelRef {
                column: "f".into(),
                value: v[i].map(LabelValue::Float),
            }),
            _ => None,
        });
        seeds.push(Seed {
            id: format!("s{}", seeds.len()),
            node_type: t.name.clone(),
            node_index: i as u32,
            cutoff: Some(cutoff),
            label_ref: label,
        });
        if seeds.len() == n {
            break;
        }
    }
    seeds
}

/// Exported batch files are byte-identical after rewriting future rows, pass
/// the audit, and hold no node or edge stamped after the cutoff.
fn batch_leakage() -> Result<(usize, usize), String> {
    let tmp = tempfile::tempdir().map_err(e)?;
    let (mut batches, mut nodes) = (0, 0);
    for seed in 0..20u64 {
        let db = random_database(seed, &RandomDbOptions { max_rows: 150, ..Default::default() });
        let g = row2node(&db, true).map_err(e)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for cutoff in [10, 40, 70] {
            let seeds = seeds_at(&db, &g, cutoff, &mut rng, 16);
            if seeds.is_empty() {
                continue;
            }
            let options = ExportOptions {
                batch_size: 4,
                rng_seed: seed,
                plan: FanoutPlan {
                    hops: 2,
                    fanout_per_hop: vec![3, 2],
                    replacement: false,
                    neighbor_order: Default::default(),
                },
                max_hops: 6,
            };
            let (a, b) = (tmp.path().join(format!("{seed}-{cutoff}-a")), tmp.path().join(format!("{seed}-{cutoff}-b")));
            export_batches(&g, &seeds, None, &options, &a).map_err(e)?;
            let scrambled = scramble_future(&db, cutoff, seed + 1);
            let g2 = row2node(&scrambled, true).map_err(e)?;
            export_batches(&g2, &seeds, None, &options, &b).map_err(e)?;
            ensure!(tree(&a) == tree(&b), "fixture {seed}, cutoff {cutoff}: batch files changed");

            let sampler = Sampler::new(&g).map_err(e)?;
            for (k, chunk) in seeds.chunks(4).enumerate() {
                let batch = sampler
                    .sample(chunk, &options.plan, rowgraph::sampler::derive_seed(seed, k as u64))
                    .map_err(e)?;
                let v = audit_batch(&g, &batch, Some(&options.plan));
                ensure!(v.is_empty(), "fixture {seed}: audit found {:?}", v[0]);
                nodes += future_free(&batch, cutoff)?;
                batches += 1;
            }
        }
    }
    Ok((batches, nodes))
}

fn future_free(batch: &SubgraphBatch, cutoff: Timestamp) -> Result<usize, String> {
    let mut n = 0;
    for nt in &batch.node_types {
        if let Some(ts) = nt.features.timestamps() {
            ensure!(
                ts.iter().all(|t| t.is_none_or(|t| t <= cutoff)),
                "`{}` node after cutoff {cutoff}",
                nt.node_type
            );
        }
        n += nt.global.len();
    }
    for et in &batch.edge_types {
        if let Some(ts) = et.features.as_ref().and_then(Table::timestamps) {
            ensure!(ts.iter().all(|t| t.is_none_or(|t| t <= cutoff)), "edge after cutoff {cutoff}");
        }
    }
    Ok(n)
}

// ---------------------------------------------------------------------------

fn sampler() -> Check {
    let (mut bfs, mut groups) = (0, 0);
    for seed in 0..40u64 {
        let g = random_hetero_graph(seed, 60, seed % 3 != 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seeds: Vec<Seed> = (0..8)
            .map(|k| {
                let t = rng.gen_range(0..g.node_types.len());
                Seed {
                    id: format!("s{k}"),
                    node_type: g.node_types[t].name.clone(),
                    node_index: rng.gen_range(0..g.node_types[t].count()) as u32,
                    // the latest possible cutoff admits everything
                    cutoff: Some(Timestamp::MAX),
                    label_ref: None,
                }
            })
            .collect();
        let sampler = Sampler::new(&g).map_err(e)?;

        let hops = 1 + (seed % 3) as usize;
        let full = FanoutPlan::uniform(hops, 1_000);
        let batch = sampler.sample(&seeds, &full, seed).map_err(e)?;
        for (i, s) in seeds.iter().enumerate() {
            let (want_nodes, want_edges) = bfs_neighborhood(&g, s, hops);
            let (got_nodes, got_edges) = seed_view(&batch, i as u32);
            ensure!(got_nodes == want_nodes, "graph {seed}, seed {i}: node sets differ from BFS");
            ensure!(got_edges == want_edges, "graph {seed}, seed {i}: edge sets differ from BFS");
            bfs += 1;
        }

        let plan = FanoutPlan {
            hops,
            fanout_per_hop: (0..hops).map(|_| rng.gen_range(1..=3)).collect(),
            replacement: false,
            neighbor_order: Default::default(),
        };
        let batch = sampler.sample(&seeds, &plan, seed).map_err(e)?;
        groups += check_fanout(&g, &batch, &plan).map_err(|m| format!("graph {seed}: {m}"))?;
    }
    let runs = rerun_bytes()?;
    Ok(format!("{bfs} seeds match BFS, {groups} fanout groups exact, {runs} reruns byte-identical"))
}

type NodeSet = BTreeSet<(String, u32)>;
type EdgeSet = BTreeSet<(usize, u32)>;

/// h-hop out-neighborhood by repeated scans of every edge list.
fn bfs_neighborhood(g: &HeteroGraph, seed: &Seed, hops: usize) -> (NodeSet, EdgeSet) {
    let mut seen: NodeSet = [(seed.node_type.clone(), seed.node_index)].into();
    let mut frontier = seen.clone();
    let mut edges = EdgeSet::new();
    for _ in 0..hops {
        let mut next = NodeSet::new();
        for (e, et) in g.edge_types.iter().enumerate() {
            for k in 0..et.src.len() {
                if frontier.contains(&(et.key.src.clone(), et.src[k])) {
                    edges.insert((e, k as u32));
                    let nb = (et.key.dst.clone(), et.dst[k]);
                    if seen.insert(nb.clone()) {
                        next.insert(nb);
                    }
                }
            }
        }
        frontier = next;
    }
    (seen, edges)
}

fn seed_view(batch: &SubgraphBatch, seed: u32) -> (NodeSet, EdgeSet) {
    let mut nodes = NodeSet::new();
    for nt in &batch.node_types {
        for (k, &owner) in nt.seed.iter().enumerate() {
            if owner == seed {
                nodes.insert((nt.node_type.clone(), nt.global[k]));
            }
        }
    }
    let mut edges = EdgeSet::new();
    for (e, et) in batch.edge_types.iter().enumerate() {
        for k in 0..et.src.len() {
            if et.seed[k] == seed {
                edges.insert((e, et.edge_id[k]));
            }
        }
    }
    (nodes, edges)
}

/// Per (seed, edge type, source node): picked exactly min(fanout, degree).
fn check_fanout(g: &HeteroGraph, batch: &SubgraphBatch, plan: &FanoutPlan) -> Result<usize, String> {
    let index = |name: &str| batch.node_types.iter().position(|n| n.node_type == name).unwrap();
    let mut picked: BTreeMap<(u32, usize, u32, u8), usize> = BTreeMap::new();
    for (e, et) in batch.edge_types.iter().enumerate() {
        let src_nodes = &batch.node_types[index(&et.key.src)];
        for k in 0..et.src.len() {
            let global = src_nodes.global[et.src[k] as usize];
            *picked.entry((et.seed[k], e, global, et.hop[k])).or_default() += 1;
        }
    }
    for (&(seed, e, src, hop), &n) in &picked {
        let degree = g.edge_types[e].src.iter().filter(|&&s| s == src).count();
        let want = degree.min(plan.fanout_per_hop[hop as usize]);
        ensure!(n == want, "seed {seed}, edge type {e}, node {src}, hop {hop}: {n} picked, expected {want}");
    }
    // Every node reached before the last hop was expanded, so each of its
    // non-empty edge types must show up above.
    let mut reached: BTreeMap<(u32, String, u32), u8> = BTreeMap::new();
    for (i, s) in batch.seeds.iter().enumerate() {
        reached.insert((i as u32, s.node_type.clone(), s.node_index), 0);
    }
    for et in &batch.edge_types {
        let dst_nodes = &batch.node_types[index(&et.key.dst)];
        for k in 0..et.src.len() {
            let key = (et.seed[k], et.key.dst.clone(), dst_nodes.global[et.dst[k] as usize]);
            let hop = reached.entry(key).or_insert(u8::MAX);
            *hop = (*hop).min(et.hop[k] + 1);
        }
    }
    for ((seed, node_type, node), &hop) in &reached {
        if hop as usize >= plan.hops {
            continue;
        }
        for (e, et) in g.edge_types.iter().enumerate() {
            if &et.key.src == node_type && et.src.contains(node) {
                ensure!(
                    picked.contains_key(&(*seed, e, *node, hop)),
                    "seed {seed}: `{node_type}` node {node} picked nothing over edge type {e} at hop {hop}"
                );
            }
        }
    }
    Ok(picked.len())
}

/// Batch exports repeat byte for byte, across runs and thread counts.
fn rerun_bytes() -> Result<usize, String> {
    let tmp = tempfile::tempdir().map_err(e)?;
    let db = commerce_database(&CommerceOptions::new(300, 40, 3000, 9));
    let g = row2node(&db, true).map_err(e)?;
    let seeds: Vec<Seed> = (0..300)
        .map(|i| Seed {
            id: format!("c{i}"),
            node_type: "customer".into(),
            node_index: i,
            cutoff: Some(1_704_067_200_000 + 200 * 86_400_000),
            label_ref: None,
        })
        .collect();
    let options = ExportOptions {
        batch_size: 32,
        rng_seed: 4,
        plan: FanoutPlan::uniform(2, 5),
        max_hops: 6,
    };
    let mut trees = Vec::new();
    for (k, threads) in [1usize, 4, 1].into_iter().enumerate() {
        let dir = tmp.path().join(k.to_string());
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(e)?;
        pool.install(|| export_batches(&g, &seeds, None, &options, &dir)).map_err(e)?;
        trees.push(tree(&dir));
    }
    ensure!(trees.iter().all(|t| t == &trees[0]), "batch exports differ between runs");
    Ok(trees.len())
}

// ---------------------------------------------------------------------------

fn metrics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut cases = 0;
    for _ in 0..3000 {
        let n = rng.gen_range(2..=200);
        let tied = rng.gen_bool(0.5);
        let scores: Vec<f64> = (0..n)
            .map(|_| if tied { rng.gen_range(0..5) as f64 / 4.0 } else { rng.gen_range(-3.0..3.0) })
            .collect();
        let p = rng.gen_range(0.05..0.95);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(p)).collect();
        labels[0] = true;
        labels[1] = false;
        let got = auc(&scores, &labels).map_err(e)?;
        let want = auc_pairwise(&scores, &labels);
        ensure!((got - want).abs() <= 1e-12, "n={n}: AUC {got} vs pairwise {want}");
        cases += 1;
    }

    let a = auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).map_err(e)?;
    ensure!((a - 0.75).abs() <= 1e-12, "hand AUC {a}");
    let m = mrr(&[vec![(0.9, true), (0.1, false)], vec![(0.1, true), (0.5, false), (0.6, false), (0.7, false)]]).map_err(e)?;
    ensure!((m - 0.625).abs() <= 1e-12, "hand MRR {m}");
    let r = rmse(&[0.0, 0.0], &[3.0, 4.0]).map_err(e)?;
    ensure!((r - 12.5f64.sqrt()).abs() <= 1e-12, "hand RMSE {r}");
    Ok(format!("{cases} random AUC cases vs pairwise (tol 1e-12), hand AUC/MRR/RMSE to 1e-12"))
}

// ---------------------------------------------------------------------------

/// Design matrix from every non-key feature column: numerics standardized
/// with nulls at the mean, categoricals one-hot.
fn design(t: &Table, skip: &[&str]) -> Vec<Vec<f64>> {
    let n = t.row_count;
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for (spec, data) in t.schema.columns.iter().zip(&t.columns) {
        if skip.contains(&spec.name.as_str()) {
            continue;
        }
        match data {
            ColumnData::Float(_) | ColumnData::Int(_) => {
                let raw: Vec<Option<f64>> = (0..n).map(|r| data.get(r).as_f64()).collect();
                let present: Vec<f64> = raw.iter().flatten().copied().collect();
                if present.is_empty() {
                    continue;
                }
                let mean = present.iter().sum::<f64>() / present.len() as f64;
                let var = present.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / present.len() as f64;
                let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
                cols.push(raw.iter().map(|x| (x.unwrap_or(mean) - mean) / sd).collect());
            }
            ColumnData::Categorical(c) => {
                for code in 0..c.dictionary.len() as u32 {
                    cols.push(c.codes.iter().map(|x| (*x == Some(code)) as u8 as f64).collect());
                }
            }
            _ => {}
        }
    }
    (0..n).map(|r| cols.iter().map(|c| c[r]).collect()).collect()
}

/// Logistic regression by full-batch gradient descent; returns test scores.
fn logistic_probe(x: &[Vec<f64>], y: &[bool], train: &[usize], test: &[usize]) -> Vec<f64> {
    let d = x.first().map_or(0, Vec::len);
    let (mut w, mut b) = (vec![0.0; d], 0.0);
    let score = |w: &[f64], b: f64, r: &[f64]| b + w.iter().zip(r).map(|(a, c)| a * c).sum::<f64>();
    for _ in 0..1500 {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for &i in train {
            let p = 1.0 / (1.0 + (-score(&w, b, &x[i])).exp());
            let err = p - y[i] as u8 as f64;
            for (g, v) in gw.iter_mut().zip(&x[i]) {
                *g += err * v;
            }
            gb += err;
        }
        let m = train.len() as f64;
        for (wj, g) in w.iter_mut().zip(&gw) {
            *wj -= 0.5 * (g / m + 1e-4 * *wj);
        }
        b -= 0.5 * gb / m;
    }
    test.iter().map(|&i| score(&w, b, &x[i])).collect()
}

/// A linear head over DFS features of growing depth, on data whose label is
/// a two-hop aggregate.
fn baseline_trend() -> Check {
    let db = commerce_database(&CommerceOptions::new(3000, 200, 30_000, 2024));
    let labels: Vec<bool> = match db.table("customer").map_err(e)?.column("label").map_err(e)? {
        ColumnData::Int(v) => v.iter().map(|x| *x == Some(1)).collect(),
        _ => return Err("label column is not an int column".into()),
    };
    let train: Vec<usize> = (0..labels.len()).filter(|i| i % 10 < 7).collect();
    let test: Vec<usize> = (0..labels.len()).filter(|i| i % 10 >= 7).collect();
    let test_labels: Vec<bool> = test.iter().map(|&i| labels[i]).collect();

    let mut aucs = Vec::new();
    for depth in 0..=2 {
        let opts = EnumerateOptions {
            exclude: vec![ColumnRef::new("customer", "label")],
            ..EnumerateOptions::depth(depth)
        };
        let specs = enumerate_features_with(&db, "customer", &opts).map_err(e)?;
        let plan = compile_plan(&db, "customer", &specs, None).map_err(e)?;
        let inst: Vec<Instance> = (0..labels.len()).map(|row| Instance { row, cutoff: None }).collect();
        let table = execute_instances(&plan, &db, &inst).map_err(e)?;
        let x = design(&table, &["id", "label"]);
        let scores = logistic_probe(&x, &labels, &train, &test);
        aucs.push(auc_pairwise(&scores, &test_labels));
    }
    let line = format!("AUC depth0 {:.3} (<= 0.55), depth1 {:.3} (<= 0.75), depth2 {:.3} (>= 0.95)", aucs[0], aucs[1], aucs[2]);
    ensure!(aucs[0] <= 0.55 && aucs[1] <= 0.75 && aucs[2] >= 0.95, "{line}");
    Ok(line)
}

// ---------------------------------------------------------------------------

const DAY: i64 = 86_400_000;

/// Depth-2 DFS from `customer` over one million orders on eight workers,
/// spot-checked against the oracle on 1000 customers.
fn dfs_throughput() -> Check {
    let gen = Instant::now();
    let opts = CommerceOptions::new(50_000, 1_000, 1_000_000, 7);
    let db = commerce_database(&opts);
    let gen = gen.elapsed();
    let orders = db.table("orders").map_err(e)?.row_count;
    ensure!(orders == 1_000_000, "{orders} orders");

    let exclude = vec![ColumnRef::new("customer", "label")];
    let specs = enumerate_features_with(&db, "customer", &EnumerateOptions { exclude, ..EnumerateOptions::depth(2) }).map_err(e)?;
    let customers = db.table("customer").map_err(e)?.row_count;
    let cutoff_of = |row: usize| opts.start + ((row as i64 * 7919) % 365) * DAY;
    let inst: Vec<Instance> = (0..customers).map(|row| Instance { row, cutoff: Some(cutoff_of(row)) }).collect();

    let pool = rayon::ThreadPoolBuilder::new().num_threads(8).build().map_err(e)?;
    let run = Instant::now();
    let out = pool.install(|| -> rowgraph::Result<Table> {
        let plan = compile_plan(&db, "customer", &specs, None)?;
        execute_instances(&plan, &db, &inst)
    });
    let out = out.map_err(e)?;
    let run = run.elapsed();
    ensure!(run < Duration::from_secs(60), "DFS took {:.1}s", run.as_secs_f64());

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sample: Vec<usize> = rand::seq::index::sample(&mut rng, customers, 1000).into_vec();
    let sub = induced(&db, &sample)?;
    let mut cells = 0;
    for (k, &row) in sample.iter().enumerate() {
        let want = brute_force_dfs(&sub, "customer", &specs, k, Some(cutoff_of(row))).map_err(e)?;
        for (spec, w) in specs.iter().zip(&want) {
            let got = out.column(&spec.output_name).map_err(e)?.get(row);
            ensure!(cell_eq(&got, w, spec, 1e-9), "customer row {row}, {}: got {got:?}, oracle {w:?}", spec.output_name);
            cells += 1;
        }
    }
    Ok(format!(
        "{} features x {customers} customers over {orders} orders in {:.2}s on 8 threads (generation {:.2}s); {cells} oracle cells match",
        specs.len(),
        run.as_secs_f64(),
        gen.as_secs_f64()
    ))
}

/// The sampled customers (in sample order), all of their orders and every
/// product: everything a depth-2 feature of those customers can reach.
fn induced(db: &Database, rows: &[usize]) -> Result<Database, String> {
    let customer = db.table("customer").map_err(e)?;
    let keys: HashSet<&KeyValue> = rows
        .iter()
        .filter_map(|&r| customer.primary_key_values().and_then(|k| k[r].as_ref()))
        .collect();
    let orders = db.table("orders").map_err(e)?;
    let keep: Vec<usize> = match orders.column("customer").map_err(e)? {
        ColumnData::Key(v) => (0..v.len()).filter(|&i| v[i].as_ref().is_some_and(|k| keys.contains(k))).collect(),
        _ => return Err("orders.customer is not a key column".into()),
    };
    let mut sub = Database::new("induced");
    sub.add_table(customer.take(rows)).map_err(e)?;
    sub.add_table(orders.take(&keep)).map_err(e)?;
    sub.add_table(db.table("product").map_err(e)?.clone()).map_err(e)?;
    Ok(sub)
}
