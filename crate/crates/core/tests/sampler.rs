use std::collections::{HashMap, HashSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rowgraph::graph::{fk_relation, row2node, HeteroGraph};
use rowgraph::rdb::Timestamp;
use rowgraph::sampler::{
    audit_batch, export_batches, read_batch_file, read_manifest, sample_negatives, ExportOptions, FanoutPlan, LabelRef,
    NeighborOrder, Sampler, Seed, SubgraphBatch,
};
use rowgraph::synth::{random_database, RandomDbOptions};

fn graph(seed: u64) -> HeteroGraph {
    let db = random_database(seed, &RandomDbOptions { max_rows: 300, ..Default::default() });
    row2node(&db, true).unwrap()
}

/// Random seeds whose nodes are visible at their cutoff.
fn seeds(g: &HeteroGraph, rng: &mut ChaCha8Rng, n: usize) -> Vec<Seed> {
    let mut out = Vec::new();
    while out.len() < n {
        let t = &g.node_types[rng.gen_range(0..g.node_types.len())];
        let i = rng.gen_range(0..t.count());
        let cutoff: Timestamp = rng.gen_range(0..100);
        if t.timestamp(i).is_some_and(|ts| ts > cutoff) {
            continue;
        }
        out.push(Seed {
            id: format!("s{}", out.len()),
            node_type: t.name.clone(),
            node_index: i as u32,
            cutoff: Some(cutoff),
            label_ref: None,
        });
    }
    out
}

fn plan(rng: &mut ChaCha8Rng) -> FanoutPlan {
    let hops = rng.gen_range(1..=3);
    FanoutPlan {
        hops,
        fanout_per_hop: (0..hops).map(|_| rng.gen_range(1..=4)).collect(),
        replacement: rng.gen_bool(0.3),
        neighbor_order: if rng.gen_bool(0.3) { NeighborOrder::MostRecent } else { NeighborOrder::UniformRandom },
    }
}

/// Structural checks of a batch against the graph it was drawn from.
fn check_batch(g: &HeteroGraph, batch: &SubgraphBatch, plan: &FanoutPlan) -> Result<(), String> {
    let audit = audit_batch(g, batch, Some(plan));
    if !audit.is_empty() {
        return Err(format!("audit: {audit:?}"));
    }
    let ty = |name: &str| g.node_type_index(name).unwrap();
    for (k, (s, &local)) in batch.seeds.iter().zip(&batch.seed_locals).enumerate() {
        let nodes = batch.node_type(&s.node_type).unwrap();
        if nodes.global[local as usize] != s.node_index || nodes.seed[local as usize] != k as u32 {
            return Err(format!("seed {k} root mismatch"));
        }
    }
    // every non-root node is entered by an edge of its own seed
    let mut entered: HashSet<(usize, u32)> = HashSet::new();
    let mut groups: HashMap<(u32, usize, u32, u8), usize> = HashMap::new();
    for (e, be) in batch.edge_types.iter().enumerate() {
        let ge = &g.edge_types[e];
        assert_eq!(be.key, ge.key);
        let (st, dt) = (ty(&be.key.src), ty(&be.key.dst));
        for j in 0..be.src.len() {
            let (sl, dl, id) = (be.src[j] as usize, be.dst[j] as usize, be.edge_id[j] as usize);
            let (sn, dn) = (&batch.node_types[st], &batch.node_types[dt]);
            if sn.global[sl] != ge.src[id] || dn.global[dl] != ge.dst[id] {
                return Err(format!("{}: edge {id} endpoints do not match the graph", be.key));
            }
            let seed = be.seed[j];
            if sn.seed[sl] != seed || dn.seed[dl] != seed {
                return Err(format!("{}: edge {id} crosses seeds", be.key));
            }
            let hop = be.hop[j];
            if hop as usize >= plan.hops {
                return Err(format!("{}: hop {hop} beyond {}", be.key, plan.hops));
            }
            let cutoff = batch.seeds[seed as usize].cutoff.unwrap_or(Timestamp::MAX);
            if g.edge_timestamp(e, id).is_some_and(|ts| ts > cutoff) {
                return Err(format!("{}: edge {id} is after the cutoff", be.key));
            }
            entered.insert((dt, dl as u32));
            *groups.entry((seed, e, be.src[j], hop)).or_default() += 1;
        }
    }
    for ((_, e, _, hop), n) in groups {
        if n > plan.fanout_per_hop[hop as usize] {
            return Err(format!("{n} picks on edge type {e} at hop {hop}"));
        }
    }
    let roots: HashSet<(usize, u32)> = batch.seeds.iter().zip(&batch.seed_locals).map(|(s, &l)| (ty(&s.node_type), l)).collect();
    for (t, nodes) in batch.node_types.iter().enumerate() {
        for l in 0..nodes.global.len() as u32 {
            if !roots.contains(&(t, l)) && !entered.contains(&(t, l)) {
                return Err(format!("{} local {l} is unreachable", nodes.node_type));
            }
            let cutoff = batch.seeds[nodes.seed[l as usize] as usize].cutoff.unwrap_or(Timestamp::MAX);
            if g.node_types[t].timestamp(nodes.global[l as usize] as usize).is_some_and(|ts| ts > cutoff) {
                return Err(format!("{} local {l} is after the cutoff", nodes.node_type));
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sampled_batches_are_valid_subgraphs(seed in 0u64..10_000) {
        let g = graph(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seeds = seeds(&g, &mut rng, 12);
        let plan = plan(&mut rng);
        let sampler = Sampler::new(&g).unwrap();
        let batch = sampler.sample(&seeds, &plan, seed).unwrap();
        prop_assert_eq!(check_batch(&g, &batch, &plan), Ok(()));
        prop_assert_eq!(&sampler.sample(&seeds, &plan, seed).unwrap(), &batch);
    }

    #[test]
    fn negatives_are_distinct_eligible_and_never_positive(seed in 0u64..10_000, count in 1usize..6) {
        let g = graph(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = &g.node_types[rng.gen_range(0..g.node_types.len())];
        let positives: Vec<(Seed, u32)> = seeds(&g, &mut rng, 10)
            .into_iter()
            .map(|s| (s, rng.gen_range(0..t.count()) as u32))
            .collect();
        for (q, pair) in positives.iter().enumerate() {
            let cutoff = pair.0.cutoff.unwrap_or(Timestamp::MAX);
            let pool: HashSet<u32> = (0..t.count() as u32)
                .filter(|&i| i != pair.1 && !t.timestamp(i as usize).is_some_and(|ts| ts > cutoff))
                .collect();
            let got = sample_negatives(&g, &t.name, std::slice::from_ref(pair), count, seed, true);
            if pool.len() < count {
                prop_assert!(got.is_err(), "query {}", q);
                continue;
            }
            let negs = got.unwrap().remove(0);
            prop_assert_eq!(negs.len(), count);
            prop_assert!(negs.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(negs.iter().all(|n| pool.contains(n)), "{:?} outside the pool", negs);
        }
    }
}

#[test]
fn label_edge_is_hidden_from_its_own_seed() {
    let db = random_database(11, &RandomDbOptions { max_rows: 300, temporal_fraction: 0.0, ..Default::default() });
    let g = row2node(&db, true).unwrap();
    let (table, column) = db
        .tables
        .values()
        .find_map(|t| t.schema.foreign_keys().next().map(|(_, c)| (t.name().to_string(), c.name.clone())))
        .unwrap();
    let seeds: Vec<Seed> = (0..db.table(&table).unwrap().row_count.min(20) as u32)
        .map(|i| Seed {
            id: format!("s{i}"),
            node_type: table.clone(),
            node_index: i,
            cutoff: None,
            label_ref: Some(LabelRef { column: column.clone(), value: None }),
        })
        .collect();
    let plan = FanoutPlan::uniform(2, 1000);
    let batch = Sampler::new(&g).unwrap().sample(&seeds, &plan, 3).unwrap();
    let relation = fk_relation(&table, &column);
    let seed_type = g.node_type_index(&table).unwrap();
    let mut checked = 0;
    for (e, be) in batch.edge_types.iter().enumerate() {
        let fwd = &g.edge_types[g.feature_owner(e)];
        if fwd.key.relation != relation {
            continue;
        }
        let reverse = g.edge_types[e].reverse_of.is_some();
        for j in 0..be.src.len() {
            let k = be.seed[j] as usize;
            let root = batch.seed_locals[k];
            let at_root = if reverse {
                g.node_type_index(&be.key.dst) == Some(seed_type) && be.dst[j] == root
            } else {
                be.src[j] == root
            };
            assert!(!at_root, "seed {k} sees its own label edge");
            checked += 1;
        }
    }
    assert!(checked > 0, "no edges of the label relation were sampled");
    assert_eq!(check_batch(&g, &batch, &plan), Ok(()));
}

#[test]
fn export_splits_seeds_into_fixed_size_batches() {
    let g = graph(5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let seeds = seeds(&g, &mut rng, 10);
    let tmp = tempfile::tempdir().unwrap();
    let options = ExportOptions { batch_size: 4, rng_seed: 9, plan: FanoutPlan::uniform(2, 3), max_hops: 6 };
    let manifest = export_batches(&g, &seeds, None, &options, tmp.path()).unwrap();
    assert_eq!(manifest.files.iter().map(|f| f.seeds).collect::<Vec<_>>(), vec![4, 4, 2]);
    assert_eq!(manifest.total_seeds, 10);
    assert_eq!(read_manifest(tmp.path()).unwrap(), manifest);
    let mut ids = Vec::new();
    for f in &manifest.files {
        let batch = read_batch_file(&tmp.path().join(&f.file)).unwrap();
        assert_eq!(batch.node_types.iter().map(|n| n.global.len()).sum::<usize>(), f.nodes);
        assert_eq!(batch.edge_types.iter().map(|e| e.src.len()).sum::<usize>(), f.edges);
        assert_eq!(check_batch(&g, &batch, &options.plan), Ok(()));
        ids.extend(batch.seeds.into_iter().map(|s| s.id));
    }
    assert_eq!(ids, seeds.iter().map(|s| s.id.clone()).collect::<Vec<_>>());

    let bad = ExportOptions { plan: FanoutPlan::uniform(7, 3), ..options.clone() };
    assert!(export_batches(&g, &seeds, None, &bad, tmp.path()).unwrap_err().is_config());
    let zero = ExportOptions { batch_size: 0, ..options };
    assert!(export_batches(&g, &seeds, None, &zero, tmp.path()).unwrap_err().is_config());
}
