//! Batch files: one JSON-lines file per batch. The first line is a header
//! record (seeds, masks, labels, negatives, type lists); then one `nodes`
//! record per node type and one `edges` record per edge type, with index
//! arrays inline and feature blocks as base64-encoded RDBC tables.
//! `manifest.json` lists the files, their seed counts and the RNG seed.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, BatchEdges, BatchNodes, ExcludedFeature, FanoutPlan, LabelValue, Sampler, Seed, SubgraphBatch};
use crate::error::{Error, Result};
use crate::graph::{EdgeKey, HeteroGraph};
use crate::rdb::rdbc::{decode_table, encode_table};
use crate::rdb::Table;

pub const BATCH_MANIFEST: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportOptions {
    pub batch_size: usize,
    pub rng_seed: u64,
    pub plan: FanoutPlan,
    #[serde(default = "default_max_hops")]
    pub max_hops: usize,
}

fn default_max_hops() -> usize {
    super::DEFAULT_MAX_HOPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchFileEntry {
    pub file: String,
    pub seeds: usize,
    pub nodes: usize,
    pub edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchManifest {
    pub format_version: u32,
    pub rng_seed: u64,
    pub batch_size: usize,
    pub plan: FanoutPlan,
    pub total_seeds: usize,
    pub files: Vec<BatchFileEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header {
        format_version: u32,
        batch_index: usize,
        seeds: Vec<Seed>,
        seed_locals: Vec<u32>,
        excluded_features: Vec<ExcludedFeature>,
        labels: Vec<Option<LabelValue>>,
        negatives: Option<Vec<Vec<u32>>>,
        node_types: Vec<String>,
        edge_types: Vec<EdgeKey>,
    },
    Nodes {
        node_type: String,
        count: usize,
        global: Vec<u32>,
        seed: Vec<u32>,
        features: String,
    },
    Edges {
        key: EdgeKey,
        src: Vec<u32>,
        dst: Vec<u32>,
        edge_id: Vec<u32>,
        hop: Vec<u8>,
        seed: Vec<u32>,
        features: Option<String>,
    },
}

fn line(out: &mut Vec<u8>, record: &Record) {
    serde_json::to_writer(&mut *out, record).expect("records serialize");
    out.push(b'\n');
}

fn encode_batch(batch: &SubgraphBatch, index: usize) -> Vec<u8> {
    let mut out = Vec::new();
    line(
        &mut out,
        &Record::Header {
            format_version: FORMAT_VERSION,
            batch_index: index,
            seeds: batch.seeds.clone(),
            seed_locals: batch.seed_locals.clone(),
            excluded_features: batch.excluded_features.clone(),
            labels: batch.labels(),
            negatives: batch.negatives.clone(),
            node_types: batch.node_types.iter().map(|n| n.node_type.clone()).collect(),
            edge_types: batch.edge_types.iter().map(|e| e.key.clone()).collect(),
        },
    );
    for n in &batch.node_types {
        line(
            &mut out,
            &Record::Nodes {
                node_type: n.node_type.clone(),
                count: n.global.len(),
                global: n.global.clone(),
                seed: n.seed.clone(),
                features: B64.encode(encode_table(&n.features)),
            },
        );
    }
    for e in &batch.edge_types {
        line(
            &mut out,
            &Record::Edges {
                key: e.key.clone(),
                src: e.src.clone(),
                dst: e.dst.clone(),
                edge_id: e.edge_id.clone(),
                hop: e.hop.clone(),
                seed: e.seed.clone(),
                features: e.features.as_ref().map(|f| B64.encode(encode_table(f))),
            },
        );
    }
    out
}

/// Partitions `seeds` into batches, samples each with its own RNG stream
/// (derived from `rng_seed` and the batch index) and writes batch files plus
/// a manifest to `out_dir`. `negatives`, when given, is aligned with `seeds`.
pub fn export_batches(
    g: &HeteroGraph,
    seeds: &[Seed],
    negatives: Option<&[Vec<u32>]>,
    options: &ExportOptions,
    out_dir: &Path,
) -> Result<BatchManifest> {
    if options.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if negatives.is_some_and(|n| n.len() != seeds.len()) {
        return Err(Error::Data("negatives are not aligned with seeds".into()));
    }
    options.plan.check(options.max_hops)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let sampler = Sampler::new(g)?.with_max_hops(options.max_hops);
    let files: Vec<BatchFileEntry> = seeds
        .par_chunks(options.batch_size)
        .enumerate()
        .map(|(i, chunk)| {
            let mut batch = sampler.sample(chunk, &options.plan, derive_seed(options.rng_seed, i as u64))?;
            if let Some(neg) = negatives {
                let start = i * options.batch_size;
                batch.negatives = Some(neg[start..start + chunk.len()].to_vec());
            }
            let file = format!("batch-{i:05}.jsonl");
            let path = out_dir.join(&file);
            fs::write(&path, encode_batch(&batch, i)).map_err(|e| Error::io(&path, e))?;
            Ok(BatchFileEntry {
                file,
                seeds: chunk.len(),
                nodes: batch.node_types.iter().map(|n| n.global.len()).sum(),
                edges: batch.edge_types.iter().map(|e| e.src.len()).sum(),
            })
        })
        .collect::<Result<_>>()?;
    let manifest = BatchManifest {
        format_version: FORMAT_VERSION,
        rng_seed: options.rng_seed,
        batch_size: options.batch_size,
        plan: options.plan.clone(),
        total_seeds: seeds.len(),
        files,
    };
    let path = out_dir.join(BATCH_MANIFEST);
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<BatchManifest> {
    let path = dir.join(BATCH_MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn decode_block(b64: &str, rows: usize) -> Result<Table> {
    let bytes = B64.decode(b64).map_err(|e| Error::Format(format!("bad base64 block: {e}")))?;
    let t = decode_table(&bytes)?;
    Table::with_row_count(t.schema, t.columns, rows)
}

pub fn read_batch_file(path: &Path) -> Result<SubgraphBatch> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::Format(format!("{}: {msg}", path.display()));
    let mut lines = text.lines();
    let header: Record = serde_json::from_str(lines.next().ok_or_else(|| bad("empty file".into()))?)
        .map_err(|e| bad(e.to_string()))?;
    let Record::Header {
        format_version,
        seeds,
        seed_locals,
        excluded_features,
        negatives,
        ..
    } = header
    else {
        return Err(bad("first record is not a header".into()));
    };
    if format_version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {format_version}")));
    }
    let mut batch = SubgraphBatch {
        seeds,
        seed_locals,
        node_types: Vec::new(),
        edge_types: Vec::new(),
        excluded_features,
        negatives,
    };
    for l in lines {
        match serde_json::from_str(l).map_err(|e| bad(e.to_string()))? {
            Record::Nodes {
                node_type,
                count,
                global,
                seed,
                features,
            } => batch.node_types.push(BatchNodes {
                node_type,
                features: decode_block(&features, count)?,
                global,
                seed,
            }),
            Record::Edges {
                key,
                src,
                dst,
                edge_id,
                hop,
                seed,
                features,
            } => {
                let features = features.map(|f| decode_block(&f, src.len())).transpose()?;
                batch.edge_types.push(BatchEdges {
                    key,
                    src,
                    dst,
                    edge_id,
                    hop,
                    seed,
                    features,
                })
            }
            Record::Header { .. } => return Err(bad("duplicate header".into())),
        }
    }
    Ok(batch)
}
