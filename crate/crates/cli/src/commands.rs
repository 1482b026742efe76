use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use rowgraph::dfs::{compile_plan, emit_sql, enumerate_features_with, execute_plan, CutoffColumnRef, Dialect, EnumerateOptions};
use rowgraph::graph::{export_graph, extract_graph, load_graph};
use rowgraph::metrics::{constant_predictions, evaluate, read_predictions, write_predictions, EvaluationReport};
use rowgraph::rdb::{load_database, serialize_database, ColumnRef, Database, StorageFormat};
use rowgraph::sampler::{audit_batch, export_batches, read_batch_file, read_manifest, ExportOptions, LeakViolation, BATCH_MANIFEST};
use rowgraph::synth::{commerce_database, CommerceOptions};
use rowgraph::task::{build_splits, materialize_labels, SplitSeeds};
use rowgraph::transform::{apply_transforms, fitted_from_metadata, TransformConfig};

use crate::config::{write_snapshot, AuditCommand, DfsCommand, EvaluateCommand, GraphCommand, SampleCommand, TransformCommand};
use crate::error::{CliError, Result};

pub const FITTED_FILE: &str = "fitted.json";
pub const FEATURES_FILE: &str = "features.json";
pub const SPLITS_FILE: &str = "splits.json";
pub const REPORT_FILE: &str = "report.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(value).expect("output serializes");
    json.push(b'\n');
    fs::write(path, json).map_err(|e| CliError::io(path, e))
}

fn column_ref(s: &str) -> Result<ColumnRef> {
    let (t, c) = s
        .split_once('.')
        .ok_or_else(|| CliError::Config(format!("`{s}` is not `table.column`")))?;
    Ok(ColumnRef::new(t, c))
}

pub fn transform(cfg: &TransformCommand, seed: u64, out: &Path) -> Result<()> {
    let db = load_database(&cfg.dataset)?;
    let result = apply_transforms(&db, &TransformConfig { steps: cfg.steps.clone() })?;
    serialize_database(&result, out, cfg.format)?;
    write_json(&out.join(FITTED_FILE), &fitted_from_metadata(&result)?)?;
    write_snapshot(out, "transform", seed, cfg)
}

pub fn construct_graph(cfg: &GraphCommand, seed: u64, out: &Path) -> Result<()> {
    let db = load_database(&cfg.dataset)?;
    let g = extract_graph(&db, &cfg.extractor)?;
    export_graph(&g, out)?;
    let s = g.summary();
    log::info!("graph: {} node types, {} edge types", s.node_types.len(), s.edge_types.len());
    write_snapshot(out, "construct-graph", seed, cfg)
}

pub fn dfs(cfg: &DfsCommand, seed: u64, out: &Path) -> Result<()> {
    let db = load_database(&cfg.dataset)?;
    let target = db.table(&cfg.target_table)?;
    let exclude = cfg.exclude.iter().map(|s| column_ref(s)).collect::<Result<Vec<_>>>()?;
    let options = EnumerateOptions {
        depth: cfg.depth,
        max_depth: cfg.max_depth,
        max_features: cfg.max_features,
        exclude,
    };
    let specs = enumerate_features_with(&db, &cfg.target_table, &options)?;
    let cutoff_column = match &cfg.cutoff_column {
        Some(c) => Some(c.clone()),
        None => target.schema.time_column().map(|i| target.schema.columns[i].name.clone()),
    };
    let cutoff = cutoff_column.map(|column| CutoffColumnRef {
        table: cfg.target_table.clone(),
        column,
    });
    let plan = compile_plan(&db, &cfg.target_table, &specs, cutoff)?;
    let table = execute_plan(&plan, &db)?;
    log::info!("dfs: {} features over {} rows", specs.len(), table.row_count);

    let mut single = Database::new(db.name.clone());
    single.add_table(table)?;
    serialize_database(&single, out, cfg.format)?;
    write_json(&out.join(FEATURES_FILE), &specs)?;
    if let Some(path) = &cfg.emit_sql {
        let sql = emit_sql(&plan, &db, Dialect::Ansi)?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        fs::write(path, sql).map_err(|e| CliError::io(path, e))?;
    }
    write_snapshot(out, "dfs", seed, cfg)
}

#[derive(Serialize)]
struct SplitSummary {
    split: &'static str,
    seeds: usize,
    batches: usize,
}

pub fn sample(cfg: &SampleCommand, seed: u64, out: &Path) -> Result<()> {
    let db = load_database(&cfg.dataset)?;
    let g = load_graph(&cfg.graph)?;
    let splits = build_splits(&db, &cfg.task)?;
    let labeled = materialize_labels(&db, &cfg.task, &splits, seed)?;
    let options = ExportOptions {
        batch_size: cfg.batch_size,
        rng_seed: seed,
        plan: cfg.plan.clone(),
        max_hops: cfg.max_hops,
    };
    let mut summary = Vec::new();
    for s in &labeled {
        let dir = out.join(s.split.name());
        let manifest = export_batches(&g, &s.seeds, s.negatives.as_deref(), &options, &dir)?;
        summary.push(SplitSummary {
            split: s.split.name(),
            seeds: manifest.total_seeds,
            batches: manifest.files.len(),
        });
    }
    write_json(&out.join(SPLITS_FILE), &summary)?;
    write_snapshot(out, "sample", seed, cfg)
}

fn split_seeds(cfg: &EvaluateCommand, seed: u64) -> Result<SplitSeeds> {
    let db = load_database(&cfg.dataset)?;
    let splits = build_splits(&db, &cfg.task)?;
    materialize_labels(&db, &cfg.task, &splits, seed)?
        .into_iter()
        .find(|s| s.split == cfg.split)
        .ok_or_else(|| CliError::Data(format!("no `{}` split", cfg.split.name())))
}

pub fn evaluate_predictions(cfg: &EvaluateCommand, seed: u64, out: Option<&Path>) -> Result<EvaluationReport> {
    let path = cfg
        .predictions
        .as_ref()
        .ok_or_else(|| CliError::Config("no predictions file given".into()))?;
    let seeds = split_seeds(cfg, seed)?;
    let predictions = read_predictions(path)?;
    let report = evaluate(cfg.task.metric, cfg.split, &seeds.seeds, seeds.negatives.as_deref(), &predictions)?;
    if let Some(out) = out {
        write_snapshot(out, "evaluate", seed, cfg)?;
        write_json(&out.join(REPORT_FILE), &report)?;
    }
    Ok(report)
}

pub fn predict_constant(cfg: &EvaluateCommand, seed: u64, out: &Path) -> Result<PathBuf> {
    let seeds = split_seeds(cfg, seed)?;
    write_snapshot(out, "predict-constant", seed, cfg)?;
    let path = out.join(PREDICTIONS_FILE);
    write_predictions(&path, &constant_predictions(&seeds.seeds, seeds.negatives.as_deref()))?;
    Ok(path)
}

#[derive(Serialize)]
pub struct AuditReport {
    pub batches: usize,
    pub seeds: usize,
    pub violations: Vec<LeakViolation>,
}

/// Directories under `root` (itself included) that hold a batch manifest.
fn batch_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join(BATCH_MANIFEST).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| CliError::io(root, e))? {
        let p = entry.map_err(|e| CliError::io(root, e))?.path();
        if p.join(BATCH_MANIFEST).is_file() {
            dirs.push(p);
        }
    }
    if dirs.is_empty() {
        return Err(CliError::Data(format!("{}: no batch manifest found", root.display())));
    }
    dirs.sort();
    Ok(dirs)
}

pub fn audit(cfg: &AuditCommand) -> Result<AuditReport> {
    let g = load_graph(&cfg.graph)?;
    let mut report = AuditReport {
        batches: 0,
        seeds: 0,
        violations: Vec::new(),
    };
    for dir in batch_dirs(&cfg.batches)? {
        let manifest = read_manifest(&dir)?;
        for f in &manifest.files {
            let batch = read_batch_file(&dir.join(&f.file))?;
            report.batches += 1;
            report.seeds += batch.seeds.len();
            report.violations.extend(audit_batch(&g, &batch, Some(&manifest.plan)));
        }
    }
    Ok(report)
}

pub fn synth(options: &CommerceOptions, out: &Path) -> Result<()> {
    let db = commerce_database(options);
    serialize_database(&db, out, StorageFormat::Csv)?;
    write_snapshot(out, "synth", options.seed, options)
}
