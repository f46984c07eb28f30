//! End-to-end pipelines shared by the command-line tool and the test suites:
//! train a joint model plus both unimodal query models, encode, evaluate both
//! retrieval directions, sweep variants, and render reports.
//!
//! Metric reports never contain timings, so reruns with the same inputs are
//! byte-identical. Timings live in the manifest only.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{
    load_dataset, load_matrix, save_dataset, split, synth_generate, DatasetPaths, MultimodalDataset, PairStandardizer, SplitSpec,
    SynthConfig,
};
use crate::error::{Error, Result};
use crate::model::{finetune_unimodal, train, Checkpoint, DbrcConfig, DbrcModel, Modality, Mode, TrainReport, Variant};
use crate::numerics::{DenseMatrix, RngState};
use crate::par::{self, Execution};
use crate::retrieval::{evaluate, CodeSet, LabelSet, RetrievalMetrics};

/// Record of one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub versions: BTreeMap<String, String>,
    pub timing_seconds: BTreeMap<String, f64>,
    pub outputs: Vec<String>,
}

impl ExperimentManifest {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("dbrc-core".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert("checkpoint".to_string(), crate::model::CHECKPOINT_VERSION.to_string());
        versions.insert("codes".to_string(), String::from_utf8_lossy(crate::retrieval::CODES_MAGIC).into_owned());
        Self {
            command: command.to_string(),
            seed,
            config: serde_json::to_value(config).expect("config serializes"),
            versions,
            timing_seconds: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn output(&mut self, path: impl AsRef<Path>) {
        self.outputs.push(path.as_ref().display().to_string());
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }
}

pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// The three models a retrieval experiment needs.
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub joint: DbrcModel,
    pub x_only: DbrcModel,
    pub y_only: DbrcModel,
    pub standardizer: PairStandardizer,
    pub reports: Vec<TrainReport>,
}

impl TrainedModels {
    pub fn checkpoint(&self, which: Mode) -> Checkpoint {
        let model = match which {
            Mode::Joint => &self.joint,
            Mode::XOnly => &self.x_only,
            Mode::YOnly => &self.y_only,
        };
        Checkpoint::new(model.clone(), Some(self.standardizer.clone()))
    }
}

/// Standardizes with statistics of `train_set`, trains jointly, then
/// fine-tunes one query model per modality.
pub fn train_models(config: &DbrcConfig, train_set: &MultimodalDataset) -> Result<TrainedModels> {
    let mut config = config.clone();
    config.dim_x = train_set.x().cols();
    config.dim_y = train_set.y().cols();
    let standardizer = PairStandardizer::fit(train_set);
    let data = standardizer.apply(train_set)?;
    let init = DbrcModel::build(&config, &mut RngState::new(config.seed))?;
    let (joint, joint_report) = train(&init, data.x(), data.y())?;
    let (x_only, x_report) = finetune_unimodal(&joint, data.x(), data.y(), Modality::X)?;
    let (y_only, y_report) = finetune_unimodal(&joint, data.x(), data.y(), Modality::Y)?;
    Ok(TrainedModels {
        joint,
        x_only,
        y_only,
        standardizer,
        reports: vec![joint_report, x_report, y_report],
    })
}

/// Codes for a database: joint model, both modalities present.
pub fn encode_database(checkpoint: &Checkpoint, data: &MultimodalDataset) -> Result<CodeSet> {
    let d = standardize(checkpoint, data)?;
    checkpoint.model.encode_codes(d.x(), d.y(), Mode::Joint)
}

/// Codes for queries of one modality, using the matching unimodal model.
pub fn encode_queries(checkpoint: &Checkpoint, features: &DenseMatrix, modality: Modality) -> Result<CodeSet> {
    let features = match (&checkpoint.standardizer, modality) {
        (Some(s), Modality::X) => s.x.apply(features)?,
        (Some(s), Modality::Y) => s.y.apply(features)?,
        (None, _) => features.clone(),
    };
    checkpoint.model.encode_unimodal(&features, modality)
}

fn standardize(checkpoint: &Checkpoint, data: &MultimodalDataset) -> Result<MultimodalDataset> {
    match &checkpoint.standardizer {
        Some(s) => s.apply(data),
        None => Ok(data.clone()),
    }
}

/// Metrics for both retrieval directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossModalMetrics {
    /// x-modality queries against the joint database.
    pub i2t: RetrievalMetrics,
    /// y-modality queries against the joint database.
    pub t2i: RetrievalMetrics,
}

impl CrossModalMetrics {
    pub fn mean_map(&self) -> f64 {
        0.5 * (self.i2t.map + self.t2i.map)
    }
}

pub fn evaluate_cross_modal(
    models: &TrainedModels,
    query: &MultimodalDataset,
    retrieval: &MultimodalDataset,
    radius: u32,
) -> Result<CrossModalMetrics> {
    let db = encode_database(&models.checkpoint(Mode::Joint), retrieval)?;
    let qx = encode_queries(&models.checkpoint(Mode::XOnly), query.x(), Modality::X)?;
    let qy = encode_queries(&models.checkpoint(Mode::YOnly), query.y(), Modality::Y)?;
    Ok(CrossModalMetrics {
        i2t: evaluate(&qx, &db, query.labels(), retrieval.labels(), radius)?,
        t2i: evaluate(&qy, &db, query.labels(), retrieval.labels(), radius)?,
    })
}

/// Fraction of `|a| > threshold` among the joint model's activations on
/// the (standardized) training side.
pub fn saturated_fraction(models: &TrainedModels, train_set: &MultimodalDataset, threshold: f64) -> Result<f64> {
    let d = models.standardizer.apply(train_set)?;
    let a = models.joint.activations(d.x(), d.y(), Mode::Joint)?;
    let hits = a.as_slice().iter().filter(|v| v.abs() > threshold).count();
    Ok(hits as f64 / a.as_slice().len().max(1) as f64)
}

/// Uniformly random ±1 codes of the given shape.
pub fn random_codes(n: usize, bits: usize, rng: &mut RngState) -> Result<CodeSet> {
    let m = DenseMatrix::from_vec(n, bits, (0..n * bits).map(|_| if rng.unit() < 0.5 { -1.0 } else { 1.0 }).collect())?;
    CodeSet::pack(&m)
}

/// MAP of random codes on a query/retrieval split.
pub fn random_code_map(query: &LabelSet, retrieval: &LabelSet, bits: usize, seed: u64) -> Result<f64> {
    let mut rng = RngState::new(seed);
    let q = random_codes(query.len(), bits, &mut rng)?;
    let db = random_codes(retrieval.len(), bits, &mut rng)?;
    crate::retrieval::map_eval(&q, &db, query, retrieval)
}

/// A synthetic dataset, its split, and the model settings to train on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub synth: SynthConfig,
    pub query_fraction: f64,
    pub model: DbrcConfig,
    pub radius: u32,
}

impl BenchmarkSpec {
    /// Four classes, 2000 items, a quarter held out as queries.
    pub fn synthetic(bits: usize, seed: u64) -> Self {
        let synth = SynthConfig {
            seed,
            ..SynthConfig::default()
        };
        let mut model = DbrcConfig::new(synth.dim_x, synth.dim_y, bits);
        model.seed = seed;
        Self {
            synth,
            query_fraction: 0.25,
            model,
            radius: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOutcome {
    pub variant: Variant,
    pub bits: usize,
    pub seed: u64,
    pub metrics: CrossModalMetrics,
    pub random_map: f64,
    pub mean_alpha: f64,
    pub saturated_fraction: f64,
}

pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<BenchmarkOutcome> {
    run_on_dataset(spec, &synth_generate(&spec.synth)?)
}

/// Like [`run_benchmark`] but on a given dataset; `spec.synth` is ignored
/// except for its seed, which drives the split.
pub fn run_on_dataset(spec: &BenchmarkSpec, data: &MultimodalDataset) -> Result<BenchmarkOutcome> {
    let parts = split(
        data,
        &SplitSpec {
            query_fraction: spec.query_fraction,
            seed: spec.synth.seed,
        },
    )?;
    let models = train_models(&spec.model, &parts.retrieval)?;
    let metrics = evaluate_cross_modal(&models, &parts.query, &parts.retrieval, spec.radius)?;
    Ok(BenchmarkOutcome {
        variant: spec.model.variant,
        bits: spec.model.bits,
        seed: spec.model.seed,
        metrics,
        random_map: random_code_map(parts.query.labels(), parts.retrieval.labels(), spec.model.bits, spec.model.seed)?,
        mean_alpha: models.joint.hash_layer().mean_alpha(),
        saturated_fraction: saturated_fraction(&models, &parts.retrieval, crate::model::SATURATION_THRESHOLD)?,
    })
}

/// One ablation cell, averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub bits: usize,
    pub i2t_map: f64,
    pub t2i_map: f64,
    pub runs: Vec<BenchmarkOutcome>,
}

impl AblationRow {
    pub fn mean_map(&self) -> f64 {
        0.5 * (self.i2t_map + self.t2i_map)
    }
}

/// Runs every (variant, bits, seed) cell of the sweep on `data`, or on the
/// synthetic benchmark regenerated per seed when `data` is `None`. Seeds are
/// shared across variants and bit lengths, so all variants see the same data
/// and initial weights. Cells run in parallel when `exec` allows.
pub fn ablate(
    base: &BenchmarkSpec,
    data: Option<&MultimodalDataset>,
    variants: &[Variant],
    bits: &[usize],
    seeds: &[u64],
    exec: Execution,
) -> Result<Vec<AblationRow>> {
    let cells: Vec<(Variant, usize, u64)> = variants
        .iter()
        .flat_map(|&v| bits.iter().flat_map(move |&b| seeds.iter().map(move |&s| (v, b, s))))
        .collect();
    let outcomes = par::map_indexed(exec, cells.len(), |i| {
        let (variant, b, seed) = cells[i];
        let mut spec = base.clone();
        spec.synth.seed = seed;
        spec.model.seed = seed;
        spec.model.bits = b;
        spec.model.variant = variant;
        match data {
            Some(d) => run_on_dataset(&spec, d),
            None => run_benchmark(&spec),
        }
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for chunk in outcomes.chunks(seeds.len().max(1)) {
        let n = chunk.len() as f64;
        rows.push(AblationRow {
            variant: chunk[0].variant,
            bits: chunk[0].bits,
            i2t_map: chunk.iter().map(|o| o.metrics.i2t.map).sum::<f64>() / n,
            t2i_map: chunk.iter().map(|o| o.metrics.t2i.map).sum::<f64>() / n,
            runs: chunk.to_vec(),
        });
    }
    Ok(rows)
}

fn format_direction(s: &mut String, name: &str, m: &RetrievalMetrics) {
    let _ = writeln!(s, "{name}.map = {:.6}", m.map);
    let _ = writeln!(s, "{name}.lookup_radius = {}", m.radius);
    let _ = writeln!(s, "{name}.lookup_precision = {:.6}", m.lookup_precision);
    let _ = writeln!(s, "{name}.lookup_recall = {:.6}", m.lookup_recall);
    let _ = writeln!(s, "{name}.lookup_fmeasure = {:.6}", m.lookup_fmeasure);
}

/// `key = value` lines for one evaluation.
pub fn format_metrics(metrics: &CrossModalMetrics) -> String {
    EvalReport {
        i2t: Some(metrics.i2t),
        t2i: Some(metrics.t2i),
    }
    .to_text()
}

/// Evaluation of code files; either direction may be absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub i2t: Option<RetrievalMetrics>,
    pub t2i: Option<RetrievalMetrics>,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(m) = &self.i2t {
            format_direction(&mut s, "i2t", m);
        }
        if let Some(m) = &self.t2i {
            format_direction(&mut s, "t2i", m);
        }
        s
    }
}

/// File names inside a training output directory.
pub mod layout {
    pub const MANIFEST: &str = "manifest.json";
    pub const JOINT_CHECKPOINT: &str = "joint.ckpt";
    pub const X_CHECKPOINT: &str = "x_only.ckpt";
    pub const Y_CHECKPOINT: &str = "y_only.ckpt";
    pub const TRAIN_REPORT: &str = "train_report.json";
    pub const QUERY_DIR: &str = "query";
    pub const RETRIEVAL_DIR: &str = "retrieval";
    pub const REPORT_TEXT: &str = "report.txt";
    pub const REPORT_JSON: &str = "report.json";
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn elapsed(start: std::time::Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

/// Generates a synthetic dataset into `dir` with its manifest.
pub fn synth_to_dir(config: &SynthConfig, dir: &Path) -> Result<ExperimentManifest> {
    let start = std::time::Instant::now();
    let data = synth_generate(config)?;
    let paths = save_dataset(&data, dir)?;
    let mut manifest = ExperimentManifest::new("synth", config.seed, config);
    for p in [&paths.x, &paths.y, &paths.labels] {
        manifest.output(p);
    }
    manifest.timing_seconds.insert("total".into(), elapsed(start));
    manifest.save(dir.join(layout::MANIFEST))?;
    Ok(manifest)
}

#[derive(Serialize)]
struct TrainRun<'a> {
    model: &'a DbrcConfig,
    split: &'a SplitSpec,
    data: [String; 3],
}

/// Splits the dataset, trains the joint and both unimodal models on the
/// retrieval side, and writes both splits, the three checkpoints, the
/// per-epoch reports and a manifest into `out`.
pub fn train_to_dir(data: &DatasetPaths, config: &DbrcConfig, split_spec: &SplitSpec, out: &Path) -> Result<ExperimentManifest> {
    let start = std::time::Instant::now();
    let dataset = load_dataset(&data.x, &data.y, &data.labels)?;
    let parts = split(&dataset, split_spec)?;
    create_dir(out)?;
    let run = TrainRun {
        model: config,
        split: split_spec,
        data: [&data.x, &data.y, &data.labels].map(|p| p.display().to_string()),
    };
    let mut manifest = ExperimentManifest::new("train", config.seed, &run);
    for (dir, part) in [(layout::QUERY_DIR, &parts.query), (layout::RETRIEVAL_DIR, &parts.retrieval)] {
        let paths = save_dataset(part, out.join(dir))?;
        for p in [&paths.x, &paths.y, &paths.labels] {
            manifest.output(p);
        }
    }
    let train_start = std::time::Instant::now();
    let models = train_models(config, &parts.retrieval)?;
    manifest.timing_seconds.insert("training".into(), elapsed(train_start));
    for (name, mode) in [
        (layout::JOINT_CHECKPOINT, Mode::Joint),
        (layout::X_CHECKPOINT, Mode::XOnly),
        (layout::Y_CHECKPOINT, Mode::YOnly),
    ] {
        let path = out.join(name);
        models.checkpoint(mode).save(&path)?;
        manifest.output(&path);
    }
    let report_path = out.join(layout::TRAIN_REPORT);
    write_json(&report_path, &models.reports)?;
    manifest.output(&report_path);
    manifest.timing_seconds.insert("total".into(), elapsed(start));
    manifest.save(out.join(layout::MANIFEST))?;
    Ok(manifest)
}

/// Encodes features with a checkpoint. `Joint` needs both feature files;
/// the unimodal modes read only their own modality.
fn need<'a>(p: Option<&'a Path>, mode: Mode, what: &str) -> Result<&'a Path> {
    p.ok_or_else(|| Error::invalid(format!("{mode:?} encoding needs {what} features")))
}

pub fn encode_to_file(checkpoint: &Path, x: Option<&Path>, y: Option<&Path>, mode: Mode, out: &Path) -> Result<CodeSet> {
    let ck = Checkpoint::load(checkpoint)?;
    let codes = match mode {
        Mode::Joint => {
            let xm = load_matrix(need(x, mode, "x")?)?;
            let ym = load_matrix(need(y, mode, "y")?)?;
            if xm.rows() != ym.rows() {
                return Err(Error::invalid(format!("x has {} rows, y has {}", xm.rows(), ym.rows())));
            }
            let rows = xm.rows();
            let labels = LabelSet::one_hot(&vec![0; rows], 1)?;
            encode_database(&ck, &MultimodalDataset::new(xm, ym, labels)?)?
        }
        Mode::XOnly => encode_queries(&ck, &load_matrix(need(x, mode, "x")?)?, Modality::X)?,
        Mode::YOnly => encode_queries(&ck, &load_matrix(need(y, mode, "y")?)?, Modality::Y)?,
    };
    codes.save(out)?;
    Ok(codes)
}

fn load_labels(path: &Path) -> Result<LabelSet> {
    LabelSet::from_matrix(&load_matrix(path)?).map_err(|e| Error::format(path, e.to_string()))
}

/// Scores query code files against a database code file.
pub fn eval_files(
    i2t_queries: Option<&Path>,
    t2i_queries: Option<&Path>,
    db: &Path,
    query_labels: &Path,
    db_labels: &Path,
    radius: u32,
) -> Result<EvalReport> {
    if i2t_queries.is_none() && t2i_queries.is_none() {
        return Err(Error::invalid("eval needs at least one query code file"));
    }
    let db_codes = CodeSet::load(db)?;
    let q_labels = load_labels(query_labels)?;
    let d_labels = load_labels(db_labels)?;
    let score = |p: Option<&Path>| -> Result<Option<RetrievalMetrics>> {
        p.map(|p| evaluate(&CodeSet::load(p)?, &db_codes, &q_labels, &d_labels, radius)).transpose()
    };
    Ok(EvalReport {
        i2t: score(i2t_queries)?,
        t2i: score(t2i_queries)?,
    })
}

/// Table with one row per variant and an I2T and T2I column per bit length.
pub fn format_ablation(rows: &[AblationRow]) -> String {
    let mut bits: Vec<usize> = rows.iter().map(|r| r.bits).collect();
    bits.sort_unstable();
    bits.dedup();
    let mut variants: Vec<Variant> = Vec::new();
    for r in rows {
        if !variants.contains(&r.variant) {
            variants.push(r.variant);
        }
    }
    let mut s = format!("{:<10}", "variant");
    for b in &bits {
        let _ = write!(s, " {:>9} {:>9}", format!("I2T@{b}"), format!("T2I@{b}"));
    }
    s.push('\n');
    for v in variants {
        let _ = write!(s, "{:<10}", v.name());
        for &b in &bits {
            match rows.iter().find(|r| r.variant == v && r.bits == b) {
                Some(r) => {
                    let _ = write!(s, " {:>9.4} {:>9.4}", r.i2t_map, r.t2i_map);
                }
                None => {
                    let _ = write!(s, " {:>9} {:>9}", "-", "-");
                }
            }
        }
        s.push('\n');
    }
    s
}
