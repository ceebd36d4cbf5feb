// SPDX-License-Identifier: MIT OR Apache-2.0

//! End-to-end experiments: data, captures, calibration, evaluation, reports.
//!
//! A run directory holds:
//!
//! ```text
//! config.json          the experiment config
//! run.json             timing and environment (not part of the report)
//! datasets/<setup>/    dataset files per setup
//! captures.qkc         all captures, when `save_captures` is set
//! scores/<setup>.tsv   score tables
//! calibration/<setup>.tsv, calibration/<setup>.json
//! report.json, report.csv, report.md, heatmap_*.svg
//! ```

pub mod planted;
pub mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{
    calibrate, manual_cover, select_cover_heads, Accuracy, CalibrationError, CalibrationReport, HeadCover,
    SetupDescriptor, DEFAULT_COVER_SIZE, DEFAULT_POOL_SIZE,
};
use crate::datagen::{generate, read_dataset, write_dataset, Answer, DatagenError, DatasetSplit, GenConfig};
use crate::probe::{score_table, Orientation, ProbeError, ScoreTable};
use crate::runtime::{
    forward_capture, load_model, read_capture, render_prompt, tokenize, write_capture, CaptureSet, HeadId, Model,
    QKCapture, RuntimeError, Variant,
};

pub use planted::{build_planted_model, planted_spec};
pub use report::{emit_report, EvalCell, EvalReport, ReportFormat, RunMeta, SetupSummary, BASELINE, BEST};

/// Environment variable holding the worker count for forward passes.
pub const WORKERS_ENV: &str = "QKPROBE_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("capture set lacks sample {0}")]
    IdMismatch(String),
    #[error("model spec digest {found} does not match expected {expected}")]
    DigestMismatch { expected: String, found: String },
    #[error("spec too large for a planted model: {0}")]
    SpecTooLarge(String),
    #[error("unsupported report format `{0}`")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Datagen(#[from] DatagenError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Report source label and the head it reads, `None` for per-setup best.
type Source = (String, Option<HeadId>);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Generate(GenConfig),
    Path(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum HeadSelection {
    /// Each setup's own best calibration head.
    Best,
    Explicit { heads: Vec<HeadId> },
    /// Greedy cover over the top pools of the `from` setups (all when empty),
    /// or the `manual` heads when given.
    Cover {
        #[serde(default = "default_cover")]
        k: usize,
        #[serde(default)]
        from: Vec<String>,
        #[serde(default)]
        manual: Option<Vec<HeadId>>,
    },
}

fn default_cover() -> usize {
    DEFAULT_COVER_SIZE
}

fn default_pool() -> usize {
    DEFAULT_POOL_SIZE
}

fn default_template() -> String {
    "default".into()
}

fn default_variant() -> Variant {
    Variant::PrePositional
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Model label used in reports.
    pub name: String,
    pub datasets: Vec<DatasetSource>,
    #[serde(default)]
    pub model_path: Option<PathBuf>,
    #[serde(default)]
    pub capture_path: Option<PathBuf>,
    /// Expected model-spec digest for ingested captures.
    #[serde(default)]
    pub spec_digest: Option<String>,
    #[serde(default = "default_template")]
    pub template: String,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    pub heads: HeadSelection,
    #[serde(default = "default_pool")]
    pub pool_size: usize,
    /// Flip heads that calibrate below chance on the evaluated setup.
    #[serde(default)]
    pub flip_reversed: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub save_captures: bool,
    #[serde(default)]
    pub attention_diagnostic: bool,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(name: &str, datasets: Vec<DatasetSource>, heads: HeadSelection) -> Self {
        ExperimentConfig {
            name: name.into(),
            datasets,
            model_path: None,
            capture_path: None,
            spec_digest: None,
            template: default_template(),
            variant: Variant::PrePositional,
            heads,
            pool_size: DEFAULT_POOL_SIZE,
            flip_reversed: false,
            output_dir: None,
            save_captures: false,
            attention_diagnostic: false,
            seed: 0,
        }
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.model_path.is_some() == self.capture_path.is_some() {
            return Err(HarnessError::Config("set exactly one of model_path and capture_path".into()));
        }
        for p in self.model_path.iter().chain(&self.capture_path) {
            if !p.exists() {
                return Err(HarnessError::Config(format!("{} does not exist", p.display())));
            }
        }
        self.validate_common()
    }

    fn validate_common(&self) -> Result<(), HarnessError> {
        if self.datasets.is_empty() {
            return Err(HarnessError::Config("no datasets".into()));
        }
        for d in &self.datasets {
            match d {
                DatasetSource::Path(p) if !p.exists() => {
                    return Err(HarnessError::Config(format!("{} does not exist", p.display())))
                }
                DatasetSource::Generate(c) => c.validate()?,
                _ => {}
            }
        }
        if self.pool_size == 0 {
            return Err(HarnessError::Config("pool_size must be positive".into()));
        }
        if let HeadSelection::Explicit { heads } = &self.heads {
            if heads.is_empty() {
                return Err(HarnessError::Config("explicit head list is empty".into()));
            }
        }
        Ok(())
    }

    fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

/// Where captures come from.
pub enum Backend<'a> {
    Model(&'a Model),
    Captures(&'a CaptureSet),
}

/// One loaded setup.
pub struct Setup {
    pub descriptor: SetupDescriptor,
    pub split: DatasetSplit,
}

pub fn load_setups(config: &ExperimentConfig) -> Result<Vec<Setup>, HarnessError> {
    let mut out: Vec<Setup> = Vec::new();
    for d in &config.datasets {
        let split = match d {
            DatasetSource::Generate(c) => generate(c)?,
            DatasetSource::Path(p) => read_dataset(p)?,
        };
        let descriptor = SetupDescriptor::from_config(&split.manifest.config);
        if out.iter().any(|s| s.descriptor.name == descriptor.name) {
            return Err(HarnessError::Config(format!("duplicate setup {}", descriptor.name)));
        }
        out.push(Setup { descriptor, split });
    }
    Ok(out)
}

fn worker_pool() -> Result<rayon::ThreadPool, HarnessError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v.parse().map_err(|_| HarnessError::Config(format!("{WORKERS_ENV}={v} is not a count")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| HarnessError::Config(e.to_string()))
}

/// Forward passes for every sample in a split, sorted by sample id.
pub fn capture_split(
    model: &Model,
    split: &DatasetSplit,
    template: &str,
    with_attention: bool,
) -> Result<Vec<QKCapture>, HarnessError> {
    let samples: Vec<_> = split.all().collect();
    let pool = worker_pool()?;
    let mut caps = pool.install(|| {
        samples
            .par_iter()
            .map(|s| {
                let prompt = render_prompt(s, template)?;
                let layout = tokenize(&prompt, &model.vocab)?;
                if let Some(p) = layout.token_ids.iter().position(|&t| t == model.vocab.unk_id()) {
                    log::warn!("{}: unknown token at position {p}", s.id);
                }
                forward_capture(model, &layout, &s.id, with_attention, false)
            })
            .collect::<Result<Vec<_>, RuntimeError>>()
    })?;
    caps.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    Ok(caps)
}

/// Joins external captures to a dataset by sample id.
pub fn ingest_captures(
    set: &CaptureSet,
    split: &DatasetSplit,
    expected_digest: Option<&str>,
) -> Result<Vec<QKCapture>, HarnessError> {
    if let Some(expected) = expected_digest {
        let found = set.spec.digest();
        if found != expected {
            return Err(HarnessError::DigestMismatch { expected: expected.to_string(), found });
        }
    }
    let by_id: BTreeMap<&str, &QKCapture> = set.captures.iter().map(|c| (c.sample_id.as_str(), c)).collect();
    let mut ids: Vec<&str> = split.all().map(|s| s.id.as_str()).collect();
    ids.sort_unstable();
    ids.into_iter()
        .map(|id| by_id.get(id).map(|c| (*c).clone()).ok_or_else(|| HarnessError::IdMismatch(id.to_string())))
        .collect()
}

pub fn ingest_external_capture(
    capture_path: &Path,
    dataset_path: &Path,
    expected_digest: Option<&str>,
) -> Result<CaptureSet, HarnessError> {
    let set = read_capture(capture_path)?;
    let split = read_dataset(dataset_path)?;
    let captures = ingest_captures(&set, &split, expected_digest)?;
    Ok(CaptureSet { spec: set.spec, captures })
}

pub fn gold_map(split: &DatasetSplit) -> BTreeMap<String, Answer> {
    split.all().map(|s| (s.id.clone(), s.gold)).collect()
}

/// Score table over a whole split plus its calibration and evaluation parts.
pub struct SplitTables {
    pub all: ScoreTable,
    pub calibration: ScoreTable,
    pub evaluation: ScoreTable,
}

pub fn split_tables(
    set: &CaptureSet,
    split: &DatasetSplit,
    variant: Variant,
) -> Result<SplitTables, HarnessError> {
    let all = score_table(set, &gold_map(split), variant, &split.manifest.sha256)?;
    let cal_ids: BTreeSet<String> = split.calibration.iter().map(|s| s.id.clone()).collect();
    let eval_ids: BTreeSet<String> = split.evaluation.iter().map(|s| s.id.clone()).collect();
    if let Some(shared) = cal_ids.intersection(&eval_ids).next() {
        return Err(HarnessError::Config(format!("{shared} is in both splits")));
    }
    Ok(SplitTables { calibration: all.restrict(&cal_ids), evaluation: all.restrict(&eval_ids), all })
}

fn accuracy(decisions: &[Answer], gold: &[Answer]) -> Accuracy {
    Accuracy { correct: decisions.iter().zip(gold).filter(|(d, g)| d == g).count(), total: gold.len() }
}

/// Accuracy of one head on an evaluation table.
pub fn head_eval_accuracy(table: &ScoreTable, head: HeadId, orientation: Orientation) -> Accuracy {
    accuracy(&table.decisions(head, orientation), &table.gold)
}

pub fn baseline_accuracy(table: &ScoreTable) -> Accuracy {
    accuracy(&table.baseline, &table.gold)
}

struct Prepared {
    setup: Setup,
    tables: SplitTables,
    calibration: CalibrationReport,
}

/// Runs an experiment against an in-memory backend; persists artifacts when
/// `output_dir` is set.
pub fn run_with_backend(config: &ExperimentConfig, backend: Backend<'_>) -> Result<EvalReport, HarnessError> {
    config.validate_common()?;
    let setups = load_setups(config)?;
    let spec = match &backend {
        Backend::Model(m) => m.spec.clone(),
        Backend::Captures(c) => c.spec.clone(),
    };
    let mut prepared = Vec::with_capacity(setups.len());
    let mut saved: Vec<QKCapture> = Vec::new();
    for setup in setups {
        let captures = match &backend {
            Backend::Model(m) => capture_split(m, &setup.split, &config.template, config.attention_diagnostic)?,
            Backend::Captures(c) => ingest_captures(c, &setup.split, config.spec_digest.as_deref())?,
        };
        let set = CaptureSet { spec: spec.clone(), captures };
        let tables = split_tables(&set, &setup.split, config.variant)?;
        let calibration = calibrate(&tables.calibration, setup.descriptor.clone(), config.pool_size)?;
        log::info!(
            "{}: best head {} at {:.4}",
            setup.descriptor.name,
            calibration.best_head,
            calibration.heads[0].accuracy
        );
        if config.save_captures {
            saved.extend(set.captures);
        }
        prepared.push(Prepared { setup, tables, calibration });
    }

    let reports: Vec<CalibrationReport> = prepared.iter().map(|p| p.calibration.clone()).collect();
    let (sources, cover, heads_mode): (Vec<Source>, Option<HeadCover>, String) = match &config.heads {
        HeadSelection::Best => (vec![(BEST.to_string(), None)], None, "best".into()),
        HeadSelection::Explicit { heads } => {
            (heads.iter().map(|h| (h.to_string(), Some(*h))).collect(), None, "explicit".into())
        }
        HeadSelection::Cover { k, from, manual } => {
            let pool: Vec<CalibrationReport> = if from.is_empty() {
                reports.clone()
            } else {
                for name in from {
                    if !reports.iter().any(|r| &r.setup.name == name) {
                        return Err(HarnessError::Config(format!("cover source {name} is not a setup")));
                    }
                }
                reports.iter().filter(|r| from.contains(&r.setup.name)).cloned().collect()
            };
            let cover = match manual {
                Some(hs) => manual_cover(&pool, hs)?,
                None => select_cover_heads(&pool, *k)?,
            };
            (cover.heads.iter().map(|h| (h.to_string(), Some(*h))).collect(), Some(cover), "cover".into())
        }
    };
    for h in sources.iter().filter_map(|(_, h)| *h) {
        if h.layer >= spec.n_layers || h.head >= spec.n_heads {
            return Err(ProbeError::HeadOutOfRange { head: h, n_layers: spec.n_layers, n_heads: spec.n_heads }.into());
        }
    }

    let mut cells = Vec::new();
    for p in &prepared {
        let name = &p.setup.descriptor.name;
        for (label, head) in &sources {
            let head = head.unwrap_or(p.calibration.best_head);
            let orientation = if config.flip_reversed {
                p.calibration.heads.iter().find(|h| h.head == head).map_or(Orientation::Direct, |h| h.orientation)
            } else {
                Orientation::Direct
            };
            cells.push(EvalCell::new(name, label, Some(head), head_eval_accuracy(&p.tables.evaluation, head, orientation)));
        }
        cells.push(EvalCell::new(name, BASELINE, None, baseline_accuracy(&p.tables.evaluation)));
    }
    let mut source_labels: Vec<String> = sources.into_iter().map(|(l, _)| l).collect();
    source_labels.push(BASELINE.to_string());

    let report = EvalReport {
        model: config.name.clone(),
        variant: config.variant,
        heads_mode,
        setups: prepared
            .iter()
            .map(|p| SetupSummary {
                setup: p.setup.descriptor.clone(),
                n_calibration: p.tables.calibration.len(),
                n_evaluation: p.tables.evaluation.len(),
                dataset_digest: p.setup.split.manifest.sha256.clone(),
            })
            .collect(),
        sources: source_labels,
        cells,
        calibration: reports,
        cover,
        meta: RunMeta { seed: config.seed, spec_digest: spec.digest(), config_digest: experiment_digest(config) },
    };
    report.check_complete()?;

    if let Some(dir) = &config.output_dir {
        persist(dir, config, &prepared, &report, &spec, saved)?;
    }
    Ok(report)
}

/// Digest of the parts of a config that determine report contents; the
/// backend paths and output location are excluded so that ingested and
/// in-process runs agree.
fn experiment_digest(config: &ExperimentConfig) -> String {
    let mut c = config.clone();
    c.model_path = None;
    c.capture_path = None;
    c.spec_digest = None;
    c.output_dir = None;
    c.save_captures = false;
    c.digest()
}

fn persist(
    dir: &Path,
    config: &ExperimentConfig,
    prepared: &[Prepared],
    report: &EvalReport,
    spec: &crate::runtime::ModelSpec,
    saved: Vec<QKCapture>,
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir.join("datasets"))?;
    fs::create_dir_all(dir.join("scores"))?;
    fs::create_dir_all(dir.join("calibration"))?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(config).expect("config serializes") + "\n")?;
    for p in prepared {
        let slug = report::slug(&p.setup.descriptor.name);
        write_dataset(&dir.join("datasets").join(&slug), &p.setup.split)?;
        p.tables.all.write_tsv(&dir.join("scores").join(format!("{slug}.tsv")))?;
        fs::write(dir.join("calibration").join(format!("{slug}.tsv")), p.calibration.to_tsv())?;
        fs::write(
            dir.join("calibration").join(format!("{slug}.json")),
            serde_json::to_string_pretty(&p.calibration).expect("report serializes") + "\n",
        )?;
    }
    if config.save_captures {
        let mut captures = saved;
        captures.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        write_capture(&CaptureSet { spec: spec.clone(), captures }, &dir.join("captures.qkc"))?;
    }
    fs::write(dir.join("report.json"), report.to_json())?;
    let formats: BTreeSet<ReportFormat> =
        [ReportFormat::Csv, ReportFormat::Markdown, ReportFormat::SvgHeatmap].into_iter().collect();
    emit_report(std::slice::from_ref(report), &formats, dir)?;
    Ok(())
}

/// Loads the configured backend from disk and runs the experiment. Timing
/// goes to `run.json` next to the report.
pub fn run_experiment(config: &ExperimentConfig) -> Result<EvalReport, HarnessError> {
    config.validate()?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let report = if let Some(p) = &config.model_path {
        let model = load_model(p)?;
        run_with_backend(config, Backend::Model(&model))?
    } else {
        let set = read_capture(config.capture_path.as_ref().expect("validated"))?;
        run_with_backend(config, Backend::Captures(&set))?
    };
    if let Some(dir) = &config.output_dir {
        let run = serde_json::json!({
            "started_unix": started,
            "elapsed_secs": clock.elapsed().as_secs_f64(),
            "workers": rayon::current_num_threads(),
            "version": env!("CARGO_PKG_VERSION"),
        });
        fs::write(dir.join("run.json"), serde_json::to_string_pretty(&run).expect("json") + "\n")?;
    }
    Ok(report)
}

/// Reads a report written by a run.
pub fn read_report(path: &Path) -> Result<EvalReport, HarnessError> {
    serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}
