// SPDX-License-Identifier: MIT OR Apache-2.0

//! Python bindings. Structured results cross the boundary as JSON strings;
//! the `qkprobe` Python package decodes them.

use std::collections::BTreeSet;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use qkprobe::calibration::{calibrate as calibrate_table, SetupDescriptor};
use qkprobe::datagen::{self, Answer, CountRange, DatasetSplit, Family, GenConfig, RuleMode};
use qkprobe::harness::{self, report::render_markdown, ExperimentConfig, HeadSelection};
use qkprobe::logic::{self, Formula, InferenceRule, Verdict};
use qkprobe::probe::{self, Orientation};
use qkprobe::runtime::{self, HeadId, Variant};

/// Token strings and `(a0, a1, statement end, final)` positions.
type Tokenized = (Vec<String>, (usize, usize, usize, usize));

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

fn parse_variant(v: &str) -> PyResult<Variant> {
    v.parse().map_err(value_err)
}

fn answer_str(a: Answer) -> &'static str {
    match a {
        Answer::A0 => "a0",
        Answer::A1 => "a1",
    }
}

fn parse_formulas(texts: &[String]) -> PyResult<Vec<Formula>> {
    texts.iter().map(|t| t.parse::<Formula>().map_err(value_err)).collect()
}

/// Parses a formula and returns its canonical text.
#[pyfunction]
fn parse_formula(text: &str) -> PyResult<String> {
    Ok(text.parse::<Formula>().map_err(value_err)?.to_string())
}

/// `"entailed"`, `"not_entailed"` or `"undetermined"` over a finite domain.
#[pyfunction]
#[pyo3(signature = (theory, query, domain_size = 3))]
fn entails(theory: Vec<String>, query: &str, domain_size: usize) -> PyResult<&'static str> {
    let theory = parse_formulas(&theory)?;
    let query: Formula = query.parse().map_err(value_err)?;
    Ok(match logic::entails(&theory, &query, domain_size).map_err(value_err)? {
        Verdict::Entailed => "entailed",
        Verdict::NotEntailed => "not_entailed",
        Verdict::Undetermined => "undetermined",
    })
}

/// Applies an inference rule by tag (`"MP"`, `"MT"`, ...) to premises.
#[pyfunction]
#[pyo3(signature = (rule, premises, constant = None))]
fn apply_rule(rule: &str, premises: Vec<String>, constant: Option<&str>) -> PyResult<String> {
    let rule: InferenceRule = rule.parse().map_err(value_err)?;
    Ok(logic::apply_rule(rule, &parse_formulas(&premises)?, constant).map_err(value_err)?.to_string())
}

#[pyfunction]
fn rule_tags() -> Vec<&'static str> {
    InferenceRule::ALL.iter().map(|r| r.tag()).collect()
}

#[pyclass(module = "qkprobe._qkprobe", frozen)]
struct Dataset {
    split: DatasetSplit,
}

#[pymethods]
impl Dataset {
    /// Generates a certified dataset.
    #[staticmethod]
    #[pyo3(signature = (family, rule_mode = None, min_hops = 1, max_hops = 1, depth = 1, distractors = 0,
                        n_calibration = 600, n_evaluation = 1000, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn generate(
        py: Python<'_>,
        family: &str,
        rule_mode: Option<&str>,
        min_hops: usize,
        max_hops: usize,
        depth: usize,
        distractors: usize,
        n_calibration: usize,
        n_evaluation: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let family = match family {
            "pronto" => Family::Pronto,
            "pararule" => Family::Pararule,
            "mle" => Family::Mle,
            other => return Err(value_err(format!("unknown family `{other}`"))),
        };
        let mut c = GenConfig::new(family);
        match rule_mode {
            Some("mp_only") => c.rule_mode = RuleMode::MpOnly,
            Some("composed") => c.rule_mode = RuleMode::Composed,
            Some("scheme") => c.rule_mode = RuleMode::Scheme { depth, schemes: Vec::new() },
            Some(other) => return Err(value_err(format!("unknown rule mode `{other}`"))),
            None if family == Family::Mle => c.rule_mode = RuleMode::Scheme { depth, schemes: Vec::new() },
            None => {}
        }
        c.hops = CountRange::new(min_hops, max_hops);
        c.distractors = CountRange::exactly(distractors);
        c.n_calibration = n_calibration;
        c.n_evaluation = n_evaluation;
        c.seed = seed;
        let split = py.detach(|| datagen::generate(&c)).map_err(value_err)?;
        Ok(Dataset { split })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Dataset { split: datagen::read_dataset(&path).map_err(io_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        datagen::write_dataset(&path, &self.split).map_err(io_err)
    }

    fn __len__(&self) -> usize {
        self.split.calibration.len() + self.split.evaluation.len()
    }

    #[getter]
    fn digest(&self) -> String {
        self.split.manifest.sha256.clone()
    }

    #[getter]
    fn setup(&self) -> String {
        SetupDescriptor::from_config(&self.split.manifest.config).name
    }

    /// Sample ids of `"calibration"`, `"evaluation"` or `"all"`.
    #[pyo3(signature = (part = "all"))]
    fn sample_ids(&self, part: &str) -> PyResult<Vec<String>> {
        Ok(self.part(part)?.map(|s| s.id.clone()).collect())
    }

    #[pyo3(signature = (part = "all"))]
    fn gold(&self, part: &str) -> PyResult<Vec<&'static str>> {
        Ok(self.part(part)?.map(|s| answer_str(s.gold)).collect())
    }

    /// JSON list of samples.
    #[pyo3(signature = (part = "all"))]
    fn samples_json(&self, part: &str) -> PyResult<String> {
        Ok(json(&self.part(part)?.collect::<Vec<_>>()))
    }

    /// Prompt text for one sample.
    #[pyo3(signature = (sample_id, template = "default"))]
    fn render(&self, sample_id: &str, template: &str) -> PyResult<String> {
        let s = self.find(sample_id)?;
        Ok(runtime::render_prompt(s, template).map_err(value_err)?.text)
    }

    /// Token strings and the `(a0, a1, statement end, final)` positions of a
    /// prompt under the closed vocabulary.
    #[pyo3(signature = (sample_id, template = "default"))]
    fn tokenize(&self, sample_id: &str, template: &str) -> PyResult<Tokenized> {
        let s = self.find(sample_id)?;
        let vocab = runtime::Vocab::closed();
        let prompt = runtime::render_prompt(s, template).map_err(value_err)?;
        let layout = runtime::tokenize(&prompt, &vocab).map_err(value_err)?;
        let tokens = layout.token_ids.iter().map(|&i| vocab.token(i).to_string()).collect();
        Ok((tokens, (layout.pos_a0, layout.pos_a1, layout.pos_s, layout.pos_final)))
    }
}

impl Dataset {
    fn part<'a>(&'a self, part: &str) -> PyResult<Box<dyn Iterator<Item = &'a datagen::LogicSample> + 'a>> {
        Ok(match part {
            "calibration" => Box::new(self.split.calibration.iter()),
            "evaluation" => Box::new(self.split.evaluation.iter()),
            "all" => Box::new(self.split.all()),
            other => return Err(value_err(format!("unknown part `{other}`"))),
        })
    }

    fn find(&self, id: &str) -> PyResult<&datagen::LogicSample> {
        self.split.all().find(|s| s.id == id).ok_or_else(|| value_err(format!("no sample `{id}`")))
    }
}

#[pyclass(module = "qkprobe._qkprobe", frozen)]
struct Model {
    model: runtime::Model,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Model { model: runtime::load_model(&path).map_err(io_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        runtime::save_model(&self.model, &path).map_err(io_err)
    }

    /// Planted-head verification model over the closed vocabulary; use the
    /// `marker` template with it.
    #[staticmethod]
    #[pyo3(signature = (planted, n_layers = 2, n_heads = 4, head_dim = 8, seed = 0))]
    fn planted(planted: (usize, usize), n_layers: usize, n_heads: usize, head_dim: usize, seed: u64) -> PyResult<Self> {
        let spec = harness::planted_spec(n_layers, n_heads, head_dim);
        let model = harness::build_planted_model(&spec, HeadId::new(planted.0, planted.1), seed).map_err(value_err)?;
        Ok(Model { model })
    }

    /// Seeded random toy model over the closed vocabulary.
    #[staticmethod]
    #[pyo3(signature = (n_layers = 2, n_heads = 4, head_dim = 8, seed = 0))]
    fn random(n_layers: usize, n_heads: usize, head_dim: usize, seed: u64) -> PyResult<Self> {
        let vocab = runtime::Vocab::closed();
        let spec = runtime::ModelSpec::toy(n_layers, n_heads, head_dim, vocab.len());
        Ok(Model { model: runtime::Model::random(spec, vocab, seed).map_err(value_err)? })
    }

    #[getter]
    fn n_layers(&self) -> usize {
        self.model.spec.n_layers
    }

    #[getter]
    fn n_heads(&self) -> usize {
        self.model.spec.n_heads
    }

    #[getter]
    fn spec_json(&self) -> String {
        json(&self.model.spec)
    }

    #[getter]
    fn spec_digest(&self) -> String {
        self.model.spec.digest()
    }

    /// Forward passes over every sample of a dataset.
    #[pyo3(signature = (dataset, template = "default", attention = false))]
    fn capture(&self, py: Python<'_>, dataset: &Dataset, template: &str, attention: bool) -> PyResult<Captures> {
        let captures = py
            .detach(|| harness::capture_split(&self.model, &dataset.split, template, attention))
            .map_err(value_err)?;
        Ok(Captures { set: runtime::CaptureSet { spec: self.model.spec.clone(), captures } })
    }
}

#[pyclass(module = "qkprobe._qkprobe", frozen)]
struct Captures {
    set: runtime::CaptureSet,
}

#[pymethods]
impl Captures {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Captures { set: runtime::read_capture(&path).map_err(io_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        runtime::write_capture(&self.set, &path).map_err(io_err)
    }

    fn __len__(&self) -> usize {
        self.set.captures.len()
    }

    fn sample_ids(&self) -> Vec<String> {
        self.set.captures.iter().map(|c| c.sample_id.clone()).collect()
    }

    /// `(sample_id, s0, s1)` for one head.
    #[pyo3(signature = (layer, head, variant = "pre"))]
    fn scores(&self, layer: usize, head: usize, variant: &str) -> PyResult<Vec<(String, f32, f32)>> {
        let variant = parse_variant(variant)?;
        self.set
            .captures
            .iter()
            .map(|c| {
                let (s0, s1) =
                    probe::qk_scores(&self.set.spec, c, HeadId::new(layer, head), variant).map_err(value_err)?;
                Ok((c.sample_id.clone(), s0, s1))
            })
            .collect()
    }

    /// `(sample_id, l0, l1)` option logits at the final position.
    fn option_logits(&self) -> Vec<(String, f32, f32)> {
        self.set.captures.iter().map(|c| (c.sample_id.clone(), c.option_logits[0], c.option_logits[1])).collect()
    }

    /// Joins to a dataset by sample id, checking coverage and the optional
    /// spec digest.
    #[pyo3(signature = (dataset, spec_digest = None))]
    fn aligned(&self, dataset: &Dataset, spec_digest: Option<&str>) -> PyResult<Captures> {
        let captures = harness::ingest_captures(&self.set, &dataset.split, spec_digest).map_err(value_err)?;
        Ok(Captures { set: runtime::CaptureSet { spec: self.set.spec.clone(), captures } })
    }
}

/// Raw query-key score `q . k`.
#[pyfunction]
fn qk_score(q: Vec<f32>, k: Vec<f32>) -> PyResult<f32> {
    if q.len() != k.len() {
        return Err(value_err(format!("length mismatch: {} vs {}", q.len(), k.len())));
    }
    Ok(probe::dot(&q, &k))
}

/// `"a0"` iff `s0 >= s1`, flipped when `reversed`.
#[pyfunction]
#[pyo3(signature = (s0, s1, reversed = false))]
fn decide(s0: f32, s1: f32, reversed: bool) -> &'static str {
    let o = if reversed { Orientation::Reversed } else { Orientation::Direct };
    answer_str(probe::decide_scores(s0, s1, o))
}

#[pyfunction]
fn decide_logits(l0: f32, l1: f32) -> &'static str {
    answer_str(probe::decide_logits(l0, l1))
}

/// Calibration report (JSON) on the dataset's calibration split.
#[pyfunction]
#[pyo3(signature = (captures, dataset, variant = "pre", pool_size = 10))]
fn calibrate(captures: &Captures, dataset: &Dataset, variant: &str, pool_size: usize) -> PyResult<String> {
    let tables = harness::split_tables(&captures.set, &dataset.split, parse_variant(variant)?).map_err(value_err)?;
    let setup = SetupDescriptor::from_config(&dataset.split.manifest.config);
    Ok(json(&calibrate_table(&tables.calibration, setup, pool_size).map_err(value_err)?))
}

/// Runs an experiment config (JSON) and returns the report (JSON).
#[pyfunction]
fn run_experiment(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let config: ExperimentConfig = serde_json::from_str(config_json).map_err(value_err)?;
    let report = py.detach(|| harness::run_experiment(&config)).map_err(value_err)?;
    Ok(report.to_json())
}

/// Runs an experiment against an in-memory model and returns the report
/// (JSON). Datasets are regenerated from their recorded configs.
#[pyfunction]
#[pyo3(signature = (model, datasets, heads = None, template = "default", variant = "pre"))]
fn run_in_memory(
    py: Python<'_>,
    model: &Model,
    datasets: Vec<Bound<'_, Dataset>>,
    heads: Option<Vec<(usize, usize)>>,
    template: &str,
    variant: &str,
) -> PyResult<String> {
    let sources =
        datasets.iter().map(|d| harness::DatasetSource::Generate(d.get().split.manifest.config.clone())).collect();
    let selection = match heads {
        Some(hs) => HeadSelection::Explicit { heads: hs.into_iter().map(|(l, h)| HeadId::new(l, h)).collect() },
        None => HeadSelection::Best,
    };
    let mut config = ExperimentConfig::new("model", sources, selection);
    config.template = template.into();
    config.variant = parse_variant(variant)?;
    let report = py.detach(|| harness::run_with_backend(&config, harness::Backend::Model(&model.model)));
    Ok(report.map_err(value_err)?.to_json())
}

/// Markdown tables for report JSON strings.
#[pyfunction]
fn report_markdown(reports: Vec<String>) -> PyResult<String> {
    let reports = reports
        .iter()
        .map(|r| serde_json::from_str(r).map_err(value_err))
        .collect::<PyResult<Vec<harness::EvalReport>>>()?;
    Ok(render_markdown(&reports))
}

/// Writes `report.csv`, `report.md` and heatmaps for report JSON strings.
#[pyfunction]
#[pyo3(signature = (reports, out_dir, formats = vec!["csv".to_string(), "markdown".to_string(), "svg".to_string()]))]
fn emit_report(reports: Vec<String>, out_dir: PathBuf, formats: Vec<String>) -> PyResult<Vec<PathBuf>> {
    let reports = reports
        .iter()
        .map(|r| serde_json::from_str(r).map_err(value_err))
        .collect::<PyResult<Vec<harness::EvalReport>>>()?;
    let formats = formats.iter().map(|f| f.parse().map_err(value_err)).collect::<PyResult<BTreeSet<_>>>()?;
    harness::emit_report(&reports, &formats, &out_dir).map_err(value_err)
}

#[pymodule]
fn _qkprobe(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_class::<Captures>()?;
    m.add_function(wrap_pyfunction!(parse_formula, m)?)?;
    m.add_function(wrap_pyfunction!(entails, m)?)?;
    m.add_function(wrap_pyfunction!(apply_rule, m)?)?;
    m.add_function(wrap_pyfunction!(rule_tags, m)?)?;
    m.add_function(wrap_pyfunction!(qk_score, m)?)?;
    m.add_function(wrap_pyfunction!(decide, m)?)?;
    m.add_function(wrap_pyfunction!(decide_logits, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_in_memory, m)?)?;
    m.add_function(wrap_pyfunction!(report_markdown, m)?)?;
    m.add_function(wrap_pyfunction!(emit_report, m)?)?;
    Ok(())
}
