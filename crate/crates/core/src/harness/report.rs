// SPDX-License-Identifier: MIT OR Apache-2.0

//! Evaluation reports and their CSV, markdown and SVG renderings.
//!
//! Markdown tables group reports with identical setup columns; each report
//! contributes one row per decision source. Per column, the best value is in
//! bold and head values above the baseline that are not the best are
//! underlined.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::calibration::{Accuracy, CalibrationReport, HeadCover, SetupDescriptor};
use crate::runtime::{HeadId, Variant};

pub const BASELINE: &str = "Baseline";
/// Source label for the per-setup best head.
pub const BEST: &str = "QK";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetupSummary {
    pub setup: SetupDescriptor,
    pub n_calibration: usize,
    pub n_evaluation: usize,
    pub dataset_digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub setup: String,
    pub source: String,
    /// Head behind a QK source.
    pub head: Option<HeadId>,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl EvalCell {
    pub fn new(setup: &str, source: &str, head: Option<HeadId>, acc: Accuracy) -> Self {
        EvalCell {
            setup: setup.to_string(),
            source: source.to_string(),
            head,
            correct: acc.correct,
            total: acc.total,
            accuracy: acc.value(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub spec_digest: String,
    pub config_digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub variant: Variant,
    pub heads_mode: String,
    pub setups: Vec<SetupSummary>,
    /// Row order for rendering; `Baseline` last.
    pub sources: Vec<String>,
    pub cells: Vec<EvalCell>,
    pub calibration: Vec<CalibrationReport>,
    pub cover: Option<HeadCover>,
    pub meta: RunMeta,
}

impl EvalReport {
    pub fn cell(&self, setup: &str, source: &str) -> Option<&EvalCell> {
        self.cells.iter().find(|c| c.setup == setup && c.source == source)
    }

    pub fn setup_names(&self) -> Vec<String> {
        self.setups.iter().map(|s| s.setup.name.clone()).collect()
    }

    /// Every (setup, source) pair has a cell with a consistent accuracy.
    pub fn check_complete(&self) -> Result<(), HarnessError> {
        for s in &self.setups {
            for src in &self.sources {
                let cell = self.cell(&s.setup.name, src).ok_or_else(|| {
                    HarnessError::Config(format!("report lacks cell ({}, {src})", s.setup.name))
                })?;
                if cell.total == 0 || cell.correct > cell.total || !(0.0..=1.0).contains(&cell.accuracy) {
                    return Err(HarnessError::Config(format!("bad cell ({}, {src})", s.setup.name)));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
    #[serde(rename = "svg")]
    SvgHeatmap,
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "svg" | "svg-heatmap" => Ok(ReportFormat::SvgHeatmap),
            _ => Err(HarnessError::UnsupportedFormat(s.to_string())),
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Flat grid, one line per cell.
pub fn render_csv(reports: &[EvalReport]) -> String {
    let mut out =
        String::from("model,setup,family,rule_mode,depth,distractors,source,layer,head,correct,total,accuracy\n");
    for r in reports {
        for s in &r.setups {
            for src in &r.sources {
                let Some(c) = r.cell(&s.setup.name, src) else { continue };
                let (layer, head) = c.head.map_or((String::new(), String::new()), |h| (h.layer.to_string(), h.head.to_string()));
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{layer},{head},{},{},{:.4}",
                    csv_field(&r.model),
                    csv_field(&s.setup.name),
                    s.setup.family,
                    csv_field(&s.setup.rule_mode),
                    s.setup.depth,
                    s.setup.distractors,
                    csv_field(src),
                    c.correct,
                    c.total,
                    c.accuracy
                )
                .expect("write to string");
            }
        }
    }
    out
}

fn column_label(s: &SetupDescriptor) -> String {
    let mut label = format!("{} {} d{}", s.family, s.rule_mode, s.depth);
    if s.distractors != "0" {
        write!(label, " +{}x", s.distractors).expect("write to string");
    }
    label
}

fn row_label(report: &EvalReport, source: &str, setup_names: &[String]) -> String {
    if source != BEST {
        return source.to_string();
    }
    // Best-head rows name their heads when they agree across columns.
    let heads: BTreeSet<HeadId> =
        setup_names.iter().filter_map(|s| report.cell(s, source).and_then(|c| c.head)).collect();
    match heads.iter().next() {
        Some(h) if heads.len() == 1 => format!("{BEST} {h}"),
        _ => BEST.to_string(),
    }
}

fn markdown_table(out: &mut String, reports: &[&EvalReport]) {
    let first = reports[0];
    let names = first.setup_names();
    out.push_str("| Model | Source |");
    for s in &first.setups {
        write!(out, " {} |", column_label(&s.setup)).expect("write to string");
    }
    out.push_str("\n|---|---|");
    for _ in &names {
        out.push_str("---:|");
    }
    out.push('\n');
    for r in reports {
        let best: Vec<Option<f64>> = names
            .iter()
            .map(|s| r.sources.iter().filter_map(|src| r.cell(s, src)).map(|c| c.accuracy).reduce(f64::max))
            .collect();
        for (row, src) in r.sources.iter().enumerate() {
            let model = if row == 0 { r.model.as_str() } else { "" };
            write!(out, "| {model} | {} |", row_label(r, src, &names)).expect("write to string");
            for (col, s) in names.iter().enumerate() {
                let Some(c) = r.cell(s, src) else {
                    out.push_str(" - |");
                    continue;
                };
                let v = format!("{:.4}", c.accuracy);
                let base = r.cell(s, BASELINE).map(|b| b.accuracy);
                let text = if Some(c.accuracy) == best[col] {
                    format!("**{v}**")
                } else if src != BASELINE && base.is_some_and(|b| c.accuracy > b) {
                    format!("<u>{v}</u>")
                } else {
                    v
                };
                write!(out, " {text} |").expect("write to string");
            }
            out.push('\n');
        }
    }
}

/// Markdown tables, one per distinct column set, models as row groups.
pub fn render_markdown(reports: &[EvalReport]) -> String {
    let mut groups: Vec<(Vec<String>, Vec<&EvalReport>)> = Vec::new();
    for r in reports {
        let names = r.setup_names();
        match groups.iter_mut().find(|(n, _)| *n == names) {
            Some((_, g)) => g.push(r),
            None => groups.push((names, vec![r])),
        }
    }
    let mut out = String::new();
    for (i, (_, group)) in groups.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        markdown_table(&mut out, group);
    }
    out
}

fn heat_color(v: f64) -> String {
    // 0 -> blue, 0.5 -> white, 1 -> red.
    let v = v.clamp(0.0, 1.0);
    let (r, g, b) = if v >= 0.5 {
        let t = (v - 0.5) * 2.0;
        (255.0, 255.0 * (1.0 - t), 255.0 * (1.0 - t))
    } else {
        let t = (0.5 - v) * 2.0;
        (255.0 * (1.0 - t), 255.0 * (1.0 - t), 255.0)
    };
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}

/// Layers x heads calibration-accuracy heatmap.
pub fn render_heatmap(report: &CalibrationReport) -> String {
    let cell = 28usize;
    let (left, top) = (48usize, 40usize);
    let (w, h) = (left + cell * report.n_heads + 10, top + cell * report.n_layers + 30);
    let mut out = String::new();
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"monospace\" font-size=\"9\">"
    )
    .expect("write to string");
    writeln!(out, "<title>{}</title>", xml_escape(&report.setup.name)).expect("write to string");
    writeln!(out, "<text x=\"{left}\" y=\"14\" font-size=\"11\">{}</text>", xml_escape(&report.setup.name))
        .expect("write to string");
    for head in 0..report.n_heads {
        writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{head}</text>", left + head * cell + cell / 2, top - 6)
            .expect("write to string");
    }
    for (layer, row) in report.grid().iter().enumerate() {
        let y = top + layer * cell;
        writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{layer}</text>", left - 6, y + cell / 2 + 3)
            .expect("write to string");
        for (head, &acc) in row.iter().enumerate() {
            let x = left + head * cell;
            writeln!(
                out,
                "<rect class=\"cell\" x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"{}\"><title>({layer}, {head}) {acc:.4}</title></rect>",
                heat_color(acc)
            )
            .expect("write to string");
            if report.best_head == HeadId::new(layer, head) {
                writeln!(
                    out,
                    "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>"
                )
                .expect("write to string");
            }
        }
    }
    writeln!(
        out,
        "<text x=\"{left}\" y=\"{}\">layer x head, best {}</text>",
        top + cell * report.n_layers + 18,
        report.best_head
    )
    .expect("write to string");
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub(crate) fn slug(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

/// Writes the requested renderings into `dir`; returns the written paths.
pub fn emit_report(
    reports: &[EvalReport],
    formats: &BTreeSet<ReportFormat>,
    dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    for r in reports {
        r.check_complete()?;
    }
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for f in formats {
        match f {
            ReportFormat::Csv => {
                let p = dir.join("report.csv");
                fs::write(&p, render_csv(reports))?;
                written.push(p);
            }
            ReportFormat::Markdown => {
                let p = dir.join("report.md");
                fs::write(&p, render_markdown(reports))?;
                written.push(p);
            }
            ReportFormat::SvgHeatmap => {
                let mut seen = BTreeMap::new();
                for r in reports {
                    for c in &r.calibration {
                        let name = format!("heatmap_{}_{}.svg", slug(&r.model), slug(&c.setup.name));
                        if seen.insert(name.clone(), ()).is_none() {
                            let p = dir.join(name);
                            fs::write(&p, render_heatmap(c))?;
                            written.push(p);
                        }
                    }
                }
            }
        }
    }
    Ok(written)
}
