// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use qkprobe::calibration::{calibrate, SetupDescriptor, DEFAULT_POOL_SIZE};
use qkprobe::datagen::{generate, read_dataset, write_dataset, CountRange, Family, GenConfig, RuleMode};
use qkprobe::harness::{
    build_planted_model, capture_split, emit_report, ingest_captures, planted_spec, read_report, run_experiment,
    split_tables, DatasetSource, ExperimentConfig, HeadSelection, ReportFormat,
};
use qkprobe::runtime::{load_model, read_capture, save_model, write_capture, CaptureSet, HeadId, Variant};

#[derive(Parser)]
#[command(name = "qkprobe", version, about = "Query-key score probes for logical reasoning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a certified dataset.
    Gen(GenArgs),
    /// Run an experiment from a JSON config.
    Run {
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
    },
    /// Rank heads on a dataset's calibration split.
    Calibrate {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = DEFAULT_POOL_SIZE)]
        pool_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate heads and the baseline on the evaluation split.
    Eval {
        #[command(flatten)]
        source: SourceArgs,
        /// Heads as `L,H`, repeatable. Without it, each setup's best head.
        #[arg(long = "head")]
        heads: Vec<HeadId>,
        #[arg(long, default_value = "model")]
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render saved reports.
    Report {
        /// `report.json` files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "csv,markdown,svg")]
        format: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a planted-head verification model.
    Plant {
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 4)]
        heads: usize,
        #[arg(long)]
        kv_heads: Option<usize>,
        #[arg(long, default_value_t = 8)]
        head_dim: usize,
        /// Planted head as `L,H`.
        #[arg(long, default_value = "1,2")]
        planted: HeadId,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run forward passes over a dataset and write a capture file.
    Capture {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "default")]
        template: String,
        /// Also record the unmasked attention diagnostic.
        #[arg(long)]
        attention: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check an external capture file against a dataset and write the
    /// aligned captures.
    Ingest {
        #[arg(long)]
        captures: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        spec_digest: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Pronto,
    Pararule,
    Mle,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleModeArg {
    MpOnly,
    Composed,
    Scheme,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Pre,
    Post,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Pre => Variant::PrePositional,
            VariantArg::Post => Variant::PostPositional,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long, value_enum)]
    rule_mode: Option<RuleModeArg>,
    /// Scheme depth for `--rule-mode scheme`.
    #[arg(long, default_value_t = 1)]
    depth: usize,
    /// Restrict to these scheme names, comma separated.
    #[arg(long, value_delimiter = ',')]
    schemes: Vec<String>,
    #[arg(long)]
    min_hops: Option<usize>,
    #[arg(long)]
    max_hops: Option<usize>,
    /// Distractor count, or `MIN-MAX`.
    #[arg(long, default_value = "0")]
    distractors: String,
    #[arg(long, default_value_t = 600)]
    n_calibration: usize,
    #[arg(long, default_value_t = 1000)]
    n_evaluation: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SourceArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, conflicts_with = "captures", required_unless_present = "captures")]
    model: Option<PathBuf>,
    #[arg(long)]
    captures: Option<PathBuf>,
    #[arg(long, default_value = "default")]
    template: String,
    #[arg(long, value_enum, default_value = "pre")]
    variant: VariantArg,
}

fn range(text: &str) -> Result<CountRange> {
    let parse = |s: &str| s.trim().parse::<usize>().with_context(|| format!("bad count `{s}`"));
    Ok(match text.split_once('-') {
        Some((a, b)) => CountRange::new(parse(a)?, parse(b)?),
        None => CountRange::exactly(parse(text)?),
    })
}

fn gen_config(a: &GenArgs) -> Result<GenConfig> {
    let family = match a.family {
        FamilyArg::Pronto => Family::Pronto,
        FamilyArg::Pararule => Family::Pararule,
        FamilyArg::Mle => Family::Mle,
    };
    let mut c = GenConfig::new(family);
    if let Some(mode) = a.rule_mode {
        c.rule_mode = match mode {
            RuleModeArg::MpOnly => RuleMode::MpOnly,
            RuleModeArg::Composed => RuleMode::Composed,
            RuleModeArg::Scheme => RuleMode::Scheme { depth: a.depth, schemes: a.schemes.clone() },
        };
    } else if family == Family::Mle {
        c.rule_mode = RuleMode::Scheme { depth: a.depth, schemes: a.schemes.clone() };
    }
    let min = a.min_hops.unwrap_or(c.hops.min);
    let max = a.max_hops.unwrap_or(min.max(c.hops.max));
    c.hops = CountRange::new(min, max);
    c.distractors = range(&a.distractors)?;
    c.n_calibration = a.n_calibration;
    c.n_evaluation = a.n_evaluation;
    c.seed = a.seed;
    Ok(c)
}

fn source_captures(src: &SourceArgs) -> Result<(qkprobe::datagen::DatasetSplit, CaptureSet)> {
    let split = read_dataset(&src.dataset).with_context(|| format!("reading {}", src.dataset.display()))?;
    let set = match (&src.model, &src.captures) {
        (Some(m), None) => {
            let model = load_model(m)?;
            let captures = capture_split(&model, &split, &src.template, false)?;
            CaptureSet { spec: model.spec.clone(), captures }
        }
        (None, Some(c)) => {
            let set = read_capture(c)?;
            let captures = ingest_captures(&set, &split, None)?;
            CaptureSet { spec: set.spec, captures }
        }
        _ => bail!("give exactly one of --model and --captures"),
    };
    Ok((split, set))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Gen(a) => {
            let config = gen_config(&a)?;
            let split = generate(&config)?;
            write_dataset(&a.out, &split)?;
            println!(
                "wrote {} calibration and {} evaluation samples to {}",
                split.calibration.len(),
                split.evaluation.len(),
                a.out.display()
            );
        }
        Command::Run { config, out, variant } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if out.is_some() {
                cfg.output_dir = out;
            }
            if let Some(v) = variant {
                cfg.variant = v.into();
            }
            let report = run_experiment(&cfg)?;
            print!("{}", qkprobe::harness::report::render_markdown(std::slice::from_ref(&report)));
        }
        Command::Calibrate { source, pool_size, out } => {
            let (split, set) = source_captures(&source)?;
            let tables = split_tables(&set, &split, source.variant.into())?;
            let report = calibrate(&tables.calibration, SetupDescriptor::from_config(&split.manifest.config), pool_size)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("calibration.tsv"), report.to_tsv())?;
            fs::write(out.join("calibration.json"), serde_json::to_string_pretty(&report)? + "\n")?;
            println!("best head {} ({:.4})", report.best_head, report.heads[0].accuracy);
            println!("top: {}", report.top.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(" "));
        }
        Command::Eval { source, heads, name, out } => {
            let mut cfg = ExperimentConfig::new(
                &name,
                vec![DatasetSource::Path(source.dataset.clone())],
                if heads.is_empty() { HeadSelection::Best } else { HeadSelection::Explicit { heads } },
            );
            cfg.model_path = source.model.clone();
            cfg.capture_path = source.captures.clone();
            cfg.template = source.template.clone();
            cfg.variant = source.variant.into();
            cfg.output_dir = Some(out);
            let report = run_experiment(&cfg)?;
            print!("{}", qkprobe::harness::report::render_markdown(std::slice::from_ref(&report)));
        }
        Command::Report { inputs, format, out } => {
            let reports = inputs.iter().map(|p| read_report(p)).collect::<Result<Vec<_>, _>>()?;
            let formats = format.iter().map(|f| f.parse::<ReportFormat>()).collect::<Result<BTreeSet<_>, _>>()?;
            for p in emit_report(&reports, &formats, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Plant { layers, heads, kv_heads, head_dim, planted, seed, out } => {
            let mut spec = planted_spec(layers, heads, head_dim);
            if let Some(kv) = kv_heads {
                spec.n_kv_heads = kv;
            }
            let model = build_planted_model(&spec, planted, seed)?;
            save_model(&model, &out)?;
            println!("planted {planted} in {}; use template `marker`", out.display());
        }
        Command::Capture { model, dataset, template, attention, out } => {
            let model = load_model(&model)?;
            let split = read_dataset(&dataset)?;
            let captures = capture_split(&model, &split, &template, attention)?;
            let n = captures.len();
            write_capture(&CaptureSet { spec: model.spec.clone(), captures }, &out)?;
            println!("wrote {n} captures to {}", out.display());
        }
        Command::Ingest { captures, dataset, spec_digest, out } => {
            let set = read_capture(&captures)?;
            let split = read_dataset(&dataset)?;
            let aligned = ingest_captures(&set, &split, spec_digest.as_deref())?;
            let n = aligned.len();
            write_capture(&CaptureSet { spec: set.spec, captures: aligned }, &out)?;
            println!("aligned {n} captures to {}", out.display());
        }
    }
    Ok(())
}
