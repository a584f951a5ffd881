use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mvtflow::data::{generate_synthetic, read_sample_csv, write_dataset, INJECTIONS_FILE, MANIFEST_FILE, SCHEMA_FILE};
use mvtflow::eval::{aggregate, roc_points, write_roc_csv};
use mvtflow::score::{moving_average, write_scores_csv, write_temporal_csv, ScoreRow};
use mvtflow::train::write_history_csv;

use crate::config::{ModelKind, RunConfig, SynthSection};
use crate::model::TrainedModel;
use crate::{evaluate_model, load_data, oracle_run, run_once};

#[derive(Debug, Parser)]
#[command(name = "mvtflow", version, about = "Normalizing-flow anomaly detection for multivariate robot time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset in the CSV + manifest format.
    Synth(SynthArgs),
    /// Fit a model on the training split.
    Train(TrainArgs),
    /// Per-category AUROC on the test split.
    Eval(EvalArgs),
    /// Anomaly scores for individual sample files.
    Score(ScoreArgs),
    /// Per-timestep input-gradient magnitude for one sample file.
    Temporal(TemporalArgs),
    /// Print the default configuration as TOML.
    Config,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = SynthSection::default().signals)]
    pub signals: usize,
    #[arg(long, default_value_t = SynthSection::default().steps)]
    pub steps: usize,
    #[arg(long, default_value_t = SynthSection::default().hz)]
    pub hz: u32,
    #[arg(long, default_value_t = SynthSection::default().train)]
    pub train: usize,
    #[arg(long = "normal-test", default_value_t = SynthSection::default().normal_test)]
    pub normal_test: usize,
    #[arg(long, default_value_t = SynthSection::default().anomalies)]
    pub anomalies: usize,
    #[arg(long = "magnitude-scale", default_value_t = 1.0)]
    pub magnitude_scale: f64,
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    /// Overwrite an existing dataset in `--out`.
    #[arg(long)]
    pub force: bool,
}

/// Flags that override config-file values.
#[derive(Debug, Args, Default, Clone)]
pub struct Overrides {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub kind: Option<ModelKind>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Target sampling rate in Hz.
    #[arg(long)]
    pub frequency: Option<u32>,
    #[arg(long)]
    pub subset: Option<String>,
    #[arg(long)]
    pub precision: Option<String>,
    /// PCA component count.
    #[arg(long)]
    pub components: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.kind {
            cfg.kind = v;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.frequency {
            cfg.preprocess.frequency = v;
        }
        if let Some(v) = &self.subset {
            cfg.preprocess.subset = v.clone();
        }
        if let Some(v) = &self.precision {
            cfg.train.precision = v.clone();
        }
        if let Some(v) = self.components {
            cfg.pca.components = v;
        }
        cfg.validate()
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory; without it the config's synthetic set is used.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model file to write; `<out>.loss.csv` and `<out>.config.toml` go next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Evaluate a trained model file instead of training.
    #[arg(long, conflicts_with_all = ["config", "oracle"])]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Number of runs with seeds `seed, seed+1, ...`, retraining each time.
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    /// Output directory for report.csv, report.txt and score files.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write per-category ROC points to roc.csv.
    #[arg(long)]
    pub roc: bool,
    /// Score by the ground-truth label (pipeline check).
    #[arg(long)]
    pub oracle: bool,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Sample CSV files.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TemporalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Moving-average width; 0 or 1 keeps the raw trace. `rf` uses the
    /// model's receptive field.
    #[arg(long, default_value = "1")]
    pub smooth: String,
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn config_from(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    overrides.apply(&mut cfg)?;
    Ok(cfg)
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Score(a) => cmd_score(&a),
        Command::Temporal(a) => cmd_temporal(&a),
        Command::Config => {
            print!("{}", RunConfig::default().to_toml());
            Ok(())
        }
    }
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let nonempty = a.out.is_dir() && fs::read_dir(&a.out)?.next().is_some();
    if nonempty {
        if !a.force {
            bail!("{} exists and is not empty (pass --force to overwrite)", a.out.display());
        }
        for f in [MANIFEST_FILE, SCHEMA_FILE, INJECTIONS_FILE] {
            let p = a.out.join(f);
            if p.exists() {
                fs::remove_file(&p).with_context(|| format!("removing {}", p.display()))?;
            }
        }
        let samples = a.out.join("samples");
        if samples.is_dir() {
            for e in fs::read_dir(&samples)? {
                let p = e?.path();
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                if name.starts_with("sample_") && name.ends_with(".csv") {
                    fs::remove_file(&p)?;
                }
            }
        }
    }
    let section = SynthSection {
        signals: a.signals,
        steps: a.steps,
        hz: a.hz,
        train: a.train,
        normal_test: a.normal_test,
        anomalies: a.anomalies,
        magnitude_scale: a.magnitude_scale,
        noise_std: a.noise,
        ..SynthSection::default()
    };
    let d = generate_synthetic(&section.to_config()?, a.seed)?;
    write_dataset(&a.out, &d.dataset, &d.injections)?;
    log::info!(
        "wrote {} train, {} test samples to {}",
        d.dataset.train.len(),
        d.dataset.test.len(),
        a.out.display()
    );
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut cfg = config_from(a.config.as_deref(), &a.overrides)?;
    if let Some(d) = &a.data {
        cfg.data.dir = Some(d.clone());
    }
    let ds = load_data(&cfg, None, cfg.seed)?;
    let ckpt = (cfg.kind == ModelKind::Flow && cfg.train.checkpoint_every > 0).then(|| sidecar(&a.out, ".ckpt"));
    let (model, history) = TrainedModel::fit(&cfg, &ds, cfg.seed, ckpt.as_deref())?;
    model.save(&a.out)?;
    write_history_csv(sidecar(&a.out, ".loss.csv"), &history)?;
    cfg.save(sidecar(&a.out, ".config.toml"))?;
    log::info!("saved {} model to {}", cfg.kind, a.out.display());
    Ok(())
}

fn write_scores(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    let mut buf = Vec::new();
    write_scores_csv(&mut buf, rows)?;
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    if a.runs == 0 {
        bail!("--runs must be at least 1");
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut cfg = config_from(a.config.as_deref(), &a.overrides)?;
    if let Some(d) = &a.data {
        cfg.data.dir = Some(d.clone());
    }
    let mut runs = Vec::new();
    let mut curves = std::collections::BTreeMap::new();
    if let Some(path) = &a.model {
        if a.runs != 1 {
            bail!("--runs needs retraining; use --config instead of --model");
        }
        let model = TrainedModel::load(path)?;
        let ds = load_data(&cfg, None, model.seed)?;
        let (report, rows) = evaluate_model(&model, &ds)?;
        write_scores(&a.out.join("scores.csv"), &rows)?;
        collect_roc(a.roc, &rows, &mut curves)?;
        runs.push(report);
    } else {
        for i in 0..a.runs {
            let seed = cfg.seed + i as u64;
            let ds = load_data(&cfg, None, seed)?;
            let (report, rows) = if a.oracle {
                oracle_run(&ds, seed)?
            } else {
                let r = run_once(&cfg, &ds, seed)?;
                (r.report, r.scores)
            };
            let name = if a.runs == 1 { "scores.csv".to_string() } else { format!("scores_seed{seed}.csv") };
            write_scores(&a.out.join(name), &rows)?;
            if i == 0 {
                collect_roc(a.roc, &rows, &mut curves)?;
            }
            log::info!("run {} (seed {seed}): mean AUROC {:.4}", i + 1, report.mean);
            runs.push(report);
        }
        cfg.save(a.out.join("config.toml"))?;
    }
    let agg = aggregate(runs)?;
    let mut csv = Vec::new();
    agg.write_csv(&mut csv)?;
    fs::write(a.out.join("report.csv"), csv)?;
    let table = agg.to_table();
    fs::write(a.out.join("report.txt"), &table)?;
    if a.roc {
        let mut buf = Vec::new();
        write_roc_csv(&mut buf, &curves)?;
        fs::write(a.out.join("roc.csv"), buf)?;
    }
    print!("{table}");
    Ok(())
}

fn collect_roc(enabled: bool, rows: &[ScoreRow], curves: &mut std::collections::BTreeMap<u8, Vec<(f64, f64)>>) -> Result<()> {
    if !enabled {
        return Ok(());
    }
    let normal: Vec<f64> = rows.iter().filter(|r| r.anomaly == Some(false)).map(|r| r.score).collect();
    let mut cats: Vec<u8> = rows.iter().filter(|r| r.anomaly == Some(true)).filter_map(|r| r.category).collect();
    cats.sort_unstable();
    cats.dedup();
    for c in cats {
        let pos: Vec<f64> = rows.iter().filter(|r| r.category == Some(c) && r.anomaly == Some(true)).map(|r| r.score).collect();
        curves.insert(c, roc_points(&pos, &normal)?);
    }
    Ok(())
}

pub fn cmd_score(a: &ScoreArgs) -> Result<()> {
    let model = TrainedModel::load(&a.model)?;
    let mut rows = Vec::with_capacity(a.input.len());
    for p in &a.input {
        let s = read_sample_csv(p, &model.schema).with_context(|| format!("reading {}", p.display()))?;
        let score = model.score(&s).with_context(|| format!("scoring {}", p.display()))?;
        rows.push(ScoreRow {
            sample_id: s.sample_id,
            score,
            anomaly: Some(s.is_anomaly()),
            category: Some(s.category),
        });
    }
    let mut buf = Vec::new();
    write_scores_csv(&mut buf, &rows)?;
    emit(a.out.as_deref(), &buf)
}

pub fn cmd_temporal(a: &TemporalArgs) -> Result<()> {
    let model = TrainedModel::load(&a.model)?;
    let s = read_sample_csv(&a.input, &model.schema).with_context(|| format!("reading {}", a.input.display()))?;
    let (_, trace) = model.temporal(&s)?;
    let width = match a.smooth.as_str() {
        "rf" => model.receptive_field().unwrap_or(1),
        w => w.parse().with_context(|| format!("bad --smooth value '{w}'"))?,
    };
    let trace = if width > 1 { moving_average(&trace, width) } else { trace };
    let mut buf = Vec::new();
    write_temporal_csv(&mut buf, &trace, model.pre.config.target_hz as f64)?;
    emit(a.out.as_deref(), &buf)
}
