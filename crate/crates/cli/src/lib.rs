//! Command-line driver: synthetic data, training, scoring and evaluation
//! runs reproducible from a config file and a seed.

pub mod commands;
pub mod config;
pub mod model;

use std::path::Path;

use anyhow::Result;
use mvtflow::data::{generate_synthetic, load_dataset, load_schema_or_default, Dataset, Sample};
use mvtflow::eval::{evaluate_scores, EvalReport};
use mvtflow::score::ScoreRow;
use mvtflow::train::EpochRecord;

pub use config::{ModelKind, RunConfig};
pub use model::TrainedModel;

/// Loads `dir` (or `cfg.data.dir`), or generates the configured synthetic
/// set with `cfg.synth.seed`, falling back to `seed`.
pub fn load_data(cfg: &RunConfig, dir: Option<&Path>, seed: u64) -> Result<Dataset> {
    match dir.or(cfg.data.dir.as_deref()) {
        Some(d) => Ok(load_dataset(d, &load_schema_or_default(d)?)?),
        None => {
            let synth = cfg.synth.to_config()?;
            Ok(generate_synthetic(&synth, cfg.synth.seed.unwrap_or(seed))?.dataset)
        }
    }
}

pub fn score_rows(samples: &[Sample], scores: &[f64]) -> Vec<ScoreRow> {
    samples
        .iter()
        .zip(scores)
        .map(|(s, &score)| ScoreRow {
            sample_id: s.sample_id,
            score,
            anomaly: Some(s.is_anomaly()),
            category: Some(s.category),
        })
        .collect()
}

pub struct RunOutcome {
    pub model: TrainedModel,
    pub report: EvalReport,
    pub scores: Vec<ScoreRow>,
    pub history: Vec<EpochRecord>,
}

/// Scores the test split with a fitted model.
pub fn evaluate_model(model: &TrainedModel, ds: &Dataset) -> Result<(EvalReport, Vec<ScoreRow>)> {
    let scores = model.score_all(&ds.test)?;
    let pairs: Vec<(u8, f64)> = ds.test.iter().map(|s| s.category).zip(scores.iter().copied()).collect();
    let report = evaluate_scores(&model.kind().to_string(), model.seed, &pairs)?;
    Ok((report, score_rows(&ds.test, &scores)))
}

/// Fit on the training split, then evaluate on the test split.
pub fn run_once(cfg: &RunConfig, ds: &Dataset, seed: u64) -> Result<RunOutcome> {
    let (model, history) = TrainedModel::fit(cfg, ds, seed, None)?;
    let (report, scores) = evaluate_model(&model, ds)?;
    Ok(RunOutcome {
        model,
        report,
        scores,
        history,
    })
}

/// Scores every test sample by its ground-truth label.
pub fn oracle_run(ds: &Dataset, seed: u64) -> Result<(EvalReport, Vec<ScoreRow>)> {
    let scores: Vec<f64> = ds.test.iter().map(|s| s.is_anomaly() as u8 as f64).collect();
    let pairs: Vec<(u8, f64)> = ds.test.iter().map(|s| s.category).zip(scores.iter().copied()).collect();
    Ok((evaluate_scores("oracle", seed, &pairs)?, score_rows(&ds.test, &scores)))
}
