//! Anomaly scores, thresholding and gradient-based temporal analysis.
//!
//! The score of a sample is its negative log-likelihood under the flow up to
//! an additive constant, so larger means more anomalous. Thresholding the
//! score from above is equivalent to thresholding the likelihood from below.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::MvtFlow;
use crate::tensor::{Graph, Real, Tensor};
use crate::train::nll_loss;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalyScore {
    pub sample_id: u32,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalTrace {
    pub sample_id: u32,
    /// `sum_s |d score / d x(t, s)|` for every time step `t`.
    pub values: Vec<f64>,
}

pub fn score<F: Real>(model: &MvtFlow<F>, x: &Tensor<F>) -> Result<f64> {
    let mut g = Graph::new();
    let params = model.bind(&mut g, false);
    let xv = g.constant(x.clone());
    let (z, logdet) = model.forward_graph(&mut g, &params, xv)?;
    let loss = nll_loss(&mut g, z, logdet)?;
    Ok(g.value(loss).item()?.to_f64_lossless())
}

/// Scores many samples in parallel; results are in input order and identical
/// to calling [`score`] one by one.
pub fn score_all<F: Real>(model: &MvtFlow<F>, xs: &[Tensor<F>]) -> Result<Vec<f64>> {
    xs.par_iter().map(|x| score(model, x)).collect()
}

/// `true` (anomaly) iff `score > theta`.
pub fn classify(score: f64, theta: f64) -> bool {
    score > theta
}

/// Smallest observed normal score `theta` such that at most
/// `floor(target_fpr * n)` normal scores lie strictly above it.
pub fn calibrate_threshold(normal_scores: &[f64], target_fpr: f64) -> Result<f64> {
    if normal_scores.is_empty() {
        return Err(Error::InvalidArgument("no normal scores to calibrate on".into()));
    }
    if !(0.0..=1.0).contains(&target_fpr) {
        return Err(Error::InvalidArgument(format!(
            "target FPR must lie in [0, 1], got {target_fpr}"
        )));
    }
    if normal_scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN among normal scores".into()));
    }
    let mut sorted = normal_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // tolerance absorbs representation error such as 0.05 * 100 = 5.000000000000001
    let allowed = ((target_fpr * n as f64) + 1e-9).floor() as usize;
    let idx = n.saturating_sub(1 + allowed.min(n - 1));
    Ok(sorted[idx])
}

/// Gradient of the score with respect to the input, aggregated over signals
/// with the l1 norm. Returns the score alongside the trace.
pub fn temporal_trace<F: Real>(model: &MvtFlow<F>, x: &Tensor<F>) -> Result<(f64, Vec<f64>)> {
    let (score, grad) = input_gradient(model, x)?;
    let (t, s) = grad.dims2()?;
    let trace = (0..t)
        .map(|i| {
            grad.data()[i * s..(i + 1) * s]
                .iter()
                .map(|v| v.abs().to_f64_lossless())
                .sum()
        })
        .collect();
    Ok((score, trace))
}

/// Score and its full `[T, S]` input gradient.
pub fn input_gradient<F: Real>(model: &MvtFlow<F>, x: &Tensor<F>) -> Result<(f64, Tensor<F>)> {
    let mut g = Graph::new();
    let params = model.bind(&mut g, false);
    let xv = g.leaf(x.clone(), true);
    let (z, logdet) = model.forward_graph(&mut g, &params, xv)?;
    let loss = nll_loss(&mut g, z, logdet)?;
    g.backward(loss)?;
    let grad = g.grad_or_zeros(xv).expect("input requires grad");
    Ok((
        g.value(loss).item()?.to_f64_lossless(),
        Tensor::new(x.shape().to_vec(), grad)?,
    ))
}

/// Centred moving average; the window shrinks at the edges.
pub fn moving_average(values: &[f64], width: usize) -> Vec<f64> {
    let width = width.max(1);
    let left = (width - 1) / 2;
    let right = width - 1 - left;
    let mut prefix = Vec::with_capacity(values.len() + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().copied().unwrap_or(0.0) + v);
    }
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(left);
            let hi = (i + right + 1).min(values.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub sample_id: u32,
    pub score: f64,
    pub anomaly: Option<bool>,
    pub category: Option<u8>,
}

/// `sample_id,score,label,category`; unknown fields are left empty.
pub fn write_scores_csv(mut w: impl Write, rows: &[ScoreRow]) -> Result<()> {
    let io = |e| Error::io("<scores>", e);
    writeln!(w, "sample_id,score,label,category").map_err(io)?;
    for r in rows {
        let label = r.anomaly.map(|a| u8::from(a).to_string()).unwrap_or_default();
        let cat = r.category.map(|c| c.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{label},{cat}", r.sample_id, r.score).map_err(io)?;
    }
    Ok(())
}

/// `t_seconds,gradient_magnitude` at `hz` samples per second.
pub fn write_temporal_csv(mut w: impl Write, trace: &[f64], hz: f64) -> Result<()> {
    let io = |e| Error::io("<temporal>", e);
    writeln!(w, "t_seconds,gradient_magnitude").map_err(io)?;
    for (t, v) in trace.iter().enumerate() {
        writeln!(w, "{},{v}", t as f64 / hz).map_err(io)?;
    }
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    let path = path.as_ref();
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
