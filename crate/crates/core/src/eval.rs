//! Per-category AUROC evaluation.
//!
//! Every anomaly category is scored against the full set of normal test
//! samples and the report averages the per-category values without
//! weighting, so that frequent categories do not dominate.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;

use crate::data::{category_name, NORMAL_CATEGORY};
use crate::error::{Error, Result};

fn check_scores(what: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidArgument(format!("no {what} scores")));
    }
    if v.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument(format!("NaN among {what} scores")));
    }
    Ok(())
}

/// Area under the ROC curve as the normalised Mann-Whitney statistic; ties
/// count one half. Higher scores mean "more anomalous".
pub fn auroc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check_scores("positive", pos)?;
    check_scores("negative", neg)?;
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // twice the rank sum keeps midranks integral
    let mut rank_sum_x2 = 0u128;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // 1-based ranks i+1..=j+1, midrank*2 = i + j + 2
        let mid_x2 = (i + j + 2) as u128;
        let n_pos = all[i..=j].iter().filter(|e| e.1).count() as u128;
        rank_sum_x2 += mid_x2 * n_pos;
        i = j + 1;
    }
    let (np, nn) = (pos.len() as u128, neg.len() as u128);
    let u_x2 = rank_sum_x2 - np * (np + 1);
    Ok(u_x2 as f64 / (2 * np * nn) as f64)
}

/// ROC points `(fpr, tpr)` for every distinct threshold, from `(0, 0)` to
/// `(1, 1)`.
pub fn roc_points(pos: &[f64], neg: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_scores("positive", pos)?;
    check_scores("negative", neg)?;
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        pts.push((fp as f64 / nn, tp as f64 / np));
        i = j;
    }
    Ok(pts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CategoryAuroc {
    pub auroc: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub seed: u64,
    pub n_normal: usize,
    pub per_category: BTreeMap<u8, CategoryAuroc>,
    pub mean: f64,
}

/// Builds a report from `(category, score)` pairs of a labelled test set.
pub fn evaluate_scores(method: &str, seed: u64, scored: &[(u8, f64)]) -> Result<EvalReport> {
    let normal: Vec<f64> = scored
        .iter()
        .filter(|(c, _)| *c == NORMAL_CATEGORY)
        .map(|&(_, s)| s)
        .collect();
    if normal.is_empty() {
        return Err(Error::Data("test set has no normal samples".into()));
    }
    let mut by_cat: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    for &(c, s) in scored.iter().filter(|(c, _)| *c != NORMAL_CATEGORY) {
        by_cat.entry(c).or_default().push(s);
    }
    let mut per_category = BTreeMap::new();
    for (c, pos) in by_cat {
        per_category.insert(
            c,
            CategoryAuroc {
                auroc: auroc(&pos, &normal)?,
                n_samples: pos.len(),
            },
        );
    }
    if per_category.is_empty() {
        return Err(Error::Data("test set has no anomalous samples".into()));
    }
    let mean = per_category.values().map(|c| c.auroc).sum::<f64>() / per_category.len() as f64;
    Ok(EvalReport {
        method: method.to_string(),
        seed,
        n_normal: normal.len(),
        per_category,
        mean,
    })
}

/// Scores `(input, category)` pairs in parallel with `scorer` and evaluates.
/// Also returns the scores in input order.
pub fn evaluate<X, S>(method: &str, seed: u64, scorer: S, test: &[(X, u8)]) -> Result<(EvalReport, Vec<f64>)>
where
    X: Sync,
    S: Fn(&X) -> Result<f64> + Sync,
{
    let scores: Vec<f64> = test
        .par_iter()
        .map(|(x, _)| scorer(x))
        .collect::<Result<_>>()?;
    let pairs: Vec<(u8, f64)> = test.iter().map(|(_, c)| *c).zip(scores.iter().copied()).collect();
    Ok((evaluate_scores(method, seed, &pairs)?, scores))
}

/// Mean and sample standard deviation of a category's AUROC over runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiRunReport {
    pub method: String,
    pub runs: Vec<EvalReport>,
    pub per_category: BTreeMap<u8, Aggregate>,
    pub mean: Aggregate,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Aggregates runs (e.g. different seeds) of one method.
pub fn aggregate(runs: Vec<EvalReport>) -> Result<MultiRunReport> {
    let Some(first) = runs.first() else {
        return Err(Error::InvalidArgument("no runs to aggregate".into()));
    };
    let method = first.method.clone();
    let cats: Vec<u8> = first.per_category.keys().copied().collect();
    if runs.iter().any(|r| r.per_category.keys().copied().collect::<Vec<_>>() != cats) {
        return Err(Error::InvalidArgument("runs evaluate different categories".into()));
    }
    let mut per_category = BTreeMap::new();
    for c in cats {
        let vals: Vec<f64> = runs.iter().map(|r| r.per_category[&c].auroc).collect();
        let (mean, std) = mean_std(&vals);
        per_category.insert(
            c,
            Aggregate {
                mean,
                std,
                n_samples: first.per_category[&c].n_samples,
            },
        );
    }
    let means: Vec<f64> = runs.iter().map(|r| r.mean).collect();
    let (mean, std) = mean_std(&means);
    let total = first.per_category.values().map(|c| c.n_samples).sum();
    Ok(MultiRunReport {
        method,
        runs,
        per_category,
        mean: Aggregate {
            mean,
            std,
            n_samples: total,
        },
    })
}

impl MultiRunReport {
    /// `method,category,name,n_samples,runs,auroc_mean,auroc_std`; the last
    /// row carries the unweighted mean over categories.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let io = |e| Error::io("<report>", e);
        writeln!(w, "method,category,name,n_samples,runs,auroc_mean,auroc_std").map_err(io)?;
        let runs = self.runs.len();
        for (c, a) in &self.per_category {
            writeln!(
                w,
                "{},{c},{},{},{runs},{},{}",
                self.method,
                category_name(*c),
                a.n_samples,
                a.mean,
                a.std
            )
            .map_err(io)?;
        }
        writeln!(
            w,
            "{},mean,Mean,{},{runs},{},{}",
            self.method, self.mean.n_samples, self.mean.mean, self.mean.std
        )
        .map_err(io)
    }

    /// Aligned text table with AUROC in percent.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let runs = self.runs.len();
        let cell = |a: &Aggregate| {
            if runs > 1 {
                format!("{:>5.1} ± {:.1}", 100.0 * a.mean, 100.0 * a.std)
            } else {
                format!("{:>5.1}", 100.0 * a.mean)
            }
        };
        let _ = writeln!(s, "{} (AUROC %, {runs} run{})", self.method, if runs == 1 { "" } else { "s" });
        let _ = writeln!(s, "{:<24} {:>5}  {}", "Category", "n", "AUROC");
        let _ = writeln!(s, "{}", "-".repeat(46));
        for (c, a) in &self.per_category {
            let _ = writeln!(s, "{:<24} {:>5}  {}", category_name(*c), a.n_samples, cell(a));
        }
        let _ = writeln!(s, "{}", "-".repeat(46));
        let _ = writeln!(s, "{:<24} {:>5}  {}", "Mean", "", cell(&self.mean));
        s
    }
}

/// `category,fpr,tpr` rows for external plotting.
pub fn write_roc_csv(mut w: impl Write, curves: &BTreeMap<u8, Vec<(f64, f64)>>) -> Result<()> {
    let io = |e| Error::io("<roc>", e);
    writeln!(w, "category,fpr,tpr").map_err(io)?;
    for (c, pts) in curves {
        for (f, t) in pts {
            writeln!(w, "{c},{f},{t}").map_err(io)?;
        }
    }
    Ok(())
}
