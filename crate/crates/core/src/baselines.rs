//! Nearest-neighbour and PCA reconstruction baselines on flattened,
//! preprocessed samples.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::container::{BlobData, Container};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const KNN_KIND: &str = "knn";
pub const PCA_KIND: &str = "pca";

/// Component count used on the full robot dataset.
pub const DEFAULT_PCA_COMPONENTS: usize = 90;

fn flatten(samples: &[Tensor<f64>]) -> Result<(usize, Vec<f64>)> {
    let Some(first) = samples.first() else {
        return Err(Error::InvalidArgument("baseline needs at least one training sample".into()));
    };
    let d = first.len();
    let mut rows = Vec::with_capacity(d * samples.len());
    for (i, s) in samples.iter().enumerate() {
        if s.len() != d {
            return Err(Error::shape("baseline fit", format!("sample {i} has {} values, expected {d}", s.len())));
        }
        if !s.is_finite() {
            return Err(Error::InvalidArgument(format!("sample {i} has non-finite values")));
        }
        rows.extend_from_slice(s.data());
    }
    Ok((d, rows))
}

/// Scores a sample by the ℓ1 distance to its nearest training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    dim: usize,
    rows: Vec<f64>,
}

impl KnnModel {
    pub fn fit(train: &[Tensor<f64>]) -> Result<Self> {
        let (dim, rows) = flatten(train)?;
        Ok(KnnModel { dim, rows })
    }

    pub fn n_train(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::shape("knn score", format!("got {} values, model expects {}", x.len(), self.dim)));
        }
        Ok(self
            .rows
            .chunks(self.dim)
            .map(|r| r.iter().zip(x).map(|(a, b)| (a - b).abs()).sum::<f64>())
            .fold(f64::INFINITY, f64::min))
    }

    pub fn score_all(&self, xs: &[Tensor<f64>]) -> Result<Vec<f64>> {
        xs.par_iter().map(|x| self.score(x.data())).collect()
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(KNN_KIND);
        c.set("knn.dim", self.dim);
        c.push_blob("knn.train", vec![self.n_train(), self.dim], BlobData::F64(self.rows.clone()));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.kind != KNN_KIND {
            return Err(Error::Format(format!("expected a {KNN_KIND} model, found {}", c.kind)));
        }
        let dim: usize = c.parse("knn.dim")?;
        let (shape, rows) = c.blob_f64("knn.train")?;
        if dim == 0 || shape.len() != 2 || shape[1] != dim || shape[0] == 0 {
            return Err(Error::Format("knn training matrix has the wrong shape".into()));
        }
        Ok(KnnModel { dim, rows: rows.to_vec() })
    }
}

/// Orthonormal principal axes of the centred training matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k x D`, row-major.
    axes: Vec<f64>,
    pub k: usize,
    /// Eigenvalues of the covariance for the kept axes, descending.
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: f64,
}

// first clearly nonzero entry becomes positive
fn fix_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-9 * max) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let e = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..e.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]).then(a.cmp(&b)));
    let vals = order.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(e.eigenvectors.nrows(), order.len(), |r, c| e.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

impl PcaModel {
    /// Fits `k` components; errors when `k` exceeds `min(n, D)`.
    pub fn fit(train: &[Tensor<f64>], k: usize) -> Result<Self> {
        let (d, rows) = flatten(train)?;
        let n = train.len();
        if n < 2 {
            return Err(Error::InvalidArgument("PCA needs at least two training samples".into()));
        }
        if k == 0 || k > n.min(d) {
            return Err(Error::InvalidArgument(format!(
                "PCA with {k} components needs 1 <= k <= min(n = {n}, D = {d})"
            )));
        }
        let mut mean = vec![0.0; d];
        for r in rows.chunks(d) {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let x = DMatrix::from_fn(n, d, |i, j| rows[i * d + j] - mean[j]);
        let denom = (n - 1) as f64;

        let (eigenvalues, axes_cols): (Vec<f64>, Vec<Vec<f64>>) = if d <= n {
            let (vals, vecs) = sorted_eigen(x.transpose() * &x / denom);
            let cols = (0..k).map(|c| vecs.column(c).iter().copied().collect()).collect();
            (vals, cols)
        } else {
            let (vals, vecs) = sorted_eigen(&x * x.transpose() / denom);
            let lmax = vals.first().copied().unwrap_or(0.0).max(0.0);
            let mut cols = Vec::with_capacity(k);
            for c in 0..k {
                let l = vals[c];
                if !(l > 1e-12 * lmax) {
                    log::warn!("PCA: training data has rank {c}; keeping {c} of {k} components");
                    break;
                }
                let v: DVector<f64> = x.transpose() * vecs.column(c) / (l * denom).sqrt();
                cols.push(v.iter().copied().collect());
            }
            (vals, cols)
        };
        let total: f64 = eigenvalues.iter().map(|l| l.max(0.0)).sum();
        let k = axes_cols.len();
        let kept: Vec<f64> = eigenvalues[..k].iter().map(|l| l.max(0.0)).collect();
        let explained_variance_ratio = if total > 0.0 { kept.iter().sum::<f64>() / total } else { 1.0 };
        let mut axes = Vec::with_capacity(k * d);
        for mut col in axes_cols {
            fix_sign(&mut col);
            axes.extend(col);
        }
        Ok(PcaModel {
            mean,
            axes,
            k,
            eigenvalues: kept,
            explained_variance_ratio,
        })
    }

    /// Like [`PcaModel::fit`] but caps `k` at `min(n, D)` with a warning.
    pub fn fit_capped(train: &[Tensor<f64>], k: usize) -> Result<Self> {
        let cap = train.len().min(train.first().map_or(0, |t| t.len()));
        let k = if k > cap {
            log::warn!("PCA: {k} components requested, only {cap} possible; using {cap}");
            cap
        } else {
            k
        };
        Self::fit(train, k)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn axis(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.axes[i * d..(i + 1) * d]
    }

    /// Projection onto the first `k` axes, mapped back to input space.
    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::shape("pca score", format!("got {} values, model expects {d}", x.len())));
        }
        let r: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        let mut out = self.mean.clone();
        for a in self.axes.chunks(d) {
            let c: f64 = a.iter().zip(&r).map(|(u, v)| u * v).sum();
            out.iter_mut().zip(a).for_each(|(o, u)| *o += c * u);
        }
        Ok(out)
    }

    /// Euclidean reconstruction error.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        let rec = self.reconstruct(x)?;
        Ok(x.iter().zip(&rec).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
    }

    pub fn score_all(&self, xs: &[Tensor<f64>]) -> Result<Vec<f64>> {
        xs.par_iter().map(|x| self.score(x.data())).collect()
    }

    /// Same basis with only the leading `k` axes.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.k {
            return Err(Error::InvalidArgument(format!("cannot keep {k} of {} components", self.k)));
        }
        let d = self.dim();
        let total = if self.explained_variance_ratio > 0.0 {
            self.eigenvalues.iter().sum::<f64>() / self.explained_variance_ratio
        } else {
            0.0
        };
        let eigenvalues = self.eigenvalues[..k].to_vec();
        let explained_variance_ratio = if total > 0.0 { eigenvalues.iter().sum::<f64>() / total } else { 1.0 };
        Ok(PcaModel {
            mean: self.mean.clone(),
            axes: self.axes[..k * d].to_vec(),
            k,
            eigenvalues,
            explained_variance_ratio,
        })
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(PCA_KIND);
        let d = self.dim();
        c.set("pca.k", self.k);
        c.set("pca.dim", d);
        c.set("pca.explained_variance_ratio", self.explained_variance_ratio);
        c.push_blob("pca.mean", vec![d], BlobData::F64(self.mean.clone()));
        c.push_blob("pca.axes", vec![self.k, d], BlobData::F64(self.axes.clone()));
        c.push_blob("pca.eigenvalues", vec![self.k], BlobData::F64(self.eigenvalues.clone()));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.kind != PCA_KIND {
            return Err(Error::Format(format!("expected a {PCA_KIND} model, found {}", c.kind)));
        }
        let k: usize = c.parse("pca.k")?;
        let d: usize = c.parse("pca.dim")?;
        let mean = c.blob_f64("pca.mean")?.1.to_vec();
        let axes = c.blob_f64("pca.axes")?.1.to_vec();
        let eigenvalues = c.blob_f64("pca.eigenvalues")?.1.to_vec();
        if mean.len() != d || axes.len() != k * d || eigenvalues.len() != k {
            return Err(Error::Format("PCA blobs have inconsistent sizes".into()));
        }
        Ok(PcaModel {
            mean,
            axes,
            k,
            eigenvalues,
            explained_variance_ratio: c.parse("pca.explained_variance_ratio")?,
        })
    }
}
