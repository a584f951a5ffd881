//! Maximum-likelihood training of [`MvtFlow`] with Adam and step decay.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::MvtFlow;
use crate::rng;
use crate::tensor::{Graph, Real, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" | "32" => Ok(Precision::F32),
            "f64" | "64" => Ok(Precision::F64),
            other => Err(Error::InvalidArgument(format!("unknown precision {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointConfig {
    pub path: PathBuf,
    /// Save after every `every` epochs; the final epoch is always saved.
    pub every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    /// 1-indexed epochs at whose start the learning rate is multiplied by
    /// `lr_decay`.
    pub decay_epochs: Vec<usize>,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub precision: Precision,
    pub checkpoint: Option<CheckpointConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            lr: 8e-4,
            lr_decay: 0.1,
            decay_epochs: vec![11, 61],
            epochs: 70,
            adam: AdamConfig::default(),
            seed: 0,
            precision: Precision::F32,
            checkpoint: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lr > 0.0) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be >= 1".into());
        }
        if !(self.lr_decay > 0.0) {
            return bad(format!("lr_decay must be > 0, got {}", self.lr_decay));
        }
        if self.decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!(
                "decay epochs must be strictly increasing: {:?}",
                self.decay_epochs
            ));
        }
        if let Some(&last) = self.decay_epochs.last() {
            if last >= self.epochs || self.decay_epochs[0] == 0 {
                return bad(format!(
                    "decay epochs {:?} must lie in 1..{}",
                    self.decay_epochs, self.epochs
                ));
            }
        }
        Ok(())
    }

    /// Learning rate used throughout 1-indexed `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = self.decay_epochs.iter().filter(|&&e| e <= epoch).count();
        self.lr * self.lr_decay.powi(decays as i32)
    }
}

/// Adam moments for every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub m: Vec<Vec<F>>,
    pub v: Vec<Vec<F>>,
    pub step: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<F>>) -> Self {
        let m: Vec<Vec<F>> = params
            .into_iter()
            .map(|p| vec![F::zero(); p.len()])
            .collect();
        Self {
            v: m.clone(),
            m,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<F: Real>(
    params: &mut [&mut Tensor<F>],
    grads: &[Vec<F>],
    state: &mut AdamState<F>,
    config: &AdamConfig,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "{} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || state.m[i].len() != g.len() {
            return Err(Error::shape(
                "adam_step",
                format!("param {i}: {} values, grad {}", p.len(), g.len()),
            ));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let b1 = F::of(config.beta1);
    let b2 = F::of(config.beta2);
    let one = F::one();
    let c1 = F::of(1.0 - config.beta1.powi(t));
    let c2 = F::of(1.0 - config.beta2.powi(t));
    let lr = F::of(lr);
    let eps = F::of(config.eps);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            let gj = g[j];
            m[j] = b1 * m[j] + (one - b1) * gj;
            v[j] = b2 * v[j] + (one - b2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Per-sample negative log-likelihood up to the Gaussian normalising
/// constant: `0.5 * ||z||^2 - logdet`.
pub fn nll_loss<F: Real>(g: &mut Graph<F>, z: Var, logdet: Var) -> Result<Var> {
    let ss = g.sum_squares(z);
    let half = g.scale(ss, F::of(0.5));
    g.sub(half, logdet)
}

/// Loss of one sample and its gradient with respect to every model weight.
pub fn loss_and_grads<F: Real>(model: &MvtFlow<F>, x: &Tensor<F>) -> Result<(F, Vec<Vec<F>>)> {
    let mut g = Graph::new();
    let params = model.bind(&mut g, true);
    let xv = g.constant(x.clone());
    let (z, logdet) = model.forward_graph(&mut g, &params, xv)?;
    let loss = nll_loss(&mut g, z, logdet)?;
    g.backward(loss)?;
    let grads = params
        .0
        .iter()
        .map(|&v| g.grad_or_zeros(v).expect("weights require grad"))
        .collect();
    Ok((g.value(loss).item()?, grads))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    pub model: MvtFlow<F>,
    pub history: Vec<EpochRecord>,
}

/// Trains on normal samples only. Each epoch reshuffles with the shuffle
/// stream of `config.seed`; batch gradients are averaged over samples in a
/// fixed order, so results do not depend on the thread count.
pub fn train<F: Real>(
    mut model: MvtFlow<F>,
    data: &[Tensor<F>],
    config: &TrainConfig,
) -> Result<TrainOutcome<F>> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    for x in data {
        model.check_input(x)?;
    }
    log::info!(
        "training {} weights on {} samples (alpha = {}, {} epochs, batch {})",
        model.num_weights(),
        data.len(),
        model.config.alpha,
        config.epochs,
        config.batch_size
    );
    let mut state = AdamState::new(model.params());
    let mut shuffle = rng::stream(config.seed, rng::SHUFFLE);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let lr = config.lr_at(epoch);
        order.shuffle(&mut shuffle);
        let mut epoch_loss = 0.0f64;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let results: Vec<Result<(F, Vec<Vec<F>>)>> = batch
                .par_iter()
                .map(|&i| loss_and_grads(&model, &data[i]))
                .collect();
            let mut sum_loss = 0.0f64;
            let mut grads: Option<Vec<Vec<F>>> = None;
            for r in results {
                let (loss, g) = r?;
                sum_loss += loss.to_f64_lossless();
                match &mut grads {
                    None => grads = Some(g),
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(&g) {
                            a.iter_mut().zip(b).for_each(|(x, &y)| *x = *x + y);
                        }
                    }
                }
            }
            let mut grads = grads.expect("non-empty batch");
            let inv = F::of(1.0 / batch.len() as f64);
            let mut max_abs_grad = 0.0f64;
            let mut finite = true;
            for v in grads.iter_mut().flat_map(|g| g.iter_mut()) {
                *v = *v * inv;
                finite &= v.is_finite();
                max_abs_grad = max_abs_grad.max(v.abs().to_f64_lossless());
            }
            let batch_loss = sum_loss / batch.len() as f64;
            if !batch_loss.is_finite() || !finite {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx + 1,
                    max_abs_grad: if finite { max_abs_grad } else { f64::INFINITY },
                });
            }
            let mut params: Vec<&mut Tensor<F>> = model.params_mut().collect();
            adam_step(&mut params, &grads, &mut state, &config.adam, lr)?;
            epoch_loss += sum_loss;
        }
        let mean_loss = epoch_loss / data.len() as f64;
        log::info!("epoch {epoch:>3}  lr {lr:.1e}  mean loss {mean_loss:.4}");
        history.push(EpochRecord {
            epoch,
            mean_loss,
            lr,
        });
        if let Some(ck) = &config.checkpoint {
            if epoch == config.epochs || (ck.every > 0 && epoch % ck.every == 0) {
                model.to_container().save(&ck.path)?;
            }
        }
    }
    Ok(TrainOutcome { model, history })
}

/// `epoch,mean_loss,lr` CSV.
pub fn write_history_csv(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| Error::io(path, e);
    writeln!(w, "epoch,mean_loss,lr").map_err(io)?;
    for r in history {
        writeln!(w, "{},{},{}", r.epoch, r.mean_loss, r.lr).map_err(io)?;
    }
    w.flush().map_err(io)
}
