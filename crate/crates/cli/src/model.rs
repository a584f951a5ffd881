//! A fitted detector bundled with the preprocessing and schema it expects.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use mvtflow::baselines::{KnnModel, PcaModel, KNN_KIND, PCA_KIND};
use mvtflow::container::Container;
use mvtflow::data::{Dataset, Preprocessor, Sample, SignalSchema};
use mvtflow::flow::{MvtFlow, KIND as FLOW_KIND};
use mvtflow::score;
use mvtflow::train::{self, CheckpointConfig, EpochRecord, Precision};
use mvtflow::{Real, Tensor};

use crate::config::{ModelKind, RunConfig};

#[derive(Debug, Clone)]
pub enum FlowModel {
    F32(MvtFlow<f32>),
    F64(MvtFlow<f64>),
}

#[derive(Debug, Clone)]
pub enum Detector {
    Flow(FlowModel),
    Knn(KnnModel),
    Pca(PcaModel),
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub schema: SignalSchema,
    pub pre: Preprocessor,
    pub detector: Detector,
    pub seed: u64,
}

fn fit_flow<F: Real>(
    cfg: &RunConfig,
    pre: &Preprocessor,
    xs: &[Tensor<f64>],
    seed: u64,
    checkpoint: Option<&Path>,
) -> Result<(MvtFlow<F>, Vec<EpochRecord>)> {
    let model = MvtFlow::<F>::new(pre.output_shape(), cfg.flow.to_config()?, seed)?;
    let data: Vec<Tensor<F>> = xs.iter().map(|x| x.cast::<F>()).collect();
    let mut tc = cfg.train.to_config(seed)?;
    tc.checkpoint = checkpoint.map(|p| CheckpointConfig {
        path: p.to_path_buf(),
        every: cfg.train.checkpoint_every,
    });
    let out = train::train(model, &data, &tc)?;
    Ok((out.model, out.history))
}

impl TrainedModel {
    /// Fits preprocessing and the configured detector on the training split.
    /// Flow checkpoints (weights only) go to `checkpoint` when given.
    pub fn fit(cfg: &RunConfig, ds: &Dataset, seed: u64, checkpoint: Option<&Path>) -> Result<(Self, Vec<EpochRecord>)> {
        ds.validate()?;
        let pre = Preprocessor::fit(&ds.train, &ds.schema, cfg.preprocess.to_config()?)?;
        let xs = pre.apply_all(&ds.train)?;
        let (detector, history) = match cfg.kind {
            ModelKind::Flow => match cfg.train.precision()? {
                Precision::F32 => {
                    let (m, h) = fit_flow::<f32>(cfg, &pre, &xs, seed, checkpoint)?;
                    (Detector::Flow(FlowModel::F32(m)), h)
                }
                Precision::F64 => {
                    let (m, h) = fit_flow::<f64>(cfg, &pre, &xs, seed, checkpoint)?;
                    (Detector::Flow(FlowModel::F64(m)), h)
                }
            },
            ModelKind::Knn => (Detector::Knn(KnnModel::fit(&xs)?), Vec::new()),
            ModelKind::Pca => {
                let m = PcaModel::fit_capped(&xs, cfg.pca.components)?;
                log::info!("PCA: {} components explain {:.1}% of the variance", m.k, 100.0 * m.explained_variance_ratio);
                (Detector::Pca(m), Vec::new())
            }
        };
        Ok((
            TrainedModel {
                schema: ds.schema.clone(),
                pre,
                detector,
                seed,
            },
            history,
        ))
    }

    pub fn kind(&self) -> ModelKind {
        match self.detector {
            Detector::Flow(_) => ModelKind::Flow,
            Detector::Knn(_) => ModelKind::Knn,
            Detector::Pca(_) => ModelKind::Pca,
        }
    }

    /// Preprocesses one sample, rejecting shapes the model was not built for.
    pub fn prepare(&self, s: &Sample) -> Result<Tensor<f64>> {
        let (t_exp, s_exp) = self.pre.output_shape();
        if s.signals() != self.schema.len() {
            bail!(
                "sample {}: shape mismatch: model expects (T, S) = ({t_exp}, {}) raw signals, found ({}, {})",
                s.sample_id,
                self.schema.len(),
                s.steps(),
                s.signals()
            );
        }
        let factor = (s.native_hz / self.pre.config.target_hz.max(1)).max(1) as usize;
        let t_found = s.steps().div_ceil(factor);
        if t_found > t_exp && !self.pre.config.allow_truncate {
            bail!(
                "sample {}: shape mismatch: model expects (T, S) = ({t_exp}, {s_exp}), found ({t_found}, {s_exp}) after resampling to {} Hz",
                s.sample_id,
                self.pre.config.target_hz
            );
        }
        Ok(self.pre.apply(s)?)
    }

    pub fn score_prepared(&self, x: &Tensor<f64>) -> Result<f64> {
        Ok(match &self.detector {
            Detector::Flow(FlowModel::F32(m)) => score::score(m, &x.cast())?,
            Detector::Flow(FlowModel::F64(m)) => score::score(m, x)?,
            Detector::Knn(m) => m.score(x.data())?,
            Detector::Pca(m) => m.score(x.data())?,
        })
    }

    pub fn score(&self, s: &Sample) -> Result<f64> {
        self.score_prepared(&self.prepare(s)?)
    }

    pub fn score_all(&self, samples: &[Sample]) -> Result<Vec<f64>> {
        use rayon::prelude::*;
        samples.par_iter().map(|s| self.score(s)).collect()
    }

    /// Per-timestep ℓ1 norm of the score's input gradient (flows only).
    pub fn temporal(&self, s: &Sample) -> Result<(f64, Vec<f64>)> {
        let x = self.prepare(s)?;
        Ok(match &self.detector {
            Detector::Flow(FlowModel::F32(m)) => score::temporal_trace(m, &x.cast())?,
            Detector::Flow(FlowModel::F64(m)) => score::temporal_trace(m, &x)?,
            _ => bail!("temporal analysis needs an mvt-flow model, this is {}", self.kind()),
        })
    }

    pub fn receptive_field(&self) -> Option<usize> {
        match &self.detector {
            Detector::Flow(FlowModel::F32(m)) => Some(m.config.receptive_field()),
            Detector::Flow(FlowModel::F64(m)) => Some(m.config.receptive_field()),
            _ => None,
        }
    }

    pub fn to_container(&self) -> Container {
        let mut c = match &self.detector {
            Detector::Flow(FlowModel::F32(m)) => {
                let mut c = m.to_container();
                c.set("precision", "f32");
                c
            }
            Detector::Flow(FlowModel::F64(m)) => {
                let mut c = m.to_container();
                c.set("precision", "f64");
                c
            }
            Detector::Knn(m) => m.to_container(),
            Detector::Pca(m) => m.to_container(),
        };
        c.set("run.seed", self.seed);
        self.pre.write_into(&mut c);
        self.schema.write_into(&mut c);
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let detector = match c.kind.as_str() {
            FLOW_KIND => match c.get("precision").unwrap_or("f32") {
                "f64" => Detector::Flow(FlowModel::F64(MvtFlow::from_container(c)?)),
                _ => Detector::Flow(FlowModel::F32(MvtFlow::from_container(c)?)),
            },
            KNN_KIND => Detector::Knn(KnnModel::from_container(c)?),
            PCA_KIND => Detector::Pca(PcaModel::from_container(c)?),
            other => return Err(anyhow!("unknown model kind '{other}'")),
        };
        let m = TrainedModel {
            schema: SignalSchema::read_from(c)?,
            pre: Preprocessor::read_from(c)?,
            detector,
            seed: c.parse("run.seed")?,
        };
        let shape = m.pre.output_shape();
        let expected = match &m.detector {
            Detector::Flow(FlowModel::F32(f)) => Some(f.input_shape),
            Detector::Flow(FlowModel::F64(f)) => Some(f.input_shape),
            _ => None,
        };
        if let Some(e) = expected {
            if e != shape {
                bail!("model file is inconsistent: flow expects (T, S) = {e:?}, preprocessing yields {shape:?}");
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_container()
            .save(path)
            .with_context(|| format!("saving model to {}", path.display()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let c = Container::load(path).with_context(|| format!("loading model {}", path.display()))?;
        Self::from_container(&c).with_context(|| format!("loading model {}", path.display()))
    }
}
