//! Run configuration, read from TOML. Every key is optional; missing keys
//! take the defaults shown by `mvtflow config`.
//!
//! ```toml
//! seed = 0
//! kind = "mvt-flow"            # mvt-flow | knn | pca
//!
//! [data]
//! dir = "data/synth"           # omit to generate [synth] in memory
//!
//! [synth]
//! signals = 8
//! steps = 256
//! hz = 100
//! train = 200
//! normal_test = 50
//! anomalies = 80
//! kinds = ["friction", "weight", "collision", "miscommutation"]
//! magnitude_scale = 1.0
//! noise_std = 0.01
//! # seed = 7                   # fixed data seed; defaults to the run seed
//!
//! [preprocess]
//! frequency = 100              # Hz, must divide the native rate
//! subset = "all"               # all | mechanical | electrical | measured | computed | names:a+b
//! standardize = true
//! allow_truncate = false
//!
//! [flow]
//! n_blocks = 4
//! hidden_scale = 2
//! kernel_sizes = [13, 1, 1]
//! dilations = [2, 1, 1]
//! alpha = 3.0
//!
//! [train]
//! batch_size = 32
//! lr = 8e-4
//! lr_decay = 0.1
//! decay_epochs = [11, 61]      # 1-indexed
//! epochs = 70
//! beta1 = 0.9
//! beta2 = 0.999
//! eps = 1e-8
//! precision = "f32"            # f32 | f64
//! checkpoint_every = 0         # epochs; 0 saves only at the end
//!
//! [pca]
//! components = 90
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use mvtflow::data::{InjectionKind, PreprocessConfig, SignalSubset, SynthConfig};
use mvtflow::flow::FlowConfig;
use mvtflow::train::{AdamConfig, Precision, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "mvt-flow")]
    Flow,
    #[serde(rename = "knn")]
    Knn,
    #[serde(rename = "pca")]
    Pca,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Flow => "mvt-flow",
            ModelKind::Knn => "knn",
            ModelKind::Pca => "pca",
        })
    }
}

impl FromStr for ModelKind {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mvt-flow" | "flow" => Ok(ModelKind::Flow),
            "knn" | "1-nn" => Ok(ModelKind::Knn),
            "pca" => Ok(ModelKind::Pca),
            _ => bail!("unknown model kind '{s}' (expected mvt-flow, knn or pca)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub kind: ModelKind,
    pub data: DataSection,
    pub synth: SynthSection,
    pub preprocess: PreprocessSection,
    pub flow: FlowSection,
    pub train: TrainSection,
    pub pca: PcaSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            kind: ModelKind::Flow,
            data: DataSection::default(),
            synth: SynthSection::default(),
            preprocess: PreprocessSection::default(),
            flow: FlowSection::default(),
            train: TrainSection::default(),
            pca: PcaSection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub signals: usize,
    pub steps: usize,
    pub hz: u32,
    pub train: usize,
    pub normal_test: usize,
    pub anomalies: usize,
    pub kinds: Vec<String>,
    pub magnitude_scale: f64,
    pub noise_std: f64,
    pub seed: Option<u64>,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        Self {
            signals: d.n_signals,
            steps: d.steps,
            hz: d.hz,
            train: d.n_train,
            normal_test: d.n_normal_test,
            anomalies: d.n_anomalies,
            kinds: d.kinds.iter().map(|k| k.to_string()).collect(),
            magnitude_scale: d.magnitude_scale,
            noise_std: d.noise_std,
            seed: None,
        }
    }
}

impl SynthSection {
    pub fn to_config(&self) -> Result<SynthConfig> {
        let kinds = self
            .kinds
            .iter()
            .map(|k| k.parse::<InjectionKind>())
            .collect::<Result<_, _>>()?;
        let c = SynthConfig {
            n_signals: self.signals,
            steps: self.steps,
            hz: self.hz,
            n_train: self.train,
            n_normal_test: self.normal_test,
            n_anomalies: self.anomalies,
            kinds,
            magnitude_scale: self.magnitude_scale,
            noise_std: self.noise_std,
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    pub frequency: u32,
    pub subset: String,
    pub standardize: bool,
    pub allow_truncate: bool,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        let d = PreprocessConfig::default();
        Self {
            frequency: d.target_hz,
            subset: d.subset.to_string(),
            standardize: d.standardize,
            allow_truncate: d.allow_truncate,
        }
    }
}

impl PreprocessSection {
    pub fn to_config(&self) -> Result<PreprocessConfig> {
        Ok(PreprocessConfig {
            target_hz: self.frequency,
            subset: self.subset.parse::<SignalSubset>()?,
            standardize: self.standardize,
            allow_truncate: self.allow_truncate,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSection {
    pub n_blocks: usize,
    pub hidden_scale: usize,
    pub kernel_sizes: [usize; 3],
    pub dilations: [usize; 3],
    pub alpha: f64,
}

impl Default for FlowSection {
    fn default() -> Self {
        let d = FlowConfig::default();
        Self {
            n_blocks: d.n_blocks,
            hidden_scale: d.hidden_scale,
            kernel_sizes: d.kernel_sizes,
            dilations: d.dilations,
            alpha: d.alpha,
        }
    }
}

impl FlowSection {
    pub fn to_config(&self) -> Result<FlowConfig> {
        let c = FlowConfig {
            n_blocks: self.n_blocks,
            hidden_scale: self.hidden_scale,
            kernel_sizes: self.kernel_sizes,
            dilations: self.dilations,
            alpha: self.alpha,
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub decay_epochs: Vec<usize>,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub precision: String,
    pub checkpoint_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            batch_size: d.batch_size,
            lr: d.lr,
            lr_decay: d.lr_decay,
            decay_epochs: d.decay_epochs,
            epochs: d.epochs,
            beta1: d.adam.beta1,
            beta2: d.adam.beta2,
            eps: d.adam.eps,
            precision: "f32".into(),
            checkpoint_every: 0,
        }
    }
}

impl TrainSection {
    pub fn precision(&self) -> Result<Precision> {
        Ok(self.precision.parse::<Precision>()?)
    }

    pub fn to_config(&self, seed: u64) -> Result<TrainConfig> {
        let c = TrainConfig {
            batch_size: self.batch_size,
            lr: self.lr,
            lr_decay: self.lr_decay,
            decay_epochs: self.decay_epochs.clone(),
            epochs: self.epochs,
            adam: AdamConfig {
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
            },
            seed,
            precision: self.precision()?,
            checkpoint: None,
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaSection {
    pub components: usize,
}

impl Default for PcaSection {
    fn default() -> Self {
        Self {
            components: mvtflow::baselines::DEFAULT_PCA_COMPONENTS,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()).with_context(|| format!("writing {}", path.display()))
    }

    /// Checks every section without running anything.
    pub fn validate(&self) -> Result<()> {
        self.synth.to_config()?;
        self.preprocess.to_config()?;
        self.flow.to_config()?;
        self.train.to_config(self.seed)?;
        if self.pca.components == 0 {
            bail!("pca.components must be >= 1");
        }
        Ok(())
    }
}
