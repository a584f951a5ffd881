use super::coupling::{validate_permutation, ConvLayer, CouplingBlock, InternalNet};
use super::{FlowConfig, MvtFlow};
use crate::container::{BlobData, Container};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const KIND: &str = "mvt-flow";

impl<F: Real> MvtFlow<F> {
    /// Header keys and f32 weight blobs. Other header keys may be added by
    /// the caller before saving.
    pub fn to_container(&self) -> Container {
        let mut c = Container::new(KIND);
        c.set_list("input_shape", &[self.input_shape.0, self.input_shape.1]);
        c.set("n_blocks", self.config.n_blocks);
        c.set("r", self.config.hidden_scale);
        c.set_list("kernel_sizes", &self.config.kernel_sizes);
        c.set_list("dilations", &self.config.dilations);
        c.set("alpha", self.config.alpha);
        c.set("seed", self.seed);
        for (i, b) in self.blocks.iter().enumerate() {
            c.set_list(format!("block.{i}.permutation"), &b.permutation);
        }
        for (name, p) in self.param_names().into_iter().zip(self.params()) {
            let data = p.data().iter().map(|v| v.to_f64_lossless() as f32).collect();
            c.push_blob(name, p.shape().to_vec(), BlobData::F32(data));
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.kind != KIND {
            return Err(Error::Format(format!("expected kind {KIND}, found {}", c.kind)));
        }
        let shape: Vec<usize> = c.parse_list("input_shape")?;
        let [t, s] = shape[..] else {
            return Err(Error::Format("input_shape needs two entries".into()));
        };
        let three = |key: &str| -> Result<[usize; 3]> {
            c.parse_list::<usize>(key)?
                .try_into()
                .map_err(|_| Error::Format(format!("{key} needs three entries")))
        };
        let config = FlowConfig {
            n_blocks: c.parse("n_blocks")?,
            hidden_scale: c.parse("r")?,
            kernel_sizes: three("kernel_sizes")?,
            dilations: three("dilations")?,
            alpha: c.parse("alpha")?,
        };
        config.validate()?;
        let seed = c.parse("seed")?;

        let tensor = |name: &str, expect: &[usize]| -> Result<Tensor<F>> {
            let (shape, data) = c.blob_f32(name)?;
            if shape != expect {
                return Err(Error::Format(format!(
                    "blob {name}: shape {shape:?}, expected {expect:?}"
                )));
            }
            Tensor::new(shape.to_vec(), data.iter().map(|&v| F::of(f64::from(v))).collect())
        };
        let half = s / 2;
        let hidden = config.hidden_scale * half;
        let k = config.kernel_sizes;
        let d = config.dilations;
        let chans = [(half, hidden), (hidden, hidden), (hidden, 2 * half)];

        let mut blocks = Vec::with_capacity(config.n_blocks);
        for b in 0..config.n_blocks {
            let permutation: Vec<usize> = c.parse_list(&format!("block.{b}.permutation"))?;
            if permutation.len() != s {
                return Err(Error::Format(format!("block {b}: permutation length")));
            }
            validate_permutation(&permutation)?;
            let net = |name: &str| -> Result<InternalNet<F>> {
                let layer = |l: usize| -> Result<ConvLayer<F>> {
                    let (ci, co) = chans[l];
                    Ok(ConvLayer {
                        weight: tensor(&format!("block.{b}.{name}.conv{l}.weight"), &[co, ci, k[l]])?,
                        bias: tensor(&format!("block.{b}.{name}.conv{l}.bias"), &[co])?,
                        dilation: d[l],
                    })
                };
                Ok(InternalNet {
                    layers: [layer(0)?, layer(1)?, layer(2)?],
                })
            };
            blocks.push(CouplingBlock {
                permutation,
                g1: net("g1")?,
                g2: net("g2")?,
                alpha: config.alpha,
            });
        }
        let model = MvtFlow {
            config,
            input_shape: (t, s),
            seed,
            blocks,
        };
        model.validate()?;
        Ok(model)
    }
}
