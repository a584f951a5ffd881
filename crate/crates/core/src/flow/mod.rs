//! The multivariate time-series flow: a chain of affine coupling blocks with
//! per-block signal permutations and convolutional internal networks.
//!
//! Samples are time-major `[T, S]` tensors. Internally every block works on
//! the channel-major transpose `[S, T]` so that convolutions run along time.

mod coupling;
mod io;

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{Graph, Real, Tensor, Var};

pub use coupling::{ConvLayer, CouplingBlock, InternalNet};
pub use io::KIND;
use coupling::{validate_permutation, PARAMS_PER_BLOCK};

/// Architecture hyperparameters. Defaults are the reference setting;
/// `alpha` defaults to 3.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub n_blocks: usize,
    /// Hidden channels are `hidden_scale * S/2`.
    pub hidden_scale: usize,
    pub kernel_sizes: [usize; 3],
    pub dilations: [usize; 3],
    /// Soft-clamp magnitude; log-scales stay in `(-alpha, alpha)`.
    pub alpha: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            n_blocks: 4,
            hidden_scale: 2,
            kernel_sizes: [13, 1, 1],
            dilations: [2, 1, 1],
            alpha: 3.0,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 {
            return Err(Error::InvalidArgument("n_blocks must be >= 1".into()));
        }
        if self.hidden_scale == 0 {
            return Err(Error::InvalidArgument("hidden_scale must be >= 1".into()));
        }
        if self.kernel_sizes.contains(&0) || self.dilations.contains(&0) {
            return Err(Error::InvalidArgument(
                "kernel sizes and dilations must be >= 1".into(),
            ));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "alpha must be positive and finite, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Number of consecutive time steps seen by one output of an internal net.
    pub fn receptive_field(&self) -> usize {
        1 + self
            .kernel_sizes
            .iter()
            .zip(&self.dilations)
            .map(|(k, d)| (k - 1) * d)
            .sum::<usize>()
    }
}

/// `(2 alpha / pi) * atan(s / alpha)`, recorded on the graph.
pub fn soft_clamp<F: Real>(g: &mut Graph<F>, s: Var, alpha: f64) -> Result<Var> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "soft clamp alpha must be > 0, got {alpha}"
        )));
    }
    let inner = g.scale(s, F::of(1.0 / alpha));
    let a = g.atan(inner);
    Ok(g.scale(a, F::of(2.0 * alpha / PI)))
}

/// Scalar version of [`soft_clamp`].
pub fn soft_clamp_value(s: f64, alpha: f64) -> f64 {
    2.0 * alpha / PI * (s / alpha).atan()
}

/// Graph handles for every weight of a model, in [`MvtFlow::params`] order.
#[derive(Debug, Clone)]
pub struct BoundParams(pub Vec<Var>);

#[derive(Debug, Clone, PartialEq)]
pub struct MvtFlow<F> {
    pub config: FlowConfig,
    /// `(T, S)`.
    pub input_shape: (usize, usize),
    pub seed: u64,
    pub blocks: Vec<CouplingBlock<F>>,
}

impl<F: Real> MvtFlow<F> {
    /// Fresh model. Deterministic in `seed`: permutations and He-normal
    /// weights come from the model-init stream; the last layer of every
    /// internal net is zero, so the model starts as a pure permutation.
    pub fn new(input_shape: (usize, usize), config: FlowConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (t, s) = input_shape;
        if t == 0 || s < 2 || s % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "flow input needs T >= 1 and an even S >= 2, got T={t}, S={s}"
            )));
        }
        let mut rng = rng::stream(seed, rng::MODEL_INIT);
        let blocks = (0..config.n_blocks)
            .map(|_| CouplingBlock::init(s, &config, &mut rng))
            .collect();
        Ok(Self {
            config,
            input_shape,
            seed,
            blocks,
        })
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor<F>> {
        self.blocks.iter().flat_map(|b| b.params())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor<F>> {
        self.blocks.iter_mut().flat_map(|b| b.params_mut())
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for b in 0..self.blocks.len() {
            for net in ["g1", "g2"] {
                for layer in 0..3 {
                    for what in ["weight", "bias"] {
                        names.push(format!("block.{b}.{net}.conv{layer}.{what}"));
                    }
                }
            }
        }
        names
    }

    pub fn num_weights(&self) -> usize {
        self.params().map(Tensor::len).sum()
    }

    /// Converts every weight to another precision.
    pub fn cast<G: Real>(&self) -> MvtFlow<G> {
        let cast_layer = |l: &ConvLayer<F>| ConvLayer {
            weight: l.weight.cast(),
            bias: l.bias.cast(),
            dilation: l.dilation,
        };
        let cast_net = |n: &InternalNet<F>| InternalNet {
            layers: [
                cast_layer(&n.layers[0]),
                cast_layer(&n.layers[1]),
                cast_layer(&n.layers[2]),
            ],
        };
        MvtFlow {
            config: self.config.clone(),
            input_shape: self.input_shape,
            seed: self.seed,
            blocks: self
                .blocks
                .iter()
                .map(|b| CouplingBlock {
                    permutation: b.permutation.clone(),
                    g1: cast_net(&b.g1),
                    g2: cast_net(&b.g2),
                    alpha: b.alpha,
                })
                .collect(),
        }
    }

    pub fn check_input(&self, x: &Tensor<F>) -> Result<()> {
        let found = x.dims2()?;
        if found != self.input_shape {
            return Err(Error::shape(
                "flow input",
                format!(
                    "expected (T, S) = {:?}, found {:?}",
                    self.input_shape, found
                ),
            ));
        }
        Ok(())
    }

    pub fn bind(&self, g: &mut Graph<F>, requires_grad: bool) -> BoundParams {
        BoundParams(
            self.params()
                .map(|p| g.leaf(p.clone(), requires_grad))
                .collect(),
        )
    }

    /// Records `z = f(x)` for a time-major `[T, S]` input handle. Returns
    /// the time-major latent and the scalar total log-determinant.
    pub fn forward_graph(&self, g: &mut Graph<F>, params: &BoundParams, x: Var) -> Result<(Var, Var)> {
        self.check_input(g.value(x))?;
        let mut h = g.transpose(x)?;
        let mut total: Option<Var> = None;
        for (i, block) in self.blocks.iter().enumerate() {
            let vars = &params.0[i * PARAMS_PER_BLOCK..(i + 1) * PARAMS_PER_BLOCK];
            let (y, logdet) = block.forward_graph(g, vars, h)?;
            h = y;
            total = Some(match total {
                Some(t) => g.add(t, logdet)?,
                None => logdet,
            });
        }
        let z = g.transpose(h)?;
        Ok((z, total.expect("at least one block")))
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<(Tensor<F>, F)> {
        let mut g = Graph::new();
        let params = self.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let (z, logdet) = self.forward_graph(&mut g, &params, xv)?;
        Ok((g.value(z).clone(), g.value(logdet).item()?))
    }

    pub fn inverse(&self, z: &Tensor<F>) -> Result<Tensor<F>> {
        self.check_input(z)?;
        let mut g = Graph::new();
        let params = self.bind(&mut g, false);
        let zv = g.constant(z.transpose()?);
        let mut h = zv;
        for (i, block) in self.blocks.iter().enumerate().rev() {
            let vars = &params.0[i * PARAMS_PER_BLOCK..(i + 1) * PARAMS_PER_BLOCK];
            h = block.inverse_graph(&mut g, vars, h)?;
        }
        g.value(h).transpose()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let (_, s) = self.input_shape;
        if self.blocks.len() != self.config.n_blocks {
            return Err(Error::Format(format!(
                "{} blocks, config says {}",
                self.blocks.len(),
                self.config.n_blocks
            )));
        }
        for b in &self.blocks {
            if b.permutation.len() != s {
                return Err(Error::Format(format!(
                    "permutation of length {} for {s} signals",
                    b.permutation.len()
                )));
            }
            validate_permutation(&b.permutation)?;
        }
        Ok(())
    }
}
