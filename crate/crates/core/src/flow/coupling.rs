use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{soft_clamp, FlowConfig};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Real, Tensor, Var};

/// One dilated temporal convolution, weight `[C_out, C_in, K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<F> {
    pub weight: Tensor<F>,
    pub bias: Tensor<F>,
    pub dilation: usize,
}

impl<F: Real> ConvLayer<F> {
    fn he_normal(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        dilation: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let std = (2.0 / (c_in * kernel) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        let weight = Tensor::from_fn(vec![c_out, c_in, kernel], |_| F::of(normal.sample(rng)));
        Self {
            weight,
            bias: Tensor::zeros(vec![c_out]),
            dilation,
        }
    }

    fn zeros(c_in: usize, c_out: usize, kernel: usize, dilation: usize) -> Self {
        Self {
            weight: Tensor::zeros(vec![c_out, c_in, kernel]),
            bias: Tensor::zeros(vec![c_out]),
            dilation,
        }
    }
}

/// Internal network `g`: conv -> ReLU -> conv -> ReLU -> conv. Maps `S/2`
/// signals to `S` output channels, the first half read as log-scales and the
/// second half as translations.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalNet<F> {
    pub layers: [ConvLayer<F>; 3],
}

impl<F: Real> InternalNet<F> {
    pub(crate) fn init(half: usize, config: &FlowConfig, rng: &mut impl Rng) -> Self {
        let hidden = config.hidden_scale * half;
        let k = config.kernel_sizes;
        let d = config.dilations;
        Self {
            layers: [
                ConvLayer::he_normal(half, hidden, k[0], d[0], rng),
                ConvLayer::he_normal(hidden, hidden, k[1], d[1], rng),
                // Zero output layer: every block starts as the identity.
                ConvLayer::zeros(hidden, 2 * half, k[2], d[2]),
            ],
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor<F>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor<F>> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    /// `vars` holds weight/bias handles for the three layers, in order.
    /// Returns `(s, t)`, each `[S/2, T]`.
    pub(crate) fn forward(&self, g: &mut Graph<F>, vars: &[Var], x: Var) -> Result<(Var, Var)> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = g.conv1d(h, vars[2 * i], vars[2 * i + 1], layer.dilation)?;
            if i + 1 < self.layers.len() {
                h = g.relu(h);
            }
        }
        let (rows, _) = g.value(h).dims2()?;
        let half = rows / 2;
        let s_rows: Vec<usize> = (0..half).collect();
        let t_rows: Vec<usize> = (half..rows).collect();
        Ok((g.select_rows(h, &s_rows)?, g.select_rows(h, &t_rows)?))
    }
}

/// Affine coupling block: permute signals, split in half, transform each half
/// conditioned on the other.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingBlock<F> {
    /// Signal `j` of the permuted input is signal `permutation[j]` of the input.
    pub permutation: Vec<usize>,
    pub g1: InternalNet<F>,
    pub g2: InternalNet<F>,
    pub alpha: f64,
}

pub(crate) const PARAMS_PER_BLOCK: usize = 12;

pub(crate) fn validate_permutation(perm: &[usize]) -> Result<()> {
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidArgument(format!(
                "not a permutation of 0..{}: {perm:?}",
                perm.len()
            )));
        }
    }
    Ok(())
}

impl<F: Real> CouplingBlock<F> {
    pub(crate) fn init(signals: usize, config: &FlowConfig, rng: &mut impl Rng) -> Self {
        let mut permutation: Vec<usize> = (0..signals).collect();
        permutation.shuffle(rng);
        let half = signals / 2;
        let g1 = InternalNet::init(half, config, rng);
        let g2 = InternalNet::init(half, config, rng);
        Self {
            permutation,
            g1,
            g2,
            alpha: config.alpha,
        }
    }

    pub fn inverse_permutation(&self) -> Vec<usize> {
        let mut inv = vec![0; self.permutation.len()];
        for (j, &p) in self.permutation.iter().enumerate() {
            inv[p] = j;
        }
        inv
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor<F>> {
        self.g1.params().chain(self.g2.params())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor<F>> {
        self.g1.params_mut().chain(self.g2.params_mut())
    }

    fn halves(&self) -> (Vec<usize>, Vec<usize>) {
        let s = self.permutation.len();
        ((0..s / 2).collect(), (s / 2..s).collect())
    }

    /// Forward on a channel-major `[S, T]` input. Returns `(y, logdet)`
    /// where `logdet` is the scalar sum of both clamped log-scale maps.
    pub(crate) fn forward_graph(
        &self,
        g: &mut Graph<F>,
        vars: &[Var],
        x: Var,
    ) -> Result<(Var, Var)> {
        let (first, second) = self.halves();
        let xp = g.select_rows(x, &self.permutation)?;
        let x1 = g.select_rows(xp, &first)?;
        let x2 = g.select_rows(xp, &second)?;

        let (s1, t1) = self.g1.forward(g, &vars[..6], x1)?;
        let s1 = soft_clamp(g, s1, self.alpha)?;
        let e1 = g.exp(s1);
        let y2 = g.mul(x2, e1)?;
        let y2 = g.add(y2, t1)?;

        let (s2, t2) = self.g2.forward(g, &vars[6..], y2)?;
        let s2 = soft_clamp(g, s2, self.alpha)?;
        let e2 = g.exp(s2);
        let y1 = g.mul(x1, e2)?;
        let y1 = g.add(y1, t2)?;

        let y = g.concat_rows(&[y1, y2])?;
        let l1 = g.sum(s1);
        let l2 = g.sum(s2);
        let logdet = g.add(l1, l2)?;
        Ok((y, logdet))
    }

    /// Inverse on a channel-major `[S, T]` input.
    pub(crate) fn inverse_graph(&self, g: &mut Graph<F>, vars: &[Var], y: Var) -> Result<Var> {
        let (first, second) = self.halves();
        let y1 = g.select_rows(y, &first)?;
        let y2 = g.select_rows(y, &second)?;

        let (s2, t2) = self.g2.forward(g, &vars[6..], y2)?;
        let s2 = soft_clamp(g, s2, self.alpha)?;
        let s2 = g.scale(s2, -F::one());
        let e2 = g.exp(s2);
        let d1 = g.sub(y1, t2)?;
        let x1 = g.mul(d1, e2)?;

        let (s1, t1) = self.g1.forward(g, &vars[..6], x1)?;
        let s1 = soft_clamp(g, s1, self.alpha)?;
        let s1 = g.scale(s1, -F::one());
        let e1 = g.exp(s1);
        let d2 = g.sub(y2, t1)?;
        let x2 = g.mul(d2, e1)?;

        let xp = g.concat_rows(&[x1, x2])?;
        g.select_rows(xp, &self.inverse_permutation())
    }

    pub(crate) fn bind(&self, g: &mut Graph<F>, requires_grad: bool) -> Vec<Var> {
        self.params()
            .map(|p| g.leaf(p.clone(), requires_grad))
            .collect()
    }

    fn check_input(&self, x: &Tensor<F>) -> Result<()> {
        let (_, s) = x.dims2()?;
        if s != self.permutation.len() {
            return Err(Error::shape(
                "coupling block",
                format!("expected {} signals, found {s}", self.permutation.len()),
            ));
        }
        Ok(())
    }

    /// Applies this block to a time-major `[T, S]` sample.
    pub fn forward(&self, x: &Tensor<F>) -> Result<(Tensor<F>, F)> {
        self.check_input(x)?;
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let xv = g.constant(x.transpose()?);
        let (y, logdet) = self.forward_graph(&mut g, &vars, xv)?;
        Ok((g.value(y).transpose()?, g.value(logdet).item()?))
    }

    pub fn inverse(&self, y: &Tensor<F>) -> Result<Tensor<F>> {
        self.check_input(y)?;
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let yv = g.constant(y.transpose()?);
        let x = self.inverse_graph(&mut g, &vars, yv)?;
        g.value(x).transpose()
    }
}
