use super::conv::{conv1d_backward, conv1d_forward, Conv1dShape};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<F> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    Exp(Var),
    Atan(Var),
    Relu(Var),
    SumSquares(Var),
    Sum(Var),
    Transpose(Var),
    SelectRows(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    Conv1d {
        input: Var,
        weight: Var,
        bias: Var,
        shape: Conv1dShape,
    },
}

#[derive(Debug, Clone)]
struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    requires_grad: bool,
}

/// Execution tape. Nodes are stored in the order they were executed, which is
/// a valid topological order; backward walks it in reverse.
#[derive(Debug, Clone, Default)]
pub struct Graph<F> {
    nodes: Vec<Node<F>>,
    grads: Vec<Option<Vec<F>>>,
    backward_done: bool,
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<F>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass with respect to `v`. `None` if `v`
    /// does not require a gradient or backward has not run.
    pub fn grad(&self, v: Var) -> Option<&[F]> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Like [`Graph::grad`], but a tensor that required a gradient and was
    /// never reached by backward gets zeros.
    pub fn grad_or_zeros(&self, v: Var) -> Option<Vec<F>> {
        if !self.nodes[v.0].requires_grad || !self.backward_done {
            return None;
        }
        Some(
            self.grad(v)
                .map(<[F]>::to_vec)
                .unwrap_or_else(|| vec![F::zero(); self.value(v).len()]),
        )
    }

    /// Clears gradients so that [`Graph::backward`] may run again.
    pub fn zero_grad(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(F, F) -> F) -> Tensor<F> {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("shape preserved")
    }

    fn map(&self, a: Var, f: impl Fn(F) -> F) -> Tensor<F> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| f(x)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("shape preserved")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_map(a, b, |x, y| x + y);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_map(a, b, |x, y| x - y);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_map(a, b, |x, y| x * y);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: F) -> Var {
        let out = self.map(a, |x| x * c);
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Scale(a, c), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.map(a, F::exp);
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Exp(a), rg)
    }

    pub fn atan(&mut self, a: Var) -> Var {
        let out = self.map(a, F::atan);
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Atan(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| if x > F::zero() { x } else { F::zero() });
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Relu(a), rg)
    }

    /// Scalar `sum_i x_i^2`.
    pub fn sum_squares(&mut self, a: Var) -> Var {
        let s = self.value(a).norm_sq();
        let rg = self.any_grad(&[a]);
        self.push(Tensor::scalar(s), Op::SumSquares(a), rg)
    }

    /// Scalar `sum_i x_i`.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().fold(F::zero(), |acc, &v| acc + v);
        let rg = self.any_grad(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose()?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::Transpose(a), rg))
    }

    /// Gathers rows of a 2-D tensor: `out[j] = a[rows[j]]`. Covers both
    /// permutations and contiguous splits.
    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let (r, c) = self.value(a).dims2()?;
        if rows.is_empty() {
            return Err(Error::shape("select_rows", "empty row selection"));
        }
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(Error::shape("select_rows", format!("row {bad} out of {r}")));
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            data.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        let out = Tensor::new(vec![rows.len(), c], data)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::SelectRows(a, rows.to_vec()), rg))
    }

    /// Stacks 2-D tensors with equal column counts along the row axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("concat_rows", "no inputs"));
        };
        let (_, c) = self.value(first).dims2()?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, pc) = self.value(p).dims2()?;
            if pc != c {
                return Err(Error::shape("concat_rows", format!("columns {pc} vs {c}")));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::new(vec![rows, c], data)?;
        let rg = self.any_grad(parts);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Dilated 1-D convolution over time with "same" zero padding.
    /// `input` is `[C_in, T]`, `weight` `[C_out, C_in, K]`, `bias` `[C_out]`.
    pub fn conv1d(&mut self, input: Var, weight: Var, bias: Var, dilation: usize) -> Result<Var> {
        if dilation == 0 {
            return Err(Error::InvalidArgument("conv1d dilation must be >= 1".into()));
        }
        let (c_in, len) = self.value(input).dims2()?;
        let (c_out, wc_in, kernel) = match self.value(weight).shape()[..] {
            [a, b, k] => (a, b, k),
            ref s => return Err(Error::shape("conv1d", format!("weight must be 3-D, got {s:?}"))),
        };
        if wc_in != c_in {
            return Err(Error::shape(
                "conv1d",
                format!("input has {c_in} channels, weight expects {wc_in}"),
            ));
        }
        if self.value(bias).shape() != [c_out] {
            return Err(Error::shape(
                "conv1d",
                format!("bias {:?} for {c_out} output channels", self.value(bias).shape()),
            ));
        }
        if dilation * (kernel - 1) >= len {
            log::warn!(
                "conv1d receptive field {} spans the whole input length {len}; padding dominates",
                dilation * (kernel - 1) + 1
            );
        }
        let shape = Conv1dShape {
            c_in,
            c_out,
            kernel,
            dilation,
            len,
        };
        let data = conv1d_forward(
            &shape,
            self.value(input).data(),
            self.value(weight).data(),
            self.value(bias).data(),
        );
        let out = Tensor::new(vec![c_out, len], data)?;
        let rg = self.any_grad(&[input, weight, bias]);
        Ok(self.push(
            out,
            Op::Conv1d {
                input,
                weight,
                bias,
                shape,
            },
            rg,
        ))
    }

    /// Reverse-mode pass from a scalar `loss`. Fills gradients of every node
    /// that requires one. A second call without [`Graph::zero_grad`] fails.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Backward(
                "backward already ran on this graph; call zero_grad first".into(),
            ));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Backward(format!(
                "loss must be a scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.grads = vec![None; self.nodes.len()];
        self.backward_done = true;
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![F::one()]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = self.grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g);
            self.grads[idx] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, delta: &[F]) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(g) => g.iter_mut().zip(delta).for_each(|(a, &d)| *a = *a + d),
            slot @ None => *slot = Some(delta.to_vec()),
        }
    }

    fn propagate(&mut self, idx: usize, g: &[F]) {
        let op = self.nodes[idx].op.clone();
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(a, g);
                self.accumulate(b, g);
            }
            Op::Sub(a, b) => {
                self.accumulate(a, g);
                let neg: Vec<F> = g.iter().map(|&v| -v).collect();
                self.accumulate(b, &neg);
            }
            Op::Mul(a, b) => {
                let ga: Vec<F> = g
                    .iter()
                    .zip(self.value(b).data())
                    .map(|(&gv, &bv)| gv * bv)
                    .collect();
                let gb: Vec<F> = g
                    .iter()
                    .zip(self.value(a).data())
                    .map(|(&gv, &av)| gv * av)
                    .collect();
                self.accumulate(a, &ga);
                self.accumulate(b, &gb);
            }
            Op::Scale(a, c) => {
                let ga: Vec<F> = g.iter().map(|&v| v * c).collect();
                self.accumulate(a, &ga);
            }
            Op::Exp(a) => {
                let ga: Vec<F> = g
                    .iter()
                    .zip(self.nodes[idx].value.data())
                    .map(|(&gv, &y)| gv * y)
                    .collect();
                self.accumulate(a, &ga);
            }
            Op::Atan(a) => {
                let ga: Vec<F> = g
                    .iter()
                    .zip(self.value(a).data())
                    .map(|(&gv, &x)| gv / (F::one() + x * x))
                    .collect();
                self.accumulate(a, &ga);
            }
            Op::Relu(a) => {
                let ga: Vec<F> = g
                    .iter()
                    .zip(self.value(a).data())
                    .map(|(&gv, &x)| if x > F::zero() { gv } else { F::zero() })
                    .collect();
                self.accumulate(a, &ga);
            }
            Op::SumSquares(a) => {
                let two = F::of(2.0);
                let ga: Vec<F> = self.value(a).data().iter().map(|&x| two * x * g[0]).collect();
                self.accumulate(a, &ga);
            }
            Op::Sum(a) => {
                let ga = vec![g[0]; self.value(a).len()];
                self.accumulate(a, &ga);
            }
            Op::Transpose(a) => {
                let (r, c) = self.nodes[idx].value.dims2().expect("2-D");
                // output is r x c; input is c x r
                let mut ga = vec![F::zero(); r * c];
                for i in 0..r {
                    for j in 0..c {
                        ga[j * r + i] = g[i * c + j];
                    }
                }
                self.accumulate(a, &ga);
            }
            Op::SelectRows(a, rows) => {
                let (ar, c) = self.value(a).dims2().expect("2-D");
                let mut ga = vec![F::zero(); ar * c];
                for (j, &i) in rows.iter().enumerate() {
                    let dst = &mut ga[i * c..(i + 1) * c];
                    for (d, &gv) in dst.iter_mut().zip(&g[j * c..(j + 1) * c]) {
                        *d = *d + gv;
                    }
                }
                self.accumulate(a, &ga);
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for p in parts {
                    let n = self.value(p).len();
                    self.accumulate(p, &g[start..start + n]);
                    start += n;
                }
            }
            Op::Conv1d {
                input,
                weight,
                bias,
                shape,
            } => {
                let need = |v: Var| self.nodes[v.0].requires_grad;
                let mut gi = need(input).then(|| vec![F::zero(); shape.c_in * shape.len]);
                let mut gw = need(weight).then(|| vec![F::zero(); self.value(weight).len()]);
                let mut gb = need(bias).then(|| vec![F::zero(); shape.c_out]);
                conv1d_backward(
                    &shape,
                    self.value(input).data(),
                    self.value(weight).data(),
                    g,
                    gi.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                if let Some(d) = gi {
                    self.accumulate(input, &d);
                }
                if let Some(d) = gw {
                    self.accumulate(weight, &d);
                }
                if let Some(d) = gb {
                    self.accumulate(bias, &d);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Vec<usize>, data: Vec<f64>) -> Tensor<f64> {
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn relu_forward_and_subgradient() {
        let mut g = Graph::new();
        let x = g.leaf(t(vec![3], vec![-1.0, 0.0, 2.0]), true);
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[0.0, 0.0, 1.0]);

        let mut g = Graph::new();
        let x = g.leaf(t(vec![2], vec![-1.0, 2.0]), true);
        let y = g.relu(x);
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[0.0, 1.0]);
    }

    #[test]
    fn relu_identity_on_positive() {
        let mut g = Graph::new();
        let x = g.constant(t(vec![3], vec![0.5, 1.0, 7.0]));
        let y = g.relu(x);
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn elementwise_identities() {
        let mut g = Graph::new();
        let x = g.constant(t(vec![2, 2], vec![1.0, -2.0, 3.5, 0.25]));
        let zeros = g.constant(Tensor::zeros(vec![2, 2]));
        let e = g.exp(zeros);
        let m = g.mul(x, e).unwrap();
        assert_eq!(g.value(m), g.value(x));
        let a = g.add(x, zeros).unwrap();
        assert_eq!(g.value(a), g.value(x));
    }

    #[test]
    fn exp_derivative_at_one() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(1.0f64), true);
        let y = g.exp(x);
        g.backward(y).unwrap();
        assert!((g.grad(x).unwrap()[0] - std::f64::consts::E).abs() <= 1e-12);
    }

    #[test]
    fn no_implicit_broadcasting() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(vec![2, 3]));
        let b = g.constant(Tensor::zeros(vec![3, 2]));
        let c = g.constant(Tensor::zeros(vec![1]));
        assert!(matches!(g.add(a, b), Err(Error::Shape { .. })));
        assert!(matches!(g.mul(a, c), Err(Error::Shape { .. })));
        assert!(matches!(g.sub(b, c), Err(Error::Shape { .. })));
    }

    #[test]
    fn sum_squares_values_and_grad() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::<f64>::zeros(vec![4]));
        let s = g.sum_squares(z);
        assert_eq!(g.value(s).item().unwrap(), 0.0);

        let x = g.leaf(t(vec![2], vec![3.0, 4.0]), true);
        let s = g.sum_squares(x);
        assert_eq!(g.value(s).item().unwrap(), 25.0);

        let mut g = Graph::new();
        let x = g.leaf(t(vec![2], vec![1.0, 2.0]), true);
        let s = g.sum_squares(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_errors() {
        let mut g = Graph::new();
        let x = g.leaf(t(vec![2], vec![1.0, 2.0]), true);
        assert!(matches!(g.backward(x), Err(Error::Backward(_))));
        let s = g.sum_squares(x);
        g.backward(s).unwrap();
        assert!(matches!(g.backward(s), Err(Error::Backward(_))));
        g.zero_grad();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn constant_loss_gives_zero_grad() {
        let mut g = Graph::new();
        let x = g.leaf(t(vec![3], vec![1.0, 2.0, 3.0]), true);
        let _unused = g.exp(x);
        let c = g.constant(t(vec![2], vec![5.0, 6.0]));
        let loss = g.sum_squares(c);
        g.backward(loss).unwrap();
        assert_eq!(g.grad_or_zeros(x).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn shared_input_accumulates() {
        // d/dx sum(x * x) = 2x
        let mut g = Graph::new();
        let x = g.leaf(t(vec![2], vec![1.5, -3.0]), true);
        let y = g.mul(x, x).unwrap();
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[3.0, -6.0]);
    }

    #[test]
    fn select_and_concat_route_gradients() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_fn(vec![3, 2], |i| i as f64), true);
        let p = g.select_rows(x, &[2, 0, 1]).unwrap();
        assert_eq!(g.value(p).data(), &[4.0, 5.0, 0.0, 1.0, 2.0, 3.0]);
        let top = g.select_rows(p, &[0]).unwrap();
        let rest = g.select_rows(p, &[1, 2]).unwrap();
        let scaled = g.scale(top, 3.0);
        let cat = g.concat_rows(&[scaled, rest]).unwrap();
        let s = g.sum(cat);
        g.backward(s).unwrap();
        // row 2 of x went through the scaled branch
        assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0, 1.0, 1.0, 3.0, 3.0]);
        assert!(g.select_rows(x, &[3]).is_err());
    }

    #[test]
    fn conv_shape_errors() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(vec![2, 5]));
        let w = g.constant(Tensor::zeros(vec![3, 4, 3]));
        let b = g.constant(Tensor::zeros(vec![3]));
        assert!(matches!(g.conv1d(x, w, b, 1), Err(Error::Shape { .. })));
        let w = g.constant(Tensor::zeros(vec![3, 2, 3]));
        let b2 = g.constant(Tensor::zeros(vec![2]));
        assert!(matches!(g.conv1d(x, w, b2, 1), Err(Error::Shape { .. })));
        assert!(g.conv1d(x, w, b, 0).is_err());
        assert!(g.conv1d(x, w, b, 1).is_ok());
        // padding-dominated is allowed
        assert!(g.conv1d(x, w, b, 4).is_ok());
    }
}
