// 1-D convolution along the time axis with "same" zero padding.
//
// Layout: input [C_in, T], weight [C_out, C_in, K], bias [C_out], output
// [C_out, T]. Total padding is dilation * (K - 1); the left side gets the
// floor half, the right side the rest. Padded positions are skipped rather
// than materialised.

use super::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1dShape {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub len: usize,
}

/// `(left, right)` zero padding that keeps the output length equal to the
/// input length.
pub fn same_padding(kernel: usize, dilation: usize) -> (usize, usize) {
    let total = dilation * (kernel - 1);
    let left = total / 2;
    (left, total - left)
}

impl Conv1dShape {
    /// Range of output positions `t` whose tap `k` lands inside the input,
    /// together with the signed input offset `t + offset`.
    /// `None` when the tap falls entirely into padding.
    #[inline]
    fn tap(&self, k: usize) -> Option<(usize, usize, isize)> {
        let (left, _) = same_padding(self.kernel, self.dilation);
        let offset = (k * self.dilation) as isize - left as isize;
        let t = self.len as isize;
        let lo = (-offset).clamp(0, t) as usize;
        let hi = (t - offset).clamp(0, t) as usize;
        (lo < hi).then_some((lo, hi, offset))
    }
}

pub fn conv1d_forward<F: Real>(
    shape: &Conv1dShape,
    input: &[F],
    weight: &[F],
    bias: &[F],
) -> Vec<F> {
    let Conv1dShape {
        c_in,
        c_out,
        kernel,
        len,
        ..
    } = *shape;
    let mut out = vec![F::zero(); c_out * len];
    for c in 0..c_out {
        let row = &mut out[c * len..(c + 1) * len];
        row.iter_mut().for_each(|v| *v = bias[c]);
        for i in 0..c_in {
            let x = &input[i * len..(i + 1) * len];
            for k in 0..kernel {
                let w = weight[(c * c_in + i) * kernel + k];
                if w == F::zero() {
                    continue;
                }
                let Some((lo, hi, off)) = shape.tap(k) else {
                    continue;
                };
                let src = &x[(lo as isize + off) as usize..(hi as isize + off) as usize];
                for (o, &xv) in row[lo..hi].iter_mut().zip(src) {
                    *o = *o + w * xv;
                }
            }
        }
    }
    out
}

/// Accumulates gradients of a convolution given the upstream gradient
/// `grad_out`. Any of the output slots may be `None` when that input does not
/// need a gradient.
pub fn conv1d_backward<F: Real>(
    shape: &Conv1dShape,
    input: &[F],
    weight: &[F],
    grad_out: &[F],
    mut grad_input: Option<&mut [F]>,
    mut grad_weight: Option<&mut [F]>,
    grad_bias: Option<&mut [F]>,
) {
    let Conv1dShape {
        c_in,
        c_out,
        kernel,
        len,
        ..
    } = *shape;
    if let Some(gb) = grad_bias {
        for c in 0..c_out {
            let s = grad_out[c * len..(c + 1) * len]
                .iter()
                .fold(F::zero(), |a, &g| a + g);
            gb[c] = gb[c] + s;
        }
    }
    for c in 0..c_out {
        let g = &grad_out[c * len..(c + 1) * len];
        for i in 0..c_in {
            let x = &input[i * len..(i + 1) * len];
            for k in 0..kernel {
                let widx = (c * c_in + i) * kernel + k;
                let Some((lo, hi, off)) = shape.tap(k) else {
                    continue;
                };
                let a = (lo as isize + off) as usize;
                let b = (hi as isize + off) as usize;
                if let Some(gw) = grad_weight.as_deref_mut() {
                    let s = g[lo..hi]
                        .iter()
                        .zip(&x[a..b])
                        .fold(F::zero(), |acc, (&gv, &xv)| acc + gv * xv);
                    gw[widx] = gw[widx] + s;
                }
                if let Some(gi) = grad_input.as_deref_mut() {
                    let w = weight[widx];
                    let dst = &mut gi[i * len + a..i * len + b];
                    for (d, &gv) in dst.iter_mut().zip(&g[lo..hi]) {
                        *d = *d + w * gv;
                    }
                }
            }
        }
    }
}
