use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Per-input comparison of analytic and central-difference gradients.
#[derive(Debug, Clone)]
pub struct GradcheckReport {
    /// `max_i |analytic_i - numeric_i| / max(max_i |analytic_i|, max_i |numeric_i|)`
    /// for each input; 0 when both gradients vanish.
    pub rel_err: Vec<f64>,
    pub max_abs_err: Vec<f64>,
    pub tol: f64,
}

impl GradcheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.rel_err.iter().copied().fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() <= self.tol
    }
}

/// Checks the gradient of the scalar built by `f` against central finite
/// differences with step `h`, in 64-bit. The relative error is measured in
/// the max norm over each input so that entries with a vanishing gradient do
/// not blow up the ratio.
pub fn gradcheck<Func>(f: Func, inputs: &[Tensor<f64>], h: f64, tol: f64) -> Result<GradcheckReport>
where
    Func: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("gradcheck step must be > 0, got {h}")));
    }
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let loss = f(&mut g, &vars)?;
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| g.grad_or_zeros(v).expect("leaf requires grad"))
        .collect();

    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        g.value(out).item()
    };

    let mut work = inputs.to_vec();
    let mut rel_err = Vec::with_capacity(inputs.len());
    let mut max_abs_err = Vec::with_capacity(inputs.len());
    for (which, a) in analytic.iter().enumerate() {
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..inputs[which].len() {
            let orig = work[which].data()[i];
            work[which].data_mut()[i] = orig + h;
            let up = eval(&work)?;
            work[which].data_mut()[i] = orig - h;
            let down = eval(&work)?;
            work[which].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max((numeric - a[i]).abs());
            scale = scale.max(numeric.abs()).max(a[i].abs());
        }
        max_abs_err.push(worst);
        rel_err.push(if scale > 0.0 { worst / scale } else { 0.0 });
    }
    Ok(GradcheckReport {
        rel_err,
        max_abs_err,
        tol,
    })
}
