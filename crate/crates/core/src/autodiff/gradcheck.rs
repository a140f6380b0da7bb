use rand::seq::index;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::seed;

/// Per-tensor outcome of [`finite_diff_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub coords_checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub per_tensor: Vec<TensorCheck>,
    pub max_rel_error: f64,
    pub loss: f64,
}

/// `|a - n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn evaluate<F>(f: &mut F, params: &[Tensor], with_grad: bool) -> Result<(f64, Vec<Vec<f64>>)>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params
        .iter()
        .map(|p| {
            let t = Tensor::from_parts(p.rows(), p.cols(), p.data().to_vec()).with_requires_grad(with_grad);
            tape.leaf(&t)
        })
        .collect();
    let loss = f(&mut tape, &vars)?;
    let value = tape
        .value(loss)
        .item()
        .ok_or_else(|| Error::Autodiff("loss must be scalar".into()))?;
    if !with_grad {
        return Ok((value, Vec::new()));
    }
    tape.backward(loss)?;
    let grads = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p.len()]))
        .collect();
    Ok((value, grads))
}

/// Compares tape gradients of `f` with central differences.
///
/// Up to `coords_per_tensor` coordinates of each tensor are chosen at random
/// (all of them for smaller tensors). `f` must build the same computation for
/// the same parameter values; a bitwise mismatch between two evaluations at
/// the base point is reported as an error.
pub fn finite_diff_check<F>(
    mut f: F,
    params: &[Tensor],
    eps: f64,
    coords_per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    let (loss, grads) = evaluate(&mut f, params, true)?;
    let (again, _) = evaluate(&mut f, params, false)?;
    if loss.to_bits() != again.to_bits() {
        return Err(Error::Autodiff(format!(
            "function is not deterministic: {loss} then {again}"
        )));
    }

    let mut work: Vec<Tensor> = params
        .iter()
        .map(|p| Tensor::from_parts(p.rows(), p.cols(), p.data().to_vec()))
        .collect();
    let mut per_tensor = Vec::with_capacity(params.len());
    for (ti, grad) in grads.iter().enumerate() {
        let len = params[ti].len();
        let mut rng = seed::stream(seed, &[ti as u64]);
        let mut coords = index::sample(&mut rng, len, coords_per_tensor.min(len)).into_vec();
        coords.sort_unstable();
        let mut check = TensorCheck {
            coords_checked: coords.len(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
        };
        for c in coords {
            let base = params[ti].data()[c];
            work[ti].data_mut()[c] = base + eps;
            let (plus, _) = evaluate(&mut f, &work, false)?;
            work[ti].data_mut()[c] = base - eps;
            let (minus, _) = evaluate(&mut f, &work, false)?;
            work[ti].data_mut()[c] = base;
            let numeric = (plus - minus) / (2.0 * eps);
            let rel = relative_error(grad[c], numeric);
            check.max_rel_error = check.max_rel_error.max(rel);
            check.max_abs_error = check.max_abs_error.max((grad[c] - numeric).abs());
        }
        per_tensor.push(check);
    }
    let max_rel_error = per_tensor.iter().map(|t| t.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        per_tensor,
        max_rel_error,
        loss,
    })
}
