use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Moment estimates for Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(shapes: &[usize]) -> Self {
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_tensors(params: &[&Tensor]) -> Self {
        Self::new(&params.iter().map(|t| t.len()).collect::<Vec<_>>())
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, i: usize) -> &[f64] {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &[f64] {
        &self.v[i]
    }
}

/// One Adam update of every tensor. `grads[i]` pairs with `params[i]`;
/// `None` means a zero gradient.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Option<&[f64]>],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape {
            op: "adam_step",
            detail: format!(
                "{} tensors, {} gradients, {} moment buffers",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if state.m[i].len() != p.len() || g.is_some_and(|g| g.len() != p.len()) {
            return Err(Error::Shape {
                op: "adam_step",
                detail: format!("tensor {i} does not match its state or gradient"),
            });
        }
        if let Some(pos) = g.and_then(|g| g.iter().position(|x| !x.is_finite())) {
            return Err(Error::Autodiff(format!(
                "non-finite gradient in tensor {i} at coordinate {pos}"
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let g = grads[i];
        for (j, x) in p.data_mut().iter_mut().enumerate() {
            let gj = g.map_or(0.0, |g| g[j]);
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let mhat = m[j] / c1;
            let vhat = v[j] / c2;
            *x -= lr * mhat / (vhat.sqrt() + state.eps);
        }
    }
    Ok(())
}
