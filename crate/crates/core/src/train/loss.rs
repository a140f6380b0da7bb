use std::rc::Rc;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

/// Which node objective to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeLossForm {
    /// `-[log s(h_i.h_j) + sum_n log s(-h_i.h_n)]`
    Standard,
    /// `-[log s(h_i.h_j) - sum_n log s(h_i.h_n)]`, unbounded below; kept
    /// only for comparison.
    Printed,
}

/// Mean over triples of `-log s(u_j.u_k - u_j.u_n)`; each triple holds
/// rows `[j, k, n]` of `table`. An empty set yields a constant zero.
pub fn walk_loss(tape: &mut Tape, table: Var, triples: &[[usize; 3]]) -> Result<Var> {
    if triples.is_empty() {
        return Ok(tape.constant(crate::autodiff::Tensor::scalar(0.0)));
    }
    let col = |i: usize| -> Rc<[usize]> { triples.iter().map(|t| t[i]).collect() };
    let uj = tape.gather_rows(table, col(0))?;
    let uk = tape.gather_rows(table, col(1))?;
    let un = tape.gather_rows(table, col(2))?;
    let pos = tape.row_dot(uj, uk)?;
    let neg = tape.row_dot(uj, un)?;
    let diff = tape.sub(pos, neg)?;
    let ls = tape.log_sigmoid(diff)?;
    let m = tape.mean(ls)?;
    tape.neg(m)
}

/// Skip-gram negative-sampling loss averaged over pairs. `negatives` holds
/// `k` rows per center, grouped by center; all indices are rows of `emb`.
pub fn node_loss(
    tape: &mut Tape,
    emb: Var,
    centers: &[usize],
    contexts: &[usize],
    negatives: &[usize],
    form: NodeLossForm,
) -> Result<Var> {
    let b = centers.len();
    if b == 0 || contexts.len() != b || !negatives.len().is_multiple_of(b) {
        return Err(Error::invalid(format!(
            "node loss needs matching pairs and k negatives per pair ({} centers, {} contexts, {} negatives)",
            b,
            contexts.len(),
            negatives.len()
        )));
    }
    let k = negatives.len() / b;
    let hc = tape.gather_rows(emb, centers.iter().copied().collect())?;
    let hp = tape.gather_rows(emb, contexts.iter().copied().collect())?;
    let pos = tape.row_dot(hc, hp)?;
    let pos = tape.log_sigmoid(pos)?;
    let mut total = tape.sum(pos)?;
    if k > 0 {
        let rep: Rc<[usize]> = centers.iter().flat_map(|&c| std::iter::repeat_n(c, k)).collect();
        let hr = tape.gather_rows(emb, rep)?;
        let hn = tape.gather_rows(emb, negatives.iter().copied().collect())?;
        let d = tape.row_dot(hr, hn)?;
        let neg = match form {
            NodeLossForm::Standard => {
                let nd = tape.neg(d)?;
                let ls = tape.log_sigmoid(nd)?;
                tape.sum(ls)?
            }
            NodeLossForm::Printed => {
                let ls = tape.log_sigmoid(d)?;
                let s = tape.sum(ls)?;
                tape.neg(s)?
            }
        };
        total = tape.add(total, neg)?;
    }
    tape.scale(total, -1.0 / b as f64)
}
