use diffcore::Tensor;

use super::edit::{enumerate_edits, EditFilter, EditOp, VocabIndex};
use crate::corpus::OneHotText;
use crate::models::GradientField;
use crate::{Error, Result};

/// An edit with its first-order loss change.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredEdit {
    pub edit: EditOp,
    /// Σ over the decomposition of `∂J/∂x[to] − ∂J/∂x[from]`.
    pub raw: f64,
    /// Number of slot changes N; the edit vector has norm √(2N).
    pub flips: usize,
    /// `raw / √(2N)`: the derivative along the unit edit direction.
    pub normalized: f64,
}

fn check_shape(grad: &GradientField, x: &OneHotText) -> Result<()> {
    if grad.shape() != x.shape() {
        return Err(Error::Contract(format!(
            "gradient shape {:?} does not match input shape {:?}",
            grad.shape(),
            x.shape()
        )));
    }
    Ok(())
}

/// Scores every edit from one gradient field.
pub fn score_edits(grad: &GradientField, x: &OneHotText, edits: &[EditOp]) -> Result<Vec<ScoredEdit>> {
    check_shape(grad, x)?;
    edits
        .iter()
        .map(|&edit| {
            let flips = edit.decompose(x)?;
            let raw: f64 = flips.iter().map(|f| grad.at(f.word, f.pos, f.to) - grad.at(f.word, f.pos, f.from)).sum();
            let n = flips.len();
            Ok(ScoredEdit { edit, raw, flips: n, normalized: raw / (2.0 * n as f64).sqrt() })
        })
        .collect()
}

/// The highest normalized score among legal edits; ties go to the smallest
/// `(kind, word, pos, symbol)`.
pub fn best_edit(grad: &GradientField, x: &OneHotText, vocab: &VocabIndex, filter: &EditFilter) -> Result<ScoredEdit> {
    let edits = enumerate_edits(x, vocab, filter);
    let scored = score_edits(grad, x, &edits)?;
    let mut best: Option<ScoredEdit> = None;
    for s in scored {
        match best {
            Some(b) if !(s.normalized > b.normalized || (s.normalized == b.normalized && s.edit < b.edit)) => {}
            _ => best = Some(s),
        }
    }
    best.ok_or(Error::Exhausted)
}

/// The dense edit vector `v` (`+1` at each new symbol, `−1` at each old
/// one) over the full input shape.
pub fn edit_vector(x: &OneHotText, edit: &EditOp) -> Result<Tensor> {
    let [m, n, v] = x.shape();
    let mut data = vec![0.0; m * n * v];
    for f in edit.decompose(x)? {
        let base = (f.word * n + f.pos) * v;
        data[base + f.to] += 1.0;
        data[base + f.from] -= 1.0;
    }
    Ok(Tensor::new(vec![m, n, v], data)?)
}
