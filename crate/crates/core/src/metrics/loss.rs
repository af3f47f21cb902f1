//! Binary cross-entropy, the adjusted training loss and rate estimates.

use std::f64::consts::LN_2;
use std::sync::Arc;

use crate::neural::tape::sigmoid;
use crate::neural::{CustomOp, Tape, Tensor, Var};
use crate::Error;

use super::llr::LlrBlock;

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `log2(1 + exp(-(1 - 2b) l))`, the cost of LLR `l` for transmitted bit `b`.
pub fn bit_cost(llr: f64, bit: bool) -> f64 {
    let z = if bit { llr } else { -llr };
    softplus(z) / LN_2
}

/// Bit cost summed over a block, in bits.
pub fn bce_sum(block: &LlrBlock) -> f64 {
    block.llrs.iter().zip(&block.labels).map(|(&l, &b)| bit_cost(l, b)).sum()
}

/// `H - BCE / n`, clamped at zero, in bits per 2D symbol.
pub fn air_estimate(block: &LlrBlock, entropy_bits: f64) -> f64 {
    if block.llrs.is_empty() {
        return 0.0;
    }
    (entropy_bits - bce_sum(block) / block.symbols() as f64).max(0.0)
}

/// `-mean(log2 p) / L` from natural-log sequence probabilities.
pub fn sequence_entropy_rate(log_probs: &[f64], block_len: usize) -> Result<f64, Error> {
    if log_probs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("sequence log-probability".into()));
    }
    if log_probs.is_empty() || block_len == 0 {
        return Err(Error::InvalidArgument("need at least one sequence of positive length".into()));
    }
    let mean = log_probs.iter().sum::<f64>() / log_probs.len() as f64;
    Ok(-mean / LN_2 / block_len as f64 + 0.0)
}

/// Row sums of the bit costs of `R x C` LLRs against constant labels.
#[derive(Debug)]
struct BceOp {
    labels: Vec<bool>,
}

impl CustomOp for BceOp {
    fn name(&self) -> &'static str {
        "bce"
    }

    fn vjp(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let l = inputs[0];
        let cols = l.cols();
        let mut g = Tensor::zeros(l.rows(), cols);
        for (i, (gi, (&li, &b))) in g.data_mut().iter_mut().zip(l.data().iter().zip(&self.labels)).enumerate() {
            let sign = if b { 1.0 } else { -1.0 };
            *gi = grad.data()[i / cols] * sign * sigmoid(sign * li) / LN_2;
        }
        vec![Some(g)]
    }
}

/// Per-row bit cost in bits, `R x 1`.
pub fn bce_tape(tape: &mut Tape, llrs: Var, labels: &[bool]) -> Result<Var, Error> {
    let t = tape.value(llrs);
    if t.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: t.len(),
            found: labels.len(),
        });
    }
    let rows = t.rows();
    let cols = t.cols();
    let mut out = Tensor::zeros(rows, 1);
    for r in 0..rows {
        let s: f64 = t
            .row_slice(r)
            .iter()
            .zip(&labels[r * cols..(r + 1) * cols])
            .map(|(&l, &b)| bit_cost(l, b))
            .sum();
        out.set(r, 0, s);
    }
    Ok(tape.custom(Arc::new(BceOp { labels: labels.to_vec() }), &[llrs], out))
}

/// Components of the training objective, all in bits per 2D symbol.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub loss: Var,
    pub bce_rate: Var,
    pub h_rate: Var,
}

/// `BCE_rate - H_rate` with `BCE_rate = mean_rows(sum bit costs) / L` and
/// `H_rate = -mean_rows(log2 p) / L`. `log_prob` is `R x 1` in nats; sign
/// bits are left out of it since they only add a constant.
pub fn adjusted_bce_loss(
    tape: &mut Tape,
    llrs: Var,
    labels: &[bool],
    log_prob: Var,
    block_len: usize,
) -> Result<LossParts, Error> {
    let (lp_rows, lp_cols) = tape.value(log_prob).shape();
    if lp_cols != 1 || lp_rows == 0 {
        return Err(Error::Shape(format!(
            "log-probabilities are {:?}, expected a nonempty column",
            (lp_rows, lp_cols)
        )));
    }
    let bce_rows = bce_tape(tape, llrs, labels)?;
    let bce_mean = tape.mean(bce_rows);
    let bce_rate = tape.scale(bce_mean, 1.0 / block_len as f64);
    let lp_mean = tape.mean(log_prob);
    let h_rate = tape.scale(lp_mean, -1.0 / (LN_2 * block_len as f64));
    let loss = tape.sub(bce_rate, h_rate);
    Ok(LossParts { loss, bce_rate, h_rate })
}
