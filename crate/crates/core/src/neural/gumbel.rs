//! Gumbel-softmax sampling with a straight-through estimator.

use rand::Rng;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::Error;

/// How the discrete sample enters the forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relaxation {
    /// Forward uses the hard one-hot, backward the relaxed gradient.
    StraightThrough,
    /// Forward and backward both use the relaxed sample. The resulting loss is
    /// smooth in the parameters, which is what finite differences can check.
    Soft,
}

#[derive(Clone, Debug)]
pub struct GumbelSample {
    /// `softmax((logits + g) / tau)`.
    pub soft: Var,
    /// One-hot of the argmax (or `soft` under [`Relaxation::Soft`]).
    pub hard: Var,
    pub indices: Vec<usize>,
    /// `sum_a hard_a * log_softmax(logits)_a`, `rows x 1`.
    pub log_prob: Var,
}

/// Standard Gumbel draw `-ln(-ln U)`.
pub fn gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    -(-u.ln()).ln()
}

pub fn gumbel_softmax_sample<R: Rng + ?Sized>(
    tape: &mut Tape,
    logits: Var,
    tau: f64,
    relaxation: Relaxation,
    rng: &mut R,
) -> Result<GumbelSample, Error> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    let (rows, cols) = tape.value(logits).shape();
    let noise = Tensor::new(rows, cols, (0..rows * cols).map(|_| gumbel(rng)).collect());
    gumbel_softmax_with_noise(tape, logits, noise, tau, relaxation)
}

/// Same as [`gumbel_softmax_sample`] with caller-provided noise.
pub fn gumbel_softmax_with_noise(
    tape: &mut Tape,
    logits: Var,
    noise: Tensor,
    tau: f64,
    relaxation: Relaxation,
) -> Result<GumbelSample, Error> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    let (rows, cols) = tape.value(logits).shape();
    let g = tape.constant(noise);
    let perturbed = tape.add(logits, g);
    let scaled = tape.scale(perturbed, 1.0 / tau);
    let soft = tape.softmax(scaled);

    let mut one_hot = Tensor::zeros(rows, cols);
    let mut indices = Vec::with_capacity(rows);
    let pv = tape.value(perturbed);
    for r in 0..rows {
        let row = pv.row_slice(r);
        let mut best = 0;
        for (k, &x) in row.iter().enumerate() {
            if x > row[best] {
                best = k;
            }
        }
        one_hot.set(r, best, 1.0);
        indices.push(best);
    }
    let hard = match relaxation {
        Relaxation::StraightThrough => tape.straight_through(one_hot, soft),
        Relaxation::Soft => soft,
    };
    let log_pi = tape.log_softmax(logits);
    let picked = tape.mul(hard, log_pi);
    let log_prob = tape.sum_cols(picked);
    Ok(GumbelSample {
        soft,
        hard,
        indices,
        log_prob,
    })
}
