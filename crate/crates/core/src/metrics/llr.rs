//! Mismatched Gaussian demapper. LLRs are natural-log; `l > 0` favors bit 0.

use std::sync::Arc;

use num_complex::Complex64;

use crate::constellation::Constellation;
use crate::neural::tape::log_sum_exp;
use crate::neural::{CustomOp, Tape, Tensor, Var};
use crate::Error;

pub const LLR_CLAMP: f64 = 50.0;

/// LLRs of a block with the transmitted labels they are scored against.
#[derive(Clone, Debug, PartialEq)]
pub struct LlrBlock {
    pub bits_per_symbol: usize,
    /// Symbol-major: entry `t * bits + k`.
    pub llrs: Vec<f64>,
    pub labels: Vec<bool>,
}

impl LlrBlock {
    pub fn symbols(&self) -> usize {
        self.llrs.len() / self.bits_per_symbol
    }

    /// Bit decisions from LLR signs.
    pub fn hard_decisions(&self) -> Vec<bool> {
        self.llrs.iter().map(|&l| l < 0.0).collect()
    }
}

/// Point labels as bit masks for a constellation.
#[derive(Clone, Debug)]
pub(crate) struct LabelTable {
    pub bits: usize,
    /// `bit[p * bits + k]`
    pub bit: Vec<bool>,
}

impl LabelTable {
    pub fn new(c: &Constellation) -> Self {
        let bits = c.bits_per_symbol() as usize;
        let bit = (0..c.order())
            .flat_map(|p| (0..bits).map(move |k| c.label_bit(p, k as u32)))
            .collect();
        Self { bits, bit }
    }

    pub fn labels_of(&self, points: &[usize]) -> Vec<bool> {
        points
            .iter()
            .flat_map(|&p| self.bit[p * self.bits..(p + 1) * self.bits].iter().copied())
            .collect()
    }
}

/// Metrics `a_p = ln prior_p - |y - s q_p|^2 / sigma2` and per-bit LLRs.
/// Returns whether any LLR was clamped.
#[allow(clippy::too_many_arguments)]
fn symbol_llrs(
    y: Complex64,
    points: &[Complex64],
    scale: f64,
    log_prior: &[f64],
    sigma2: f64,
    table: &LabelTable,
    a: &mut [f64],
    out: &mut [f64],
) -> bool {
    for ((ap, q), lp) in a.iter_mut().zip(points).zip(log_prior) {
        *ap = lp - (y - q * scale).norm_sqr() / sigma2;
    }
    let mut clamped = false;
    let mut zero = Vec::with_capacity(points.len());
    let mut one = Vec::with_capacity(points.len());
    for (k, o) in out.iter_mut().enumerate() {
        zero.clear();
        one.clear();
        for (p, &ap) in a.iter().enumerate() {
            if table.bit[p * table.bits + k] {
                one.push(ap);
            } else {
                zero.push(ap);
            }
        }
        let l = log_sum_exp(&zero) - log_sum_exp(&one);
        if l.is_nan() || l.abs() > LLR_CLAMP {
            clamped = true;
            *o = if l.is_nan() { 0.0 } else { l.clamp(-LLR_CLAMP, LLR_CLAMP) };
        } else {
            *o = l;
        }
    }
    clamped
}

/// LLRs of received symbols `y` for points `scale * constellation.points()`.
pub fn gaussian_llr(
    y: &[Complex64],
    transmitted: &[usize],
    constellation: &Constellation,
    scale: f64,
    sigma2: f64,
    prior: &[f64],
) -> Result<LlrBlock, Error> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidArgument(format!("noise variance must be positive, got {sigma2}")));
    }
    if prior.len() != constellation.order() {
        return Err(Error::LengthMismatch {
            expected: constellation.order(),
            found: prior.len(),
        });
    }
    let total: f64 = prior.iter().sum();
    if prior.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument("prior must be a probability vector".into()));
    }
    if y.len() != transmitted.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            found: transmitted.len(),
        });
    }
    let table = LabelTable::new(constellation);
    let log_prior: Vec<f64> = prior.iter().map(|p| p.ln()).collect();
    let mut a = vec![0.0; constellation.order()];
    let mut llrs = vec![0.0; y.len() * table.bits];
    let mut clamped = false;
    for (yt, out) in y.iter().zip(llrs.chunks_mut(table.bits)) {
        clamped |= symbol_llrs(*yt, constellation.points(), scale, &log_prior, sigma2, &table, &mut a, out);
    }
    if clamped {
        log::warn!("LLR magnitude exceeded {LLR_CLAMP}; clamped");
    }
    Ok(LlrBlock {
        bits_per_symbol: table.bits,
        llrs,
        labels: table.labels_of(transmitted),
    })
}

/// Tape version. Inputs: `y_re`, `y_im` (`R x N`), point scale (`1 x 1`),
/// log-prior over constellation points (`1 x P`) and noise variance
/// (`1 x 1`). Output is `R x (N bits)`, symbol-major within a row.
#[derive(Debug)]
struct LlrOp {
    points: Vec<Complex64>,
    table: LabelTable,
}

impl LlrOp {
    fn forward(&self, y_re: &Tensor, y_im: &Tensor, scale: f64, lp: &[f64], sigma2: f64) -> Tensor {
        let (rows, n) = y_re.shape();
        let b = self.table.bits;
        let mut out = Tensor::zeros(rows, n * b);
        let mut a = vec![0.0; self.points.len()];
        for r in 0..rows {
            for t in 0..n {
                let y = Complex64::new(y_re.get(r, t), y_im.get(r, t));
                let slot = &mut out.data_mut()[(r * n + t) * b..(r * n + t + 1) * b];
                symbol_llrs(y, &self.points, scale, lp, sigma2, &self.table, &mut a, slot);
            }
        }
        out
    }
}

impl CustomOp for LlrOp {
    fn name(&self) -> &'static str {
        "gaussian_llr"
    }

    fn vjp(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let (y_re, y_im) = (inputs[0], inputs[1]);
        let scale = inputs[2].item();
        let lp = inputs[3].data();
        let sigma2 = inputs[4].item();
        let (rows, n) = y_re.shape();
        let b = self.table.bits;
        let np = self.points.len();
        let mut g_re = Tensor::zeros(rows, n);
        let mut g_im = Tensor::zeros(rows, n);
        let mut g_scale = 0.0;
        let mut g_lp = vec![0.0; np];
        let mut g_sigma = 0.0;
        let mut a = vec![0.0; np];
        let mut abar = vec![0.0; np];
        for r in 0..rows {
            for t in 0..n {
                let y = Complex64::new(y_re.get(r, t), y_im.get(r, t));
                for ((ap, q), l) in a.iter_mut().zip(&self.points).zip(lp) {
                    *ap = l - (y - q * scale).norm_sqr() / sigma2;
                }
                abar.iter_mut().for_each(|v| *v = 0.0);
                for k in 0..b {
                    let col = (r * n + t) * b + k;
                    let g = grad.data()[col];
                    if g == 0.0 || output.data()[col].abs() >= LLR_CLAMP {
                        continue;
                    }
                    let mut max = [f64::NEG_INFINITY; 2];
                    for (p, &ap) in a.iter().enumerate() {
                        let s = self.table.bit[p * b + k] as usize;
                        max[s] = max[s].max(ap);
                    }
                    let mut z = [0.0; 2];
                    for (p, &ap) in a.iter().enumerate() {
                        let s = self.table.bit[p * b + k] as usize;
                        z[s] += (ap - max[s]).exp();
                    }
                    for (p, &ap) in a.iter().enumerate() {
                        let s = self.table.bit[p * b + k] as usize;
                        let w = (ap - max[s]).exp() / z[s];
                        abar[p] += if s == 0 { g * w } else { -g * w };
                    }
                }
                let mut gy = Complex64::new(0.0, 0.0);
                for (p, q) in self.points.iter().enumerate() {
                    let e = y - q * scale;
                    g_lp[p] += abar[p];
                    gy += -2.0 * abar[p] * e / sigma2;
                    g_scale += abar[p] * 2.0 * (e.conj() * q).re / sigma2;
                    g_sigma += abar[p] * e.norm_sqr() / (sigma2 * sigma2);
                }
                g_re.set(r, t, gy.re);
                g_im.set(r, t, gy.im);
            }
        }
        vec![
            Some(g_re),
            Some(g_im),
            Some(Tensor::scalar(g_scale)),
            Some(Tensor::row(g_lp)),
            Some(Tensor::scalar(g_sigma)),
        ]
    }
}

pub fn gaussian_llr_tape(
    tape: &mut Tape,
    y_re: Var,
    y_im: Var,
    constellation: &Constellation,
    scale: Var,
    log_prior: Var,
    sigma2: Var,
) -> Result<Var, Error> {
    let shape = tape.value(y_re).shape();
    if tape.value(y_im).shape() != shape {
        return Err(Error::Shape("real and imaginary parts differ in shape".into()));
    }
    if tape.value(scale).shape() != (1, 1) || tape.value(sigma2).shape() != (1, 1) {
        return Err(Error::Shape("scale and noise variance must be scalars".into()));
    }
    if tape.value(log_prior).shape() != (1, constellation.order()) {
        return Err(Error::Shape(format!(
            "log-prior is {:?}, expected (1, {})",
            tape.value(log_prior).shape(),
            constellation.order()
        )));
    }
    let s2 = tape.value(sigma2).item();
    if !(s2 > 0.0) {
        return Err(Error::InvalidArgument(format!("noise variance must be positive, got {s2}")));
    }
    let op = LlrOp {
        points: constellation.points().to_vec(),
        table: LabelTable::new(constellation),
    };
    let value = op.forward(
        tape.value(y_re),
        tape.value(y_im),
        tape.value(scale).item(),
        tape.value(log_prior).data(),
        s2,
    );
    Ok(tape.custom(Arc::new(op), &[y_re, y_im, scale, log_prior, sigma2], value))
}
