//! Additive-multiplicative perturbative channel.
//!
//! ```text
//! y_t = x_t exp(j g sum_n (|x_{t-n}|^2 - 1) c_n) + dx_t + n_t
//! dx_t = j g sum_{m,n} S(m,n) x_{t+m} x_{t+n} x*_{t+m+n}
//! ```
//!
//! Indices wrap around the sequence. With `x` normalized to unit average
//! power, `g` is `gamma * P` and the noise variance is relative to `P`.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::kernels::{AmKernels, Term};
use crate::neural::{CustomOp, Tape, Tensor, Var};
use crate::Error;

#[derive(Clone, Debug)]
struct Plan {
    memory: usize,
    c: Vec<f64>,
    terms: Vec<Term>,
    gamma: f64,
}

impl Plan {
    fn new(kernels: &AmKernels, gamma: f64) -> Self {
        Self {
            memory: kernels.memory(),
            c: kernels.c_values().iter().map(|z| z.re).collect(),
            terms: kernels.terms(),
            gamma,
        }
    }

    fn phases(&self, x: &[Complex64]) -> Vec<f64> {
        let len = x.len() as isize;
        let m = self.memory as isize;
        let p: Vec<f64> = x.iter().map(|v| v.norm_sqr() - 1.0).collect();
        (0..len)
            .map(|t| {
                let mut acc = 0.0;
                for n in -m..=m {
                    acc += p[(t - n).rem_euclid(len) as usize] * self.c[(n + m) as usize];
                }
                self.gamma * acc
            })
            .collect()
    }

    fn forward(&self, x: &[Complex64], out: &mut [Complex64]) {
        let len = x.len() as isize;
        let at = |i: isize| x[i.rem_euclid(len) as usize];
        let j_gamma = Complex64::new(0.0, self.gamma);
        let phases = self.phases(x);
        for (t, o) in out.iter_mut().enumerate() {
            let ti = t as isize;
            let mut dx = Complex64::new(0.0, 0.0);
            for term in &self.terms {
                dx += term.s * at(ti + term.m) * at(ti + term.n) * at(ti + term.m + term.n).conj();
            }
            *o = x[t] * Complex64::from_polar(1.0, phases[t]) + j_gamma * dx;
        }
    }

    /// Returns `dl/dRe x + j dl/dIm x` given the same for `y`.
    fn backward(&self, x: &[Complex64], gy: &[Complex64]) -> Vec<Complex64> {
        let len = x.len() as isize;
        let wrap = |i: isize| i.rem_euclid(len) as usize;
        let m = self.memory as isize;
        let j_gamma = Complex64::new(0.0, self.gamma);
        let phases = self.phases(x);
        let mut gx = vec![Complex64::new(0.0, 0.0); x.len()];
        let mut dphi = vec![0.0; x.len()];
        for t in 0..x.len() {
            let rot = Complex64::from_polar(1.0, phases[t]);
            gx[t] += rot.conj() * gy[t];
            let ph = x[t] * rot;
            dphi[t] = (gy[t].conj() * Complex64::i() * ph).re;
        }
        for s in 0..len {
            let mut acc = 0.0;
            for n in -m..=m {
                acc += self.c[(n + m) as usize] * dphi[wrap(s + n)];
            }
            gx[s as usize] += 2.0 * self.gamma * acc * x[s as usize];
        }
        for t in 0..len {
            let g = gy[t as usize];
            let gc = g.conj();
            for term in &self.terms {
                let (iu, iv, iw) = (wrap(t + term.m), wrap(t + term.n), wrap(t + term.m + term.n));
                let a = j_gamma * term.s;
                let (u, v, w) = (x[iu], x[iv], x[iw]);
                gx[iu] += (a * v * w.conj()).conj() * g;
                gx[iv] += (a * u * w.conj()).conj() * g;
                gx[iw] += a * u * v * gc;
            }
        }
        gx
    }
}

fn check_len(len: usize, kernels: &AmKernels) -> Result<(), Error> {
    if len <= 2 * kernels.memory() {
        return Err(Error::InvalidArgument(format!(
            "sequence of {len} symbols is too short for kernel memory {}",
            kernels.memory()
        )));
    }
    Ok(())
}

/// Noise-free channel output.
pub fn am_distort(x: &[Complex64], kernels: &AmKernels, gamma: f64) -> Result<Vec<Complex64>, Error> {
    check_len(x.len(), kernels)?;
    let mut y = vec![Complex64::new(0.0, 0.0); x.len()];
    Plan::new(kernels, gamma).forward(x, &mut y);
    Ok(y)
}

/// Channel output with circular Gaussian noise of variance `sigma2`.
pub fn am_propagate<R: Rng + ?Sized>(
    x: &[Complex64],
    kernels: &AmKernels,
    gamma: f64,
    sigma2: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>, Error> {
    if !(sigma2 >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise variance must be nonnegative, got {sigma2}")));
    }
    let mut y = am_distort(x, kernels, gamma)?;
    add_noise(&mut y, sigma2, rng);
    Ok(y)
}

pub fn add_noise<R: Rng + ?Sized>(y: &mut [Complex64], sigma2: f64, rng: &mut R) {
    let sd = (sigma2 / 2.0).sqrt();
    for v in y.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *v += Complex64::new(sd * re, sd * im);
    }
}

/// Tape operation over rows of `[re | im]`; each row is one wrapped sequence.
#[derive(Debug)]
pub struct AmOp {
    plan: Plan,
}

impl AmOp {
    fn split(re: &Tensor, im: &Tensor, r: usize) -> Vec<Complex64> {
        re.row_slice(r)
            .iter()
            .zip(im.row_slice(r))
            .map(|(&a, &b)| Complex64::new(a, b))
            .collect()
    }
}

impl CustomOp for AmOp {
    fn name(&self) -> &'static str {
        "am_channel"
    }

    fn vjp(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let (re, im) = (inputs[0], inputs[1]);
        let (rows, n) = re.shape();
        let mut g_re = Tensor::zeros(rows, n);
        let mut g_im = Tensor::zeros(rows, n);
        for r in 0..rows {
            let x = Self::split(re, im, r);
            let g = grad.row_slice(r);
            let gy: Vec<Complex64> = (0..n).map(|t| Complex64::new(g[t], g[n + t])).collect();
            let gx = self.plan.backward(&x, &gy);
            for (t, v) in gx.iter().enumerate() {
                g_re.set(r, t, v.re);
                g_im.set(r, t, v.im);
            }
        }
        vec![Some(g_re), Some(g_im)]
    }
}

/// Records the noise-free channel on the tape; returns `(re, im)` of the output.
pub fn am_distort_tape(
    tape: &mut Tape,
    x_re: Var,
    x_im: Var,
    kernels: &AmKernels,
    gamma: f64,
) -> Result<(Var, Var), Error> {
    let (rows, n) = tape.value(x_re).shape();
    if tape.value(x_im).shape() != (rows, n) {
        return Err(Error::Shape("real and imaginary parts differ in shape".into()));
    }
    check_len(n, kernels)?;
    let op = AmOp {
        plan: Plan::new(kernels, gamma),
    };
    let mut out = Tensor::zeros(rows, 2 * n);
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for r in 0..rows {
        let x = AmOp::split(tape.value(x_re), tape.value(x_im), r);
        op.plan.forward(&x, &mut y);
        for (t, v) in y.iter().enumerate() {
            out.set(r, t, v.re);
            out.set(r, n + t, v.im);
        }
    }
    let packed = tape.custom(Arc::new(op), &[x_re, x_im], out);
    let y_re = tape.columns(packed, 0..n);
    let y_im = tape.columns(packed, n..2 * n);
    Ok((y_re, y_im))
}
