//! First-order perturbation kernels for a single dispersion-unmanaged span.
//!
//! With Gaussian pulses of width `T0` the time integral of the four-pulse
//! collision has a closed form, leaving a one-dimensional integral over the
//! span that is evaluated by Simpson's rule:
//!
//! ```text
//! S(m,n) = T/(T0 sqrt(pi)) * int_0^L e^{-a z} T0^2/(sqrt(2)|W|)
//!          * exp(-(m-n)^2 T^2/(4W) - (m+n)^2 T^2/(4W*)) dz,   W = T0^2 - j b2 z
//! ```
//!
//! The prefactor makes `|x|^2` read as the average launch power carried by a
//! symbol. Terms with `m = 0` or `n = 0` reduce to `x_t |x_{t+n}|^2` and are
//! folded into the phase coefficients `c_0 = S(0,0)`, `c_n = 2 S(0,n)`. They
//! are zeroed in the stored `S`.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::link::LinkParams;
use crate::Error;

const MAGIC: &[u8; 4] = b"AMKN";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    /// Gaussian pulse width `T0` in symbol periods.
    pub pulse_ratio: f64,
    /// Relative convergence target for the span integral.
    pub tolerance: f64,
    pub max_intervals: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            pulse_ratio: 0.9,
            tolerance: 1e-6,
            max_intervals: 1 << 18,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AmKernels {
    memory: usize,
    c: Vec<Complex64>,
    s: Vec<Complex64>,
}

/// One additive triple-product term `S(m,n) x_{t+m} x_{t+n} x*_{t+m+n}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Term {
    pub m: isize,
    pub n: isize,
    pub s: Complex64,
}

impl AmKernels {
    pub fn new(memory: usize, c: Vec<Complex64>, s: Vec<Complex64>) -> Result<Self, Error> {
        let w = 2 * memory + 1;
        if memory == 0 {
            return Err(Error::InvalidArgument("kernel memory must be at least 1".into()));
        }
        if c.len() != w {
            return Err(Error::LengthMismatch { expected: w, found: c.len() });
        }
        if s.len() != w * w {
            return Err(Error::LengthMismatch { expected: w * w, found: s.len() });
        }
        if c.iter().chain(&s).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("kernel coefficients".into()));
        }
        Ok(Self { memory, c, s })
    }

    /// Kernels with only a phase coefficient at the center tap.
    pub fn spm_only(memory: usize, c0: f64) -> Self {
        let w = 2 * memory + 1;
        let mut c = vec![Complex64::new(0.0, 0.0); w];
        c[memory] = Complex64::new(c0, 0.0);
        Self::new(memory, c, vec![Complex64::new(0.0, 0.0); w * w]).expect("consistent sizes")
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn width(&self) -> usize {
        2 * self.memory + 1
    }

    pub fn c(&self, n: isize) -> Complex64 {
        self.c[(n + self.memory as isize) as usize]
    }

    pub fn s(&self, m: isize, n: isize) -> Complex64 {
        let off = self.memory as isize;
        self.s[((m + off) as usize) * self.width() + (n + off) as usize]
    }

    pub fn c_values(&self) -> &[Complex64] {
        &self.c
    }

    pub fn s_values(&self) -> &[Complex64] {
        &self.s
    }

    /// Nonzero entries of `S`.
    pub fn terms(&self) -> Vec<Term> {
        let m = self.memory as isize;
        let mut out = Vec::new();
        for a in -m..=m {
            for b in -m..=m {
                let s = self.s(a, b);
                if s != Complex64::new(0.0, 0.0) {
                    out.push(Term { m: a, n: b, s });
                }
            }
        }
        out
    }

    /// `|c_M| < 0.05 max |c_n|`.
    pub fn decays(&self) -> bool {
        let peak = self.c.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        self.c(self.memory as isize).norm() < 0.05 * peak
    }

    /// Symbols of context needed on each side of a block of length `l`.
    pub fn required_context(&self, block_len: usize) -> usize {
        self.memory.div_ceil(block_len)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), Error> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.memory as u32).to_le_bytes())?;
        w.write_all(&8u32.to_le_bytes())?;
        for z in self.c.iter().chain(&self.s) {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, Error> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a kernel file".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let memory = u32::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let width = u32::from_le_bytes(word);
        if width != 8 {
            return Err(Error::Format(format!("unsupported float width {width}")));
        }
        if memory == 0 || memory > 4096 {
            return Err(Error::Format(format!("implausible kernel memory {memory}")));
        }
        let w = 2 * memory + 1;
        let mut read_complex = |count: usize| -> Result<Vec<Complex64>, Error> {
            let mut out = Vec::with_capacity(count);
            let mut b = [0u8; 16];
            for _ in 0..count {
                r.read_exact(&mut b).map_err(|_| Error::Format("truncated kernel file".into()))?;
                let re = f64::from_le_bytes(b[..8].try_into().unwrap());
                let im = f64::from_le_bytes(b[8..].try_into().unwrap());
                out.push(Complex64::new(re, im));
            }
            Ok(out)
        };
        let c = read_complex(w)?;
        let s = read_complex(w * w)?;
        Self::new(memory, c, s)
    }

    /// Writes the binary file and a `.json` sidecar describing its origin.
    pub fn save(&self, path: &Path, meta: &serde_json::Value) -> Result<(), Error> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        std::fs::write(crate::neural::checkpoint::sidecar_path(path), serde_json::to_string_pretty(meta)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        Self::read_from(&std::fs::read(path)?[..])
    }
}

/// Full kernel table `S(m,n)` for `|m|,|n| <= memory` before absorption.
fn collision_table(link: &LinkParams, memory: usize, cfg: &KernelConfig) -> Result<Vec<Complex64>, Error> {
    link.validate()?;
    if !(cfg.pulse_ratio > 0.0) {
        return Err(Error::InvalidArgument("pulse_ratio must be positive".into()));
    }
    let t = link.symbol_period();
    let t0 = cfg.pulse_ratio * t;
    let beta2 = link.beta2();
    let alpha = link.alpha();
    let len = link.span_km;
    let w = 2 * memory + 1;
    let span = 2 * memory;
    let norm = t / (t0 * std::f64::consts::PI.sqrt());

    // Integrand for all (m, n) at one position along the span.
    let integrand = |z: f64, out: &mut [Complex64], ea: &mut [Complex64], eb: &mut [Complex64]| {
        let wz = Complex64::new(t0 * t0, -beta2 * z);
        let pre = (-alpha * z).exp() * t0 * t0 / (std::f64::consts::SQRT_2 * wz.norm()) * norm;
        let a = t * t / (4.0 * wz);
        let b = t * t / (4.0 * wz.conj());
        for d in 0..=span {
            let d2 = (d * d) as f64;
            ea[d] = (-a * d2).exp();
            eb[d] = (-b * d2).exp();
        }
        let m0 = memory as isize;
        for (i, row) in out.chunks_mut(w).enumerate() {
            let m = i as isize - m0;
            for (j, o) in row.iter_mut().enumerate() {
                let n = j as isize - m0;
                *o = pre * ea[(m - n).unsigned_abs()] * eb[(m + n).unsigned_abs()];
            }
        }
    };

    let simpson = |intervals: usize| -> Vec<Complex64> {
        let h = len / intervals as f64;
        let mut acc = vec![Complex64::new(0.0, 0.0); w * w];
        let mut buf = vec![Complex64::new(0.0, 0.0); w * w];
        let mut ea = vec![Complex64::new(0.0, 0.0); span + 1];
        let mut eb = ea.clone();
        for i in 0..=intervals {
            let weight = if i == 0 || i == intervals {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            integrand(i as f64 * h, &mut buf, &mut ea, &mut eb);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += weight * b;
            }
        }
        acc.iter().map(|a| a * (h / 3.0)).collect()
    };

    let mut intervals = 64;
    let mut prev = simpson(intervals);
    loop {
        intervals *= 2;
        if intervals > cfg.max_intervals {
            return Err(Error::Quadrature {
                tolerance: cfg.tolerance,
                intervals: intervals / 2,
            });
        }
        let next = simpson(intervals);
        let peak = next.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        let change = next.iter().zip(&prev).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
        if change <= cfg.tolerance * peak {
            return Ok(next);
        }
        prev = next;
    }
}

fn absorb(memory: usize, mut s: Vec<Complex64>) -> AmKernels {
    let w = 2 * memory + 1;
    let mid = memory;
    let mut c = vec![Complex64::new(0.0, 0.0); w];
    for n in 0..w {
        let s0n = s[mid * w + n];
        // S(0,n) is real: both exponents combine into 2 Re(W)/|W|^2.
        c[n] = Complex64::new(if n == mid { s0n.re } else { 2.0 * s0n.re }, 0.0);
    }
    for i in 0..w {
        s[mid * w + i] = Complex64::new(0.0, 0.0);
        s[i * w + mid] = Complex64::new(0.0, 0.0);
    }
    AmKernels { memory, c, s }
}

/// Kernels for memory `M` with the default Gaussian pulse.
pub fn generate_kernels(link: &LinkParams, memory: usize) -> Result<AmKernels, Error> {
    generate_kernels_with(link, memory, &KernelConfig::default())
}

pub fn generate_kernels_with(link: &LinkParams, memory: usize, cfg: &KernelConfig) -> Result<AmKernels, Error> {
    if memory == 0 {
        return Err(Error::InvalidArgument("kernel memory must be at least 1".into()));
    }
    let kernels = absorb(memory, collision_table(link, memory, cfg)?);
    if !kernels.decays() {
        log::warn!("phase coefficients have not decayed at memory {memory}");
    }
    Ok(kernels)
}

/// Smallest memory `M <= max_memory` with `|c_M| < 0.05 max |c_n|`.
pub fn choose_memory(link: &LinkParams, cfg: &KernelConfig, max_memory: usize) -> Result<usize, Error> {
    let probe = absorb(max_memory, collision_table(link, max_memory, cfg)?);
    let peak = probe.c_values().iter().fold(0.0f64, |a, z| a.max(z.norm()));
    (1..=max_memory)
        .find(|&m| probe.c(m as isize).norm() < 0.05 * peak)
        .ok_or_else(|| Error::InvalidArgument(format!("phase coefficients do not decay within {max_memory} symbols")))
}
