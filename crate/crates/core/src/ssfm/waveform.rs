use std::io::{Read, Write};

use num_complex::Complex64;

use crate::Error;

const MAGIC: &[u8; 4] = b"NPWF";

/// Sampled optical field in sqrt(W); one rail per polarization.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub rails: Vec<Vec<Complex64>>,
    pub sample_rate_ghz: f64,
    pub offset_ghz: f64,
}

impl Waveform {
    pub fn single(samples: Vec<Complex64>, sample_rate_ghz: f64) -> Self {
        Self {
            rails: vec![samples],
            sample_rate_ghz,
            offset_ghz: 0.0,
        }
    }

    pub fn dual(x: Vec<Complex64>, y: Vec<Complex64>, sample_rate_ghz: f64) -> Result<Self, Error> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        Ok(Self {
            rails: vec![x, y],
            sample_rate_ghz,
            offset_ghz: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.rails.first().map_or(0, |r| r.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn energy(&self) -> f64 {
        self.rails.iter().flatten().map(|v| v.norm_sqr()).sum()
    }

    pub fn mean_power(&self) -> f64 {
        self.energy() / self.len().max(1) as f64
    }

    /// Sample spacing in ps.
    pub fn dt(&self) -> f64 {
        1000.0 / self.sample_rate_ghz
    }

    /// Binary dump: magic, `u32` rails, `u64` samples, `f64` sample rate in
    /// GHz, then per sample the rails' `(re, im)` pairs, all little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), Error> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.rails.len() as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&self.sample_rate_ghz.to_le_bytes())?;
        for i in 0..self.len() {
            for rail in &self.rails {
                w.write_all(&rail[i].re.to_le_bytes())?;
                w.write_all(&rail[i].im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, Error> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a waveform dump".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let rails = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let fs = f64::from_le_bytes(b8);
        if !(1..=2).contains(&rails) || !(fs > 0.0) {
            return Err(Error::Format("bad waveform header".into()));
        }
        let mut out = vec![Vec::with_capacity(n); rails];
        let mut read = || -> Result<f64, Error> {
            r.read_exact(&mut b8).map_err(|_| Error::Format("truncated waveform".into()))?;
            Ok(f64::from_le_bytes(b8))
        };
        for _ in 0..n {
            for rail in out.iter_mut() {
                let re = read()?;
                let im = read()?;
                rail.push(Complex64::new(re, im));
            }
        }
        Ok(Self {
            rails: out,
            sample_rate_ghz: fs,
            offset_ghz: 0.0,
        })
    }
}
