//! Enumerative sphere shaping over a bounded-energy trellis.
//!
//! Sequences of `N` amplitudes with `sum(level^2) <= E_max` are indexed in
//! lexicographic order (levels ascending). `T[p][e]` counts the admissible
//! tails of length `N - p` given accumulated energy `e`.
//!
//! Energies are stored on a compressed grid: with `e0` the smallest level
//! energy and `g` the gcd of the energy gaps, every reachable energy after
//! `p` symbols is `p * e0 + g * k`, so columns are indexed by `k`. For odd
//! PAM levels `g = 8`, which shrinks the table accordingly.

use std::io::{Read, Write};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::constellation::AmplitudeAlphabet;
use crate::Error;

const MAGIC: &[u8; 4] = b"ESST";
const VERSION: u32 = 1;
const FIXED_POINT_BITS: u32 = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct EssTrellis {
    levels: Vec<u64>,
    n: usize,
    e_max: u64,
    base: u64,
    step: u64,
    deltas: Vec<usize>,
    k_max: usize,
    counts: Vec<Vec<BigUint>>,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl EssTrellis {
    /// Builds the trellis; levels must be integers (the unnormalized PAM grid).
    pub fn build(alphabet: &AmplitudeAlphabet, n: usize, e_max: f64) -> Result<Self, Error> {
        let levels: Vec<u64> = alphabet
            .levels()
            .iter()
            .map(|&l| {
                if l.fract() == 0.0 {
                    Ok(l as u64)
                } else {
                    Err(Error::InvalidArgument(format!(
                        "sphere shaping needs integer levels, got {l}"
                    )))
                }
            })
            .collect::<Result<_, _>>()?;
        Self::from_levels(levels, n, e_max)
    }

    fn from_levels(levels: Vec<u64>, n: usize, e_max: f64) -> Result<Self, Error> {
        if n == 0 {
            return Err(Error::InvalidArgument("trellis length must be positive".into()));
        }
        let energies: Vec<u64> = levels.iter().map(|l| l * l).collect();
        let base = energies[0];
        let e_max_int = e_max.floor();
        if !(e_max_int >= (n as u64 * base) as f64) {
            return Err(Error::Infeasible(format!(
                "E_max {e_max} below minimum energy {}",
                n as u64 * base
            )));
        }
        let e_max = e_max_int as u64;
        let step = energies[1..]
            .iter()
            .fold(0, |g, &e| gcd(g, e - base))
            .max(1);
        let deltas: Vec<usize> = energies.iter().map(|&e| ((e - base) / step) as usize).collect();
        let k_max = ((e_max - n as u64 * base) / step) as usize;

        let mut counts = vec![vec![BigUint::zero(); k_max + 1]; n + 1];
        counts[n].iter_mut().for_each(|c| *c = BigUint::one());
        for p in (0..n).rev() {
            let (head, tail) = counts.split_at_mut(p + 1);
            let next = &tail[0];
            for (k, cell) in head[p].iter_mut().enumerate() {
                let mut acc = BigUint::zero();
                for &d in &deltas {
                    if k + d <= k_max {
                        acc += &next[k + d];
                    }
                }
                *cell = acc;
            }
        }

        Ok(Self {
            levels,
            n,
            e_max,
            base,
            step,
            deltas,
            k_max,
            counts,
        })
    }

    /// Smallest-length trellis whose rate reaches `target` bits/amplitude
    /// within `tolerance`, searching `E_max` on the reachable energy grid.
    pub fn for_rate(
        alphabet: &AmplitudeAlphabet,
        target: f64,
        tolerance: f64,
        max_len: usize,
    ) -> Result<Self, Error> {
        for n in 1..=max_len {
            if let Ok(t) = Self::at_least_rate(alphabet, n, target - tolerance) {
                if (t.rate() - target).abs() <= tolerance {
                    return Ok(t);
                }
            }
        }
        Err(Error::Infeasible(format!(
            "no trellis up to length {max_len} reaches rate {target}"
        )))
    }

    /// Smallest energy bound at length `n` whose rate is at least `target`.
    pub fn at_least_rate(alphabet: &AmplitudeAlphabet, n: usize, target: f64) -> Result<Self, Error> {
        let max_level = *alphabet.levels().last().unwrap();
        let lo = alphabet.levels()[0].powi(2) * n as f64;
        let hi = max_level * max_level * n as f64;
        let probe = Self::build(alphabet, n, hi)?;
        if probe.rate() < target {
            return Err(Error::Infeasible(format!(
                "length {n} tops out at rate {} below {target}",
                probe.rate()
            )));
        }
        // Rate is monotone in E_max: bisect on the grid index.
        let step = probe.step as f64;
        let (mut a, mut b) = (0usize, ((hi - lo) / step) as usize);
        while a < b {
            let mid = (a + b) / 2;
            let t = Self::build(alphabet, n, lo + mid as f64 * step)?;
            if t.rate() >= target {
                b = mid;
            } else {
                a = mid + 1;
            }
        }
        Self::build(alphabet, n, lo + a as f64 * step)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn levels(&self) -> &[u64] {
        &self.levels
    }

    pub fn e_max(&self) -> u64 {
        self.e_max
    }

    pub fn total(&self) -> &BigUint {
        &self.counts[0][0]
    }

    /// `T[position][energy]`, zero for energies off the grid or above `E_max`.
    pub fn count(&self, position: usize, energy: u64) -> BigUint {
        let floor = position as u64 * self.base;
        if position > self.n || energy < floor || !(energy - floor).is_multiple_of(self.step) {
            return BigUint::zero();
        }
        let k = ((energy - floor) / self.step) as usize;
        self.counts[position]
            .get(k)
            .cloned()
            .unwrap_or_else(BigUint::zero)
    }

    /// Information bits per block, `floor(log2 T[0][0])`.
    pub fn bits(&self) -> usize {
        self.total().bits() as usize - 1
    }

    /// Bits per amplitude.
    pub fn rate(&self) -> f64 {
        self.bits() as f64 / self.n as f64
    }

    /// Lexicographic enumeration: index `0..T[0][0]` to level indices.
    pub fn encode(&self, index: &BigUint) -> Result<Vec<usize>, Error> {
        if index >= self.total() {
            return Err(Error::IndexOutOfRange);
        }
        let mut rest = index.clone();
        let mut k = 0usize;
        let mut out = Vec::with_capacity(self.n);
        for p in 0..self.n {
            let mut chosen = None;
            for (j, &d) in self.deltas.iter().enumerate() {
                if k + d > self.k_max {
                    break;
                }
                let c = &self.counts[p + 1][k + d];
                if &rest < c {
                    chosen = Some((j, d));
                    break;
                }
                rest -= c;
            }
            let (j, d) = chosen.expect("index below total always resolves");
            out.push(j);
            k += d;
        }
        Ok(out)
    }

    pub fn decode(&self, sequence: &[usize]) -> Result<BigUint, Error> {
        if sequence.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                found: sequence.len(),
            });
        }
        if let Some(&bad) = sequence.iter().find(|&&j| j >= self.levels.len()) {
            return Err(Error::InvalidArgument(format!("level index {bad} out of range")));
        }
        let energy = self.energy(sequence);
        if energy > self.e_max {
            return Err(Error::EnergyBound {
                energy,
                bound: self.e_max,
            });
        }
        let mut index = BigUint::zero();
        let mut k = 0usize;
        for (p, &j) in sequence.iter().enumerate() {
            for &d in &self.deltas[..j] {
                if k + d <= self.k_max {
                    index += &self.counts[p + 1][k + d];
                }
            }
            k += self.deltas[j];
        }
        Ok(index)
    }

    pub fn energy(&self, sequence: &[usize]) -> u64 {
        sequence.iter().map(|&j| self.levels[j] * self.levels[j]).sum()
    }

    /// Encodes `bits()` information bits, most significant first.
    pub fn encode_bits(&self, bits: &[bool]) -> Result<Vec<usize>, Error> {
        if bits.len() != self.bits() {
            return Err(Error::LengthMismatch {
                expected: self.bits(),
                found: bits.len(),
            });
        }
        let mut index = BigUint::zero();
        for &b in bits {
            index <<= 1;
            if b {
                index += 1u32;
            }
        }
        self.encode(&index)
    }

    pub fn decode_bits(&self, sequence: &[usize]) -> Result<Vec<bool>, Error> {
        let index = self.decode(sequence)?;
        let width = self.bits();
        if index.bits() as usize > width {
            return Err(Error::IndexOutOfRange);
        }
        Ok((0..width).rev().map(|i| index.bit(i as u64)).collect())
    }

    /// Probability of each level over the uniform distribution on all
    /// admissible sequences, averaged over positions.
    pub fn marginal(&self) -> Vec<f64> {
        // Forward counts: number of prefixes reaching (p, k).
        let mut forward = vec![BigUint::zero(); self.k_max + 1];
        forward[0] = BigUint::one();
        let mut usage = vec![BigUint::zero(); self.levels.len()];
        for p in 0..self.n {
            let mut next = vec![BigUint::zero(); self.k_max + 1];
            for k in 0..=self.k_max {
                if forward[k].is_zero() {
                    continue;
                }
                for (j, &d) in self.deltas.iter().enumerate() {
                    if k + d <= self.k_max {
                        let paths = &forward[k] * &self.counts[p + 1][k + d];
                        usage[j] += &paths;
                        next[k + d] += &forward[k];
                    }
                }
            }
            forward = next;
        }
        let total: BigUint = usage.iter().sum();
        usage.iter().map(|u| big_ratio(u, &total)).collect()
    }

    /// Binary cache: magic, version, header {N, |alphabet|, E_max in 16.16
    /// fixed point}, the integer levels, then the `(N+1) x (k_max+1)` count
    /// table row-major, each entry a u32 byte length followed by big-endian
    /// bytes.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), Error> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&(self.levels.len() as u32).to_le_bytes())?;
        w.write_all(&(self.e_max << FIXED_POINT_BITS).to_le_bytes())?;
        for &l in &self.levels {
            w.write_all(&(l as u32).to_le_bytes())?;
        }
        w.write_all(&(self.k_max as u32 + 1).to_le_bytes())?;
        for row in &self.counts {
            for c in row {
                let bytes = c.to_bytes_be();
                w.write_all(&(bytes.len() as u32).to_le_bytes())?;
                w.write_all(&bytes)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, Error> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a trellis cache".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported trellis version {version}")));
        }
        let n = read_u32(&mut r)? as usize;
        let alphabet = read_u32(&mut r)? as usize;
        let mut e = [0u8; 8];
        r.read_exact(&mut e)?;
        let e_max = u64::from_le_bytes(e) >> FIXED_POINT_BITS;
        let levels = (0..alphabet)
            .map(|_| read_u32(&mut r).map(u64::from))
            .collect::<Result<Vec<_>, _>>()?;
        let cols = read_u32(&mut r)? as usize;
        let mut t = Self::from_levels(levels, n, e_max as f64)?;
        if cols != t.k_max + 1 {
            return Err(Error::Format("count table width disagrees with header".into()));
        }
        for row in t.counts.iter_mut() {
            for c in row.iter_mut() {
                let len = read_u32(&mut r)? as usize;
                let mut bytes = vec![0u8; len];
                r.read_exact(&mut bytes)?;
                let stored = BigUint::from_bytes_be(&bytes);
                if &stored != c {
                    return Err(Error::Format("trellis counts are inconsistent".into()));
                }
            }
        }
        // Counts are rebuilt from the header; the stored table must match.
        Ok(t)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, Error> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn big_ratio(num: &BigUint, den: &BigUint) -> f64 {
    let shift = den.bits().saturating_sub(60);
    let n = (num >> shift).to_f64().unwrap_or(0.0);
    let d = (den >> shift).to_f64().unwrap_or(1.0);
    n / d
}
