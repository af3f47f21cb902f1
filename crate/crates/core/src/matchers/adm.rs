//! Arithmetic distribution matcher.
//!
//! The matcher reads information bits as the binary expansion of a point in
//! `[0, 1)` and emits, at each step, the symbol whose quantized CDF interval
//! contains that point. Each step may use a different conditional
//! distribution, supplied by a [`DistributionSource`] from the symbols
//! already emitted.
//!
//! Output length is fixed, input length is variable. The bits reported as
//! consumed are exactly the common binary prefix of the final interval, which
//! is what the inverse map ([`adm_decode`]) recovers from the symbols alone.
//! Bits after the consumed prefix have steered the symbol choice but are not
//! owned by this block, so the caller resumes reading from the consumed
//! position for the next block.
//!
//! Intervals live in 62-bit integer registers with the usual E1/E2 scaling
//! and E3 (straddle) underflow handling. Probabilities are quantized to
//! 32-bit frequencies summing to `2^32`, every nonzero probability getting at
//! least one unit.

use crate::Error;

const PRECISION: u32 = 62;
const FULL: u64 = 1 << PRECISION;
const HALF: u64 = FULL >> 1;
const QUARTER: u64 = FULL >> 2;
const FREQ_BITS: u32 = 32;
const FREQ_TOTAL: u64 = 1 << FREQ_BITS;

/// Probability vector over alphabet indices.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalDistribution {
    probabilities: Vec<f64>,
}

impl ConditionalDistribution {
    pub fn new(probabilities: Vec<f64>) -> Result<Self, Error> {
        if probabilities.is_empty() {
            return Err(Error::InvalidArgument("empty distribution".into()));
        }
        if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument(
                "probabilities must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self { probabilities })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probabilities: vec![1.0 / n as f64; n],
        }
    }

    /// Point mass on `index`.
    pub fn degenerate(n: usize, index: usize) -> Self {
        let mut probabilities = vec![0.0; n];
        probabilities[index] = 1.0;
        Self { probabilities }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Cumulative frequencies, `cdf[0] = 0`, `cdf[n] = 2^32`.
    pub fn quantized_cdf(&self) -> Vec<u64> {
        let mut freq: Vec<u64> = self
            .probabilities
            .iter()
            .map(|&p| {
                if p > 0.0 {
                    ((p * FREQ_TOTAL as f64).round() as u64).max(1)
                } else {
                    0
                }
            })
            .collect();
        let total: u64 = freq.iter().sum();
        let largest = (0..freq.len()).max_by_key(|&i| (freq[i], usize::MAX - i)).unwrap();
        if total > FREQ_TOTAL {
            freq[largest] -= total - FREQ_TOTAL;
        } else {
            freq[largest] += FREQ_TOTAL - total;
        }
        let mut cdf = Vec::with_capacity(freq.len() + 1);
        cdf.push(0);
        let mut acc = 0;
        for f in freq {
            acc += f;
            cdf.push(acc);
        }
        debug_assert_eq!(acc, FREQ_TOTAL);
        cdf
    }
}

/// Supplies the conditional distribution for the next symbol given the
/// symbols emitted so far. Must be deterministic in the prefix.
pub trait DistributionSource {
    fn distribution(&mut self, prefix: &[usize]) -> ConditionalDistribution;
}

impl<F> DistributionSource for F
where
    F: FnMut(&[usize]) -> ConditionalDistribution,
{
    fn distribution(&mut self, prefix: &[usize]) -> ConditionalDistribution {
        self(prefix)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdmOutput {
    pub symbols: Vec<usize>,
    pub consumed: usize,
}

#[derive(Clone, Copy)]
struct Interval {
    low: u64,
    high: u64,
}

impl Interval {
    fn bounds(&self, cdf: &[u64], symbol: usize) -> (u64, u64) {
        let range = (self.high - self.low) as u128;
        let lo = self.low + ((range * cdf[symbol] as u128) >> FREQ_BITS) as u64;
        let hi = self.low + ((range * cdf[symbol + 1] as u128) >> FREQ_BITS) as u64;
        (lo, hi)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Scaling {
    Lower,
    Upper,
    Straddle,
}

/// One renormalization step, applied to the interval; `None` once the
/// interval straddles the midpoint with more than a quarter of range.
fn next_scaling(iv: &Interval) -> Option<Scaling> {
    if iv.high <= HALF {
        Some(Scaling::Lower)
    } else if iv.low >= HALF {
        Some(Scaling::Upper)
    } else if iv.low >= QUARTER && iv.high <= HALF + QUARTER {
        Some(Scaling::Straddle)
    } else {
        None
    }
}

fn offset(s: Scaling) -> u64 {
    match s {
        Scaling::Lower => 0,
        Scaling::Upper => HALF,
        Scaling::Straddle => QUARTER,
    }
}

/// Tracks emitted bits the way an arithmetic encoder would.
#[derive(Default)]
struct Emitter {
    bits: Vec<bool>,
    pending: usize,
}

impl Emitter {
    fn apply(&mut self, s: Scaling) {
        match s {
            Scaling::Lower | Scaling::Upper => {
                let bit = s == Scaling::Upper;
                self.bits.push(bit);
                self.bits.extend(std::iter::repeat_n(!bit, self.pending));
                self.pending = 0;
            }
            Scaling::Straddle => self.pending += 1,
        }
    }
}

/// Maps information bits to `len` alphabet indices.
pub fn adm_encode<S: DistributionSource + ?Sized>(
    bits: &[bool],
    source: &mut S,
    len: usize,
) -> Result<AdmOutput, Error> {
    if len == 0 {
        return Err(Error::InvalidArgument("output length must be at least 1".into()));
    }
    let mut iv = Interval { low: 0, high: FULL };
    // Known range of the point read so far, in register coordinates.
    let mut v_low: u64 = 0;
    let mut v_width: u64 = FULL;
    let mut read = 0usize;
    let mut emitter = Emitter::default();
    let mut symbols = Vec::with_capacity(len);

    for _ in 0..len {
        let cdf = source.distribution(&symbols).quantized_cdf();
        let symbol = loop {
            if let Some(s) = locate(&iv, &cdf, v_low, v_width) {
                break s;
            }
            let bit = *bits.get(read).ok_or(Error::Underflow { read })?;
            read += 1;
            v_width >>= 1;
            if bit {
                v_low += v_width;
            }
        };
        let (lo, hi) = iv.bounds(&cdf, symbol);
        iv = Interval { low: lo, high: hi };
        while let Some(s) = next_scaling(&iv) {
            let o = offset(s);
            iv.low = 2 * (iv.low - o);
            iv.high = 2 * (iv.high - o);
            v_low = 2 * (v_low - o);
            v_width *= 2;
            emitter.apply(s);
        }
        symbols.push(symbol);
    }

    let consumed = emitter.bits.len();
    debug_assert!(consumed <= read);
    debug_assert_eq!(&emitter.bits[..], &bits[..consumed]);
    Ok(AdmOutput { symbols, consumed })
}

/// Symbol whose subinterval contains the whole known point range, if any.
fn locate(iv: &Interval, cdf: &[u64], v_low: u64, v_width: u64) -> Option<usize> {
    let n = cdf.len() - 1;
    // Largest symbol whose lower bound is <= v_low, among nonempty ones.
    let (mut a, mut b) = (0usize, n);
    while b - a > 1 {
        let mid = (a + b) / 2;
        if iv.bounds(cdf, mid).0 <= v_low {
            a = mid;
        } else {
            b = mid;
        }
    }
    let (lo, hi) = iv.bounds(cdf, a);
    (lo <= v_low && v_low + v_width <= hi && lo < hi).then_some(a)
}

/// Recovers the consumed bit prefix from the matched symbols.
pub fn adm_decode<S: DistributionSource + ?Sized>(
    symbols: &[usize],
    source: &mut S,
) -> Result<Vec<bool>, Error> {
    let mut iv = Interval { low: 0, high: FULL };
    let mut emitter = Emitter::default();
    for (step, &symbol) in symbols.iter().enumerate() {
        let cdf = source.distribution(&symbols[..step]).quantized_cdf();
        if symbol + 1 >= cdf.len() {
            return Err(Error::Corrupt { step, symbol });
        }
        let (lo, hi) = iv.bounds(&cdf, symbol);
        if lo >= hi {
            return Err(Error::Corrupt { step, symbol });
        }
        iv = Interval { low: lo, high: hi };
        while let Some(s) = next_scaling(&iv) {
            let o = offset(s);
            iv.low = 2 * (iv.low - o);
            iv.high = 2 * (iv.high - o);
            emitter.apply(s);
        }
    }
    Ok(emitter.bits)
}
