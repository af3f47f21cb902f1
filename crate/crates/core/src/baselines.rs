//! Reference signaling schemes and sequence selection.

use num_bigint::BigUint;
use num_complex::Complex64;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::channel::{am_distort, AmKernels, ContextLayout};
use crate::constellation::Constellation;
use crate::matchers::EssTrellis;
use crate::neural::Shaper;
use crate::Error;

/// An ordering of a base block: `symbols[i] = base[perm[i]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate<T> {
    pub perm: Vec<usize>,
    pub symbols: Vec<T>,
}

impl<T: Clone> Candidate<T> {
    /// Restores the base order.
    pub fn deinterleave(&self) -> Vec<T> {
        let mut out = self.symbols.clone();
        for (i, &p) in self.perm.iter().enumerate() {
            out[p] = self.symbols[i].clone();
        }
        out
    }
}

/// Candidate 0 is `base`; the rest are distinct seeded Fisher-Yates
/// permutations of it.
pub fn generate_candidates<T: Clone, R: Rng + ?Sized>(
    base: &[T],
    count: usize,
    rng: &mut R,
) -> Result<Vec<Candidate<T>>, Error> {
    if count == 0 {
        return Err(Error::InvalidArgument("need at least one candidate".into()));
    }
    let identity: Vec<usize> = (0..base.len()).collect();
    let mut perms = vec![identity.clone()];
    let mut attempts = 0;
    while perms.len() < count {
        let mut p = identity.clone();
        p.shuffle(rng);
        attempts += 1;
        if !perms.contains(&p) {
            perms.push(p);
        } else if attempts > 100 * count {
            return Err(Error::InvalidArgument(format!(
                "block of {} symbols admits too few distinct orderings for {count} candidates",
                base.len()
            )));
        }
    }
    Ok(perms
        .into_iter()
        .map(|perm| Candidate {
            symbols: perm.iter().map(|&i| base[i].clone()).collect(),
            perm,
        })
        .collect())
}

/// Noise-free AM distortion energy of the center block of `extended`.
pub fn am_metric(extended: &[Complex64], layout: &ContextLayout, kernels: &AmKernels, gamma: f64) -> Result<f64, Error> {
    if extended.len() != layout.total_len() {
        return Err(Error::LengthMismatch {
            expected: layout.total_len(),
            found: extended.len(),
        });
    }
    if layout.k * layout.block_len < kernels.memory() {
        return Err(Error::InvalidArgument(format!(
            "context of {} symbols per side does not cover memory {}",
            layout.k * layout.block_len,
            kernels.memory()
        )));
    }
    let y = am_distort(extended, kernels, gamma)?;
    Ok(layout
        .center()
        .map(|t| (y[t] - extended[t]).norm_sqr())
        .sum())
}

/// Index of the smallest score; ties go to the lowest index.
pub fn select_sequence(scores: &[f64]) -> Result<usize, Error> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("no candidates to select from".into()));
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Generator of unsigned amplitude blocks.
pub trait BlockSource {
    fn next_block(&mut self, rng: &mut dyn rand::RngCore) -> Vec<usize>;

    fn block_len(&self) -> usize;

    /// Information bits per block carried by the amplitudes, when the
    /// source is driven by a matcher.
    fn matcher_bits(&self) -> Option<f64> {
        None
    }
}

pub struct UniformSource {
    pub alphabet: usize,
    pub len: usize,
}

impl BlockSource for UniformSource {
    fn next_block(&mut self, rng: &mut dyn rand::RngCore) -> Vec<usize> {
        (0..self.len).map(|_| rng.gen_range(0..self.alphabet)).collect()
    }

    fn block_len(&self) -> usize {
        self.len
    }

    fn matcher_bits(&self) -> Option<f64> {
        Some(self.len as f64 * (self.alphabet as f64).log2())
    }
}

/// Independent draws from a fixed marginal.
pub struct IidSource {
    dist: WeightedIndex<f64>,
    len: usize,
}

impl IidSource {
    pub fn new(marginal: &[f64], len: usize) -> Result<Self, Error> {
        let dist = WeightedIndex::new(marginal).map_err(|e| Error::InvalidArgument(format!("marginal: {e}")))?;
        Ok(Self { dist, len })
    }
}

impl BlockSource for IidSource {
    fn next_block(&mut self, rng: &mut dyn rand::RngCore) -> Vec<usize> {
        (0..self.len).map(|_| self.dist.sample(rng)).collect()
    }

    fn block_len(&self) -> usize {
        self.len
    }
}

/// Ancestral sampling from a trained shaper.
pub struct ShaperSource {
    pub shaper: Shaper,
    pub len: usize,
}

impl BlockSource for ShaperSource {
    fn next_block(&mut self, rng: &mut dyn rand::RngCore) -> Vec<usize> {
        self.shaper.sample(self.len, rng).0
    }

    fn block_len(&self) -> usize {
        self.len
    }
}

/// Enumerative sphere shaping with two independent 1D streams carrying the
/// in-phase and quadrature amplitudes of each unsigned 2D symbol.
pub struct EssSource {
    pub trellis: EssTrellis,
    levels_per_dim: usize,
}

impl EssSource {
    pub fn new(trellis: EssTrellis, constellation: &Constellation) -> Result<Self, Error> {
        let levels_per_dim = constellation.alphabet().len();
        if trellis.levels().len() != levels_per_dim {
            return Err(Error::InvalidArgument("trellis alphabet does not match the constellation".into()));
        }
        Ok(Self { trellis, levels_per_dim })
    }

    /// Unsigned 2D indices from the I and Q level sequences.
    pub fn pair(&self, i: &[usize], q: &[usize]) -> Vec<usize> {
        i.iter().zip(q).map(|(&a, &b)| a * self.levels_per_dim + b).collect()
    }

    fn stream(&self, rng: &mut dyn rand::RngCore) -> Vec<usize> {
        let bits: Vec<bool> = (0..self.trellis.bits()).map(|_| rng.gen()).collect();
        self.trellis.encode_bits(&bits).expect("bits() input is always in range")
    }
}

impl BlockSource for EssSource {
    fn next_block(&mut self, rng: &mut dyn rand::RngCore) -> Vec<usize> {
        let i = self.stream(rng);
        let q = self.stream(rng);
        self.pair(&i, &q)
    }

    fn block_len(&self) -> usize {
        self.trellis.len()
    }

    fn matcher_bits(&self) -> Option<f64> {
        Some(2.0 * self.trellis.bits() as f64)
    }
}

/// Number of sequences an ESS trellis addresses with its bit interface.
pub fn ess_codebook_size(trellis: &EssTrellis) -> BigUint {
    BigUint::from(1u32) << trellis.bits()
}
