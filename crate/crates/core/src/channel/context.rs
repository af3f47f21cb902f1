use std::ops::Range;

use super::kernels::AmKernels;
use crate::Error;

/// A center block of length `L` with `k` neighbor blocks on each side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ContextLayout {
    pub block_len: usize,
    pub k: usize,
}

impl ContextLayout {
    pub fn new(block_len: usize, k: usize) -> Result<Self, Error> {
        if block_len == 0 {
            return Err(Error::InvalidArgument("block length must be at least 1".into()));
        }
        Ok(Self { block_len, k })
    }

    /// Smallest `k` with `k L >= M`.
    pub fn for_kernels(block_len: usize, kernels: &AmKernels) -> Result<Self, Error> {
        Self::new(block_len, required_k(block_len, kernels.memory()))
    }

    pub fn blocks(&self) -> usize {
        2 * self.k + 1
    }

    pub fn total_len(&self) -> usize {
        self.blocks() * self.block_len
    }

    pub fn center(&self) -> Range<usize> {
        self.k * self.block_len..(self.k + 1) * self.block_len
    }

    pub fn extract_center<'a, T>(&self, extended: &'a [T]) -> &'a [T] {
        &extended[self.center()]
    }
}

pub fn required_k(block_len: usize, memory: usize) -> usize {
    memory.div_ceil(block_len)
}

/// Concatenates side blocks drawn from `side(j)` for `j` in `-k..=k`,
/// `j != 0`, around `center`.
pub fn assemble_context<T: Clone>(
    center: &[T],
    k: usize,
    mut side: impl FnMut(isize) -> Vec<T>,
) -> Result<(Vec<T>, ContextLayout), Error> {
    let layout = ContextLayout::new(center.len(), k)?;
    let mut out = Vec::with_capacity(layout.total_len());
    for j in -(k as isize)..=k as isize {
        if j == 0 {
            out.extend_from_slice(center);
        } else {
            let block = side(j);
            if block.len() != center.len() {
                return Err(Error::LengthMismatch {
                    expected: center.len(),
                    found: block.len(),
                });
            }
            out.extend(block);
        }
    }
    Ok((out, layout))
}
