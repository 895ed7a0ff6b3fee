//! Halton sequence (radical inverse in the first primes) with an optional
//! per-coordinate digital shift.

use std::sync::OnceLock;

use super::SamplingError;

/// Number of prime bases available.
pub const MAX_HALTON_DIM: usize = 100;

pub fn primes() -> &'static [u64] {
    static CELL: OnceLock<Vec<u64>> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut out = Vec::with_capacity(MAX_HALTON_DIM);
        let mut n = 2u64;
        while out.len() < MAX_HALTON_DIM {
            if out.iter().take_while(|&&p| p * p <= n).all(|&p| !n.is_multiple_of(p)) {
                out.push(n);
            }
            n += 1;
        }
        out
    })
}

/// Digits needed so that `base^-digits` is below double precision.
fn digit_count(base: u64) -> usize {
    (53.0 / (base as f64).log2()).ceil() as usize
}

#[derive(Clone, Debug)]
pub struct HaltonSequence {
    bases: Vec<u64>,
    /// Per coordinate, one shift digit per position (least significant first).
    shifts: Vec<Vec<u64>>,
    index: u64,
}

impl HaltonSequence {
    pub fn new(dim: usize) -> Result<Self, SamplingError> {
        Self::build(dim, |_, _| 0)
    }

    /// Sequence with shift digits supplied by `digit(base, position)`.
    pub fn with_shift(
        dim: usize,
        mut digit: impl FnMut(u64, usize) -> u64,
    ) -> Result<Self, SamplingError> {
        Self::build(dim, &mut digit)
    }

    fn build(dim: usize, mut digit: impl FnMut(u64, usize) -> u64) -> Result<Self, SamplingError> {
        if dim == 0 || dim > MAX_HALTON_DIM {
            return Err(SamplingError::DimensionUnsupported {
                sampler: "Halton",
                dim,
                max: MAX_HALTON_DIM,
            });
        }
        let bases = primes()[..dim].to_vec();
        let shifts = bases
            .iter()
            .map(|&b| (0..digit_count(b)).map(|k| digit(b, k) % b).collect())
            .collect();
        Ok(Self {
            bases,
            shifts,
            index: 1,
        })
    }

    pub fn position(&self) -> u64 {
        self.index
    }

    /// Next point in [0, 1)^dim. The sequence starts at index 1.
    pub fn next_point(&mut self) -> Vec<f64> {
        let n = self.index;
        self.index += 1;
        self.bases
            .iter()
            .zip(&self.shifts)
            .map(|(&b, shift)| radical_inverse(n, b, shift))
            .collect()
    }
}

fn radical_inverse(mut n: u64, base: u64, shift: &[u64]) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut acc = 0.0;
    for &s in shift {
        let d = (n % base + s) % base;
        acc += d as f64 * scale;
        scale *= inv;
        n /= base;
    }
    // Unshifted tail digits beyond the table (only for huge indices).
    while n > 0 {
        acc += (n % base) as f64 * scale;
        scale *= inv;
        n /= base;
    }
    acc.min(1.0 - f64::EPSILON / 2.0)
}
