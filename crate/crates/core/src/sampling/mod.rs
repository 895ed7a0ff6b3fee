//! Base search directions for one generation.
//!
//! A [`Sampler`] produces standard-normal vectors either from a pseudo-random
//! generator or by pushing a low-discrepancy sequence through the inverse
//! normal CDF. Mirroring and orthogonalization operate on the resulting
//! [`SampleBatch`].

mod halton;
mod normal;
mod sobol;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub use halton::{primes, HaltonSequence, MAX_HALTON_DIM};
pub use normal::inverse_normal_cdf;
pub use sobol::{max_dimension as sobol_max_dimension, parse_direction_table, DirectionEntry, SobolSequence};

use crate::config::SamplerKind;

/// Largest number of redraws for a linearly dependent direction.
pub const MAX_REDRAWS: usize = 10;

/// Uniform values are clamped into `[EPS, 1 - EPS]` before the normal mapping
/// so that the unshifted origin of the Sobol sequence stays finite.
const UNIFORM_EPS: f64 = 1.0 / 8_589_934_592.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SamplingError {
    #[error("{sampler} sampler supports dimensions 1..={max}, got {dim}")]
    DimensionUnsupported {
        sampler: &'static str,
        dim: usize,
        max: usize,
    },
    #[error("direction table line {line}: {message}")]
    DirectionTable { line: usize, message: String },
    #[error("could not draw a linearly independent direction after {MAX_REDRAWS} redraws")]
    DegenerateDirections,
}

/// Directions drawn for one generation.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub directions: Vec<DVector<f64>>,
    /// When set, `directions[2k + 1] == -directions[2k]` for every complete pair.
    pub mirrored: bool,
}

impl SampleBatch {
    pub fn new(directions: Vec<DVector<f64>>) -> Self {
        Self {
            directions,
            mirrored: false,
        }
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

#[derive(Clone, Debug)]
enum Source {
    Gaussian,
    Sobol(SobolSequence),
    Halton(HaltonSequence),
}

/// Per-run generator of standard-normal base samples.
#[derive(Clone, Debug)]
pub struct Sampler {
    kind: SamplerKind,
    dim: usize,
    source: Source,
}

impl Sampler {
    /// Plain sampler: quasi-random sequences start unshifted.
    pub fn new(kind: SamplerKind, dim: usize) -> Result<Self, SamplingError> {
        let source = match kind {
            SamplerKind::Gaussian => Source::Gaussian,
            SamplerKind::Sobol => Source::Sobol(SobolSequence::new(dim)?),
            SamplerKind::Halton => Source::Halton(HaltonSequence::new(dim)?),
        };
        Ok(Self { kind, dim, source })
    }

    /// Sampler whose quasi-random sequence is scrambled by a digital shift
    /// drawn from `rng`. Gaussian samplers consume nothing from `rng` here.
    pub fn scrambled<R: Rng + ?Sized>(
        kind: SamplerKind,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self, SamplingError> {
        let source = match kind {
            SamplerKind::Gaussian => Source::Gaussian,
            SamplerKind::Sobol => {
                let shift = (0..dim).map(|_| rng.random::<u32>()).collect();
                Source::Sobol(SobolSequence::with_shift(dim, shift)?)
            }
            SamplerKind::Halton => Source::Halton(HaltonSequence::with_shift(dim, |b, _| {
                rng.random_range(0..b)
            })?),
        };
        Ok(Self { kind, dim, source })
    }

    pub fn kind(&self) -> SamplerKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Position in the quasi-random sequence; `None` for the Gaussian sampler.
    pub fn position(&self) -> Option<u64> {
        match &self.source {
            Source::Gaussian => None,
            Source::Sobol(s) => Some(s.position()),
            Source::Halton(h) => Some(h.position()),
        }
    }

    /// Next uniform point for quasi-random samplers, before the normal mapping.
    pub fn next_uniform(&mut self) -> Option<Vec<f64>> {
        match &mut self.source {
            Source::Gaussian => None,
            Source::Sobol(s) => Some(s.next_point()),
            Source::Halton(h) => Some(h.next_point()),
        }
    }

    pub fn draw_one<R: Rng + ?Sized>(&mut self, rng: &mut R) -> DVector<f64> {
        match self.next_uniform() {
            None => DVector::from_fn(self.dim, |_, _| rng.sample(StandardNormal)),
            Some(u) => DVector::from_iterator(
                self.dim,
                u.into_iter()
                    .map(|v| inverse_normal_cdf(v.clamp(UNIFORM_EPS, 1.0 - UNIFORM_EPS))),
            ),
        }
    }

    pub fn draw_batch<R: Rng + ?Sized>(&mut self, count: usize, rng: &mut R) -> SampleBatch {
        SampleBatch::new((0..count).map(|_| self.draw_one(rng)).collect())
    }
}

/// Appends the negation of every direction directly after it.
pub fn apply_mirroring(batch: SampleBatch) -> SampleBatch {
    let mut directions = Vec::with_capacity(batch.len() * 2);
    for d in batch.directions {
        let neg = -&d;
        directions.push(d);
        directions.push(neg);
    }
    SampleBatch {
        directions,
        mirrored: true,
    }
}

/// Gram-Schmidt in consecutive groups of at most `dim` vectors. Each output
/// vector keeps the norm its input had. A direction that is (numerically)
/// dependent on earlier ones in its group is replaced by `redraw()`.
///
/// Mirrored batches are orthogonalized on their fresh half and re-mirrored.
pub fn apply_orthogonalization(
    batch: SampleBatch,
    mut redraw: impl FnMut() -> DVector<f64>,
) -> Result<SampleBatch, SamplingError> {
    if batch.mirrored {
        let fresh: Vec<_> = batch.directions.into_iter().step_by(2).collect();
        let ortho = apply_orthogonalization(SampleBatch::new(fresh), redraw)?;
        return Ok(apply_mirroring(ortho));
    }
    let Some(dim) = batch.directions.first().map(|d| d.len()) else {
        return Ok(batch);
    };
    let mut out = Vec::with_capacity(batch.len());
    for group in batch.directions.chunks(dim) {
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(group.len());
        for v in group {
            let mut candidate = v.clone();
            let mut attempts = 0;
            let (unit, norm) = loop {
                let norm = candidate.norm();
                let mut residual = candidate.clone();
                for b in &basis {
                    let proj = residual.dot(b);
                    residual.axpy(-proj, b, 1.0);
                }
                let rnorm = residual.norm();
                if norm > 0.0 && rnorm > 1e-10 * norm {
                    break (residual / rnorm, norm);
                }
                if attempts == MAX_REDRAWS {
                    return Err(SamplingError::DegenerateDirections);
                }
                attempts += 1;
                candidate = redraw();
            };
            out.push(&unit * norm);
            basis.push(unit);
        }
    }
    Ok(SampleBatch::new(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = Sampler::new(SamplerKind::Gaussian, 5).unwrap();
        let b = s.draw_batch(10_000, &mut rng);
        for j in 0..5 {
            let xs: Vec<f64> = b.directions.iter().map(|d| d[j]).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
            assert!(mean.abs() < 0.05, "{mean}");
            assert!((var - 1.0).abs() < 0.1, "{var}");
        }
    }

    #[test]
    fn quasi_random_is_deterministic_by_position() {
        for kind in [SamplerKind::Sobol, SamplerKind::Halton] {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut a = Sampler::scrambled(kind, 4, &mut rng).unwrap();
            let b0 = a.clone();
            let mut b = b0;
            let mut dummy = ChaCha8Rng::seed_from_u64(99);
            assert_eq!(a.draw_batch(17, &mut dummy), b.draw_batch(17, &mut rng));
            assert_eq!(a.position(), b.position());
        }
    }

    #[test]
    fn quasi_random_normal_moments_are_reasonable() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in [SamplerKind::Sobol, SamplerKind::Halton] {
            let mut s = Sampler::scrambled(kind, 5, &mut rng).unwrap();
            let b = s.draw_batch(4096, &mut rng);
            for j in 0..5 {
                let mean = b.directions.iter().map(|d| d[j]).sum::<f64>() / 4096.0;
                let var = b.directions.iter().map(|d| d[j] * d[j]).sum::<f64>() / 4096.0;
                assert!(mean.abs() < 0.02 && (var - 1.0).abs() < 0.05, "{kind:?} {mean} {var}");
            }
        }
    }

    #[test]
    fn sobol_sampler_stratifies_before_mapping() {
        let mut s = Sampler::new(SamplerKind::Sobol, 5).unwrap();
        let mut counts = [[0u32; 8]; 5];
        for _ in 0..1024 {
            for (j, u) in s.next_uniform().unwrap().into_iter().enumerate() {
                counts[j][(u * 8.0) as usize] += 1;
            }
        }
        assert!(counts.iter().flatten().all(|&n| n == 128));
    }

    #[test]
    fn mirroring() {
        let v = dv(&[1.0, -2.0]);
        let w = dv(&[0.5, 3.0]);
        let m = apply_mirroring(SampleBatch::new(vec![v.clone()]));
        assert_eq!(m.directions, vec![v.clone(), -&v]);
        let m = apply_mirroring(SampleBatch::new(vec![v.clone(), w.clone()]));
        assert_eq!(m.directions, vec![v.clone(), -&v, w.clone(), -&w]);
        let sum = m.directions.iter().fold(DVector::zeros(2), |a, d| a + d);
        assert_eq!(sum, DVector::zeros(2));
        assert!(m.mirrored);
    }

    #[test]
    fn gram_schmidt_hand_example() {
        let b = SampleBatch::new(vec![dv(&[1.0, 0.0]), dv(&[1.0, 1.0])]);
        let out = apply_orthogonalization(b, || unreachable!()).unwrap();
        assert!((&out.directions[0] - dv(&[1.0, 0.0])).norm() < 1e-15);
        let second = &out.directions[1];
        assert!(second[0].abs() < 1e-15);
        assert!((second[1] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn already_orthogonal_is_fixed_point() {
        let b = SampleBatch::new(vec![dv(&[0.0, 3.0, 0.0]), dv(&[2.0, 0.0, 0.0])]);
        let out = apply_orthogonalization(b.clone(), || unreachable!()).unwrap();
        for (o, i) in out.directions.iter().zip(&b.directions) {
            assert!((o - i).norm() < 1e-15);
        }
    }

    #[test]
    fn groups_are_orthogonal_and_dependent_vectors_redrawn() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = Sampler::new(SamplerKind::Gaussian, 3).unwrap();
        let mut b = s.draw_batch(7, &mut rng);
        b.directions[1] = &b.directions[0] * 2.0;
        let norms: Vec<f64> = b.directions.iter().map(|d| d.norm()).collect();
        let mut redraws = 0;
        let out = apply_orthogonalization(b, || {
            redraws += 1;
            s.draw_one(&mut rng)
        })
        .unwrap();
        assert_eq!(redraws, 1);
        assert_eq!(out.len(), 7);
        for group in out.directions.chunks(3) {
            for i in 0..group.len() {
                for j in i + 1..group.len() {
                    let c = group[i].dot(&group[j]) / (group[i].norm() * group[j].norm());
                    assert!(c.abs() < 1e-9);
                }
            }
        }
        assert!((out.directions[0].norm() - norms[0]).abs() < 1e-12);
        assert!((out.directions[6].norm() - norms[6]).abs() < 1e-12);
    }

    #[test]
    fn persistent_degeneracy_is_an_error() {
        let b = SampleBatch::new(vec![dv(&[1.0, 0.0]), dv(&[2.0, 0.0])]);
        let r = apply_orthogonalization(b, || dv(&[1.0, 0.0]));
        assert_eq!(r.unwrap_err(), SamplingError::DegenerateDirections);
    }

    #[test]
    fn orthogonalized_mirrored_batch_keeps_pairing() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = Sampler::new(SamplerKind::Gaussian, 4).unwrap();
        let b = apply_mirroring(s.draw_batch(4, &mut rng));
        let out = apply_orthogonalization(b, || s.draw_one(&mut rng)).unwrap();
        assert!(out.mirrored);
        for pair in out.directions.chunks(2) {
            assert_eq!(pair[1], -&pair[0]);
        }
    }
}
