//! A noiseless benchmark suite modeled on the BBOB functions.
//!
//! Each `(fid, dim, instance)` triple determines a concrete function through
//! a seeded generator: a uniform shift of the optimum, one or two random
//! orthogonal rotations and an optimal value drawn from `[-100, 100]`. The
//! transforms follow the BBOB definitions but the instance generator is our
//! own, so values differ from COCO's.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::engine::Objective;

/// Function identifiers available in this suite.
pub const AVAILABLE_FIDS: [u32; 10] = [1, 2, 5, 6, 8, 10, 12, 15, 20, 21];

/// Default dimension used by all experiments.
pub const DEFAULT_DIM: usize = 5;

/// Maximum of `z sin(sqrt(z))` on `[0, 500]`, divided by 100.
const SCHWEFEL_OFFSET: f64 = 4.189_828_872_724_339;
const SCHWEFEL_OPT: f64 = 4.209_687_463_3;

#[derive(Debug, Error, PartialEq)]
pub enum BenchmarkError {
    #[error("function {fid} is not in the desk-scale suite (available: {available:?})")]
    UnknownFunction { fid: u32, available: Vec<u32> },
    #[error("dimension must be at least 2, got {0}")]
    Dimension(usize),
    #[error("instance index must be at least 1")]
    Instance,
    #[error("expected a {expected}-dimensional point, got {got}")]
    PointDimension { expected: usize, got: usize },
    #[error("point has non-finite coordinate {index}")]
    NonFinite { index: usize },
}

#[derive(Clone, Debug)]
enum Landscape {
    Sphere,
    SeparableEllipsoid,
    LinearSlope {
        slopes: Vec<f64>,
    },
    AttractiveSector {
        /// `Q Lambda^10 R`.
        map: DMatrix<f64>,
    },
    Rosenbrock {
        scale: f64,
    },
    RotatedEllipsoid {
        rotation: DMatrix<f64>,
    },
    BentCigar {
        rotation: DMatrix<f64>,
    },
    Rastrigin {
        rotation: DMatrix<f64>,
        /// `R Lambda^10 Q`.
        outer: DMatrix<f64>,
    },
    Schwefel {
        signs: Vec<f64>,
        conditioning: Vec<f64>,
    },
    Gallagher {
        rotation: DMatrix<f64>,
        peaks: Vec<Peak>,
    },
}

#[derive(Clone, Debug)]
struct Peak {
    center: DVector<f64>,
    weight: f64,
    /// Diagonal of `C_i` in the rotated frame.
    scales: Vec<f64>,
}

/// A concrete benchmark instance.
#[derive(Clone, Debug)]
pub struct BenchmarkFunction {
    pub fid: u32,
    pub dim: usize,
    pub instance: u32,
    pub f_opt: f64,
    pub x_opt: Vec<f64>,
    pub transform_seed: u64,
    landscape: Landscape,
}

/// Seed of the instance transforms for `(fid, instance)`.
pub fn transform_seed(fid: u32, instance: u32) -> u64 {
    1_000_000 * u64::from(fid) + u64::from(instance)
}

fn random_rotation(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Diagonal of `Lambda^alpha`: `alpha^(i / (2 (D - 1)))`.
fn conditioning(alpha: f64, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| alpha.powf(i as f64 / (2.0 * (dim - 1) as f64)))
        .collect()
}

fn t_osz(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let xh = x.abs().ln();
    let (c1, c2) = if x > 0.0 { (10.0, 7.9) } else { (5.5, 3.1) };
    x.signum() * (xh + 0.049 * ((c1 * xh).sin() + (c2 * xh).sin())).exp()
}

fn t_asy(v: &mut DVector<f64>, beta: f64) {
    let n = v.len();
    for (i, x) in v.iter_mut().enumerate() {
        if *x > 0.0 {
            *x = x.powf(1.0 + beta * i as f64 / (n - 1) as f64 * x.sqrt());
        }
    }
}

fn boundary_penalty(x: &[f64]) -> f64 {
    x.iter().map(|&v| (v.abs() - 5.0).max(0.0).powi(2)).sum()
}

fn ellipsoid_weights(dim: usize) -> impl Iterator<Item = f64> {
    (0..dim).map(move |i| 10f64.powf(6.0 * i as f64 / (dim - 1) as f64))
}

impl BenchmarkFunction {
    pub fn new(fid: u32, dim: usize, instance: u32) -> Result<Self, BenchmarkError> {
        if !AVAILABLE_FIDS.contains(&fid) {
            return Err(BenchmarkError::UnknownFunction {
                fid,
                available: AVAILABLE_FIDS.to_vec(),
            });
        }
        if dim < 2 {
            return Err(BenchmarkError::Dimension(dim));
        }
        if instance < 1 {
            return Err(BenchmarkError::Instance);
        }
        let seed = transform_seed(fid, instance);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f_opt = rng.random_range(-100.0..=100.0);
        let mut x_opt: Vec<f64> = (0..dim).map(|_| rng.random_range(-4.0..=4.0)).collect();
        let landscape = match fid {
            1 => Landscape::Sphere,
            2 => Landscape::SeparableEllipsoid,
            5 => {
                for v in x_opt.iter_mut() {
                    *v = if *v >= 0.0 { 5.0 } else { -5.0 };
                }
                let slopes = x_opt
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v.signum() * 10f64.powf(i as f64 / (dim - 1) as f64))
                    .collect();
                Landscape::LinearSlope { slopes }
            }
            6 => {
                let r = random_rotation(&mut rng, dim);
                let q = random_rotation(&mut rng, dim);
                let lambda = DMatrix::from_diagonal(&DVector::from_vec(conditioning(10.0, dim)));
                Landscape::AttractiveSector { map: q * lambda * r }
            }
            8 => {
                for v in x_opt.iter_mut() {
                    *v *= 0.75;
                }
                Landscape::Rosenbrock {
                    scale: ((dim as f64).sqrt() / 8.0).max(1.0),
                }
            }
            10 => Landscape::RotatedEllipsoid {
                rotation: random_rotation(&mut rng, dim),
            },
            12 => Landscape::BentCigar {
                rotation: random_rotation(&mut rng, dim),
            },
            15 => {
                let r = random_rotation(&mut rng, dim);
                let q = random_rotation(&mut rng, dim);
                let lambda = DMatrix::from_diagonal(&DVector::from_vec(conditioning(10.0, dim)));
                Landscape::Rastrigin {
                    outer: &r * lambda * q,
                    rotation: r,
                }
            }
            20 => {
                let signs: Vec<f64> = (0..dim)
                    .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
                    .collect();
                x_opt = signs.iter().map(|s| s * SCHWEFEL_OPT / 2.0).collect();
                Landscape::Schwefel {
                    signs,
                    conditioning: conditioning(10.0, dim),
                }
            }
            21 => {
                let rotation = random_rotation(&mut rng, dim);
                let mut exponents: Vec<usize> = (0..99).collect();
                exponents.shuffle(&mut rng);
                let mut peaks = Vec::with_capacity(101);
                for i in 0..101 {
                    let (alpha, weight, center) = if i == 0 {
                        (1000.0, 10.0, DVector::from_column_slice(&x_opt))
                    } else {
                        let alpha = 1000f64.powf(2.0 * exponents[(i - 1) % 99] as f64 / 99.0);
                        let weight = 1.1 + 8.0 * (i - 1) as f64 / 99.0;
                        let center = DVector::from_fn(dim, |_, _| rng.random_range(-5.0..=5.0));
                        (alpha, weight, center)
                    };
                    let mut scales: Vec<f64> = conditioning(alpha, dim)
                        .into_iter()
                        .map(|c| c * c / alpha.powf(0.25))
                        .collect();
                    scales.shuffle(&mut rng);
                    peaks.push(Peak {
                        center,
                        weight,
                        scales,
                    });
                }
                Landscape::Gallagher { rotation, peaks }
            }
            _ => unreachable!("fid checked above"),
        };
        Ok(Self {
            fid,
            dim,
            instance,
            f_opt,
            x_opt,
            transform_seed: seed,
            landscape,
        })
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64, BenchmarkError> {
        if x.len() != self.dim {
            return Err(BenchmarkError::PointDimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(BenchmarkError::NonFinite { index });
        }
        Ok(self.raw(x) + self.f_opt)
    }

    /// Value minus the optimum, without input validation.
    fn raw(&self, x: &[f64]) -> f64 {
        let dim = self.dim;
        let shifted = DVector::from_iterator(dim, x.iter().zip(&self.x_opt).map(|(a, b)| a - b));
        match &self.landscape {
            Landscape::Sphere => shifted.norm_squared(),
            Landscape::SeparableEllipsoid => ellipsoid_weights(dim)
                .zip(shifted.iter())
                .map(|(w, &z)| w * t_osz(z).powi(2))
                .sum(),
            Landscape::LinearSlope { slopes } => slopes
                .iter()
                .zip(x.iter().zip(&self.x_opt))
                .map(|(&s, (&xi, &oi))| {
                    let z = if oi * xi < 25.0 { xi } else { oi };
                    5.0 * s.abs() - s * z
                })
                .sum(),
            Landscape::AttractiveSector { map } => {
                let z = map * shifted;
                let sum: f64 = z
                    .iter()
                    .zip(&self.x_opt)
                    .map(|(&zi, &oi)| {
                        let s = if zi * oi > 0.0 { 100.0 } else { 1.0 };
                        (s * zi).powi(2)
                    })
                    .sum();
                t_osz(sum).powf(0.9)
            }
            Landscape::Rosenbrock { scale } => {
                let z: Vec<f64> = shifted.iter().map(|v| scale * v + 1.0).collect();
                z.windows(2)
                    .map(|w| 100.0 * (w[0] * w[0] - w[1]).powi(2) + (w[0] - 1.0).powi(2))
                    .sum()
            }
            Landscape::RotatedEllipsoid { rotation } => {
                let z = rotation * shifted;
                ellipsoid_weights(dim)
                    .zip(z.iter())
                    .map(|(w, &v)| w * t_osz(v).powi(2))
                    .sum()
            }
            Landscape::BentCigar { rotation } => {
                let mut z = rotation * shifted;
                t_asy(&mut z, 0.5);
                let z = rotation * z;
                z[0] * z[0] + 1e6 * z.iter().skip(1).map(|v| v * v).sum::<f64>()
            }
            Landscape::Rastrigin { rotation, outer } => {
                let mut z = (rotation * shifted).map(t_osz);
                t_asy(&mut z, 0.2);
                let z = outer * z;
                10.0 * (dim as f64 - z.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>())
                    + z.norm_squared()
            }
            Landscape::Schwefel {
                signs,
                conditioning,
            } => {
                let xhat: Vec<f64> = x.iter().zip(signs).map(|(v, s)| 2.0 * s * v).collect();
                let twice_opt: Vec<f64> = self.x_opt.iter().map(|v| 2.0 * v.abs()).collect();
                let mut zhat = xhat.clone();
                for i in 1..dim {
                    zhat[i] = xhat[i] + 0.25 * (xhat[i - 1] - twice_opt[i - 1]);
                }
                let z: Vec<f64> = (0..dim)
                    .map(|i| 100.0 * (conditioning[i] * (zhat[i] - twice_opt[i]) + twice_opt[i]))
                    .collect();
                let s: f64 = z.iter().map(|v| v * v.abs().sqrt().sin()).sum();
                let scaled: Vec<f64> = z.iter().map(|v| v / 100.0).collect();
                -s / (100.0 * dim as f64) + SCHWEFEL_OFFSET + 100.0 * boundary_penalty(&scaled)
            }
            Landscape::Gallagher { rotation, peaks } => {
                let best = peaks
                    .iter()
                    .map(|p| {
                        let d = rotation * (DVector::from_column_slice(x) - &p.center);
                        let q: f64 = d.iter().zip(&p.scales).map(|(v, c)| c * v * v).sum();
                        p.weight * (-q / (2.0 * dim as f64)).exp()
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                t_osz(10.0 - best).powi(2) + boundary_penalty(x)
            }
        }
    }

    /// One manifest line: `fid dim instance transform_seed f_opt`.
    pub fn manifest_line(&self) -> String {
        format!(
            "{} {} {} {} {:?}",
            self.fid, self.dim, self.instance, self.transform_seed, self.f_opt
        )
    }

    #[cfg(test)]
    fn rotation(&self) -> Option<&DMatrix<f64>> {
        match &self.landscape {
            Landscape::RotatedEllipsoid { rotation } => Some(rotation),
            _ => None,
        }
    }
}

impl Objective for BenchmarkFunction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn f_opt(&self) -> f64 {
        self.f_opt
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        if x.iter().any(|v| !v.is_finite()) {
            return f64::NAN;
        }
        self.raw(x) + self.f_opt
    }
}

/// Text manifest of a suite, one function per line.
pub fn suite_manifest(functions: &[BenchmarkFunction]) -> String {
    let mut out = String::from("# fid dim instance transform_seed f_opt\n");
    for f in functions {
        let _ = writeln!(out, "{}", f.manifest_line());
    }
    out
}
