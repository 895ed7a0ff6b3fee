use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::EsStaticParameters;
use super::{EngineError, Objective};
use crate::config::{ModuleConfiguration, RestartScheme};
use crate::sampling::{apply_mirroring, apply_orthogonalization, Sampler};
use crate::targets::HitLedger;

/// Half-width of the search box `[-5, 5]^D`.
pub const DOMAIN_BOUND: f64 = 5.0;
/// Initial step size, a fifth of the domain width.
pub const INITIAL_SIGMA: f64 = 2.0;

const SIGMA_MIN: f64 = 1e-300;
const SIGMA_MAX: f64 = 1e6;
/// Smallest eigenvalue allowed relative to the largest.
const EIGEN_FLOOR: f64 = 1e-14;
const STOP_SPREAD: f64 = 1e-12;
/// Largest eigenvalue allowed before scale is moved from `C` into `sigma`.
const COVARIANCE_SCALE_LIMIT: f64 = 1e8;

/// An evaluated point.
#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub x: DVector<f64>,
    pub fitness: f64,
}

/// Schedule of the threshold-convergence module, anchored where it was
/// activated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdState {
    pub start_evals: u64,
    pub span: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TpaState {
    /// Smoothed probe comparison in [-1, 1].
    pub signal: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Large,
    Small,
}

/// Restart bookkeeping for IPOP/BIPOP.
#[derive(Clone, Debug, PartialEq)]
pub struct RestartState {
    pub restarts: u32,
    /// Population multiplier of the most recent large-population run.
    pub large_multiplier: usize,
    pub regime: Regime,
    pub large_evals: u64,
    pub small_evals: u64,
    pub last_large_evals: u64,
    /// Evaluations at the start of the current local run.
    pub run_start_evals: u64,
    pub local_best: f64,
    pub stagnant_generations: u64,
}

impl Default for RestartState {
    fn default() -> Self {
        Self {
            restarts: 0,
            large_multiplier: 1,
            regime: Regime::Large,
            large_evals: 0,
            small_evals: 0,
            last_large_evals: 0,
            run_start_evals: 0,
            local_best: f64::INFINITY,
            stagnant_generations: 0,
        }
    }
}

/// The part of a run that survives a configuration switch.
#[derive(Clone, Debug)]
pub struct EsDynamicState {
    pub mean: DVector<f64>,
    pub sigma: f64,
    pub covariance: DMatrix<f64>,
    pub path_sigma: DVector<f64>,
    pub path_c: DVector<f64>,
    /// Offspring evaluated in the last generation.
    pub population: Vec<Individual>,
    /// Parents selected in the last generation.
    pub parents: Vec<Individual>,
    pub evals_used: u64,
    pub generation: u64,
    /// Generations since the last (re)start, used by the path bias correction.
    pub local_generation: u64,
    pub best_so_far: Option<Individual>,
    pub previous_mean: Option<DVector<f64>>,
    pub previous_sigma: f64,
    pub threshold_state: Option<ThresholdState>,
    pub tpa_state: TpaState,
    pub restart_state: RestartState,
    eigenvectors: DMatrix<f64>,
    /// Square roots of the eigenvalues of `covariance`.
    axis_lengths: DVector<f64>,
}

impl EsDynamicState {
    fn fresh(mean: DVector<f64>, sigma: f64) -> Self {
        let n = mean.len();
        Self {
            sigma,
            covariance: DMatrix::identity(n, n),
            path_sigma: DVector::zeros(n),
            path_c: DVector::zeros(n),
            population: Vec::new(),
            parents: Vec::new(),
            evals_used: 0,
            generation: 0,
            local_generation: 0,
            best_so_far: None,
            previous_mean: None,
            previous_sigma: sigma,
            threshold_state: None,
            tpa_state: TpaState::default(),
            restart_state: RestartState::default(),
            eigenvectors: DMatrix::identity(n, n),
            axis_lengths: DVector::from_element(n, 1.0),
            mean,
        }
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        self.axis_lengths.map(|a| a * a)
    }

    /// Best fitness among the current parents.
    pub fn parent_best(&self) -> Option<f64> {
        self.parents.iter().map(|p| p.fitness).reduce(f64::min)
    }
}

/// Per-generation report.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenerationSummary {
    /// Best fitness among the offspring evaluated in this generation.
    pub best_fitness: f64,
    pub evaluations: u64,
    /// The generation was cut short by the budget.
    pub truncated: bool,
    pub restarted: bool,
}

#[derive(Clone, Debug)]
struct Offspring {
    x: DVector<f64>,
    /// `(x - mean) / sigma`.
    y: DVector<f64>,
    fitness: f64,
    /// Index of the mirrored pair, for regular offspring of mirrored batches.
    pair: Option<usize>,
}

/// A single optimization run. Owns its generator state; distinct runs share
/// nothing but the objective.
pub struct EsRun<'a, F: Objective + ?Sized> {
    params: EsStaticParameters,
    state: EsDynamicState,
    objective: &'a F,
    budget: u64,
    ledger: HitLedger,
    rng: ChaCha8Rng,
    sampler: Sampler,
}

impl<'a, F: Objective + ?Sized> EsRun<'a, F> {
    pub fn new(
        config: ModuleConfiguration,
        objective: &'a F,
        budget: u64,
        seed: u64,
    ) -> Result<Self, EngineError> {
        let dim = objective.dim();
        if dim == 0 {
            return Err(EngineError::Dimension);
        }
        let params = EsStaticParameters::derive(config, dim);
        if budget < params.lambda as u64 {
            return Err(EngineError::BudgetTooSmall {
                budget,
                lambda: params.lambda,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mean = random_point(&mut rng, dim);
        let sampler = Sampler::scrambled(config.sampler, dim, &mut rng)?;
        let mut state = EsDynamicState::fresh(mean, INITIAL_SIGMA);
        if config.threshold_convergence {
            state.threshold_state = Some(ThresholdState {
                start_evals: 0,
                span: budget,
            });
        }
        Ok(Self {
            params,
            state,
            objective,
            budget,
            ledger: HitLedger::new(),
            rng,
            sampler,
        })
    }

    pub fn params(&self) -> &EsStaticParameters {
        &self.params
    }

    pub fn state(&self) -> &EsDynamicState {
        &self.state
    }

    pub fn ledger(&self) -> &HitLedger {
        &self.ledger
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn evals_used(&self) -> u64 {
        self.state.evals_used
    }

    /// Budget exhausted or the hardest target reached.
    pub fn is_finished(&self) -> bool {
        self.state.evals_used >= self.budget || self.ledger.is_complete()
    }

    /// Replaces the configuration mid-run. Static parameters are rebuilt; the
    /// search distribution, paths, population, counters and ledger are kept.
    /// Modules that become active start with fresh bookkeeping.
    pub fn switch_configuration(&mut self, new: ModuleConfiguration) -> Result<(), EngineError> {
        if !new.is_switchable() {
            return Err(EngineError::RestartInSwitch(new.encode()));
        }
        let old = self.params.config;
        let lambda = if old.is_switchable() {
            self.params.lambda
        } else {
            super::params::default_lambda(self.params.dim)
        };
        self.params = EsStaticParameters::with_lambda(new, self.params.dim, lambda);

        if new.threshold_convergence && !old.threshold_convergence {
            self.state.threshold_state = Some(ThresholdState {
                start_evals: self.state.evals_used,
                span: self.budget - self.state.evals_used,
            });
        } else if !new.threshold_convergence {
            self.state.threshold_state = None;
        }
        if new.tpa != old.tpa {
            self.state.tpa_state = TpaState::default();
        }
        if new.sampler != old.sampler {
            self.sampler = Sampler::scrambled(new.sampler, self.params.dim, &mut self.rng)?;
        }
        Ok(())
    }

    /// Minimum mutation length from threshold convergence, if active.
    fn threshold_length(&self) -> Option<f64> {
        let t = self.state.threshold_state?;
        let remaining = self.budget.saturating_sub(self.state.evals_used) as f64;
        let fraction = if t.span == 0 {
            0.0
        } else {
            (remaining / t.span as f64).min(1.0)
        };
        let diameter = 2.0 * DOMAIN_BOUND * (self.params.dim as f64).sqrt();
        Some(
            self.params.threshold.initial_fraction
                * diameter
                * fraction.powf(self.params.threshold.decay),
        )
    }

    /// Runs one generation.
    pub fn step(&mut self) -> Result<GenerationSummary, EngineError> {
        if self.state.evals_used >= self.budget {
            return Err(EngineError::BudgetExhausted);
        }
        let cfg = self.params.config;
        let lambda = self.params.lambda;
        let mu = self.params.mu;
        let sigma = self.state.sigma;
        let mean = self.state.mean.clone();

        // Two-point adaptation probes along the last mean shift.
        let mut probes = Vec::new();
        if cfg.tpa && lambda >= 4 {
            if let Some(prev) = &self.state.previous_mean {
                let shift = (&mean - prev) * (sigma / self.state.previous_sigma);
                if shift.norm() > 0.0 && shift.iter().all(|v| v.is_finite()) {
                    probes.push(&mean + &shift);
                    probes.push(&mean - &shift);
                }
            }
        }
        let regular = lambda - probes.len();

        let fresh = if cfg.mirrored {
            regular.div_ceil(2)
        } else {
            regular
        };
        let mut batch = self.sampler.draw_batch(fresh, &mut self.rng);
        if cfg.orthogonal {
            let (sampler, rng) = (&mut self.sampler, &mut self.rng);
            batch = apply_orthogonalization(batch, || sampler.draw_one(rng))?;
        }
        if cfg.mirrored {
            batch = apply_mirroring(batch);
            batch.directions.truncate(regular);
        }

        let transform = &self.state.eigenvectors * DMatrix::from_diagonal(&self.state.axis_lengths);
        let min_length = self.threshold_length();
        let mut offspring: Vec<Offspring> = Vec::with_capacity(lambda);
        for x in probes.iter() {
            offspring.push(Offspring {
                y: (x - &mean) / sigma,
                x: x.clone(),
                fitness: f64::NAN,
                pair: None,
            });
        }
        let n_probes = offspring.len();
        for (i, z) in batch.directions.iter().enumerate() {
            let mut y = &transform * z;
            if let Some(t) = min_length {
                let len = sigma * y.norm();
                if len > 0.0 && len < t {
                    y *= t / len;
                }
            }
            offspring.push(Offspring {
                x: &mean + &y * sigma,
                y,
                fitness: f64::NAN,
                pair: batch.mirrored.then_some(i / 2),
            });
        }

        // Evaluation in units: single points, or complete mirrored pairs.
        let best_before = self
            .state
            .best_so_far
            .as_ref()
            .map_or(f64::INFINITY, |b| b.fitness);
        let mut units: Vec<std::ops::Range<usize>> = (0..n_probes).map(|i| i..i + 1).collect();
        let unit = if batch.mirrored { 2 } else { 1 };
        let mut start = n_probes;
        while start < offspring.len() {
            let end = (start + unit).min(offspring.len());
            units.push(start..end);
            start = end;
        }
        let pairwise = cfg.pairwise && batch.mirrored;
        let mut evaluated = 0usize;
        let mut candidates = 0usize;
        let mut truncated = false;
        let evals_before = self.state.evals_used;
        for range in units {
            let mut improved = false;
            for i in range.clone() {
                if self.state.evals_used >= self.budget {
                    truncated = true;
                    break;
                }
                let f = self.evaluate(&offspring[i].x)?;
                offspring[i].fitness = f;
                evaluated = i + 1;
                improved |= f < best_before;
            }
            if truncated {
                break;
            }
            candidates += if pairwise && range.len() == 2 { 1 } else { range.len() };
            if cfg.sequential && improved && candidates >= mu {
                break;
            }
        }
        offspring.truncate(evaluated);
        let evaluations = self.state.evals_used - evals_before;
        let best_fitness = offspring
            .iter()
            .map(|o| o.fitness)
            .fold(f64::INFINITY, f64::min);
        self.state.generation += 1;
        self.state.population = offspring
            .iter()
            .map(|o| Individual {
                x: o.x.clone(),
                fitness: o.fitness,
            })
            .collect();

        if truncated || offspring.is_empty() {
            return Ok(GenerationSummary {
                best_fitness,
                evaluations,
                truncated: true,
                restarted: false,
            });
        }

        self.update(&mean, sigma, &offspring, n_probes, pairwise);
        let restarted = self.check_restart(best_fitness);
        Ok(GenerationSummary {
            best_fitness,
            evaluations,
            truncated: false,
            restarted,
        })
    }

    fn evaluate(&mut self, x: &DVector<f64>) -> Result<f64, EngineError> {
        let f = self.objective.evaluate(x.as_slice());
        if !f.is_finite() {
            return Err(EngineError::NonFiniteFitness {
                evaluation: self.state.evals_used + 1,
                point: x.iter().copied().collect(),
                value: f,
            });
        }
        self.state.evals_used += 1;
        let better = self
            .state
            .best_so_far
            .as_ref()
            .is_none_or(|b| f < b.fitness);
        if better {
            self.state.best_so_far = Some(Individual { x: x.clone(), fitness: f });
        }
        let best = self.state.best_so_far.as_ref().map_or(f, |b| b.fitness);
        self.ledger
            .observe(best - self.objective.f_opt(), self.state.evals_used);
        Ok(f)
    }

    /// Selection, recombination and adaptation of the distribution.
    fn update(
        &mut self,
        mean: &DVector<f64>,
        sigma: f64,
        offspring: &[Offspring],
        n_probes: usize,
        pairwise: bool,
    ) {
        let p = &self.params;
        let n = p.dim;
        let nf = n as f64;

        // Selection pool: (fitness, x, y).
        let mut pool: Vec<(f64, &DVector<f64>, DVector<f64>)> = Vec::new();
        let mut k = 0;
        while k < offspring.len() {
            let o = &offspring[k];
            if pairwise && k >= n_probes {
                if let Some(partner) = offspring.get(k + 1).filter(|q| q.pair == o.pair) {
                    let better = if partner.fitness < o.fitness { partner } else { o };
                    pool.push((better.fitness, &better.x, better.y.clone()));
                    k += 2;
                    continue;
                }
            }
            pool.push((o.fitness, &o.x, o.y.clone()));
            k += 1;
        }
        if p.config.elitism {
            for parent in &self.state.parents {
                pool.push((parent.fitness, &parent.x, (&parent.x - mean) / sigma));
            }
        }
        pool.sort_by(|a, b| a.0.total_cmp(&b.0));
        let selected = p.mu.min(pool.len());
        let weight_sum: f64 = p.weights[..selected].iter().sum();
        let weights: Vec<f64> = p.weights[..selected].iter().map(|w| w / weight_sum).collect();

        let mut new_mean = DVector::zeros(n);
        for (w, (_, x, _)) in weights.iter().zip(&pool) {
            new_mean.axpy(*w, x, 1.0);
        }
        let y_w = (&new_mean - mean) / sigma;

        let inv_sqrt = &self.state.eigenvectors
            * DMatrix::from_diagonal(&self.state.axis_lengths.map(|a| 1.0 / a))
            * self.state.eigenvectors.transpose();
        let cs = p.c_sigma;
        self.state.path_sigma = &self.state.path_sigma * (1.0 - cs)
            + (&inv_sqrt * &y_w) * (cs * (2.0 - cs) * p.mu_eff).sqrt();
        self.state.local_generation += 1;
        let correction =
            (1.0 - (1.0 - cs).powi(2 * self.state.local_generation.min(10_000) as i32)).sqrt();
        let hsig = self.state.path_sigma.norm() / correction / p.chi_n < 1.4 + 2.0 / (nf + 1.0);
        let cc = p.c_c;
        self.state.path_c = &self.state.path_c * (1.0 - cc)
            + &y_w * (if hsig { (cc * (2.0 - cc) * p.mu_eff).sqrt() } else { 0.0 });

        let mut decay = 1.0 - p.c_1 - p.c_mu;
        if !hsig {
            decay += p.c_1 * cc * (2.0 - cc);
        }
        let mut c = &self.state.covariance * 1.0;
        let mut delta = &self.state.path_c * self.state.path_c.transpose() * p.c_1;
        for (w, (_, _, y)) in weights.iter().zip(&pool) {
            delta += y * y.transpose() * (p.c_mu * w);
        }
        if !p.negative_weights.is_empty() {
            let mut worst: Vec<&Offspring> = offspring.iter().collect();
            worst.sort_by(|a, b| b.fitness.total_cmp(&a.fitness));
            let count = p.negative_weights.len().min(offspring.len().saturating_sub(selected));
            let used: f64 = p.negative_weights[..count].iter().sum();
            decay += p.c_mu * used;
            for (w, o) in p.negative_weights[..count].iter().zip(worst) {
                let norm2 = (&inv_sqrt * &o.y).norm_squared();
                if norm2 > 0.0 {
                    delta -= &o.y * o.y.transpose() * (p.c_mu * w * nf / norm2);
                }
            }
        }
        c *= decay;
        c += delta;

        // Step size.
        let mut new_sigma = sigma;
        if p.config.tpa {
            if n_probes == 2 {
                let (fwd, back) = (offspring[0].fitness, offspring[1].fitness);
                let outcome = if fwd < back {
                    1.0
                } else if back < fwd {
                    -1.0
                } else {
                    0.0
                };
                let tpa = p.tpa;
                let s = &mut self.state.tpa_state.signal;
                *s = (1.0 - tpa.c_alpha) * *s + tpa.c_alpha * outcome;
                let factor = if *s >= 0.0 {
                    tpa.alpha_up.powf(*s / tpa.damping)
                } else {
                    tpa.alpha_down.powf(-*s / tpa.damping)
                };
                new_sigma *= factor;
            }
        } else {
            let exponent = (cs / p.d_sigma) * (self.state.path_sigma.norm() / p.chi_n - 1.0);
            new_sigma *= exponent.min(1.0).exp();
        }

        self.state.previous_mean = Some(mean.clone());
        self.state.previous_sigma = sigma;
        self.state.mean = new_mean;
        self.state.sigma = new_sigma.clamp(SIGMA_MIN, SIGMA_MAX);
        self.state.parents = pool[..selected]
            .iter()
            .map(|(f, x, _)| Individual {
                x: (*x).clone(),
                fitness: *f,
            })
            .collect();
        self.set_covariance(c);
    }

    /// Symmetrizes, decomposes and repairs the covariance matrix.
    fn set_covariance(&mut self, c: DMatrix<f64>) {
        let n = self.params.dim;
        let mut c = (&c + c.transpose()) * 0.5;
        if c.iter().any(|v| !v.is_finite()) {
            c = DMatrix::identity(n, n);
            self.state.path_c.fill(0.0);
            self.state.path_sigma.fill(0.0);
        }
        let eig = SymmetricEigen::new(c.clone());
        let mut values = eig.eigenvalues;
        let max = values.max().max(f64::MIN_POSITIVE);
        let floor = EIGEN_FLOOR * max;
        let min = values.min();
        if min < floor {
            let ridge = floor - min;
            for i in 0..n {
                c[(i, i)] += ridge;
            }
            values.add_scalar_mut(ridge);
        }
        // Same distribution, with the overall scale carried by sigma.
        let max = values.max();
        if !(1.0 / COVARIANCE_SCALE_LIMIT..=COVARIANCE_SCALE_LIMIT).contains(&max) {
            let root = max.sqrt();
            c /= max;
            values /= max;
            self.state.path_c /= root;
            self.state.sigma = (self.state.sigma * root).clamp(SIGMA_MIN, SIGMA_MAX);
            self.state.previous_sigma *= root;
        }
        self.state.covariance = c;
        self.state.eigenvectors = eig.eigenvectors;
        self.state.axis_lengths = values.map(f64::sqrt);
    }

    /// Applies IPOP/BIPOP restart triggers after a completed generation.
    fn check_restart(&mut self, generation_best: f64) -> bool {
        let scheme = self.params.config.restart;
        if scheme == RestartScheme::Off {
            return false;
        }
        let n = self.params.dim;
        let lambda = self.params.lambda;
        let rs = &mut self.state.restart_state;
        if generation_best < rs.local_best {
            rs.local_best = generation_best;
            rs.stagnant_generations = 0;
        } else {
            rs.stagnant_generations += 1;
        }
        let window = 10 + (30 * n).div_ceil(lambda) as u64;
        let spread = self.state.sigma * self.state.axis_lengths.max().powi(2);
        let local_evals = self.state.evals_used - rs.run_start_evals;
        let small_exhausted = scheme == RestartScheme::Bipop
            && rs.regime == Regime::Small
            && rs.last_large_evals > 0
            && local_evals >= rs.last_large_evals / 2;
        if rs.stagnant_generations < window && spread >= STOP_SPREAD && !small_exhausted {
            return false;
        }
        self.restart();
        true
    }

    fn restart(&mut self) {
        let dim = self.params.dim;
        let base = super::params::default_lambda(dim);
        let scheme = self.params.config.restart;
        let evals = self.state.evals_used;
        let rs = &mut self.state.restart_state;
        let local_evals = evals - rs.run_start_evals;
        match rs.regime {
            Regime::Large => {
                rs.large_evals += local_evals;
                rs.last_large_evals = local_evals;
            }
            Regime::Small => rs.small_evals += local_evals,
        }
        rs.restarts += 1;

        let (lambda, sigma) = if scheme == RestartScheme::Bipop && rs.small_evals < rs.large_evals {
            rs.regime = Regime::Small;
            let u: f64 = self.rng.random();
            let ratio = (rs.large_multiplier as f64 / 2.0).max(1.0);
            let lambda = ((base as f64) * ratio.powf(u * u)).floor() as usize;
            let v: f64 = self.rng.random();
            (lambda.max(base), INITIAL_SIGMA * 10f64.powf(-2.0 * v))
        } else {
            rs.regime = Regime::Large;
            rs.large_multiplier *= 2;
            (base * rs.large_multiplier, INITIAL_SIGMA)
        };

        let mut restart_state = rs.clone();
        restart_state.run_start_evals = evals;
        restart_state.local_best = f64::INFINITY;
        restart_state.stagnant_generations = 0;

        let mean = random_point(&mut self.rng, dim);
        let mut fresh = EsDynamicState::fresh(mean, sigma);
        fresh.evals_used = evals;
        fresh.generation = self.state.generation;
        fresh.best_so_far = self.state.best_so_far.take();
        fresh.threshold_state = self.state.threshold_state;
        fresh.restart_state = restart_state;
        self.state = fresh;
        self.params = EsStaticParameters::with_lambda(self.params.config, dim, lambda);
    }
}

fn random_point<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.random_range(-DOMAIN_BOUND..=DOMAIN_BOUND))
}
