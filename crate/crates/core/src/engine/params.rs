use crate::config::{ModuleConfiguration, WeightsScheme};

/// Threshold convergence schedule: minimum mutation length
/// `initial_fraction * diameter * (remaining / span)^decay`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdParams {
    pub initial_fraction: f64,
    pub decay: f64,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        Self {
            initial_fraction: 0.1,
            decay: 2.0,
        }
    }
}

/// Two-point step-size adaptation constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TpaParams {
    /// Step factor applied (per unit of smoothed signal) when the forward probe wins.
    pub alpha_up: f64,
    /// Step factor applied when the backward probe wins.
    pub alpha_down: f64,
    pub damping: f64,
    /// Smoothing rate of the probe-comparison signal.
    pub c_alpha: f64,
}

impl Default for TpaParams {
    fn default() -> Self {
        Self {
            alpha_up: 1.5,
            alpha_down: 1.0 / 1.5,
            damping: 1.0,
            c_alpha: 0.3,
        }
    }
}

/// Everything that is a function of the configuration, dimension and
/// population size. Rebuilt wholesale on a configuration switch.
#[derive(Clone, Debug, PartialEq)]
pub struct EsStaticParameters {
    pub config: ModuleConfiguration,
    pub dim: usize,
    pub lambda: usize,
    pub mu: usize,
    /// Positive recombination weights, non-increasing, summing to one.
    pub weights: Vec<f64>,
    /// Magnitudes of the negative weights of the active update, applied to
    /// the worst offspring first. Empty when the active update is off.
    pub negative_weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    /// Expected norm of a standard normal vector.
    pub chi_n: f64,
    pub threshold: ThresholdParams,
    pub tpa: TpaParams,
}

/// Default population size `4 + floor(3 ln D)`.
pub fn default_lambda(dim: usize) -> usize {
    4 + (3.0 * (dim as f64).ln()).floor() as usize
}

/// Recombination weights for `mu` parents under `scheme`.
pub fn recombination_weights(scheme: WeightsScheme, mu: usize) -> Vec<f64> {
    match scheme {
        WeightsScheme::Uniform => vec![1.0 / mu as f64; mu],
        WeightsScheme::Logarithmic => {
            let raw: Vec<f64> = (1..=mu)
                .map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln())
                .collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / total).collect()
        }
    }
}

impl EsStaticParameters {
    pub fn derive(config: ModuleConfiguration, dim: usize) -> Self {
        Self::with_lambda(config, dim, default_lambda(dim))
    }

    pub fn with_lambda(config: ModuleConfiguration, dim: usize, lambda: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        let lambda = lambda.max(2);
        let mu = (lambda / 2).max(1);
        let weights = recombination_weights(config.weights, mu);
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let n = dim as f64;

        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c_1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff));
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

        let negative_weights = if config.active_update {
            // Same shape as the positive weights; total mass capped so the
            // update cannot remove more variance than it adds.
            let alpha_mu = 1.0 + c_1 / c_mu;
            let alpha_mu_eff = 1.0 + 2.0 * mu_eff / (mu_eff + 2.0);
            let alpha_posdef = (1.0 - c_1 - c_mu) / (n * c_mu);
            let mass = alpha_mu.min(alpha_mu_eff).min(alpha_posdef);
            weights.iter().map(|w| w * mass).collect()
        } else {
            Vec::new()
        };

        Self {
            config,
            dim,
            lambda,
            mu,
            weights,
            negative_weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
            threshold: ThresholdParams::default(),
            tpa: TpaParams {
                damping: n.sqrt(),
                ..TpaParams::default()
            },
        }
    }
}
