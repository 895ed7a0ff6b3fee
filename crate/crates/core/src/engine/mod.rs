//! Modular CMA-ES with online configuration switching.

mod params;
mod run;

pub use params::{default_lambda, recombination_weights, EsStaticParameters, ThresholdParams, TpaParams};
pub use run::{
    EsDynamicState, EsRun, GenerationSummary, Individual, Regime, RestartState, ThresholdState,
    TpaState, DOMAIN_BOUND, INITIAL_SIGMA,
};

use thiserror::Error;

use crate::config::{AdaptiveTriple, ModuleConfiguration};
use crate::sampling::SamplingError;
use crate::targets::HitLedger;

/// A minimization problem with a known optimum value.
pub trait Objective {
    fn dim(&self) -> usize;
    fn f_opt(&self) -> f64;
    fn evaluate(&self, x: &[f64]) -> f64;
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("objective returned {value} at evaluation {evaluation} (x = {point:?})")]
    NonFiniteFitness {
        evaluation: u64,
        point: Vec<f64>,
        value: f64,
    },
    #[error("evaluation budget exhausted")]
    BudgetExhausted,
    #[error("budget {budget} is smaller than one population of {lambda}")]
    BudgetTooSmall { budget: u64, lambda: usize },
    #[error("objective dimension must be positive")]
    Dimension,
    #[error("configuration {0} uses restarts and cannot be switched to")]
    RestartInSwitch(String),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

/// Result of a complete run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub ledger: HitLedger,
    pub evals_used: u64,
    /// Evaluation count at which the configuration was switched.
    pub switch_eval: Option<u64>,
    pub best_fitness: f64,
}

fn outcome<F: Objective + ?Sized>(run: &EsRun<'_, F>, switch_eval: Option<u64>) -> RunOutcome {
    RunOutcome {
        ledger: run.ledger().clone(),
        evals_used: run.evals_used(),
        switch_eval,
        best_fitness: run
            .state()
            .best_so_far
            .as_ref()
            .map_or(f64::INFINITY, |b| b.fitness),
    }
}

/// Runs one configuration until the budget is spent or the final target is hit.
pub fn run_static<F: Objective + ?Sized>(
    config: ModuleConfiguration,
    objective: &F,
    budget: u64,
    seed: u64,
) -> Result<RunOutcome, EngineError> {
    let mut run = EsRun::new(config, objective, budget, seed)?;
    while !run.is_finished() {
        run.step()?;
    }
    Ok(outcome(&run, None))
}

/// Runs `c1` until a generation ends with the switch target reached, then
/// continues with `c2` on the same state.
pub fn run_adaptive<F: Objective + ?Sized>(
    triple: &AdaptiveTriple,
    objective: &F,
    budget: u64,
    seed: u64,
) -> Result<RunOutcome, EngineError> {
    let mut run = EsRun::new(triple.c1, objective, budget, seed)?;
    let mut switch_eval = None;
    while !run.is_finished() {
        run.step()?;
        if switch_eval.is_none() && run.ledger().reached() > triple.tau_index {
            switch_eval = Some(run.evals_used());
            if !run.is_finished() {
                run.switch_configuration(triple.c2)?;
            }
        }
    }
    Ok(outcome(&run, switch_eval))
}
