//! Fixed-target performance measures. Infinite values are `f64::INFINITY`
//! and propagate through every combination.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use thiserror::Error;

use crate::config::ModuleConfiguration;
use crate::harness::{Dataset, RunLabel};
use crate::targets::{target_label, TARGET_COUNT};

/// Default sliding-window radius.
pub const WINDOW_RADIUS: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no runs")]
    NoRuns,
    #[error("no runs of {label} on f{fid}")]
    Missing { fid: u32, label: String },
    #[error("target index {0} outside the grid")]
    Target(usize),
}

/// Which per-target value feeds the splice and window computations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Aggregation {
    /// Average hitting time.
    Mean,
    /// Mean over instances of the worst run.
    WorstCase,
    /// Expected running time.
    Ert,
}

/// Average hitting time; infinite if any run missed the target.
pub fn aht(hits: &[Option<u64>]) -> Result<f64, MetricsError> {
    if hits.is_empty() {
        return Err(MetricsError::NoRuns);
    }
    let mut sum: u128 = 0;
    for h in hits {
        match h {
            Some(e) => sum += u128::from(*e),
            None => return Ok(f64::INFINITY),
        }
    }
    Ok(sum as f64 / hits.len() as f64)
}

/// Expected running time: successful runs count their hitting time, failed
/// runs count the full budget, divided by the number of successes.
pub fn ert(hits: &[Option<u64>], budget: u64) -> Result<f64, MetricsError> {
    if hits.is_empty() {
        return Err(MetricsError::NoRuns);
    }
    let mut sum: u128 = 0;
    let mut successes: u128 = 0;
    for h in hits {
        match h {
            Some(e) => {
                sum += u128::from(*e);
                successes += 1;
            }
            None => sum += u128::from(budget),
        }
    }
    if successes == 0 {
        return Ok(f64::INFINITY);
    }
    Ok(sum as f64 / successes as f64)
}

/// Mean over instances of the slowest run on that instance.
pub fn worst_case_value(per_instance: &[Vec<Option<u64>>]) -> Result<f64, MetricsError> {
    if per_instance.is_empty() || per_instance.iter().any(Vec::is_empty) {
        return Err(MetricsError::NoRuns);
    }
    let mut sum: u128 = 0;
    for runs in per_instance {
        let mut worst = 0;
        for h in runs {
            match h {
                Some(e) => worst = worst.max(*e),
                None => return Ok(f64::INFINITY),
            }
        }
        sum += u128::from(worst);
    }
    Ok(sum as f64 / per_instance.len() as f64)
}

/// `a(split) - b(split) + b(final)`, infinite if any term is.
pub fn splice(c1_at_split: f64, c2_at_split: f64, c2_at_final: f64) -> f64 {
    if [c1_at_split, c2_at_split, c2_at_final]
        .iter()
        .any(|v| v.is_infinite())
    {
        f64::INFINITY
    } else {
        c1_at_split - c2_at_split + c2_at_final
    }
}

/// Statistics of one (function, label, target) cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetStats {
    pub aht: f64,
    pub ert: f64,
    pub worst_case: f64,
    pub successes: usize,
    pub runs: usize,
}

impl TargetStats {
    pub fn value(&self, aggregation: Aggregation) -> f64 {
        match aggregation {
            Aggregation::Mean => self.aht,
            Aggregation::WorstCase => self.worst_case,
            Aggregation::Ert => self.ert,
        }
    }

    pub fn all_succeeded(&self) -> bool {
        self.successes == self.runs
    }
}

/// Per-target statistics of every (function, label) in a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct PerformanceTable {
    budget: u64,
    cells: BTreeMap<(u32, RunLabel), Vec<TargetStats>>,
}

impl PerformanceTable {
    /// `budget` is the per-run budget charged to failed runs in the ERT.
    pub fn from_dataset(dataset: &Dataset, budget: u64) -> Self {
        let mut grouped: BTreeMap<(u32, RunLabel), BTreeMap<u32, Vec<&crate::targets::HitLedger>>> =
            BTreeMap::new();
        for r in dataset.records() {
            grouped
                .entry((r.fid, r.label))
                .or_default()
                .entry(r.instance)
                .or_default()
                .push(&r.ledger);
        }
        let cells = grouped
            .into_iter()
            .map(|(key, instances)| {
                let stats = (0..TARGET_COUNT)
                    .map(|t| {
                        let per_instance: Vec<Vec<Option<u64>>> = instances
                            .values()
                            .map(|runs| runs.iter().map(|l| l.hit(t)).collect())
                            .collect();
                        let flat: Vec<Option<u64>> = per_instance.concat();
                        TargetStats {
                            aht: aht(&flat).expect("grouped runs are non-empty"),
                            ert: ert(&flat, budget).expect("grouped runs are non-empty"),
                            worst_case: worst_case_value(&per_instance)
                                .expect("grouped runs are non-empty"),
                            successes: flat.iter().filter(|h| h.is_some()).count(),
                            runs: flat.len(),
                        }
                    })
                    .collect();
                (key, stats)
            })
            .collect();
        Self { budget, cells }
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn fids(&self) -> BTreeSet<u32> {
        self.cells.keys().map(|(f, _)| *f).collect()
    }

    pub fn labels(&self, fid: u32) -> Vec<RunLabel> {
        self.cells
            .keys()
            .filter(|(f, _)| *f == fid)
            .map(|(_, l)| *l)
            .collect()
    }

    /// Static configurations present for `fid`, in representation order.
    pub fn static_configs(&self, fid: u32) -> Vec<ModuleConfiguration> {
        self.labels(fid)
            .into_iter()
            .filter_map(|l| l.as_static())
            .collect()
    }

    pub fn stats(&self, fid: u32, label: &RunLabel) -> Result<&[TargetStats], MetricsError> {
        self.cells
            .get(&(fid, *label))
            .map(Vec::as_slice)
            .ok_or_else(|| MetricsError::Missing {
                fid,
                label: label.to_string(),
            })
    }

    pub fn value(
        &self,
        fid: u32,
        label: &RunLabel,
        target: usize,
        aggregation: Aggregation,
    ) -> Result<f64, MetricsError> {
        let stats = self.stats(fid, label)?;
        stats
            .get(target)
            .map(|s| s.value(aggregation))
            .ok_or(MetricsError::Target(target))
    }

    /// Hardest target index at which some restart-free static configuration
    /// succeeded in every run.
    pub fn phi_min(&self, fid: u32) -> Option<usize> {
        self.static_configs(fid)
            .into_iter()
            .filter(ModuleConfiguration::is_switchable)
            .filter_map(|c| {
                let stats = &self.cells[&(fid, RunLabel::Static(c))];
                stats.iter().rposition(TargetStats::all_succeeded)
            })
            .max()
    }

    /// Hardest target index hit by any run of any static configuration.
    pub fn final_reached_target(&self, fid: u32) -> Option<usize> {
        self.static_configs(fid)
            .into_iter()
            .filter_map(|c| {
                let stats = &self.cells[&(fid, RunLabel::Static(c))];
                stats.iter().rposition(|s| s.successes > 0)
            })
            .max()
    }

    /// Writes `fid,config,target_index,target,aht,ert,worst_case,successes,runs`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "fid",
            "config",
            "target_index",
            "target",
            "aht",
            "ert",
            "worst_case",
            "successes",
            "runs",
        ])?;
        for ((fid, label), stats) in &self.cells {
            for (t, s) in stats.iter().enumerate() {
                w.write_record([
                    fid.to_string(),
                    label.to_string(),
                    t.to_string(),
                    target_label(t),
                    format_value(s.aht),
                    format_value(s.ert),
                    format_value(s.worst_case),
                    s.successes.to_string(),
                    s.runs.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Full precision, `inf` for infinite values.
pub fn format_value(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

/// Theoretical hitting time of running `c1` until `split` and `c2` from there
/// to `phi_min`.
pub fn theoretical_ht(
    table: &PerformanceTable,
    fid: u32,
    c1: &RunLabel,
    c2: &RunLabel,
    split: usize,
    phi_min: usize,
    aggregation: Aggregation,
) -> Result<f64, MetricsError> {
    Ok(splice(
        table.value(fid, c1, split, aggregation)?,
        table.value(fid, c2, split, aggregation)?,
        table.value(fid, c2, phi_min, aggregation)?,
    ))
}

/// Sum of the theoretical hitting times over splits `i - w ..= i + w`;
/// infinite when the window leaves the grid.
#[allow(clippy::too_many_arguments)]
pub fn sliding_window_value(
    table: &PerformanceTable,
    fid: u32,
    c1: &RunLabel,
    c2: &RunLabel,
    split: usize,
    radius: usize,
    phi_min: usize,
    aggregation: Aggregation,
) -> Result<f64, MetricsError> {
    if split >= TARGET_COUNT {
        return Err(MetricsError::Target(split));
    }
    if split < radius || TARGET_COUNT - 1 - split < radius {
        return Ok(f64::INFINITY);
    }
    let mut total = 0.0;
    for j in split - radius..=split + radius {
        total += theoretical_ht(table, fid, c1, c2, j, phi_min, aggregation)?;
    }
    Ok(total)
}
