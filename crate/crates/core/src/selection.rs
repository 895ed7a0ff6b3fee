//! Choosing adaptive triples from static-run performance.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::config::{AdaptiveTriple, ModuleConfiguration};
use crate::harness::{CampaignManifest, RunLabel};
use crate::metrics::{
    format_value, sliding_window_value, splice, theoretical_ht, Aggregation, MetricsError,
    PerformanceTable, WINDOW_RADIUS,
};
use crate::targets::TARGET_COUNT;

/// Number of triples kept by the windowed and two-stage methods.
pub const DEFAULT_QUOTA: usize = 50;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("f{fid}: no configuration reaches any target in all runs")]
    NoTarget { fid: u32 },
    #[error("f{fid}: no split target fits a window of radius {radius} before target {phi_min}")]
    NoSplit { fid: u32, radius: usize, phi_min: usize },
    #[error("f{fid}: empty candidate set")]
    EmptyCandidates { fid: u32 },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("selection file line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Original,
    SlidingMean,
    SlidingWorstCase,
    TwoStage,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Original => "original",
            Method::SlidingMean => "sliding_mean",
            Method::SlidingWorstCase => "sliding_worstcase",
            Method::TwoStage => "two_stage",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "original" => Ok(Method::Original),
            "sliding_mean" => Ok(Method::SlidingMean),
            "sliding_worstcase" | "sliding_worst" => Ok(Method::SlidingWorstCase),
            "two_stage" => Ok(Method::TwoStage),
            _ => Err(format!("unknown selection method '{s}'")),
        }
    }
}

/// A selected triple and the value it was ranked by.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectedTriple {
    pub triple: AdaptiveTriple,
    pub predicted: f64,
    /// Spliced ERT, where the method computes one.
    pub predicted_ert: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectionResult {
    pub fid: u32,
    pub method: Method,
    pub phi_min: usize,
    /// Ascending by predicted value.
    pub entries: Vec<SelectedTriple>,
}

impl SelectionResult {
    pub fn triples(&self) -> Vec<AdaptiveTriple> {
        self.entries.iter().map(|e| e.triple).collect()
    }

    /// Writes `fid,rank,c1,c2,tau_index,predicted_value,predicted_ert,method,phi_min_index`.
    pub fn write_csv<W: Write>(results: &[SelectionResult], out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "fid",
            "rank",
            "c1",
            "c2",
            "tau_index",
            "predicted_value",
            "predicted_ert",
            "method",
            "phi_min_index",
        ])?;
        for r in results {
            for (rank, e) in r.entries.iter().enumerate() {
                w.write_record([
                    r.fid.to_string(),
                    (rank + 1).to_string(),
                    e.triple.c1.to_string(),
                    e.triple.c2.to_string(),
                    e.triple.tau_index.to_string(),
                    format_value(e.predicted),
                    e.predicted_ert.map(format_value).unwrap_or_default(),
                    r.method.to_string(),
                    r.phi_min.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a file written by [`SelectionResult::write_csv`].
    pub fn read_csv<R: Read>(input: R) -> Result<Vec<SelectionResult>, SelectionError> {
        let mut reader = csv::Reader::from_reader(input);
        let mut results: Vec<SelectionResult> = Vec::new();
        for row in reader.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let bad = |message: String| SelectionError::Parse { line, message };
            if row.len() != 9 {
                return Err(bad(format!("expected 9 columns, found {}", row.len())));
            }
            let num = |i: usize| -> Result<f64, SelectionError> {
                match &row[i] {
                    "inf" => Ok(f64::INFINITY),
                    s => s.parse().map_err(|_| bad(format!("bad number '{s}'"))),
                }
            };
            let int = |i: usize| -> Result<usize, SelectionError> {
                row[i].parse().map_err(|_| bad(format!("bad integer '{}'", &row[i])))
            };
            let fid = int(0)? as u32;
            let triple = AdaptiveTriple::new(
                row[2].parse().map_err(|e| bad(format!("{e}")))?,
                row[3].parse().map_err(|e| bad(format!("{e}")))?,
                int(4)?,
            )
            .map_err(|e| bad(e.to_string()))?;
            let method: Method = row[7].parse().map_err(bad)?;
            let phi_min = int(8)?;
            let entry = SelectedTriple {
                triple,
                predicted: num(5)?,
                predicted_ert: if row[6].is_empty() { None } else { Some(num(6)?) },
            };
            match results.last_mut() {
                Some(r) if r.fid == fid && r.method == method => r.entries.push(entry),
                _ => results.push(SelectionResult {
                    fid,
                    method,
                    phi_min,
                    entries: vec![entry],
                }),
            }
        }
        Ok(results)
    }
}

/// Caps on how often one configuration may fill each slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LimitPolicy {
    pub max_c1: usize,
    pub max_c2: usize,
}

impl Default for LimitPolicy {
    fn default() -> Self {
        Self {
            max_c1: 3,
            max_c2: 3,
        }
    }
}

/// Greedy admission filter shared by the streaming search and
/// [`limited_selection`].
#[derive(Debug, Default)]
struct Admission {
    policy: Option<LimitPolicy>,
    as_c1: HashMap<ModuleConfiguration, usize>,
    as_c2: HashMap<ModuleConfiguration, usize>,
    identity_taken: bool,
}

impl Admission {
    fn new(policy: Option<LimitPolicy>) -> Self {
        Self {
            policy,
            ..Default::default()
        }
    }

    fn offer(&mut self, t: &AdaptiveTriple, single_identity: bool) -> bool {
        if single_identity && t.c1 == t.c2 && self.identity_taken {
            return false;
        }
        if let Some(p) = self.policy {
            if self.as_c1.get(&t.c1).copied().unwrap_or(0) >= p.max_c1
                || self.as_c2.get(&t.c2).copied().unwrap_or(0) >= p.max_c2
            {
                return false;
            }
        }
        *self.as_c1.entry(t.c1).or_default() += 1;
        *self.as_c2.entry(t.c2).or_default() += 1;
        self.identity_taken |= t.c1 == t.c2;
        true
    }
}

/// Greedy pass in rank order keeping a triple only while its `c1` and `c2`
/// are under their caps; stops after `quota` triples.
pub fn limited_selection(
    ranked: &[SelectedTriple],
    policy: LimitPolicy,
    quota: usize,
) -> Vec<SelectedTriple> {
    let mut admission = Admission::new(Some(policy));
    ranked
        .iter()
        .filter(|e| admission.offer(&e.triple, false))
        .take(quota)
        .copied()
        .collect()
}

/// Restart-free configurations that reach `phi_min` in every run.
pub fn eligible_configs(table: &PerformanceTable, fid: u32, phi_min: usize) -> Vec<ModuleConfiguration> {
    table
        .static_configs(fid)
        .into_iter()
        .filter(|c| c.is_switchable())
        .filter(|c| {
            table
                .stats(fid, &RunLabel::Static(*c))
                .map(|s| s[phi_min].all_succeeded())
                .unwrap_or(false)
        })
        .collect()
}

fn value(table: &PerformanceTable, fid: u32, c: ModuleConfiguration, t: usize, agg: Aggregation) -> f64 {
    table
        .value(fid, &RunLabel::Static(c), t, agg)
        .expect("eligible configurations are in the table")
}

fn by_value_then_config(a: &(f64, ModuleConfiguration), b: &(f64, ModuleConfiguration)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Best single triple: for every split before `phi_min`, the fastest
/// configuration to the split followed by the fastest from the split onwards.
pub fn select_original(table: &PerformanceTable, fid: u32) -> Result<SelectionResult, SelectionError> {
    let agg = Aggregation::Mean;
    let phi_min = table.phi_min(fid).ok_or(SelectionError::NoTarget { fid })?;
    let eligible = eligible_configs(table, fid, phi_min);
    let mut best: Option<(f64, AdaptiveTriple)> = None;
    for split in 0..phi_min.max(1) {
        let pick = |key: &dyn Fn(ModuleConfiguration) -> f64| {
            eligible
                .iter()
                .map(|&c| (key(c), c))
                .filter(|(v, _)| v.is_finite())
                .min_by(by_value_then_config)
        };
        let Some((_, c1)) = pick(&|c| value(table, fid, c, split, agg)) else {
            continue;
        };
        let Some((_, c2)) =
            pick(&|c| value(table, fid, c, phi_min, agg) - value(table, fid, c, split, agg))
        else {
            continue;
        };
        let th = theoretical_ht(
            table,
            fid,
            &RunLabel::Static(c1),
            &RunLabel::Static(c2),
            split,
            phi_min,
            agg,
        )?;
        let triple = AdaptiveTriple {
            c1,
            c2,
            tau_index: split,
        };
        let better = match &best {
            None => true,
            Some((v, t)) => th
                .total_cmp(v)
                .then((triple.c1, triple.c2, split).cmp(&(t.c1, t.c2, t.tau_index)))
                .is_lt(),
        };
        if better {
            best = Some((th, triple));
        }
    }
    let (predicted, triple) = best.ok_or(SelectionError::NoTarget { fid })?;
    Ok(SelectionResult {
        fid,
        method: Method::Original,
        phi_min,
        entries: vec![SelectedTriple {
            triple,
            predicted,
            predicted_ert: None,
        }],
    })
}

/// Heap node of the sorted-sum enumeration; ordered by
/// (value, c1, c2, split).
#[derive(Clone, Copy, Debug)]
struct Node {
    value: f64,
    c1: ModuleConfiguration,
    c2: ModuleConfiguration,
    split: usize,
    a: usize,
    b: usize,
}

impl Node {
    fn key(&self) -> (ModuleConfiguration, ModuleConfiguration, usize) {
        (self.c1, self.c2, self.split)
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then(self.key().cmp(&other.key()))
    }
}

/// Per split, configurations sorted by their share of the window value.
struct SplitLists {
    split: usize,
    /// Window sum of the configuration's own values.
    first: Vec<(f64, ModuleConfiguration)>,
    /// `(2w + 1) v(phi_min) - window sum`.
    second: Vec<(f64, ModuleConfiguration)>,
}

/// Triples in ascending order of their window value, lazily. The value
/// separates into a `c1` term and a `c2` term, so each split is a sorted
/// pair-sum enumeration.
struct WindowStream {
    lists: Vec<SplitLists>,
    heap: BinaryHeap<Reverse<Node>>,
}

impl WindowStream {
    fn new(
        table: &PerformanceTable,
        fid: u32,
        eligible: &[ModuleConfiguration],
        phi_min: usize,
        radius: usize,
        agg: Aggregation,
    ) -> Self {
        let width = (2 * radius + 1) as f64;
        let last = (TARGET_COUNT - 1 - radius).min(phi_min.saturating_sub(1));
        let mut lists = Vec::new();
        for split in radius..=last {
            let mut first = Vec::new();
            let mut second = Vec::new();
            for &c in eligible {
                let window: f64 = (split - radius..=split + radius)
                    .map(|j| value(table, fid, c, j, agg))
                    .sum();
                let at_min = value(table, fid, c, phi_min, agg);
                if window.is_finite() {
                    first.push((window, c));
                    if at_min.is_finite() {
                        second.push((width * at_min - window, c));
                    }
                }
            }
            first.sort_by(by_value_then_config);
            second.sort_by(by_value_then_config);
            lists.push(SplitLists {
                split,
                first,
                second,
            });
        }
        let mut stream = Self {
            lists,
            heap: BinaryHeap::new(),
        };
        for i in 0..stream.lists.len() {
            stream.push(i, 0, 0);
        }
        stream
    }

    fn push(&mut self, list: usize, a: usize, b: usize) {
        let l = &self.lists[list];
        if let (Some(&(va, c1)), Some(&(vb, c2))) = (l.first.get(a), l.second.get(b)) {
            self.heap.push(Reverse(Node {
                value: va + vb,
                c1,
                c2,
                split: list,
                a,
                b,
            }));
        }
    }
}

impl Iterator for WindowStream {
    type Item = AdaptiveTriple;

    fn next(&mut self) -> Option<Self::Item> {
        let Reverse(node) = self.heap.pop()?;
        self.push(node.split, node.a, node.b + 1);
        if node.b == 0 {
            self.push(node.split, node.a + 1, 0);
        }
        Some(AdaptiveTriple {
            c1: node.c1,
            c2: node.c2,
            tau_index: self.lists[node.split].split,
        })
    }
}

/// The `top_k` triples by sliding-window value, optionally under a
/// [`LimitPolicy`]. At most one triple with `c1 == c2` is kept.
pub fn select_windowed(
    table: &PerformanceTable,
    fid: u32,
    aggregation: Aggregation,
    top_k: usize,
    limit: Option<LimitPolicy>,
) -> Result<SelectionResult, SelectionError> {
    let phi_min = table.phi_min(fid).ok_or(SelectionError::NoTarget { fid })?;
    let entries = windowed_entries(table, fid, phi_min, aggregation, top_k, limit)?;
    let method = match aggregation {
        Aggregation::WorstCase => Method::SlidingWorstCase,
        _ => Method::SlidingMean,
    };
    Ok(SelectionResult {
        fid,
        method,
        phi_min,
        entries,
    })
}

fn windowed_entries(
    table: &PerformanceTable,
    fid: u32,
    phi_min: usize,
    aggregation: Aggregation,
    top_k: usize,
    limit: Option<LimitPolicy>,
) -> Result<Vec<SelectedTriple>, SelectionError> {
    let radius = WINDOW_RADIUS;
    if phi_min <= radius {
        return Err(SelectionError::NoSplit {
            fid,
            radius,
            phi_min,
        });
    }
    let eligible = eligible_configs(table, fid, phi_min);
    let mut admission = Admission::new(limit);
    let mut entries = Vec::with_capacity(top_k);
    for triple in WindowStream::new(table, fid, &eligible, phi_min, radius, aggregation) {
        if entries.len() == top_k {
            break;
        }
        if !admission.offer(&triple, true) {
            continue;
        }
        let predicted = sliding_window_value(
            table,
            fid,
            &RunLabel::Static(triple.c1),
            &RunLabel::Static(triple.c2),
            triple.tau_index,
            radius,
            phi_min,
            aggregation,
        )?;
        entries.push(SelectedTriple {
            triple,
            predicted,
            predicted_ert: None,
        });
    }
    Ok(entries)
}

/// How stage A ranks static configurations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StaticRanking {
    #[default]
    Aht,
    Ert,
}

/// Configurations to rerun for one function.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet {
    pub fid: u32,
    /// Best statics, best first.
    pub statics: Vec<ModuleConfiguration>,
    /// Configurations appearing in the stage-1 triple selection.
    pub from_triples: Vec<ModuleConfiguration>,
}

impl CandidateSet {
    /// Union of both parts without duplicates, in representation order.
    pub fn configs(&self) -> Vec<ModuleConfiguration> {
        let set: BTreeSet<_> = self
            .statics
            .iter()
            .chain(&self.from_triples)
            .copied()
            .collect();
        set.into_iter().collect()
    }
}

/// Stage A: the `static_quota` best restart-free statics at the hardest
/// reached target (backfilled from easier targets), plus the configurations
/// of the `triple_quota` best limited windowed triples.
pub fn two_stage_candidates(
    table: &PerformanceTable,
    fid: u32,
    static_quota: usize,
    triple_quota: usize,
    ranking: StaticRanking,
) -> Result<CandidateSet, SelectionError> {
    let final_target = table
        .final_reached_target(fid)
        .ok_or(SelectionError::NoTarget { fid })?;
    let agg = match ranking {
        StaticRanking::Aht => Aggregation::Mean,
        StaticRanking::Ert => Aggregation::Ert,
    };
    let pool: Vec<ModuleConfiguration> = table
        .static_configs(fid)
        .into_iter()
        .filter(|c| c.is_switchable())
        .collect();
    let mut statics: Vec<ModuleConfiguration> = Vec::new();
    for t in (0..=final_target).rev() {
        if statics.len() >= static_quota {
            break;
        }
        let mut ranked: Vec<(f64, ModuleConfiguration)> = pool
            .iter()
            .filter(|c| !statics.contains(c))
            .map(|&c| (value(table, fid, c, t, agg), c))
            .filter(|(v, _)| v.is_finite())
            .collect();
        ranked.sort_by(by_value_then_config);
        statics.extend(
            ranked
                .into_iter()
                .take(static_quota - statics.len())
                .map(|(_, c)| c),
        );
    }
    let from_triples = match select_windowed(
        table,
        fid,
        Aggregation::Mean,
        triple_quota,
        Some(LimitPolicy::default()),
    ) {
        Ok(sel) => {
            let set: BTreeSet<_> = sel.entries.iter().flat_map(|e| [e.triple.c1, e.triple.c2]).collect();
            set.into_iter().collect()
        }
        Err(SelectionError::NoSplit { .. }) | Err(SelectionError::NoTarget { .. }) => Vec::new(),
        Err(e) => return Err(e),
    };
    let set = CandidateSet {
        fid,
        statics,
        from_triples,
    };
    if set.configs().is_empty() {
        return Err(SelectionError::EmptyCandidates { fid });
    }
    Ok(set)
}

/// Rerun campaign over the union of the candidate sets.
#[allow(clippy::too_many_arguments)]
pub fn rerun_manifest(
    candidates: &[CandidateSet],
    instances: Vec<u32>,
    runs_per_instance: u32,
    budget: u64,
    base_seed: u64,
    dim: usize,
    output: PathBuf,
) -> CampaignManifest {
    let configs: BTreeSet<ModuleConfiguration> =
        candidates.iter().flat_map(CandidateSet::configs).collect();
    CampaignManifest {
        labels: configs.into_iter().map(RunLabel::Static).collect(),
        fids: candidates.iter().map(|c| c.fid).collect::<BTreeSet<_>>().into_iter().collect(),
        instances,
        runs_per_instance,
        budget,
        base_seed,
        dim,
        output,
    }
}

/// Stage B: limited windowed selection by AHT on the rerun data, annotated
/// with the spliced ERT of each triple.
pub fn two_stage_select(
    rerun: &PerformanceTable,
    fid: u32,
    quota: usize,
) -> Result<SelectionResult, SelectionError> {
    let mut result = select_windowed(rerun, fid, Aggregation::Mean, quota, Some(LimitPolicy::default()))?;
    result.method = Method::TwoStage;
    for e in &mut result.entries {
        e.predicted_ert = Some(predicted_ert(rerun, fid, &e.triple, result.phi_min)?);
    }
    Ok(result)
}

/// Spliced ERT of a triple at `phi_min`.
pub fn predicted_ert(
    table: &PerformanceTable,
    fid: u32,
    triple: &AdaptiveTriple,
    phi_min: usize,
) -> Result<f64, MetricsError> {
    let (c1, c2) = (RunLabel::Static(triple.c1), RunLabel::Static(triple.c2));
    Ok(splice(
        table.value(fid, &c1, triple.tau_index, Aggregation::Ert)?,
        table.value(fid, &c2, triple.tau_index, Aggregation::Ert)?,
        table.value(fid, &c2, phi_min, Aggregation::Ert)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{Dataset, RunRecord};
    use crate::targets::HitLedger;
    use proptest::prelude::*;

    fn cfg(s: &str) -> ModuleConfiguration {
        s.parse().unwrap()
    }

    /// Runs of one configuration: `(instance, hits)`.
    fn records(fid: u32, config: &str, runs: &[(u32, Vec<u64>)]) -> Vec<RunRecord> {
        runs.iter()
            .enumerate()
            .map(|(i, (instance, hits))| {
                let mut h = [None; TARGET_COUNT];
                for (slot, &e) in h.iter_mut().zip(hits) {
                    *slot = Some(e);
                }
                RunRecord {
                    fid,
                    instance: *instance,
                    label: config.parse().unwrap(),
                    run_index: i as u32,
                    seed: 0,
                    switch_eval: None,
                    budget_used: 100_000,
                    ledger: HitLedger::from_hits(h).unwrap(),
                }
            })
            .collect()
    }

    /// Hits growing by `early` per target up to `knee`, then by `late`.
    fn profile(early: u64, late: u64, knee: usize, reach: usize) -> Vec<u64> {
        let mut out = Vec::new();
        let mut at = 0;
        for i in 0..reach {
            at += if i < knee { early } else { late };
            out.push(at);
        }
        out
    }

    fn table(rows: Vec<Vec<RunRecord>>) -> PerformanceTable {
        PerformanceTable::from_dataset(&Dataset::new(rows.concat()), 100_000)
    }

    fn st(t: &AdaptiveTriple) -> (String, String, usize) {
        (t.c1.to_string(), t.c2.to_string(), t.tau_index)
    }

    #[test]
    fn single_reaching_configuration_gives_identity_triple() {
        let t = table(vec![
            records(1, "00000000000", &[(1, profile(10, 10, 0, 51)), (2, profile(10, 10, 0, 51))]),
            records(1, "01000000000", &[(1, profile(5, 5, 0, 40)), (2, profile(5, 5, 0, 51))]),
        ]);
        let r = select_original(&t, 1).unwrap();
        assert_eq!(r.phi_min, 50);
        let e = r.entries[0];
        assert_eq!(e.triple.c1, e.triple.c2);
        assert_eq!(e.triple.c1, cfg("00000000000"));
        assert_eq!(e.predicted, 510.0);
    }

    #[test]
    fn crossing_profiles_switch_at_the_knee() {
        // A is fast until target 20, B afterwards.
        let a = profile(10, 40, 20, 51);
        let b = profile(30, 10, 20, 51);
        let t = table(vec![
            records(1, "00000000000", &[(1, a.clone()), (2, a)]),
            records(1, "01000000000", &[(1, b.clone()), (2, b)]),
        ]);
        let r = select_original(&t, 1).unwrap();
        let e = r.entries[0];
        assert_eq!(st(&e.triple), ("00000000000".into(), "01000000000".into(), 19));
        // 200 before the knee with A, then 31 targets at 10 with B.
        assert_eq!(e.predicted, 200.0 + 310.0);
        let best_static: f64 = 200.0 + 31.0 * 40.0;
        assert!(e.predicted < best_static.min(600.0 + 310.0));
    }

    #[test]
    fn ties_prefer_the_smaller_representation() {
        let p = profile(10, 10, 0, 51);
        let t = table(vec![
            records(1, "01000000000", &[(1, p.clone())]),
            records(1, "00100000000", &[(1, p.clone())]),
            records(1, "10000000000", &[(1, p)]),
        ]);
        let e = select_original(&t, 1).unwrap().entries[0];
        assert_eq!(st(&e.triple), ("00100000000".into(), "00100000000".into(), 0));
    }

    #[test]
    fn restart_configurations_are_not_eligible() {
        let t = table(vec![
            records(1, "00000000001", &[(1, profile(1, 1, 0, 51))]),
            records(1, "00000000000", &[(1, profile(10, 10, 0, 40))]),
        ]);
        let r = select_original(&t, 1).unwrap();
        assert_eq!(r.phi_min, 39);
        assert_eq!(r.entries[0].triple.c1, cfg("00000000000"));
        let none = table(vec![records(1, "00000000000", &[(1, vec![])])]);
        assert!(matches!(select_original(&none, 1), Err(SelectionError::NoTarget { fid: 1 })));
    }

    #[test]
    fn limited_selection_follows_a_greedy_pass() {
        let c = ["00000000000", "10000000000", "01000000000", "00100000000", "00010000000"];
        let stream: Vec<(usize, usize)> = vec![
            (0, 1), (0, 2), (0, 3), (0, 4), (1, 4), (2, 4), (3, 4), (1, 0), (1, 2), (2, 0),
            (3, 0), (4, 0), (2, 1), (3, 1), (4, 1),
        ];
        let ranked: Vec<SelectedTriple> = stream
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| SelectedTriple {
                triple: AdaptiveTriple::new(cfg(c[a]), cfg(c[b]), 10).unwrap(),
                predicted: i as f64,
                predicted_ert: None,
            })
            .collect();
        let kept: Vec<f64> = limited_selection(&ranked, LimitPolicy::default(), 50)
            .iter()
            .map(|e| e.predicted)
            .collect();
        // Rejected: (0,4) as the fourth c1 = 0, (4,0) as the fourth c2 = 0,
        // (4,1) as the fourth c2 = 1.
        assert_eq!(kept, vec![0.0, 1.0, 2.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 12.0, 13.0]);
        assert_eq!(limited_selection(&ranked, LimitPolicy::default(), 4).len(), 4);

        let same_c1: Vec<SelectedTriple> = (0..50)
            .map(|i| SelectedTriple {
                triple: AdaptiveTriple::new(cfg(c[0]), cfg(c[1 + i % 4]), i).unwrap(),
                predicted: i as f64,
                predicted_ert: None,
            })
            .collect();
        assert_eq!(limited_selection(&same_c1, LimitPolicy::default(), 50).len(), 3);
    }

    #[test]
    fn windowed_top_one_matches_original_on_clean_data() {
        let a = profile(10, 40, 20, 51);
        let b = profile(30, 10, 20, 51);
        let c = profile(25, 25, 0, 51);
        let t = table(vec![
            records(1, "00000000000", &[(1, a)]),
            records(1, "01000000000", &[(1, b)]),
            records(1, "00100000000", &[(1, c)]),
        ]);
        let original = select_original(&t, 1).unwrap().entries[0].triple;
        let windowed = select_windowed(&t, 1, Aggregation::Mean, 1, None).unwrap();
        let w = windowed.entries[0];
        assert_eq!((w.triple.c1, w.triple.c2), (original.c1, original.c2));
        assert_eq!(windowed.method, Method::SlidingMean);
        let all = select_windowed(&t, 1, Aggregation::Mean, 1000, None).unwrap();
        assert!(all.entries.iter().all(|e| (2..=48).contains(&e.triple.tau_index)));
        assert_eq!(all.entries.iter().filter(|e| e.triple.c1 == e.triple.c2).count(), 1);
        assert!(all.entries.windows(2).all(|w| w[0].predicted <= w[1].predicted));
    }

    #[test]
    fn worst_case_reacts_to_outlier_runs() {
        // A is better on average but has one slow run on instance 2:
        // after target 25 it costs 13 per target on average, 16 in the worst
        // case, against a flat 14 for B.
        let fast = profile(10, 10, 0, 51);
        let slow = profile(10, 22, 25, 51);
        let b = profile(14, 14, 0, 51);
        let t = table(vec![
            records(1, "00000000000", &[(1, fast.clone()), (1, fast.clone()), (2, fast.clone()), (2, slow)]),
            records(1, "01000000000", &[(1, b.clone()), (1, b.clone()), (2, b.clone()), (2, b)]),
        ]);
        let mean = select_windowed(&t, 1, Aggregation::Mean, 1, None).unwrap().entries[0].triple;
        let worst = select_windowed(&t, 1, Aggregation::WorstCase, 1, None).unwrap().entries[0].triple;
        assert_eq!(mean.c2, cfg("00000000000"));
        assert_eq!(worst.c2, cfg("01000000000"));
    }

    #[test]
    fn selection_csv_round_trip() {
        let a = profile(10, 40, 20, 51);
        let b = profile(30, 10, 20, 51);
        let t = table(vec![
            records(1, "00000000000", &[(1, a)]),
            records(1, "01000000000", &[(1, b)]),
        ]);
        let results = vec![
            select_original(&t, 1).unwrap(),
            two_stage_select(&t, 1, 5).unwrap(),
        ];
        let mut buf = Vec::new();
        SelectionResult::write_csv(&results, &mut buf).unwrap();
        assert_eq!(SelectionResult::read_csv(buf.as_slice()).unwrap(), results);
    }

    #[test]
    fn two_stage_candidates_backfill_and_deduplicate() {
        let t = table(vec![
            records(1, "00000000000", &[(1, profile(10, 10, 0, 51))]),
            records(1, "01000000000", &[(1, profile(12, 12, 0, 51))]),
            records(1, "00100000000", &[(1, profile(5, 5, 0, 30))]),
            records(1, "00010000000", &[(1, profile(6, 6, 0, 20))]),
            records(1, "00000000001", &[(1, profile(1, 1, 0, 51))]),
        ]);
        let set = two_stage_candidates(&t, 1, 3, 50, StaticRanking::Aht).unwrap();
        assert_eq!(set.statics, vec![cfg("00000000000"), cfg("01000000000"), cfg("00100000000")]);
        let all = set.configs();
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert!(!all.contains(&cfg("00000000001")));
        let m = rerun_manifest(&[set], vec![1, 2, 3, 4, 5], 50, 1000, 1, 5, "r.csv".into());
        assert_eq!(m.run_count(), all.len() * 250);
    }

    /// Synthetic tables with dyadic means so every sum is exact.
    fn synthetic() -> impl Strategy<Value = PerformanceTable> {
        let reps = ["00000000000", "10000000000", "01000000000", "11000000000", "00100000000"];
        proptest::collection::vec(
            proptest::collection::vec((1u64..60, 30usize..=51), 4),
            2..=5,
        )
        .prop_map(move |configs| {
            let mut rows = Vec::new();
            for (k, runs) in configs.iter().enumerate() {
                let runs: Vec<(u32, Vec<u64>)> = runs
                    .iter()
                    .enumerate()
                    .map(|(r, &(step, reach))| {
                        let knee = (step as usize * 7 + k * 11) % 51;
                        (1 + (r % 2) as u32, profile(step, 1 + (step * 3 + k as u64) % 40, knee, reach))
                    })
                    .collect();
                rows.push(records(1, reps[k], &runs));
            }
            table(rows)
        })
    }

    fn brute_force(t: &PerformanceTable, agg: Aggregation, window: bool) -> Vec<(f64, AdaptiveTriple)> {
        let phi = t.phi_min(1).unwrap();
        let cs: Vec<_> = eligible_configs(t, 1, phi);
        let mut out = Vec::new();
        for &c1 in &cs {
            for &c2 in &cs {
                for split in 0..phi {
                    let (l1, l2) = (RunLabel::Static(c1), RunLabel::Static(c2));
                    let v = if window {
                        sliding_window_value(t, 1, &l1, &l2, split, 2, phi, agg).unwrap()
                    } else {
                        theoretical_ht(t, 1, &l1, &l2, split, phi, agg).unwrap()
                    };
                    if v.is_finite() {
                        out.push((v, AdaptiveTriple { c1, c2, tau_index: split }));
                    }
                }
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn original_is_the_exhaustive_minimum(t in synthetic()) {
            let got = select_original(&t, 1).unwrap().entries[0];
            let want = brute_force(&t, Aggregation::Mean, false)[0];
            prop_assert_eq!(got.predicted, want.0);
            prop_assert_eq!(got.triple, want.1);
        }

        #[test]
        fn windowed_matches_the_filtered_exhaustive_ranking(t in synthetic(), worst in any::<bool>(), limited in any::<bool>()) {
            let agg = if worst { Aggregation::WorstCase } else { Aggregation::Mean };
            let policy = limited.then(LimitPolicy::default);
            let Ok(got) = select_windowed(&t, 1, agg, 12, policy) else {
                return Ok(());
            };
            let mut seen_identity = false;
            let mut c1_uses: HashMap<ModuleConfiguration, usize> = HashMap::new();
            let mut c2_uses: HashMap<ModuleConfiguration, usize> = HashMap::new();
            let mut want = Vec::new();
            for (v, tr) in brute_force(&t, agg, true) {
                if want.len() == 12 {
                    break;
                }
                if tr.c1 == tr.c2 && seen_identity {
                    continue;
                }
                if limited && (c1_uses.get(&tr.c1).copied().unwrap_or(0) >= 3 || c2_uses.get(&tr.c2).copied().unwrap_or(0) >= 3) {
                    continue;
                }
                seen_identity |= tr.c1 == tr.c2;
                *c1_uses.entry(tr.c1).or_default() += 1;
                *c2_uses.entry(tr.c2).or_default() += 1;
                want.push((v, tr));
            }
            let got: Vec<_> = got.entries.iter().map(|e| (e.predicted, e.triple)).collect();
            prop_assert_eq!(got, want);
        }
    }
}
