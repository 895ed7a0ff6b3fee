//! Post-hoc analysis of selected triples and report export.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{AdaptiveTriple, ModuleConfiguration, SamplerKind, BINARY_MODULE_COUNT, MODULE_NAMES};
use crate::harness::RunLabel;
use crate::metrics::{format_value, Aggregation, MetricsError, PerformanceTable};
use crate::selection::SelectionResult;
use crate::targets::target_label;

/// How many of the best achieved ERTs are averaged in summaries.
pub const AVERAGE_OF_BEST: usize = 10;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("selection for f{0} is empty")]
    EmptySelection(u32),
    #[error("best static ERT must be finite and positive, got {0}")]
    StaticErt(f64),
    #[error("f{0}: no static configuration in the table")]
    NoStatic(u32),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

const SAMPLERS: [SamplerKind; 3] = [SamplerKind::Gaussian, SamplerKind::Sobol, SamplerKind::Halton];

/// Module activation counts among the triples of one selection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActivationMatrix {
    pub fid: u32,
    pub triples: usize,
    /// `binary[j][slot]`: triples whose C1 (slot 0) or C2 (slot 1) has binary
    /// module `j` switched on.
    pub binary: [[usize; 2]; BINARY_MODULE_COUNT],
    /// `sampler[option][slot]`.
    pub sampler: [[usize; 2]; 3],
}

pub fn activation_matrix(selection: &SelectionResult) -> ActivationMatrix {
    let mut m = ActivationMatrix {
        fid: selection.fid,
        triples: selection.entries.len(),
        binary: [[0; 2]; BINARY_MODULE_COUNT],
        sampler: [[0; 2]; 3],
    };
    for e in &selection.entries {
        for (slot, c) in [e.triple.c1, e.triple.c2].iter().enumerate() {
            for (j, on) in c.binary_modules().iter().enumerate() {
                m.binary[j][slot] += usize::from(*on);
            }
            let option = SAMPLERS.iter().position(|s| *s == c.sampler).expect("known sampler");
            m.sampler[option][slot] += 1;
        }
    }
    m
}

impl ActivationMatrix {
    /// One row per module (nine binary plus the sampler) and slot:
    /// `fid,module_index,module,slot,count,gaussian,sobol,halton`. For the
    /// sampler, `count` is the number of quasi-random samplers.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["fid", "module_index", "module", "slot", "count", "gaussian", "sobol", "halton"])?;
        for slot in 0..2 {
            let slot_name = ["c1", "c2"][slot];
            for j in 0..BINARY_MODULE_COUNT {
                w.write_record([
                    self.fid.to_string(),
                    (j + 1).to_string(),
                    MODULE_NAMES[j].to_string(),
                    slot_name.to_string(),
                    self.binary[j][slot].to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                ])?;
            }
            let s = self.sampler;
            w.write_record([
                self.fid.to_string(),
                (BINARY_MODULE_COUNT + 1).to_string(),
                MODULE_NAMES[BINARY_MODULE_COUNT].to_string(),
                slot_name.to_string(),
                (s[1][slot] + s[2][slot]).to_string(),
                s[0][slot].to_string(),
                s[1][slot].to_string(),
                s[2][slot].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Heatmap, one row per module and one column per slot, shaded by
    /// count / triples.
    pub fn to_svg(&self) -> String {
        let (cell_w, cell_h, left, top) = (70.0, 24.0, 110.0, 40.0);
        let rows = BINARY_MODULE_COUNT + 1;
        let width = left + 2.0 * cell_w + 20.0;
        let height = top + rows as f64 * cell_h + 20.0;
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<text x="{left}" y="16">f{} module activations ({} triples)</text>"#, self.fid, self.triples);
        for (slot, name) in ["C1", "C2"].iter().enumerate() {
            let x = left + slot as f64 * cell_w + cell_w / 2.0;
            let _ = writeln!(svg, r#"<text x="{x}" y="{}" text-anchor="middle">{name}</text>"#, top - 6.0);
        }
        let n = self.triples.max(1) as f64;
        for row in 0..rows {
            let y = top + row as f64 * cell_h;
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                left - 6.0,
                y + cell_h * 0.7,
                MODULE_NAMES[row]
            );
            for slot in 0..2 {
                let count = if row < BINARY_MODULE_COUNT {
                    self.binary[row][slot]
                } else {
                    self.sampler[1][slot] + self.sampler[2][slot]
                };
                let x = left + slot as f64 * cell_w;
                let _ = writeln!(
                    svg,
                    r##"<rect x="{x}" y="{y}" width="{cell_w}" height="{cell_h}" fill="#1f4e9c" fill-opacity="{:.4}" stroke="#999"/>"##,
                    count as f64 / n
                );
                let _ = writeln!(
                    svg,
                    r#"<text x="{}" y="{}" text-anchor="middle">{count}</text>"#,
                    x + cell_w / 2.0,
                    y + cell_h * 0.7
                );
            }
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// Largest mean absolute activation difference between C1 and C2 over the
/// binary modules. The sampler is ignored.
pub fn module_difference(triples: &[AdaptiveTriple]) -> Result<f64, AnalysisError> {
    if triples.is_empty() {
        return Err(AnalysisError::EmptySelection(0));
    }
    let n = triples.len() as f64;
    let mut diffs = [0usize; BINARY_MODULE_COUNT];
    for t in triples {
        let (a, b) = (t.c1.binary_modules(), t.c2.binary_modules());
        for j in 0..BINARY_MODULE_COUNT {
            diffs[j] += usize::from(a[j] != b[j]);
        }
    }
    Ok(diffs.iter().map(|&d| d as f64 / n).fold(0.0, f64::max))
}

/// Percentage by which `adaptive` improves on `best_static`; negative
/// infinity when the adaptive configuration never succeeded.
pub fn relative_improvement(best_static: f64, adaptive: f64) -> Result<f64, AnalysisError> {
    if !(best_static.is_finite() && best_static > 0.0) {
        return Err(AnalysisError::StaticErt(best_static));
    }
    if adaptive.is_infinite() {
        return Ok(f64::NEG_INFINITY);
    }
    Ok((best_static - adaptive) / best_static * 100.0)
}

/// Percentage of achieved ERTs strictly below `best_static`.
pub fn improvement_fraction(achieved: &[f64], best_static: f64) -> f64 {
    if achieved.is_empty() {
        return 0.0;
    }
    let better = achieved.iter().filter(|&&e| e < best_static).count();
    better as f64 / achieved.len() as f64 * 100.0
}

/// Mean of the `k` smallest values (all of them if fewer).
pub fn average_of_best(values: &[f64], k: usize) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.truncate(k);
    if v.is_empty() {
        return f64::INFINITY;
    }
    if v.iter().any(|x| x.is_infinite()) {
        return f64::INFINITY;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// A selected triple next to what it achieved when run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TripleOutcome {
    pub triple: AdaptiveTriple,
    pub predicted_ert: f64,
    /// `None` when the triple has no runs in the table.
    pub achieved_ert: Option<f64>,
}

/// One row of the improvement table.
#[derive(Clone, Debug, PartialEq)]
pub struct ImprovementSummary {
    pub fid: u32,
    pub target: usize,
    pub best_static: ModuleConfiguration,
    pub best_static_ert: f64,
    pub best_triple: Option<AdaptiveTriple>,
    pub best_adaptive_ert: f64,
    pub average_best_ert: f64,
    pub improvement: f64,
    pub improvement_average: f64,
    pub improvement_fraction: f64,
    pub module_difference: f64,
}

/// Everything reported for one function.
#[derive(Clone, Debug, PartialEq)]
pub struct FidReport {
    pub selection: SelectionResult,
    pub activation: ActivationMatrix,
    pub outcomes: Vec<TripleOutcome>,
    pub summary: ImprovementSummary,
}

/// Compares a selection with achieved performance. `table` must hold the
/// static runs used as baseline and, for achieved values, the adaptive runs
/// of the selected triples.
pub fn analyze(selection: &SelectionResult, table: &PerformanceTable) -> Result<FidReport, AnalysisError> {
    let fid = selection.fid;
    if selection.entries.is_empty() {
        return Err(AnalysisError::EmptySelection(fid));
    }
    let target = selection.phi_min;
    let (best_static_ert, best_static) = table
        .static_configs(fid)
        .into_iter()
        .filter(ModuleConfiguration::is_switchable)
        .map(|c| {
            table
                .value(fid, &RunLabel::Static(c), target, Aggregation::Ert)
                .map(|v| (v, c))
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .ok_or(AnalysisError::NoStatic(fid))?;

    let mut outcomes = Vec::with_capacity(selection.entries.len());
    for e in &selection.entries {
        let predicted_ert = match e.predicted_ert {
            Some(p) => p,
            None => crate::selection::predicted_ert(table, fid, &e.triple, target)?,
        };
        let label = RunLabel::Adaptive(e.triple);
        let achieved_ert = table.value(fid, &label, target, Aggregation::Ert).ok();
        outcomes.push(TripleOutcome {
            triple: e.triple,
            predicted_ert,
            achieved_ert,
        });
    }
    let achieved: Vec<(f64, AdaptiveTriple)> = outcomes
        .iter()
        .filter_map(|o| o.achieved_ert.map(|a| (a, o.triple)))
        .collect();
    let values: Vec<f64> = achieved.iter().map(|a| a.0).collect();
    let best = achieved
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .copied();
    let best_adaptive_ert = best.map_or(f64::INFINITY, |b| b.0);
    let average_best_ert = average_of_best(&values, AVERAGE_OF_BEST);
    let (improvement, improvement_average) = if best_static_ert.is_finite() {
        (
            relative_improvement(best_static_ert, best_adaptive_ert)?,
            relative_improvement(best_static_ert, average_best_ert)?,
        )
    } else {
        (f64::NAN, f64::NAN)
    };
    let summary = ImprovementSummary {
        fid,
        target,
        best_static,
        best_static_ert,
        best_triple: best.map(|b| b.1),
        best_adaptive_ert,
        average_best_ert,
        improvement,
        improvement_average,
        improvement_fraction: improvement_fraction(&values, best_static_ert),
        module_difference: module_difference(&selection.triples())?,
    };
    Ok(FidReport {
        selection: selection.clone(),
        activation: activation_matrix(selection),
        outcomes,
        summary,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), AnalysisError> {
    fs::write(path, bytes).map_err(|source| AnalysisError::Io {
        path: path.to_owned(),
        source,
    })
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing CSV to memory");
    buf
}

fn write_outcomes<W: io::Write>(fid: u32, outcomes: &[TripleOutcome], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["fid", "c1", "c2", "tau_index", "predicted_ert", "achieved_ert"])?;
    for o in outcomes {
        w.write_record([
            fid.to_string(),
            o.triple.c1.to_string(),
            o.triple.c2.to_string(),
            o.triple.tau_index.to_string(),
            format_value(o.predicted_ert),
            o.achieved_ert.map(format_value).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the improvement table, one row per report.
pub fn write_improvement_table<W: io::Write>(reports: &[FidReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "fid",
        "target_index",
        "target",
        "best_static",
        "best_static_ert",
        "best_triple",
        "best_adaptive_ert",
        "average_best_ert",
        "improvement_pct",
        "improvement_average_pct",
        "improvement_fraction_pct",
        "module_difference",
    ])?;
    for r in reports {
        let s = &r.summary;
        w.write_record([
            s.fid.to_string(),
            s.target.to_string(),
            target_label(s.target),
            s.best_static.to_string(),
            format_value(s.best_static_ert),
            s.best_triple.map(|t| t.to_string()).unwrap_or_default(),
            format_value(s.best_adaptive_ert),
            format_value(s.average_best_ert),
            format_value(s.improvement),
            format_value(s.improvement_average),
            format_value(s.improvement_fraction),
            format_value(s.module_difference),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Predicted against achieved ERT, log-scaled, with the diagonal.
pub fn scatter_svg(fid: u32, outcomes: &[TripleOutcome]) -> String {
    let points: Vec<(f64, f64)> = outcomes
        .iter()
        .filter_map(|o| match o.achieved_ert {
            Some(a) if a.is_finite() && o.predicted_ert.is_finite() && a > 0.0 && o.predicted_ert > 0.0 => {
                Some((o.predicted_ert.log10(), a.log10()))
            }
            _ => None,
        })
        .collect();
    let (size, pad) = (360.0, 50.0);
    let (mut lo, mut hi) = points
        .iter()
        .flat_map(|p| [p.0, p.1])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let map = |v: f64| (v - lo) / (hi - lo) * size;
    let mut svg = String::new();
    let total = size + 2.0 * pad;
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<text x="{pad}" y="20">f{fid} predicted vs achieved ERT (log10)</text>"#);
    let _ = writeln!(
        svg,
        r##"<rect x="{pad}" y="{pad}" width="{size}" height="{size}" fill="none" stroke="#333"/>"##
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{pad}" y1="{}" x2="{}" y2="{pad}" stroke="#aaa" stroke-dasharray="4 3"/>"##,
        pad + size,
        pad + size
    );
    for (label, x, y) in [
        (format!("{lo:.2}"), pad, pad + size + 16.0),
        (format!("{hi:.2}"), pad + size, pad + size + 16.0),
    ] {
        let _ = writeln!(svg, r#"<text x="{x}" y="{y}" text-anchor="middle">{label}</text>"#);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">predicted</text>"#, pad + size / 2.0, total - 8.0);
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">achieved</text>"#,
        pad + size / 2.0,
        pad + size / 2.0
    );
    for (p, a) in points {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#c0392b" fill-opacity="0.7"/>"##,
            pad + map(p),
            pad + size - map(a)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes every report product into `out_dir` and returns the files written,
/// which are also listed in `manifest.txt`.
pub fn export_reports(reports: &[FidReport], out_dir: &Path) -> Result<Vec<PathBuf>, AnalysisError> {
    fs::create_dir_all(out_dir).map_err(|source| AnalysisError::Io {
        path: out_dir.to_owned(),
        source,
    })?;
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    let mut emit = |name: String, bytes: Vec<u8>, what: String| -> Result<(), AnalysisError> {
        let path = out_dir.join(&name);
        write_file(&path, &bytes)?;
        files.push((path, format!("{name}\t{what}")));
        Ok(())
    };
    for r in reports {
        let fid = r.summary.fid;
        emit(
            format!("activation_f{fid}.csv"),
            csv_bytes(|b| r.activation.write_csv(b)),
            "module activation counts per slot".into(),
        )?;
        emit(
            format!("activation_f{fid}.svg"),
            r.activation.to_svg().into_bytes(),
            "module activation heatmap".into(),
        )?;
        emit(
            format!("predicted_vs_achieved_f{fid}.csv"),
            csv_bytes(|b| write_outcomes(fid, &r.outcomes, b)),
            "predicted and achieved ERT per triple".into(),
        )?;
        emit(
            format!("predicted_vs_achieved_f{fid}.svg"),
            scatter_svg(fid, &r.outcomes).into_bytes(),
            "predicted against achieved ERT".into(),
        )?;
        emit(
            format!("selection_f{fid}.csv"),
            csv_bytes(|b| SelectionResult::write_csv(std::slice::from_ref(&r.selection), b)),
            "selected triples".into(),
        )?;
    }
    emit(
        "improvement.csv".into(),
        csv_bytes(|b| write_improvement_table(reports, b)),
        "improvement over the best static configuration".into(),
    )?;
    let mut manifest = String::from("# file\tcontents\n");
    for (_, line) in &files {
        manifest.push_str(line);
        manifest.push('\n');
    }
    let manifest_path = out_dir.join("manifest.txt");
    write_file(&manifest_path, manifest.as_bytes())?;
    let mut paths: Vec<PathBuf> = files.into_iter().map(|(p, _)| p).collect();
    paths.push(manifest_path);
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{Dataset, RunRecord};
    use crate::selection::{Method, SelectedTriple};
    use crate::targets::{HitLedger, TARGET_COUNT};
    use proptest::prelude::*;

    fn cfg(s: &str) -> ModuleConfiguration {
        s.parse().unwrap()
    }

    fn triple(a: &str, b: &str) -> AdaptiveTriple {
        AdaptiveTriple::new(cfg(a), cfg(b), 10).unwrap()
    }

    fn selection(triples: Vec<AdaptiveTriple>) -> SelectionResult {
        SelectionResult {
            fid: 10,
            method: Method::SlidingMean,
            phi_min: 50,
            entries: triples
                .into_iter()
                .map(|triple| SelectedTriple {
                    triple,
                    predicted: 1.0,
                    predicted_ert: None,
                })
                .collect(),
        }
    }

    #[test]
    fn table_three_improvements() {
        let f5 = relative_improvement(1461.0, 1110.0).unwrap();
        assert!((f5 - 24.0).abs() < 0.1, "{f5}");
        let f2 = relative_improvement(1448.0, 1236.0).unwrap();
        assert!((f2 - 14.6).abs() < 0.1, "{f2}");
        assert_eq!(relative_improvement(800.0, 800.0).unwrap(), 0.0);
        assert_eq!(relative_improvement(800.0, f64::INFINITY).unwrap(), f64::NEG_INFINITY);
        assert!(relative_improvement(f64::INFINITY, 1.0).is_err());
        assert!(relative_improvement(0.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn improvement_inverts_scaling(s in 1.0f64..1e6, p in -100.0f64..100.0) {
            let got = relative_improvement(s, s * (1.0 - p / 100.0)).unwrap();
            prop_assert!((got - p).abs() < 1e-9);
        }

        #[test]
        fn module_difference_ignores_order(mask in proptest::collection::vec((0u16..512, 0u16..512), 1..20), seed in any::<u64>()) {
            let to_cfg = |m: u16| -> ModuleConfiguration {
                let digits: String = (0..9).map(|j| if m >> j & 1 == 1 { '1' } else { '0' }).chain("00".chars()).collect();
                digits.parse().unwrap()
            };
            let mut triples: Vec<AdaptiveTriple> = mask.iter().map(|&(a, b)| AdaptiveTriple::new(to_cfg(a), to_cfg(b), 5).unwrap()).collect();
            let before = module_difference(&triples).unwrap();
            prop_assert!((0.0..=1.0).contains(&before));
            let k = (seed as usize) % triples.len();
            triples.rotate_left(k);
            triples.reverse();
            prop_assert_eq!(module_difference(&triples).unwrap(), before);
        }
    }

    #[test]
    fn module_difference_examples() {
        let same = vec![triple("10101010100", "10101010100"); 4];
        assert_eq!(module_difference(&same).unwrap(), 0.0);
        let flip6 = vec![triple("00000100000", "00000000000"), triple("00000000010", "00000100010")];
        assert_eq!(module_difference(&flip6).unwrap(), 1.0);
        let half3 = vec![
            triple("00100000000", "00000000000"),
            triple("00000000000", "00100000000"),
            triple("00000000000", "00000000000"),
            triple("11000000000", "11000000000"),
        ];
        assert_eq!(module_difference(&half3).unwrap(), 0.5);
        // The sampler does not count.
        assert_eq!(module_difference(&[triple("00000000000", "00000000020")]).unwrap(), 0.0);
        assert!(module_difference(&[]).is_err());
    }

    #[test]
    fn activation_counts() {
        let tpa_off: Vec<_> = (0..50).map(|_| triple("00000010000", "00000000000")).collect();
        let m = activation_matrix(&selection(tpa_off));
        assert_eq!(m.binary[6], [50, 0]);
        assert_eq!(m.triples, 50);

        let single = activation_matrix(&selection(vec![triple("00000000000", "00000000000")]));
        assert!(single.binary.iter().all(|r| *r == [0, 0]));
        assert_eq!(single.sampler, [[1, 1], [0, 0], [0, 0]]);
        assert_eq!(single, activation_matrix(&selection(vec![triple("00000000000", "00000000000")])));

        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 20);
        assert!(text.contains("10,7,tpa,c1,50,,,"));
        assert!(text.contains("10,10,sampler,c2,0,50,0,0"));
        let svg = m.to_svg();
        assert!(svg.contains(r#"fill-opacity="1.0000""#));
        assert!(svg.contains(r#"fill-opacity="0.0000""#));
    }

    #[test]
    fn fractions_and_averages() {
        let achieved = [90.0, 110.0, 95.0, f64::INFINITY];
        assert_eq!(improvement_fraction(&achieved, 100.0), 50.0);
        assert_eq!(improvement_fraction(&achieved, 10.0), 0.0);
        assert_eq!(average_of_best(&achieved, 2), 92.5);
        assert_eq!(average_of_best(&achieved, 10), f64::INFINITY);
        assert_eq!(average_of_best(&[], 10), f64::INFINITY);
    }

    fn rec(label: &str, run: u32, step: u64) -> RunRecord {
        let mut h = [None; TARGET_COUNT];
        for (i, slot) in h.iter_mut().enumerate() {
            *slot = Some(step * (i as u64 + 1));
        }
        RunRecord {
            fid: 10,
            instance: 1,
            label: label.parse().unwrap(),
            run_index: run,
            seed: 0,
            switch_eval: None,
            budget_used: 0,
            ledger: HitLedger::from_hits(h).unwrap(),
        }
    }

    #[test]
    fn analyze_and_export() {
        let t1 = triple("00000010000", "00000000000");
        let t2 = triple("00000010000", "01000000000");
        let records = vec![
            rec("00000000000", 0, 20),
            rec("01000000000", 0, 22),
            rec("00000010000", 0, 30),
            rec(&t1.to_string(), 0, 18),
            rec(&t2.to_string(), 0, 21),
        ];
        let table = PerformanceTable::from_dataset(&Dataset::new(records), 10_000);
        let report = analyze(&selection(vec![t1, t2]), &table).unwrap();
        let s = &report.summary;
        assert_eq!(s.best_static, cfg("00000000000"));
        assert_eq!(s.best_static_ert, 1020.0);
        assert_eq!(s.best_adaptive_ert, 918.0);
        assert_eq!(s.best_triple, Some(t1));
        assert!((s.improvement - 10.0).abs() < 1e-12);
        assert_eq!(s.improvement_fraction, 50.0);
        assert_eq!(s.module_difference, 1.0);
        // spliced: 30*11 - 20*11 + 20*51
        assert_eq!(report.outcomes[0].predicted_ert, 1130.0);

        let dir = tempfile::tempdir().unwrap();
        let files = export_reports(&[report], dir.path()).unwrap();
        assert_eq!(files.len(), 7);
        let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        assert_eq!(manifest.lines().count(), 1 + 6);
        let pairs = fs::read_to_string(dir.path().join("predicted_vs_achieved_f10.csv")).unwrap();
        assert_eq!(pairs.lines().count(), 3);
        assert!(fs::read_to_string(dir.path().join("predicted_vs_achieved_f10.svg"))
            .unwrap()
            .contains("<circle"));
    }
}
