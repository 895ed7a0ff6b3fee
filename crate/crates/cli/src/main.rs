use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use modcma::analysis::{analyze, export_reports, FidReport};
use modcma::config::{enumerate_space, AdaptiveTriple};
use modcma::harness::{execute_campaign, CampaignManifest, Dataset, RunLabel};
use modcma::metrics::{Aggregation, PerformanceTable};
use modcma::selection::{
    rerun_manifest, select_original, select_windowed, two_stage_candidates, two_stage_select,
    LimitPolicy, SelectionResult, StaticRanking, DEFAULT_QUOTA,
};
use modcma::targets::target_label;

#[derive(Parser)]
#[command(name = "modcma", version, about = "Modular CMA-ES campaigns, adaptive-configuration selection and analysis")]
struct Cli {
    /// Directory that relative output paths are written to.
    #[arg(long, global = true, env = "MODCMA_OUT", default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count (or list) the configuration space.
    Enumerate {
        /// Only configurations without a restart scheme.
        #[arg(long)]
        no_restarts: bool,
        /// Print every configuration instead of the count.
        #[arg(long)]
        list: bool,
    },
    /// Run the static configurations of a campaign manifest.
    RunStatic(RunArgs),
    /// Run the adaptive triples of a campaign manifest.
    RunAdaptive {
        #[command(flatten)]
        run: RunArgs,
        /// Take the triples from a selection file instead of the manifest.
        #[arg(long)]
        selection: Option<PathBuf>,
    },
    /// Write the performance table (AHT, ERT, worst case per target).
    Metrics {
        #[command(flatten)]
        data: DataArgs,
        /// Output CSV, relative to the output directory; `-` for stdout.
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Select adaptive triples from static runs.
    Select(SelectArgs),
    /// Second stage of the two-stage method, on the rerun data.
    TwoStage {
        #[command(flatten)]
        data: DataArgs,
        /// Functions to select for (default: every function in the data).
        #[arg(long = "fid")]
        fids: Vec<u32>,
        /// Triples kept per function.
        #[arg(long, default_value_t = DEFAULT_QUOTA)]
        top_k: usize,
        /// Output CSV, relative to the output directory; `-` for stdout.
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
    /// Print the improvement summary of selected triples.
    Analyze(AnalysisArgs),
    /// Write activation, predicted-vs-achieved and improvement reports.
    Export {
        #[command(flatten)]
        analysis: AnalysisArgs,
        /// Report directory, relative to the output directory.
        #[arg(long, default_value = "reports")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Campaign manifest (key = value lines).
    #[arg(long)]
    manifest: PathBuf,
    /// Parallel runs.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset CSV files; records are merged.
    #[arg(long = "data", required = true)]
    data: Vec<PathBuf>,
    /// Per-run budget charged to failed runs in the ERT.
    #[arg(long)]
    budget: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Original,
    SlidingMean,
    SlidingWorst,
    TwoStage,
}

#[derive(Clone, Copy, ValueEnum)]
enum RankingArg {
    Aht,
    Ert,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Functions to select for (default: every function in the data).
    #[arg(long = "fid")]
    fids: Vec<u32>,
    /// Triples kept per function by the windowed methods.
    #[arg(long, default_value_t = DEFAULT_QUOTA)]
    top_k: usize,
    /// Do not cap how often a configuration fills each slot.
    #[arg(long)]
    unlimited: bool,
    /// Output CSV for selections, relative to the output directory; `-` for stdout.
    #[arg(long, default_value = "-")]
    out: PathBuf,
    /// two-stage: where to write the rerun manifest.
    #[arg(long, default_value = "rerun_manifest.txt")]
    rerun_manifest: PathBuf,
    /// two-stage: dataset path the rerun manifest points to.
    #[arg(long, default_value = "rerun.csv")]
    rerun_output: PathBuf,
    /// two-stage: runs per instance in the rerun.
    #[arg(long, default_value_t = 50)]
    rerun_runs: u32,
    /// two-stage: instances in the rerun.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4, 5])]
    rerun_instances: Vec<u32>,
    /// two-stage: base seed of the rerun.
    #[arg(long, default_value_t = 1)]
    rerun_seed: u64,
    /// two-stage: problem dimension of the rerun.
    #[arg(long, default_value_t = 5)]
    dim: usize,
    /// two-stage: statics kept from the first stage.
    #[arg(long, default_value_t = DEFAULT_QUOTA)]
    static_quota: usize,
    /// two-stage: rank statics by AHT or ERT.
    #[arg(long, value_enum, default_value = "aht")]
    ranking: RankingArg,
}

#[derive(Args)]
struct AnalysisArgs {
    /// Selection CSV.
    #[arg(long)]
    selection: PathBuf,
    /// Datasets holding the static baseline and the adaptive runs.
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }
}

fn main() -> ExitCode {

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Data(m)) if m.contains("Broken pipe") => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("modcma: {e}");
            match e {
                CliError::Usage(_) => ExitCode::from(1),
                CliError::Data(_) => ExitCode::from(2),
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let out_dir = cli.out_dir;
    match cli.command {
        Command::Enumerate { no_restarts, list } => {
            let space = enumerate_space(!no_restarts);
            let mut out = io::stdout().lock();
            if list {
                for c in space {
                    writeln!(out, "{c}").map_err(CliError::data)?;
                }
            } else {
                writeln!(out, "{}", space.len()).map_err(CliError::data)?;
            }
            Ok(())
        }
        Command::RunStatic(args) => {
            let manifest = CampaignManifest::load(&args.manifest).map_err(CliError::data)?;
            if manifest.labels.iter().any(|l| matches!(l, RunLabel::Adaptive(_))) {
                return Err(CliError::Usage(
                    "manifest lists triples; use run-adaptive".into(),
                ));
            }
            campaign(&manifest, args.workers)
        }
        Command::RunAdaptive { run, selection } => {
            let manifest = match selection {
                Some(path) => {
                    let triples: BTreeSet<AdaptiveTriple> = read_selection(&path)?
                        .iter()
                        .flat_map(SelectionResult::triples)
                        .collect();
                    let labels = triples.into_iter().map(RunLabel::Adaptive).collect();
                    CampaignManifest::load_with_labels(&run.manifest, labels)
                }
                None => CampaignManifest::load(&run.manifest),
            }
            .map_err(CliError::data)?;
            if manifest.labels.iter().any(|l| matches!(l, RunLabel::Static(_))) {
                return Err(CliError::Usage(
                    "manifest lists static configurations; use run-static".into(),
                ));
            }
            campaign(&manifest, run.workers)
        }
        Command::Metrics { data, out } => {
            let table = load_table(&data)?;
            let mut w = open_output(&out_dir, &out)?;
            table.write_csv(&mut w).map_err(CliError::data)?;
            Ok(())
        }
        Command::Select(args) => select(&out_dir, args),
        Command::TwoStage {
            data,
            fids,
            top_k,
            out,
        } => {
            let table = load_table(&data)?;
            let mut results = Vec::new();
            for fid in fid_list(&table, fids) {
                let r = two_stage_select(&table, fid, top_k).map_err(CliError::data)?;
                eprintln!(
                    "f{fid}: {} triples at target {}",
                    r.entries.len(),
                    target_label(r.phi_min)
                );
                results.push(r);
            }
            write_selection(&out_dir, &out, &results)
        }
        Command::Analyze(args) => {
            let reports = reports(&args)?;
            print_summary(&reports);
            Ok(())
        }
        Command::Export { analysis, out } => {
            let reports = reports(&analysis)?;
            let dir = resolve(&out_dir, &out);
            let files = export_reports(&reports, &dir).map_err(CliError::data)?;
            for f in files {
                println!("{}", f.display());
            }
            Ok(())
        }
    }
}

fn campaign(manifest: &CampaignManifest, workers: usize) -> Result<(), CliError> {
    if workers == 0 {
        return Err(CliError::Usage("--workers must be positive".into()));
    }
    let outcome = execute_campaign(manifest, workers).map_err(CliError::data)?;
    eprintln!(
        "{} runs: {} executed, {} already present, {} failed -> {}",
        manifest.run_count(),
        outcome.executed,
        outcome.reused,
        outcome.failures.len(),
        manifest.output.display()
    );
    for f in &outcome.failures {
        eprintln!("failed: {} (seed {}): {}", f.key, f.seed, f.message);
    }
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Data(format!("{} runs failed", outcome.failures.len())))
    }
}

fn select(out_dir: &Path, args: SelectArgs) -> Result<(), CliError> {
    let table = load_table(&args.data)?;
    let fids = fid_list(&table, args.fids.clone());
    let limit = (!args.unlimited).then(LimitPolicy::default);
    let mut results = Vec::new();
    match args.method {
        MethodArg::Original => {
            for fid in fids {
                results.push(select_original(&table, fid).map_err(CliError::data)?);
            }
        }
        MethodArg::SlidingMean | MethodArg::SlidingWorst => {
            let agg = if matches!(args.method, MethodArg::SlidingMean) {
                Aggregation::Mean
            } else {
                Aggregation::WorstCase
            };
            for fid in fids {
                results.push(select_windowed(&table, fid, agg, args.top_k, limit).map_err(CliError::data)?);
            }
        }
        MethodArg::TwoStage => {
            let ranking = match args.ranking {
                RankingArg::Aht => StaticRanking::Aht,
                RankingArg::Ert => StaticRanking::Ert,
            };
            let mut sets = Vec::new();
            for fid in fids {
                let set = two_stage_candidates(&table, fid, args.static_quota, args.top_k, ranking)
                    .map_err(CliError::data)?;
                eprintln!(
                    "f{fid}: {} candidates ({} statics, {} from triples)",
                    set.configs().len(),
                    set.statics.len(),
                    set.from_triples.len()
                );
                sets.push(set);
            }
            let manifest_path = resolve(out_dir, &args.rerun_manifest);
            let manifest = rerun_manifest(
                &sets,
                args.rerun_instances,
                args.rerun_runs,
                table.budget(),
                args.rerun_seed,
                args.dim,
                args.rerun_output,
            );
            if let Some(dir) = manifest_path.parent() {
                std::fs::create_dir_all(dir).map_err(CliError::data)?;
            }
            std::fs::write(&manifest_path, manifest.to_text())
                .map_err(|e| CliError::Data(format!("{}: {e}", manifest_path.display())))?;
            println!("{}", manifest_path.display());
            return Ok(());
        }
    }
    for r in &results {
        if let Some(best) = r.entries.first() {
            eprintln!(
                "f{}: best {} predicted {} (target {})",
                r.fid,
                best.triple,
                sig4(best.predicted),
                target_label(r.phi_min)
            );
        }
    }
    write_selection(out_dir, &args.out, &results)
}

fn reports(args: &AnalysisArgs) -> Result<Vec<FidReport>, CliError> {
    let table = load_table(&args.data)?;
    read_selection(&args.selection)?
        .iter()
        .map(|s| analyze(s, &table).map_err(CliError::data))
        .collect()
}

fn print_summary(reports: &[FidReport]) {
    println!(
        "{:>4} {:>7} {:>12} {:>10} {:>10} {:>10} {:>9} {:>9} {:>7} {:>6}",
        "fid", "target", "best static", "ERT", "adaptive", "avg best", "impr %", "avg %", "frac %", "M"
    );
    for r in reports {
        let s = &r.summary;
        println!(
            "{:>4} {:>7} {:>12} {:>10} {:>10} {:>10} {:>9} {:>9} {:>7} {:>6}",
            s.fid,
            target_label(s.target),
            s.best_static.to_string(),
            sig4(s.best_static_ert),
            sig4(s.best_adaptive_ert),
            sig4(s.average_best_ert),
            sig4(s.improvement),
            sig4(s.improvement_average),
            sig4(s.improvement_fraction),
            sig4(s.module_difference)
        );
    }
}

/// Four significant digits.
fn sig4(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "-".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let magnitude = v.abs().log10().floor() as i32;
    if magnitude >= 4 {
        format!("{v:.3e}")
    } else {
        format!("{v:.*}", (3 - magnitude).max(0) as usize)
    }
}

fn load_table(args: &DataArgs) -> Result<PerformanceTable, CliError> {
    let mut dataset = Dataset::default();
    for path in &args.data {
        if !path.exists() {
            return Err(CliError::Data(format!("{}: no such file", path.display())));
        }
        dataset.merge(Dataset::load(path).map_err(CliError::data)?);
    }
    if dataset.is_empty() {
        return Err(CliError::Data("no run records in the given datasets".into()));
    }
    Ok(PerformanceTable::from_dataset(&dataset, args.budget))
}

fn fid_list(table: &PerformanceTable, fids: Vec<u32>) -> Vec<u32> {
    if fids.is_empty() {
        table.fids().into_iter().collect()
    } else {
        fids
    }
}

fn read_selection(path: &Path) -> Result<Vec<SelectionResult>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let results = SelectionResult::read_csv(file)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if results.is_empty() {
        return Err(CliError::Data(format!("{}: no triples", path.display())));
    }
    Ok(results)
}

fn resolve(out_dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_owned()
    } else {
        out_dir.join(path)
    }
}

fn open_output(out_dir: &Path, path: &Path) -> Result<Box<dyn Write>, CliError> {
    if path == Path::new("-") {
        return Ok(Box::new(io::stdout().lock()));
    }
    let path = resolve(out_dir, path);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(CliError::data)?;
    }
    let file = File::create(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(Box::new(BufWriter::new(file)))
}

fn write_selection(out_dir: &Path, out: &Path, results: &[SelectionResult]) -> Result<(), CliError> {
    let mut w = open_output(out_dir, out)?;
    SelectionResult::write_csv(results, &mut w).map_err(CliError::data)?;
    w.flush().map_err(CliError::data)
}
