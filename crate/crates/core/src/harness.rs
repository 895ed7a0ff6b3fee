//! Campaign execution and the on-disk run dataset.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::benchmarks::{BenchmarkError, BenchmarkFunction, DEFAULT_DIM};
use crate::config::{AdaptiveTriple, ConfigError, ModuleConfiguration, TripleError};
use crate::engine::{run_adaptive, run_static, RunOutcome};
use crate::targets::{HitLedger, TARGET_COUNT};

/// Columns before the hit columns.
const FIXED_COLUMNS: [&str; 7] = [
    "fid",
    "instance",
    "config",
    "run_index",
    "seed",
    "switch_eval",
    "budget_used",
];
const ERROR_COLUMNS: [&str; 6] = ["fid", "instance", "config", "run_index", "seed", "message"];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("writing {cell} to {path}: {source}")]
    Write {
        cell: String,
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

/// What was run: a static configuration or an adaptive triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RunLabel {
    Static(ModuleConfiguration),
    Adaptive(AdaptiveTriple),
}

impl RunLabel {
    pub fn as_static(&self) -> Option<ModuleConfiguration> {
        match self {
            RunLabel::Static(c) => Some(*c),
            RunLabel::Adaptive(_) => None,
        }
    }
}

impl fmt::Display for RunLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunLabel::Static(c) => write!(f, "{c}"),
            RunLabel::Adaptive(t) => write!(f, "{t}"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Triple(#[from] TripleError),
}

impl FromStr for RunLabel {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.contains('_') {
            Ok(RunLabel::Adaptive(AdaptiveTriple::parse(s)?))
        } else {
            Ok(RunLabel::Static(s.parse()?))
        }
    }
}

impl From<ModuleConfiguration> for RunLabel {
    fn from(c: ModuleConfiguration) -> Self {
        RunLabel::Static(c)
    }
}

impl From<AdaptiveTriple> for RunLabel {
    fn from(t: AdaptiveTriple) -> Self {
        RunLabel::Adaptive(t)
    }
}

/// Identifies one grid cell of a campaign.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub fid: u32,
    pub instance: u32,
    pub label: RunLabel,
    pub run_index: u32,
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "f{} instance {} {} run {}",
            self.fid, self.instance, self.label, self.run_index
        )
    }
}

/// One completed run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunRecord {
    pub fid: u32,
    pub instance: u32,
    pub label: RunLabel,
    pub run_index: u32,
    pub seed: u64,
    pub switch_eval: Option<u64>,
    pub budget_used: u64,
    pub ledger: HitLedger,
}

impl RunRecord {
    pub fn key(&self) -> CellKey {
        CellKey {
            fid: self.fid,
            instance: self.instance,
            label: self.label,
            run_index: self.run_index,
        }
    }

    fn from_outcome(key: CellKey, seed: u64, out: RunOutcome) -> Self {
        Self {
            fid: key.fid,
            instance: key.instance,
            label: key.label,
            run_index: key.run_index,
            seed,
            switch_eval: out.switch_eval,
            budget_used: out.evals_used,
            ledger: out.ledger,
        }
    }

    fn to_row(&self) -> Vec<String> {
        let mut row = vec![
            self.fid.to_string(),
            self.instance.to_string(),
            self.label.to_string(),
            self.run_index.to_string(),
            self.seed.to_string(),
            self.switch_eval.map(|e| e.to_string()).unwrap_or_default(),
            self.budget_used.to_string(),
        ];
        row.extend(
            self.ledger
                .hits()
                .iter()
                .map(|h| h.map(|e| e.to_string()).unwrap_or_default()),
        );
        row
    }

    fn from_row(row: &csv::StringRecord) -> Result<Self, String> {
        if row.len() != FIXED_COLUMNS.len() + TARGET_COUNT {
            return Err(format!(
                "expected {} columns, found {}",
                FIXED_COLUMNS.len() + TARGET_COUNT,
                row.len()
            ));
        }
        fn num<T: FromStr>(field: &str, name: &str) -> Result<T, String> {
            field
                .trim()
                .parse()
                .map_err(|_| format!("bad {name} '{field}'"))
        }
        fn opt(field: &str, name: &str) -> Result<Option<u64>, String> {
            if field.trim().is_empty() {
                Ok(None)
            } else {
                num(field, name).map(Some)
            }
        }
        let mut hits = [None; TARGET_COUNT];
        for (i, h) in hits.iter_mut().enumerate() {
            *h = opt(&row[FIXED_COLUMNS.len() + i], "hit")?;
        }
        Ok(Self {
            fid: num(&row[0], "fid")?,
            instance: num(&row[1], "instance")?,
            label: row[2].trim().parse().map_err(|e| format!("{e}"))?,
            run_index: num(&row[3], "run_index")?,
            seed: num(&row[4], "seed")?,
            switch_eval: opt(&row[5], "switch_eval")?,
            budget_used: num(&row[6], "budget_used")?,
            ledger: HitLedger::from_hits(hits)?,
        })
    }
}

/// A run that ended with an engine error.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunFailure {
    pub key: CellKey,
    pub seed: u64,
    pub message: String,
}

fn header() -> Vec<String> {
    FIXED_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain((0..TARGET_COUNT).map(|i| format!("h{i}")))
        .collect()
}

/// An in-memory collection of run records.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dataset {
    records: Vec<RunRecord>,
}

impl Dataset {
    pub fn new(records: Vec<RunRecord>) -> Self {
        Self { records }
    }

    pub fn records(&self) -> &[RunRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<RunRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn merge(&mut self, other: Dataset) {
        self.records.extend(other.records);
    }

    pub fn fids(&self) -> BTreeSet<u32> {
        self.records.iter().map(|r| r.fid).collect()
    }

    pub fn keys(&self) -> BTreeSet<CellKey> {
        self.records.iter().map(RunRecord::key).collect()
    }

    /// Reads a dataset file. A missing or empty file is an empty dataset.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Self::default()),
            Err(source) => {
                return Err(HarnessError::Io {
                    path: path.to_owned(),
                    source,
                })
            }
        };
        Self::read(file, path)
    }

    fn read<R: io::Read>(reader: R, path: &Path) -> Result<Self, HarnessError> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut records = Vec::new();
        for (index, row) in csv.records().enumerate() {
            let parse_error = |line: Option<u64>, message: String| HarnessError::Parse {
                path: path.to_owned(),
                line: line.unwrap_or(index as u64 + 1),
                message,
            };
            let row = row.map_err(|e| {
                let line = e.position().map(|p| p.line());
                parse_error(line, e.to_string())
            })?;
            let line = row.position().map(|p| p.line());
            if index == 0 && row.get(0) == Some(FIXED_COLUMNS[0]) {
                continue;
            }
            records.push(RunRecord::from_row(&row).map_err(|m| parse_error(line, m))?);
        }
        Ok(Self { records })
    }
}

fn open_append(path: &Path, header: &[String]) -> Result<csv::Writer<BufWriter<File>>, HarnessError> {
    let io_err = |source| HarnessError::Io {
        path: path.to_owned(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err)?;
    }
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err)?;
    let empty = file.metadata().map_err(io_err)?.len() == 0;
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_writer(BufWriter::new(file));
    if empty {
        writer
            .write_record(header)
            .and_then(|_| writer.flush().map_err(csv::Error::from))
            .map_err(|e| io_err(io::Error::other(e)))?;
    }
    Ok(writer)
}

/// Appends records to a dataset file, writing the header if the file is new.
pub fn append_records(path: &Path, records: &[RunRecord]) -> Result<(), HarnessError> {
    let mut writer = open_append(path, &header())?;
    for r in records {
        write_row(&mut writer, &r.to_row(), path, &r.key())?;
    }
    writer.flush().map_err(|source| HarnessError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write_row<W: Write>(
    writer: &mut csv::Writer<W>,
    row: &[String],
    path: &Path,
    key: &CellKey,
) -> Result<(), HarnessError> {
    writer
        .write_record(row)
        .map_err(|e| io::Error::other(e.to_string()))
        .and_then(|_| writer.flush())
        .map_err(|source| HarnessError::Write {
            cell: key.to_string(),
            path: path.to_owned(),
            source,
        })
}

/// Sidecar file receiving failed runs: `runs.csv` -> `runs.errors.csv`.
pub fn error_log_path(dataset: &Path) -> PathBuf {
    let stem = dataset
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    dataset.with_file_name(format!("{stem}.errors.csv"))
}

/// Reads the failure sidecar of a dataset.
pub fn load_failures(dataset: &Path) -> Result<Vec<RunFailure>, HarnessError> {
    let path = error_log_path(dataset);
    let file = match File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => return Err(HarnessError::Io { path, source }),
    };
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let mut out = Vec::new();
    for row in csv.records() {
        let row = row.map_err(|e| HarnessError::Parse {
            path: path.clone(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |message: String| HarnessError::Parse {
            path: path.clone(),
            line,
            message,
        };
        if row.len() != ERROR_COLUMNS.len() {
            return Err(bad(format!("expected {} columns", ERROR_COLUMNS.len())));
        }
        let n = |i: usize| row[i].parse::<u64>().map_err(|_| bad(format!("bad number '{}'", &row[i])));
        out.push(RunFailure {
            key: CellKey {
                fid: n(0)? as u32,
                instance: n(1)? as u32,
                label: row[2].parse().map_err(|e| bad(format!("{e}")))?,
                run_index: n(3)? as u32,
            },
            seed: n(4)?,
            message: row[5].to_string(),
        });
    }
    Ok(out)
}

/// Parameters of a campaign grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CampaignManifest {
    pub labels: Vec<RunLabel>,
    pub fids: Vec<u32>,
    pub instances: Vec<u32>,
    pub runs_per_instance: u32,
    pub budget: u64,
    pub base_seed: u64,
    pub dim: usize,
    pub output: PathBuf,
}

impl CampaignManifest {
    pub fn run_count(&self) -> usize {
        self.labels.len() * self.fids.len() * self.instances.len() * self.runs_per_instance as usize
    }

    /// Grid cells in a fixed order: label, fid, instance, run.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::with_capacity(self.run_count());
        for &label in &self.labels {
            for &fid in &self.fids {
                for &instance in &self.instances {
                    for run_index in 0..self.runs_per_instance {
                        out.push(CellKey {
                            fid,
                            instance,
                            label,
                            run_index,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn seed_for(&self, cell: &CellKey) -> u64 {
        derive_seed(self.base_seed, cell)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidManifest(m.to_string()));
        if self.labels.is_empty() {
            return bad("no configurations or triples");
        }
        if self.fids.is_empty() || self.instances.is_empty() {
            return bad("no functions or instances");
        }
        if self.runs_per_instance == 0 {
            return bad("runs must be positive");
        }
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        let unique: BTreeSet<_> = self.labels.iter().collect();
        if unique.len() != self.labels.len() {
            return bad("duplicate configuration");
        }
        for &fid in &self.fids {
            for &instance in &self.instances {
                BenchmarkFunction::new(fid, self.dim, instance)
                    .map_err(|e: BenchmarkError| HarnessError::InvalidManifest(e.to_string()))?;
            }
        }
        Ok(())
    }

    /// Parses the `key = value` format. Relative output paths are kept as
    /// written; see [`CampaignManifest::load`].
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let manifest = Self::parse_fields(text)?;
        manifest.validate()?;
        Ok(manifest)
    }

    fn parse_fields(text: &str) -> Result<Self, HarnessError> {
        let mut fields: HashMap<&str, (usize, &str)> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| HarnessError::Manifest {
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected 'key = value'".into()))?;
            let key = key.trim();
            if !MANIFEST_KEYS.contains(&key) {
                return Err(err(format!("unknown key '{key}'")));
            }
            if fields.insert(key, (i + 1, value.trim())).is_some() {
                return Err(err(format!("duplicate key '{key}'")));
            }
        }
        fn list<T: FromStr>(
            fields: &HashMap<&str, (usize, &str)>,
            key: &str,
        ) -> Result<Vec<T>, HarnessError>
        where
            T::Err: fmt::Display,
        {
            let Some(&(line, value)) = fields.get(key) else {
                return Ok(Vec::new());
            };
            value
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse().map_err(|e| HarnessError::Manifest {
                        line,
                        message: format!("{key}: '{s}': {e}"),
                    })
                })
                .collect()
        }
        fn single<T: FromStr>(
            fields: &HashMap<&str, (usize, &str)>,
            key: &str,
        ) -> Result<T, HarnessError>
        where
            T::Err: fmt::Display,
        {
            let &(line, value) = fields
                .get(key)
                .ok_or_else(|| HarnessError::InvalidManifest(format!("missing key '{key}'")))?;
            value.parse().map_err(|e| HarnessError::Manifest {
                line,
                message: format!("{key}: {e}"),
            })
        }
        let mut labels: Vec<RunLabel> = list::<ModuleConfiguration>(&fields, "configs")?
            .into_iter()
            .map(RunLabel::Static)
            .collect();
        labels.extend(
            list::<AdaptiveTriple>(&fields, "triples")?
                .into_iter()
                .map(RunLabel::Adaptive),
        );
        let manifest = Self {
            labels,
            fids: list(&fields, "fids")?,
            instances: list(&fields, "instances")?,
            runs_per_instance: single(&fields, "runs")?,
            budget: single(&fields, "budget")?,
            base_seed: single(&fields, "seed")?,
            dim: if fields.contains_key("dim") {
                single(&fields, "dim")?
            } else {
                DEFAULT_DIM
            },
            output: PathBuf::from(single::<String>(&fields, "output")?),
        };
        Ok(manifest)
    }

    /// Reads a manifest file; a relative `output` is resolved against the
    /// manifest's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let m = Self::load_fields(path)?;
        m.validate()?;
        Ok(m)
    }

    /// Like [`CampaignManifest::load`], but the run labels come from the
    /// caller and any `configs`/`triples` in the file are ignored.
    pub fn load_with_labels(path: &Path, labels: Vec<RunLabel>) -> Result<Self, HarnessError> {
        let mut m = Self::load_fields(path)?;
        m.labels = labels;
        m.validate()?;
        Ok(m)
    }

    fn load_fields(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut m = Self::parse_fields(&text)?;
        if m.output.is_relative() {
            if let Some(dir) = path.parent() {
                m.output = dir.join(&m.output);
            }
        }
        Ok(m)
    }

    pub fn to_text(&self) -> String {
        let join = |items: Vec<String>| items.join(" ");
        let configs = self
            .labels
            .iter()
            .filter(|l| matches!(l, RunLabel::Static(_)))
            .map(|l| l.to_string())
            .collect();
        let triples = self
            .labels
            .iter()
            .filter(|l| matches!(l, RunLabel::Adaptive(_)))
            .map(|l| l.to_string())
            .collect();
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            if !v.is_empty() {
                out.push_str(&format!("{k} = {v}\n"));
            }
        };
        put("configs", join(configs));
        put("triples", join(triples));
        put("fids", join(self.fids.iter().map(u32::to_string).collect()));
        put("instances", join(self.instances.iter().map(u32::to_string).collect()));
        put("runs", self.runs_per_instance.to_string());
        put("budget", self.budget.to_string());
        put("seed", self.base_seed.to_string());
        put("dim", self.dim.to_string());
        put("output", self.output.display().to_string());
        out
    }
}

const MANIFEST_KEYS: [&str; 9] = [
    "configs", "triples", "fids", "instances", "runs", "budget", "seed", "dim", "output",
];

/// Stable per-cell seed, independent of grid order and platform.
pub fn derive_seed(base_seed: u64, cell: &CellKey) -> u64 {
    let mut h = Sha256::new();
    h.update(format!(
        "{base_seed}|{}|{}|{}|{}",
        cell.label, cell.fid, cell.instance, cell.run_index
    ));
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Runs a single grid cell.
pub fn run_cell(
    function: &BenchmarkFunction,
    cell: &CellKey,
    budget: u64,
    seed: u64,
) -> Result<RunRecord, RunFailure> {
    let out = match &cell.label {
        RunLabel::Static(c) => run_static(*c, function, budget, seed),
        RunLabel::Adaptive(t) => run_adaptive(t, function, budget, seed),
    };
    out.map(|o| RunRecord::from_outcome(*cell, seed, o))
        .map_err(|e| RunFailure {
            key: *cell,
            seed,
            message: e.to_string(),
        })
}

/// What a campaign produced.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CampaignOutcome {
    /// Records of the manifest's cells, in grid order.
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    pub executed: usize,
    pub reused: usize,
}

/// Executes every cell of `manifest` not already present in its output file
/// (or its failure log), using at most `workers` threads. Results are
/// appended in grid order by a single writer.
pub fn execute_campaign(
    manifest: &CampaignManifest,
    workers: usize,
) -> Result<CampaignOutcome, HarnessError> {
    manifest.validate()?;
    let path = &manifest.output;
    let errors_path = error_log_path(path);
    let existing = Dataset::load(path)?;
    let old_failures = load_failures(path)?;
    let mut done: HashMap<CellKey, RunRecord> = HashMap::new();
    for r in existing.into_records() {
        done.entry(r.key()).or_insert(r);
    }
    let failed: BTreeMap<CellKey, RunFailure> =
        old_failures.into_iter().map(|f| (f.key, f)).collect();

    let cells = manifest.cells();
    let pending: Vec<CellKey> = cells
        .iter()
        .filter(|c| !done.contains_key(c) && !failed.contains_key(c))
        .copied()
        .collect();
    let reused = cells.len() - pending.len();

    let mut functions = HashMap::new();
    for &fid in &manifest.fids {
        for &instance in &manifest.instances {
            let f = BenchmarkFunction::new(fid, manifest.dim, instance)
                .map_err(|e| HarnessError::InvalidManifest(e.to_string()))?;
            functions.insert((fid, instance), f);
        }
    }

    let mut writer = open_append(path, &header())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    let abort = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, Result<RunRecord, RunFailure>)>();

    let written = std::thread::scope(|scope| {
        let writer_thread = scope.spawn(|| {
            let mut error_writer = None;
            let mut next = 0;
            let mut buffer = BTreeMap::new();
            let mut new_records = Vec::new();
            let mut new_failures = Vec::new();
            for (index, result) in rx {
                buffer.insert(index, result);
                while let Some(result) = buffer.remove(&next) {
                    next += 1;
                    let outcome = match result {
                        Ok(record) => {
                            let r = write_row(&mut writer, &record.to_row(), path, &record.key());
                            new_records.push(record);
                            r
                        }
                        Err(failure) => {
                            let w = match &mut error_writer {
                                Some(w) => w,
                                None => match open_append(
                                    &errors_path,
                                    &ERROR_COLUMNS.map(String::from),
                                ) {
                                    Ok(w) => error_writer.insert(w),
                                    Err(e) => {
                                        abort.store(true, Ordering::Relaxed);
                                        return Err(e);
                                    }
                                },
                            };
                            let row = vec![
                                failure.key.fid.to_string(),
                                failure.key.instance.to_string(),
                                failure.key.label.to_string(),
                                failure.key.run_index.to_string(),
                                failure.seed.to_string(),
                                failure.message.clone(),
                            ];
                            let r = write_row(w, &row, &errors_path, &failure.key);
                            new_failures.push(failure);
                            r
                        }
                    };
                    if let Err(e) = outcome {
                        abort.store(true, Ordering::Relaxed);
                        return Err(e);
                    }
                }
            }
            Ok((new_records, new_failures))
        });

        pool.install(|| {
            pending
                .par_iter()
                .enumerate()
                .for_each_with(tx, |tx, (index, cell)| {
                    if abort.load(Ordering::Relaxed) {
                        return;
                    }
                    let f = &functions[&(cell.fid, cell.instance)];
                    let seed = manifest.seed_for(cell);
                    let _ = tx.send((index, run_cell(f, cell, manifest.budget, seed)));
                });
        });
        writer_thread.join().expect("writer thread panicked")
    })?;

    let (new_records, new_failures) = written;
    let executed = new_records.len() + new_failures.len();
    for r in new_records {
        done.insert(r.key(), r);
    }
    let mut failures: Vec<RunFailure> = failed.into_values().collect();
    failures.extend(new_failures);
    failures.sort_by_key(|f| f.key);
    let records = cells.iter().filter_map(|c| done.remove(c)).collect();
    Ok(CampaignOutcome {
        records,
        failures,
        executed,
        reused,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(fid: u32, label: &str, run: u32, hits: usize) -> RunRecord {
        let mut ledger = HitLedger::new();
        for i in 0..hits {
            ledger.observe(crate::targets::target_value(i), 10 * (i as u64 + 1));
        }
        RunRecord {
            fid,
            instance: 1,
            label: label.parse().unwrap(),
            run_index: run,
            seed: u64::MAX - run as u64,
            switch_eval: (label.contains('_')).then_some(40),
            budget_used: 1000,
            ledger,
        }
    }

    #[test]
    fn labels_round_trip() {
        for s in ["00000000000", "11111111122", "00000000000_10000000000_25"] {
            assert_eq!(s.parse::<RunLabel>().unwrap().to_string(), s);
        }
        assert!("0000000000".parse::<RunLabel>().is_err());
        assert!("00000000001_00000000000_3".parse::<RunLabel>().is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.csv");
        let records: Vec<_> = (0..20)
            .map(|i| record(1 + i % 3, if i % 2 == 0 { "01000000010" } else { "00000000000_01000000000_7" }, i, (i * 7 % 52) as usize))
            .collect();
        append_records(&path, &records[..5]).unwrap();
        append_records(&path, &records[5..]).unwrap();
        assert_eq!(Dataset::load(&path).unwrap().records(), &records[..]);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("fid,")).count(), 1);
    }

    #[test]
    fn missing_and_empty_files_are_empty_datasets() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("none.csv");
        assert!(Dataset::load(&path).unwrap().is_empty());
        std::fs::write(&path, "").unwrap();
        assert!(Dataset::load(&path).unwrap().is_empty());
    }

    #[test]
    fn malformed_rows_report_their_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.csv");
        append_records(&path, &[record(1, "00000000000", 0, 3), record(1, "00000000000", 1, 3)]).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("1,1,00000000000,2,5\n");
        std::fs::write(&path, text).unwrap();
        match Dataset::load(&path) {
            Err(HarnessError::Parse { line, message, .. }) => {
                assert_eq!(line, 4);
                assert!(message.contains("columns"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_monotone_hits_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.csv");
        append_records(&path, &[record(1, "00000000000", 0, 3)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap().replace(",10,20,30,", ",10,20,5,");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(Dataset::load(&path), Err(HarnessError::Parse { line: 2, .. })));
    }

    #[test]
    fn manifest_round_trip_and_errors() {
        let text = "# stage 1\nconfigs = 00000000000, 01000000000\ntriples = 00000000000_01000000000_20\nfids = 1 5\ninstances = 1 2 3 4 5\nruns = 5\nbudget = 50000\nseed = 42\ndim = 5\noutput = runs.csv\n";
        let m = CampaignManifest::parse(text).unwrap();
        assert_eq!(m.run_count(), 3 * 2 * 5 * 5);
        assert_eq!(CampaignManifest::parse(&m.to_text()).unwrap(), m);
        assert!(matches!(
            CampaignManifest::parse(&text.replace("runs = 5", "runs = x")),
            Err(HarnessError::Manifest { line: 6, .. })
        ));
        assert!(matches!(
            CampaignManifest::parse(&text.replace("fids = 1 5", "fids = 1 3")),
            Err(HarnessError::InvalidManifest(_))
        ));
        assert_eq!(CampaignManifest::parse(&text.replace("dim = 5\n", "")).unwrap().dim, DEFAULT_DIM);
        assert!(matches!(
            CampaignManifest::parse(&text.replace("budget = 50000\n", "")),
            Err(HarnessError::InvalidManifest(_))
        ));
        assert!(CampaignManifest::parse(&format!("{text}colour = red\n")).is_err());
    }

    #[test]
    fn seeds_depend_on_every_cell_coordinate() {
        let cell = CellKey {
            fid: 1,
            instance: 1,
            label: "00000000000".parse().unwrap(),
            run_index: 0,
        };
        let base = derive_seed(7, &cell);
        assert_eq!(base, derive_seed(7, &cell));
        let variants = [
            derive_seed(8, &cell),
            derive_seed(7, &CellKey { fid: 2, ..cell }),
            derive_seed(7, &CellKey { instance: 2, ..cell }),
            derive_seed(7, &CellKey { run_index: 1, ..cell }),
            derive_seed(7, &CellKey { label: "10000000000".parse().unwrap(), ..cell }),
        ];
        assert!(variants.iter().all(|&s| s != base));
    }

    #[test]
    fn campaign_is_complete_deterministic_and_resumable() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = CampaignManifest {
            labels: vec![
                RunLabel::Static("00000000000".parse().unwrap()),
                RunLabel::Static("01000000000".parse().unwrap()),
            ],
            fids: vec![1],
            instances: vec![1, 2, 3, 4, 5],
            runs_per_instance: 5,
            budget: 2_000,
            base_seed: 3,
            dim: 5,
            output: dir.path().join("a.csv"),
        };
        let first = execute_campaign(&manifest, 2).unwrap();
        assert_eq!(first.records.len(), 50);
        assert_eq!((first.executed, first.reused), (50, 0));

        let again = execute_campaign(&manifest, 2).unwrap();
        assert_eq!((again.executed, again.reused), (0, 50));
        assert_eq!(again.records, first.records);

        let serial = CampaignManifest {
            output: dir.path().join("b.csv"),
            ..manifest.clone()
        };
        execute_campaign(&serial, 1).unwrap();
        assert_eq!(
            std::fs::read_to_string(&manifest.output).unwrap(),
            std::fs::read_to_string(&serial.output).unwrap()
        );

        // A single cell replays exactly from its seed.
        let r = &first.records[17];
        let f = BenchmarkFunction::new(r.fid, 5, r.instance).unwrap();
        assert_eq!(&run_cell(&f, &r.key(), 2_000, r.seed).unwrap(), r);
    }

    #[test]
    fn partial_files_are_completed() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = CampaignManifest {
            labels: vec![RunLabel::Static("00000000000".parse().unwrap())],
            fids: vec![1, 5],
            instances: vec![1, 2],
            runs_per_instance: 2,
            budget: 1_000,
            base_seed: 9,
            dim: 3,
            output: dir.path().join("runs.csv"),
        };
        let full = execute_campaign(&manifest, 1).unwrap();
        let partial = CampaignManifest {
            output: dir.path().join("partial.csv"),
            ..manifest.clone()
        };
        append_records(&partial.output, &full.records[..3]).unwrap();
        let resumed = execute_campaign(&partial, 1).unwrap();
        assert_eq!((resumed.executed, resumed.reused), (5, 3));
        assert_eq!(resumed.records, full.records);
    }
}
