//! Experiment driver: dataset loading, run orchestration, CSV output and
//! cost reporting. The `cabcd` binary is a thin shell over [`args::main_with`].

pub mod args;
mod costs;
mod data;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use costs::{eta, theoretical_costs, CostReport, CostRow};
pub use data::{dataset_name, load_dataset, resolve_dataset_path, sigma_min, sigma_min_table, Dataset, DATA_DIR_ENV};

use crate::comm::{predicted_time, AllToAllModel, Backend, CommError, MachineParams};
use crate::metrics::{rows_from_output, write_csv, MetricsError, MetricsRow, Reference};
use crate::partition::LayoutKind;
use crate::solvers::{cg_reference, solve, Algorithm, CheckInterval, RunOptions, SolveOutput, SolverConfig, SolverError};
use crate::sparse::SparseError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid {field}: {reason}")]
    Usage { field: &'static str, reason: String },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn usage<T>(field: &'static str, reason: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage {
        field,
        reason: reason.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaChoice {
    Value(f64),
    /// `multiplier * sigma_min`, with `sigma_min` from the shipped table
    /// unless given.
    SigmaMultiple { multiplier: f64, sigma_min: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LayoutChoice {
    Row,
    Col,
    /// Row layout when `d > n`, column layout otherwise.
    #[default]
    Auto,
}

impl LayoutChoice {
    pub fn resolve(&self, d: usize, n: usize) -> LayoutKind {
        match self {
            LayoutChoice::Row => LayoutKind::OneDRow,
            LayoutChoice::Col => LayoutKind::OneDColumn,
            LayoutChoice::Auto if d > n => LayoutKind::OneDRow,
            LayoutChoice::Auto => LayoutKind::OneDColumn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IterChoice {
    Iters(usize),
    /// Multiples of `ceil(d / b)` (primal), `ceil(n / b')` (dual) or single
    /// CG iterations.
    Epochs(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecordChoice {
    #[default]
    Epoch,
    Every(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceChoice {
    None,
    /// CG to the given relative tolerance, optionally cached on disk.
    Cg {
        tol: f64,
        max_iters: usize,
        cache: Option<PathBuf>,
    },
}

/// Everything needed to launch one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub dataset: PathBuf,
    pub features: Option<usize>,
    pub algorithm: Algorithm,
    pub block_size: usize,
    pub s: usize,
    pub lambda: LambdaChoice,
    pub ranks: usize,
    pub layout: LayoutChoice,
    pub iterations: IterChoice,
    /// Primal tolerance; dual methods use `dual_tol` or a tenth of this.
    pub tol: f64,
    pub dual_tol: Option<f64>,
    pub seed: u64,
    pub check_interval: CheckInterval,
    pub record: RecordChoice,
    pub gram_cond: bool,
    pub backend: Backend,
    pub all_to_all: AllToAllModel,
    pub machine: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub reference: ReferenceChoice,
}

impl RunSpec {
    pub fn new(dataset: impl Into<PathBuf>, algorithm: Algorithm, lambda: LambdaChoice) -> Self {
        RunSpec {
            dataset: dataset.into(),
            features: None,
            algorithm,
            block_size: 1,
            s: 1,
            lambda,
            ranks: 1,
            layout: LayoutChoice::Auto,
            iterations: IterChoice::Epochs(10.0),
            tol: 1e-8,
            dual_tol: None,
            seed: 0,
            check_interval: CheckInterval::Epoch,
            record: RecordChoice::Epoch,
            gram_cond: false,
            backend: Backend::LockstepSerial,
            all_to_all: AllToAllModel::SmallMessage,
            machine: None,
            output: None,
            reference: ReferenceChoice::Cg {
                tol: 1e-15,
                max_iters: 10_000,
                cache: None,
            },
        }
    }

    pub fn resolve_lambda(&self, dataset: &Dataset) -> Result<f64, CliError> {
        let lambda = match self.lambda {
            LambdaChoice::Value(v) => v,
            LambdaChoice::SigmaMultiple {
                multiplier,
                sigma_min: given,
            } => match given.or_else(|| sigma_min(&dataset.name)) {
                Some(sig) => multiplier * sig,
                None => {
                    return usage(
                        "lambda",
                        format!("no shipped sigma_min for dataset '{}'; pass --sigma-min", dataset.name),
                    )
                }
            },
        };
        let cg_ok = self.algorithm == Algorithm::Cg && lambda == 0.0;
        if !(lambda > 0.0 && lambda.is_finite()) && !cg_ok {
            return usage("lambda", format!("must be positive, got {lambda}"));
        }
        Ok(lambda)
    }

    fn epoch_len(&self, d: usize, n: usize) -> usize {
        match self.algorithm {
            Algorithm::Cg => 1,
            a if a.is_dual() => n.div_ceil(self.block_size.max(1)),
            _ => d.div_ceil(self.block_size.max(1)),
        }
    }

    pub fn solver_config(&self, dataset: &Dataset) -> Result<SolverConfig, CliError> {
        let (d, n) = (dataset.d(), dataset.n());
        let lambda = self.resolve_lambda(dataset)?;
        let epoch = self.epoch_len(d, n);
        let max_iters = match self.iterations {
            IterChoice::Iters(h) => h,
            IterChoice::Epochs(k) if k >= 0.0 && k.is_finite() => (k * epoch as f64).round() as usize,
            IterChoice::Epochs(k) => return usage("epochs", format!("must be non-negative, got {k}")),
        };
        if self.ranks == 0 {
            return usage("ranks", "must be at least 1");
        }
        let mut cfg = SolverConfig::new(self.algorithm, self.block_size, lambda, max_iters);
        cfg.s = self.s;
        cfg.seed = self.seed;
        cfg.tol = if self.algorithm.is_dual() {
            self.dual_tol.unwrap_or(0.1 * self.tol)
        } else {
            self.tol
        };
        cfg.check_interval = self.check_interval;
        cfg.record_interval = match self.record {
            RecordChoice::Epoch => epoch,
            RecordChoice::Every(k) => k,
        };
        cfg.record_gram_cond = self.gram_cond;
        cfg.validate(d, n).map_err(|e| match e {
            SolverError::InvalidConfig { field, reason } => CliError::Usage { field, reason },
            other => other.into(),
        })?;
        Ok(cfg)
    }

    pub fn run_options(&self, dataset: &Dataset) -> RunOptions {
        RunOptions {
            ranks: self.ranks,
            backend: self.backend,
            layout: Some(self.layout.resolve(dataset.d(), dataset.n())),
            all_to_all: self.all_to_all,
        }
    }

    pub fn machine_params(&self) -> Result<MachineParams, CliError> {
        Ok(match &self.machine {
            Some(p) => MachineParams::from_file(p)?,
            None => MachineParams::default(),
        })
    }
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct RunReport {
    pub algorithm: Algorithm,
    pub lambda: f64,
    pub rows: Vec<MetricsRow>,
    pub output: SolveOutput,
    pub predicted_time: f64,
    pub summary: String,
}

fn read_vector(path: &Path) -> Result<Vec<f64>, CliError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        out.push(t.parse().map_err(|e| {
            CliError::Io(format!("{}:{}: {e}", path.display(), k + 1))
        })?);
    }
    Ok(out)
}

fn write_vector(path: &Path, v: &[f64]) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    for x in v {
        writeln!(w, "{x}")?;
    }
    w.flush()?;
    Ok(())
}

/// `w_opt` by CG (or from the cache file when it matches the dimension).
pub fn reference_solution(
    dataset: &Dataset,
    lambda: f64,
    choice: &ReferenceChoice,
) -> Result<Option<Reference>, CliError> {
    let ReferenceChoice::Cg { tol, max_iters, cache } = choice else {
        return Ok(None);
    };
    if let Some(path) = cache {
        if path.exists() {
            let w = read_vector(path)?;
            if w.len() == dataset.d() {
                log::info!("reference solution loaded from {}", path.display());
                return Ok(Some(Reference::new(&dataset.x, &dataset.y, lambda, w)?));
            }
            log::warn!("ignoring {}: length {} != d = {}", path.display(), w.len(), dataset.d());
        }
    }
    let cap = (*max_iters).min(10 * dataset.d());
    let r = cg_reference(&dataset.x, &dataset.y, lambda, *tol, cap)?;
    if !r.converged {
        log::warn!(
            "reference CG reached relative residual {:e} after {} iterations (tol {:e})",
            r.relative_residual,
            r.iterations,
            tol
        );
    }
    if let Some(path) = cache {
        write_vector(path, &r.w)?;
    }
    Ok(Some(Reference::new(&dataset.x, &dataset.y, lambda, r.w)?))
}

fn summary_line(report_alg: Algorithm, out: &SolveOutput, last: Option<&MetricsRow>, t: f64) -> String {
    let fmt_opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6e}"));
    format!(
        "{} iters={} converged={} objective={} rel_obj_err={} rel_sol_err={} flops={} words={} messages={} predicted_time={:.6e}s",
        report_alg,
        out.iterations,
        out.converged,
        fmt_opt(last.map(|r| r.objective)),
        fmt_opt(last.and_then(|r| r.rel_obj_err)),
        fmt_opt(last.and_then(|r| r.rel_sol_err)),
        out.counters.flops,
        out.counters.words,
        out.counters.messages,
        t
    )
}

/// Runs `spec` on an already loaded dataset, with an optional precomputed
/// reference. Writes the CSV when `spec.output` is set.
pub fn run_on(dataset: &Dataset, spec: &RunSpec, reference: Option<&Reference>) -> Result<RunReport, CliError> {
    let cfg = spec.solver_config(dataset)?;
    let machine = spec.machine_params()?;
    let out = solve(&dataset.x, &dataset.y, &cfg, &spec.run_options(dataset))?;
    let owned;
    let reference = match reference {
        Some(r) => Some(r),
        None => {
            owned = reference_solution(dataset, cfg.lambda, &spec.reference)?;
            owned.as_ref()
        }
    };
    let rows = rows_from_output(&dataset.x, &dataset.y, cfg.lambda, cfg.block_size, cfg.s, &out, reference)?;
    if let Some(path) = &spec.output {
        write_csv(&rows, BufWriter::new(File::create(path)?))?;
    }
    let t = predicted_time(&out.counters, &machine);
    Ok(RunReport {
        algorithm: cfg.algorithm,
        lambda: cfg.lambda,
        summary: summary_line(cfg.algorithm, &out, rows.last(), t),
        rows,
        output: out,
        predicted_time: t,
    })
}

/// Loads the dataset and runs `spec`.
pub fn run(spec: &RunSpec) -> Result<RunReport, CliError> {
    let dataset = load_dataset(&spec.dataset, spec.features)?;
    run_on(&dataset, spec, None)
}

/// One line of a comparison table.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CompareRow {
    pub algo: String,
    pub iter: usize,
    pub epoch: f64,
    pub passes: f64,
    pub objective: f64,
    pub rel_obj_err: Option<f64>,
    pub rel_sol_err: Option<f64>,
    pub residual: f64,
    pub flops: u64,
    pub words: u64,
    pub messages: u64,
    pub gram_cond: Option<f64>,
    pub wall_s: f64,
}

/// Runs every spec on one dataset against one reference and interleaves the
/// traces by epoch (ties keep the spec order).
pub fn compare_on(
    dataset: &Dataset,
    specs: &[RunSpec],
    reference: &ReferenceChoice,
) -> Result<Vec<CompareRow>, CliError> {
    let Some(first) = specs.first() else {
        return usage("specs", "nothing to compare");
    };
    let lambda = first.resolve_lambda(dataset)?;
    for s in specs {
        if s.dataset != first.dataset {
            return usage("dataset", format!("{} vs {}", s.dataset.display(), first.dataset.display()));
        }
        if s.resolve_lambda(dataset)? != lambda {
            return usage("lambda", "all compared runs must share lambda");
        }
    }
    let reference = reference_solution(dataset, lambda, reference)?;
    let mut rows = Vec::new();
    for (k, spec) in specs.iter().enumerate() {
        let label = if spec.algorithm.is_ca() {
            format!("{}-s{}", spec.algorithm, spec.s)
        } else {
            spec.algorithm.to_string()
        };
        let report = run_on(dataset, &RunSpec { output: None, ..spec.clone() }, reference.as_ref())?;
        rows.extend(report.rows.into_iter().map(|r| {
            (
                k,
                CompareRow {
                    algo: label.clone(),
                    iter: r.iter,
                    epoch: r.epoch,
                    passes: r.passes,
                    objective: r.objective,
                    rel_obj_err: r.rel_obj_err,
                    rel_sol_err: r.rel_sol_err,
                    residual: r.residual,
                    flops: r.flops,
                    words: r.words,
                    messages: r.messages,
                    gram_cond: r.gram_cond,
                    wall_s: r.wall_s,
                },
            )
        }));
    }
    rows.sort_by(|a, b| a.1.epoch.total_cmp(&b.1.epoch).then(a.0.cmp(&b.0)));
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

/// [`compare_on`] after loading the (shared) dataset of the first spec.
pub fn compare(specs: &[RunSpec], reference: &ReferenceChoice) -> Result<Vec<CompareRow>, CliError> {
    let Some(first) = specs.first() else {
        return usage("specs", "nothing to compare");
    };
    let dataset = load_dataset(&first.dataset, first.features)?;
    compare_on(&dataset, specs, reference)
}

pub fn write_compare_csv<W: Write>(rows: &[CompareRow], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
