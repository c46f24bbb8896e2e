use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::{
    compare, load_dataset, run_on, theoretical_costs, write_compare_csv, CliError, IterChoice, LambdaChoice,
    LayoutChoice, RecordChoice, ReferenceChoice, RunSpec,
};
use crate::comm::{AllToAllModel, Backend};
use crate::metrics::write_csv;
use crate::solvers::{Algorithm, CheckInterval};

#[derive(Debug, Parser)]
#[command(name = "cabcd", version, about = "Block coordinate descent for ridge regression with cost accounting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one solver and write its trace as CSV.
    Solve(SolveArgs),
    /// Run several solvers against one reference, interleaved by epoch.
    Compare(CompareArgs),
    /// Leading-order cost expressions next to the counters of a dry run.
    Costs(SolveArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LayoutArg {
    Row,
    Col,
    Auto,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BackendArg {
    Lockstep,
    Threaded,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AllToAllArg {
    Small,
    Large,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// LIBSVM file, resolved against $CABCD_DATA_DIR when not found.
    #[arg(long)]
    pub data: PathBuf,
    /// Number of features (defaults to the largest index seen).
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long, conflicts_with = "lambda_mult")]
    pub lambda: Option<f64>,
    /// lambda = MULT * sigma_min, from the shipped table unless --sigma-min.
    #[arg(long)]
    pub lambda_mult: Option<f64>,
    #[arg(long, requires = "lambda_mult")]
    pub sigma_min: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub ranks: usize,
    #[arg(long, value_enum, default_value = "auto")]
    pub layout: LayoutArg,
    #[arg(long, conflicts_with = "epochs")]
    pub iters: Option<usize>,
    /// Iterations in units of ceil(d/b) (primal) or ceil(n/b') (dual).
    #[arg(long)]
    pub epochs: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Tolerance for dual methods (default: tol / 10).
    #[arg(long)]
    pub dual_tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stopping check every K iterations, `epoch` or `never`.
    #[arg(long, default_value = "epoch")]
    pub check_interval: String,
    /// Record a row every N iterations or every `epoch`.
    #[arg(long, default_value = "epoch")]
    pub record_every: String,
    /// Record Gram matrix condition numbers (costly).
    #[arg(long)]
    pub gram_cond: bool,
    #[arg(long, value_enum, default_value = "lockstep")]
    pub backend: BackendArg,
    #[arg(long, value_enum, default_value = "small")]
    pub all_to_all: AllToAllArg,
    /// TOML file with gamma, alpha and beta.
    #[arg(long)]
    pub machine: Option<PathBuf>,
    /// CSV destination (stdout when absent).
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-15)]
    pub wopt_tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub wopt_iters: usize,
    /// File caching the reference solution, one value per line.
    #[arg(long)]
    pub wopt_cache: Option<PathBuf>,
    /// Skip the reference solve; error columns stay empty.
    #[arg(long)]
    pub no_reference: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// cg, bcd, cabcd, bdcd or cabdcd.
    #[arg(long)]
    pub algo: Algorithm,
    /// Block size b (primal) or b' (dual).
    #[arg(long, default_value_t = 1)]
    pub block: usize,
    #[arg(long, default_value_t = 1)]
    pub s: usize,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_delimiter = ',', default_value = "cg,bcd,bdcd")]
    pub algos: Vec<Algorithm>,
    /// Primal block size.
    #[arg(long, default_value_t = 1)]
    pub block: usize,
    #[arg(long, default_value_t = 1)]
    pub dual_block: usize,
    #[arg(long, default_value_t = 1)]
    pub s: usize,
}

fn parse_count(field: &'static str, text: &str, word: &str) -> Result<Option<usize>, CliError> {
    if text == word {
        return Ok(None);
    }
    text.parse::<usize>().map(Some).map_err(|_| CliError::Usage {
        field,
        reason: format!("expected an integer or `{word}`, got `{text}`"),
    })
}

impl CommonArgs {
    fn spec(&self, algorithm: Algorithm, block_size: usize, s: usize) -> Result<RunSpec, CliError> {
        let lambda = match (self.lambda, self.lambda_mult) {
            (Some(v), _) => LambdaChoice::Value(v),
            (None, Some(multiplier)) => LambdaChoice::SigmaMultiple {
                multiplier,
                sigma_min: self.sigma_min,
            },
            (None, None) => {
                return Err(CliError::Usage {
                    field: "lambda",
                    reason: "pass --lambda or --lambda-mult".into(),
                })
            }
        };
        let mut spec = RunSpec::new(self.data.clone(), algorithm, lambda);
        spec.features = self.features;
        spec.block_size = block_size;
        spec.s = s;
        spec.ranks = self.ranks;
        spec.layout = match self.layout {
            LayoutArg::Row => LayoutChoice::Row,
            LayoutArg::Col => LayoutChoice::Col,
            LayoutArg::Auto => LayoutChoice::Auto,
        };
        spec.iterations = match (self.iters, self.epochs) {
            (Some(h), _) => IterChoice::Iters(h),
            (None, Some(k)) => IterChoice::Epochs(k),
            (None, None) => IterChoice::Epochs(10.0),
        };
        spec.tol = self.tol;
        spec.dual_tol = self.dual_tol;
        spec.seed = self.seed;
        spec.check_interval = if self.check_interval == "never" {
            CheckInterval::Never
        } else {
            match parse_count("check_interval", &self.check_interval, "epoch")? {
                None => CheckInterval::Epoch,
                Some(k) => CheckInterval::Every(k),
            }
        };
        spec.record = match parse_count("record_every", &self.record_every, "epoch")? {
            None => RecordChoice::Epoch,
            Some(k) => RecordChoice::Every(k),
        };
        spec.gram_cond = self.gram_cond;
        spec.backend = match self.backend {
            BackendArg::Lockstep => Backend::LockstepSerial,
            BackendArg::Threaded => Backend::Threaded,
        };
        spec.all_to_all = match self.all_to_all {
            AllToAllArg::Small => AllToAllModel::SmallMessage,
            AllToAllArg::Large => AllToAllModel::LargeMessage,
        };
        spec.machine = self.machine.clone();
        spec.output = self.output.clone();
        spec.reference = self.reference();
        Ok(spec)
    }

    fn reference(&self) -> ReferenceChoice {
        if self.no_reference {
            ReferenceChoice::None
        } else {
            ReferenceChoice::Cg {
                tol: self.wopt_tol,
                max_iters: self.wopt_iters,
                cache: self.wopt_cache.clone(),
            }
        }
    }
}

fn csv_sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(a) => {
            let mut spec = a.common.spec(a.algo, a.block, a.s)?;
            spec.output = None;
            let dataset = load_dataset(&spec.dataset, spec.features)?;
            let report = run_on(&dataset, &spec, None)?;
            write_csv(&report.rows, csv_sink(&a.common.output)?)?;
            if a.common.output.is_some() {
                println!("{}", report.summary);
            } else {
                eprintln!("{}", report.summary);
            }
        }
        Command::Compare(a) => {
            let specs = a
                .algos
                .iter()
                .map(|&alg| {
                    let b = if alg.is_dual() { a.dual_block } else { a.block };
                    let s = if alg.is_ca() { a.s } else { 1 };
                    a.common.spec(alg, b, s)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let rows = compare(&specs, &a.common.reference())?;
            write_compare_csv(&rows, csv_sink(&a.common.output)?)?;
        }
        Command::Costs(a) => {
            let spec = a.common.spec(a.algo, a.block, a.s)?;
            let dataset = load_dataset(&spec.dataset, spec.features)?;
            println!("{}", theoretical_costs(&dataset, &spec)?);
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code: 2 for usage errors, 1 for other failures.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e @ CliError::Usage { .. }) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
