use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use polyargmax::synth::{synthesize, GenSpec};
use polyargmax::LogitVector;
use polyargmax_cli::grid::{parse_schedule, Grid};
use polyargmax_cli::report::{emit, Format};
use polyargmax_cli::tasks::{self, HeBenchOptions, NucleusOptions, GRAD_REL_TOL, GRAD_ROW_TOL};
use polyargmax_cli::{io, CliError, Result};

#[derive(Parser)]
#[command(name = "polyargmax", version, about = "Polynomial argmax experiments")]
struct Cli {
    #[command(subcommand)]
    task: Task,
}

#[derive(Args)]
struct Common {
    /// LGT1 or JSON-lines logits.
    #[arg(long, conflicts_with = "gen")]
    input: Option<PathBuf>,
    /// Synthetic logits, e.g. `normal:n=1024,count=100,sigma=1`.
    #[arg(long)]
    gen: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: Format,
}

impl Common {
    fn vectors(&self) -> Result<Vec<LogitVector>> {
        match (&self.input, &self.gen) {
            (Some(path), _) => io::ingest(path),
            (None, Some(spec)) => Ok(synthesize(&spec.parse::<GenSpec>()?, self.seed)?),
            (None, None) => Err(CliError::BadSpec("give --input or --gen".into())),
        }
    }
}

#[derive(Subcommand)]
enum Task {
    /// Argmax recovery and top mass over a (T, p, c) grid.
    ArgmaxSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "T=4,5;p=7..19:2;c=3..39:2")]
        grid: String,
    },
    /// Encrypted CutMax against tournament and league on the slot simulator.
    HeBench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 11)]
        alpha: u32,
        #[arg(long)]
        slots: Option<usize>,
        /// Per-iteration schedule, e.g. `p=16,4,4,6;c=5,3,3,3`.
        #[arg(long)]
        schedule: Option<String>,
        #[arg(long, default_value_t = 256)]
        league_max: usize,
    },
    /// Nucleus violation rates of Gumbel-max and Beta-cut sampling.
    NucleusViolation {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.9)]
        p: f64,
        /// Tail mass; defaults to `p`.
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        draws: usize,
        /// One (T, p, c) cell.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Per-iteration residual diagnostics.
    ConvergeTrace {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        grid: Option<String>,
    },
    /// JVP against central differences, and Jacobian row sums.
    GradCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        grid: Option<String>,
    },
    /// Writes synthetic logits; `.jsonl` paths get JSON lines, others LGT1.
    Gen {
        spec: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn single(grid: &Option<String>) -> Result<Option<polyargmax_cli::grid::Cell>> {
    grid.as_deref().map(|g| Grid::parse(g)?.single()).transpose()
}

fn run(task: Task) -> Result<()> {
    match task {
        Task::ArgmaxSweep { common, grid } => {
            let grid = Grid::parse(&grid)?;
            let rows = tasks::argmax_sweep(&common.vectors()?, &grid)?;
            emit(common.format, &rows, &rows, common.out.as_deref())
        }
        Task::HeBench { common, alpha, slots, schedule, league_max } => {
            let opts = HeBenchOptions {
                alpha_bits: alpha,
                slots,
                schedule: schedule.as_deref().map(parse_schedule).transpose()?,
                league_max,
                ..HeBenchOptions::default()
            };
            let report = tasks::he_bench(&common.vectors()?, &opts)?;
            emit(common.format, &report, &report.rows, common.out.as_deref())
        }
        Task::NucleusViolation { common, p, q, draws, grid } => {
            let opts = NucleusOptions { p, q, draws, params: single(&grid)? };
            let report = tasks::nucleus_violation(&common.vectors()?, &opts, common.seed)?;
            emit(common.format, &report, &report.rows, common.out.as_deref())?;
            if report.beta_cut_rate.mean > 0.0 {
                return Err(CliError::Gate(format!(
                    "beta-cut violation rate {} is above zero",
                    report.beta_cut_rate.mean
                )));
            }
            Ok(())
        }
        Task::ConvergeTrace { common, grid } => {
            let rows = tasks::converge_trace(&common.vectors()?, single(&grid)?)?;
            emit(common.format, &rows, &rows, common.out.as_deref())
        }
        Task::GradCheck { common, grid } => {
            let rows = tasks::grad_check(&common.vectors()?, single(&grid)?, common.seed)?;
            emit(common.format, &rows, &rows, common.out.as_deref())?;
            let failed = rows.iter().filter(|r| !r.pass).count();
            if failed > 0 {
                return Err(CliError::Gate(format!(
                    "{failed} vectors exceed JVP error {GRAD_REL_TOL:e} or row sum {GRAD_ROW_TOL:e}"
                )));
            }
            Ok(())
        }
        Task::Gen { spec, seed, out } => io::write_path(&out, &synthesize(&spec.parse::<GenSpec>()?, seed)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().task) {
        Ok(()) => ExitCode::SUCCESS,
        // A closed downstream pipe, as with `| head`, is not a failure.
        Err(CliError::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
