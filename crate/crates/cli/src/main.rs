//! `rectiflow` command line: schedules, sampling, TV estimation, checks and
//! the TV-versus-dimension sweep.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rectiflow::batch::{BatchMeta, SampleBatch, SamplerKind};
use rectiflow::checks::{self, Suite};
use rectiflow::error::Error;
use rectiflow::exec::Execution;
use rectiflow::harness;
use rectiflow::metrics;
use rectiflow::samplers::{self, SamplerOptions};
use rectiflow::schedules::{self, DdpmSchedule, GridKind, TimeGrid};
use rectiflow::targets::{self, ExactField};

#[derive(Parser, Debug)]
#[command(name = "rectiflow", version, about = "Rectified-flow samplers, schedules and TV experiments")]
struct Cli {
    /// Master seed. For `experiment fig2` it replaces the configured seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print a time grid as `index,t,eta`.
    Schedule(GridArgs),
    /// Draw samples with one of the RF / DDPM samplers.
    Sample(SampleArgs),
    /// Classifier estimate of the TV distance between two sample files.
    Tv(TvArgs),
    /// Run a numerical check suite; exits 1 if any check fails.
    Check(CheckArgs),
    /// Experiment sweeps.
    Experiment {
        #[command(subcommand)]
        which: Experiment,
    },
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long, default_value = "ushaped")]
    grid: GridKind,
    #[arg(long, default_value_t = 100)]
    n_steps: usize,
    /// Endpoint offset of the U-shaped grid (default: min(1/N, 1/d), or 1/N).
    #[arg(long)]
    delta: Option<f64>,
    /// Target dimension used for the default δ.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, default_value_t = 2.0)]
    c0: f64,
    #[arg(long, default_value_t = 4.0)]
    c1: f64,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    sampler: SamplerKind,
    /// Target description file.
    #[arg(long)]
    target: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value_t = 2000)]
    num_samples: usize,
    /// Write every intermediate state as `step,t,x0,...`.
    #[arg(long)]
    record_trajectories: bool,
    /// Also take the final deterministic step to t = 1.
    #[arg(long)]
    final_step: bool,
}

#[derive(Args, Debug)]
struct TvArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value_t = 10)]
    rounds: usize,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(long)]
    suite: Suite,
}

#[derive(Subcommand, Debug)]
enum Experiment {
    /// TV versus dimension under uniform and non-uniform grids.
    Fig2 {
        /// Experiment config (`key = value` lines).
        config: PathBuf,
        /// Optional JSON manifest with the spec, input hash and wall times.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

/// Why the command failed, mapped onto the exit code.
enum Failure {
    /// A check ran and did not pass.
    Check(String),
    /// Bad arguments or input files.
    Usage(String),
    /// A computation failed.
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse { .. } | Error::Domain(_) | Error::Io(_) => Failure::Usage(e.to_string()),
            Error::NonFiniteState { .. } | Error::NoRoot(_) => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) | Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let exec = Execution::Parallel;
    let seed = cli.seed.unwrap_or(0);
    let out = cli.out.as_deref();
    match cli.command {
        Command::Schedule(args) => {
            let (grid, _) = build_grid(&args)?;
            let mut w = open_out(out)?;
            write_schedule(&grid, &mut w)?;
            w.flush()?;
        }
        Command::Sample(args) => {
            let text = std::fs::read_to_string(&args.target)
                .map_err(|e| Failure::Usage(format!("{}: {e}", args.target.display())))?;
            let target = targets::parse_target(&text)?;
            let mut grid_args = args.grid;
            if grid_args.dim.is_none() {
                grid_args.dim = Some(target.dim());
            }
            let (grid, ddpm) = build_grid(&grid_args)?;
            let opts = SamplerOptions {
                record_trajectories: args.record_trajectories,
                final_step: args.final_step,
                exec,
            };
            let field = ExactField::new(target);
            let batch = samplers::run_sampler(args.sampler, &field, &grid, ddpm.as_ref(), args.num_samples, seed, opts)?;
            let mut w = open_out(out)?;
            if args.record_trajectories {
                batch.write_trajectory_csv(&mut w)?;
            } else {
                batch.write_csv(&mut w)?;
            }
            w.flush()?;
        }
        Command::Tv(args) => {
            let a = read_batch(&args.a)?;
            let b = read_batch(&args.b)?;
            let est = metrics::estimate_tv(&a, &b, args.rounds, seed, exec)?;
            let mut w = open_out(out)?;
            writeln!(w, "tv,std_error,rounds")?;
            writeln!(w, "{},{},{}", est.value, est.std_error, est.rounds)?;
            w.flush()?;
        }
        Command::Check(args) => {
            let records = checks::run_suite(args.suite, seed, exec)?;
            let mut w = open_out(out)?;
            checks::write_report(&records, &mut w)?;
            w.flush()?;
            let failed: Vec<&str> = records.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
            if !failed.is_empty() {
                return Err(Failure::Check(format!(
                    "{} of {} checks failed: {}",
                    failed.len(),
                    records.len(),
                    failed.join(", ")
                )));
            }
        }
        Command::Experiment {
            which: Experiment::Fig2 { config, manifest },
        } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Failure::Usage(format!("{}: {e}", config.display())))?;
            let mut spec = harness::parse_config(&text)?;
            if let Some(s) = cli.seed {
                spec.seeds = vec![s];
            }
            let path = out.map(Path::to_path_buf).or_else(|| spec.output.clone());
            let mut w = open_out(path.as_deref())?;
            let rows = harness::run_fig2_to_csv(&spec, exec, &mut w).map_err(|e| match e {
                // a failing cell is a runtime failure even if it reports a domain error
                Error::Parse { .. } => Failure::from(e),
                other => Failure::Runtime(other.to_string()),
            })?;
            if let Some(m) = manifest {
                std::fs::write(&m, harness::manifest_json(&spec, &text, &rows))?;
            }
        }
    }
    Ok(())
}

fn build_grid(args: &GridArgs) -> Result<(TimeGrid, Option<DdpmSchedule>), Failure> {
    Ok(match args.grid {
        GridKind::Uniform => (schedules::build_uniform_grid(args.n_steps)?, None),
        GridKind::UShaped => {
            let delta = args.delta.unwrap_or_else(|| schedules::default_delta(args.n_steps, args.dim));
            (schedules::build_ushaped_grid(args.n_steps, delta)?, None)
        }
        GridKind::DdpmInduced => {
            let s = schedules::build_ddpm_schedule(args.n_steps, args.c0, args.c1)?;
            (schedules::ddpm_induced_rf_grid(&s)?, Some(s))
        }
        GridKind::Custom => return Err(Failure::Usage("custom grids cannot be built from the command line".into())),
    })
}

fn write_schedule<W: Write>(grid: &TimeGrid, w: &mut W) -> io::Result<()> {
    writeln!(w, "index,t,eta")?;
    let eta = grid.step_sizes();
    for (i, t) in grid.times().iter().enumerate() {
        match eta.get(i) {
            Some(e) => writeln!(w, "{i},{t},{e}")?,
            None => writeln!(w, "{i},{t},")?,
        }
    }
    Ok(())
}

fn read_batch(path: &Path) -> Result<SampleBatch, Failure> {
    let f = File::open(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let meta = BatchMeta {
        sampler: SamplerKind::Target,
        grid: "none".into(),
        target: path.display().to_string(),
        seed: 0,
        terminal_time: 1.0,
    };
    SampleBatch::read_csv(BufReader::new(f), meta)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}
