use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use seqbias::learners::LearnerKind;
use seqbias::tasks::{write_dump, TaskInstance, TaskKind};
use seqbias_runner::report::{curve_rows, emit_curve, emit_report, write_outputs, ReportFormat};
use seqbias_runner::{
    replay, run_curves, run_experiment, ExperimentSpec, LearnerGrid, ResultRow, Result, RunManifest,
    RunnerError, TaskGrid,
};

#[derive(Parser)]
#[command(name = "seqbias", version, about = "Measure inductive biases of seq2seq learners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment grid and write rows, manifest and raw dump.
    Run(RunArgs),
    /// Write a task's train set, holdout and rule labels as text.
    DumpTask(DumpArgs),
    /// Re-emit stored rows in another format.
    Report {
        /// rows.json written by `run`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "markdown")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute normalized description-length curves from a spec with a [curve] section.
    Curve {
        #[arg(long)]
        config: PathBuf,
        /// Output data file (default: <output>/curve.tsv).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Rerun a stored manifest and verify that every row is reproduced.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Args, Clone, Default)]
struct TaskFlags {
    #[arg(long)]
    task: Option<TaskKind>,
    #[arg(long, value_delimiter = ',')]
    l: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    d: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    m: Vec<usize>,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment spec; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    task: TaskFlags,
    #[arg(long, value_delimiter = ',')]
    learner: Vec<LearnerKind>,
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also print the rows in this format.
    #[arg(long, value_enum)]
    format: Option<ReportFormat>,
    /// Replay this manifest instead of running a spec.
    #[arg(long, conflicts_with = "config")]
    replay: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct DumpArgs {
    #[command(flatten)]
    task: TaskFlags,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn instance(flags: &TaskFlags) -> Result<TaskInstance> {
    let kind = flags
        .task
        .ok_or_else(|| RunnerError::Spec("--task is required".into()))?;
    let one = |v: &[usize], name: &str| match v {
        [] => Ok(None),
        [x] => Ok(Some(*x)),
        _ => Err(RunnerError::Spec(format!("dump-task takes a single --{name}"))),
    };
    Ok(TaskInstance::from_params(
        kind,
        one(&flags.l, "l")?,
        one(&flags.d, "d")?,
        one(&flags.n, "n")?,
        one(&flags.m, "m")?,
    )?)
}

fn resolve_spec(args: &RunArgs) -> Result<ExperimentSpec> {
    let mut spec = match &args.config {
        Some(path) => ExperimentSpec::load(path)?,
        None => ExperimentSpec::new(Vec::new(), Vec::new()),
    };
    if let Some(kind) = args.task.task {
        let f = &args.task;
        spec.tasks = vec![TaskGrid {
            task: kind,
            l: f.l.clone(),
            d: f.d.clone(),
            n: f.n.clone(),
            m: f.m.clone(),
            rules: Vec::new(),
        }];
    }
    if !args.learner.is_empty() {
        spec.learners = args.learner.iter().map(|&k| LearnerGrid::new(k)).collect();
    }
    if let Some(s) = args.seeds {
        spec.seeds = s;
    }
    if let Some(e) = args.epochs {
        spec.train.epochs = e;
        spec.train.warmup = spec.train.warmup.min(e);
    }
    if let Some(out) = &args.out {
        spec.output = out.clone();
    }
    spec.validate()?;
    Ok(spec)
}

fn print_rows(rows: &[ResultRow], format: ReportFormat) -> Result<()> {
    let dir = std::env::temp_dir().join(format!("seqbias-{}", std::process::id()));
    let path = emit_report(rows, format, &dir)?;
    let text = std::fs::read_to_string(&path).map_err(|source| RunnerError::Io { path: path.clone(), source })?;
    print!("{text}");
    let _ = std::fs::remove_dir_all(dir);
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let (output, dir) = match &args.replay {
        Some(path) => {
            let manifest = RunManifest::load(path)?;
            let dir = args.out.clone().unwrap_or_else(|| manifest.spec.output.clone());
            (replay(&manifest, args.workers)?, dir)
        }
        None => {
            let spec = resolve_spec(&args)?;
            let dir = spec.output.clone();
            (run_experiment(&spec, args.workers)?, dir)
        }
    };
    write_outputs(&output, &dir)?;
    let failed = output.records.iter().filter(|r| r.failure.is_some()).count();
    eprintln!(
        "{} rows, {} jobs ({} failed) written to {}",
        output.rows.len(),
        output.records.len(),
        failed,
        dir.display()
    );
    if let Some(format) = args.format {
        print_rows(&output.rows, format)?;
    }
    Ok(())
}

fn report(input: &Path, format: ReportFormat, out: Option<PathBuf>) -> Result<()> {
    let text = std::fs::read_to_string(input).map_err(|source| RunnerError::Io {
        path: input.to_path_buf(),
        source,
    })?;
    let rows: Vec<ResultRow> = serde_json::from_str(&text)?;
    match out {
        Some(dir) => {
            let path = emit_report(&rows, format, &dir)?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        None => print_rows(&rows, format),
    }
}

fn main_inner() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::DumpTask(args) => {
            let data = instance(&args.task)?.data()?;
            match args.out {
                Some(path) => {
                    let file = std::fs::File::create(&path).map_err(|source| RunnerError::Io {
                        path: path.clone(),
                        source,
                    })?;
                    write_dump(&data, std::io::BufWriter::new(file))?;
                }
                None => write_dump(&data, std::io::stdout().lock())?,
            }
            Ok(())
        }
        Command::Report { input, format, out } => report(&input, format, out),
        Command::Curve { config, out, workers } => {
            let spec = ExperimentSpec::load(&config)?;
            let mut rows = Vec::new();
            for (learner, points) in run_curves(&spec, workers)? {
                rows.extend(curve_rows(&learner, &points)?);
            }
            let path = out.unwrap_or_else(|| spec.output.join("curve.tsv"));
            emit_curve(&rows, &path)?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        Command::Replay { manifest, out, workers } => {
            let m = RunManifest::load(&manifest)?;
            let dir = out.unwrap_or_else(|| m.spec.output.clone());
            let output = replay(&m, workers)?;
            write_outputs(&output, &dir)?;
            eprintln!("replay reproduced {} rows; written to {}", output.rows.len(), dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
