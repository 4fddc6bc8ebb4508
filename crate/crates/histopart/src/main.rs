use clap::{Args, Parser, Subcommand, ValueEnum};
use histopart::cli::{
    cmd_adversarial_audit, cmd_partition, cmd_runsstats, cmd_sort, cmd_sweep, records_to_json,
    rows_to_csv, Algo, ExperimentSpec, TrialRecord, Workload,
};
use std::path::PathBuf;
use std::process::ExitCode;

/// Seeded simulator for histogram-based splitter selection in BSP sorting.
#[derive(Parser)]
#[command(name = "histopart", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select splitters and emit the run reports.
    Partition(RunArgs),
    /// Select splitters, then exchange and sort the keys end to end.
    Sort(RunArgs),
    /// Run the full (p, trial) matrix and emit one result row per run.
    Sweep(RunArgs),
    /// Compare closed-form runs statistics against enumeration and Monte Carlo.
    Runsstats(RunsstatsArgs),
    /// Regenerate an adversarial layout and audit its structure.
    AdversarialAudit(AuditArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    /// Multi-round adaptive sampling with histogram feedback.
    #[value(name = "histopart")]
    Histopart,
    /// Multi-round with a fixed per-round sample budget.
    #[value(name = "hss_fixed", alias = "hss-fixed")]
    HssFixed,
    /// Classic one-round sample sort.
    #[value(name = "sample_sort", alias = "sample-sort")]
    SampleSort,
}

#[derive(Clone, Copy, ValueEnum)]
enum WorkloadArg {
    Uniform,
    Adversarial,
    SortedBlocks,
    ZipfGaps,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value_t = AlgoArg::Histopart)]
    algo: AlgoArg,
    /// Processor counts, comma separated (e.g. 64,256,1024).
    #[arg(long = "p", value_delimiter = ',', default_value = "16")]
    p: Vec<usize>,
    /// Keys per processor; N = p * keys_per_proc.
    #[arg(long, default_value_t = 256)]
    keys_per_proc: u64,
    /// Balance slack: bucket sizes may reach (1+epsilon) * N/p.
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Oversampling constant in the per-key sampling probability.
    #[arg(long = "c", default_value_t = 3.0)]
    c: f64,
    /// Sample size S for sample_sort (default ceil(3*p*ln p)) or the
    /// per-round budget for hss_fixed (default p).
    #[arg(long)]
    sample_size: Option<u64>,
    #[arg(long, default_value_t = 1)]
    trials: u64,
    /// Base seed; trial t runs with seed + t.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = WorkloadArg::Uniform)]
    workload: WorkloadArg,
    /// Part count for the adversarial workload (default: largest divisor
    /// of p at most sqrt(p)).
    #[arg(long = "C")]
    parts: Option<usize>,
    /// Whether broadcast traffic counts toward the per-superstep cost h.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    count_broadcast: bool,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Default: csv for sweep, json for partition and sort.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args)]
struct RunsstatsArgs {
    /// Number of successes in the arrangement.
    #[arg(long)]
    m1: u64,
    /// Number of failures in the arrangement.
    #[arg(long)]
    m2: u64,
    /// Run length being counted.
    #[arg(long)]
    k: u64,
    /// Monte Carlo trials (0 disables the Monte Carlo section).
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long = "p", default_value_t = 64)]
    p: usize,
    #[arg(long, default_value_t = 64)]
    keys_per_proc: u64,
    /// Part count (default: largest divisor of p at most sqrt(p)).
    #[arg(long = "C")]
    parts: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn to_spec(&self) -> ExperimentSpec {
        ExperimentSpec {
            algo: match self.algo {
                AlgoArg::Histopart => Algo::Histopart,
                AlgoArg::HssFixed => Algo::HssFixed,
                AlgoArg::SampleSort => Algo::SampleSort,
            },
            p_list: self.p.clone(),
            keys_per_proc: self.keys_per_proc,
            epsilon: self.epsilon,
            sample_constant: self.c,
            sample_size: self.sample_size,
            trials: self.trials,
            seed: self.seed,
            workload: match self.workload {
                WorkloadArg::Uniform => Workload::Uniform,
                WorkloadArg::Adversarial => Workload::Adversarial { c: self.parts },
                WorkloadArg::SortedBlocks => Workload::SortedBlocks,
                WorkloadArg::ZipfGaps => Workload::ZipfGaps,
            },
            count_broadcast: self.count_broadcast,
        }
    }
}

fn emit(text: &str, out: Option<&PathBuf>) -> std::io::Result<()> {
    use std::io::Write;
    match out {
        Some(path) => std::fs::write(path, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{}", text.trim_end_matches('\n')) {
                // Downstream consumers (head, etc.) may close the pipe early.
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                other => other,
            }
        }
    }
}

fn emit_records(
    records: &[TrialRecord],
    args: &RunArgs,
    default_format: FormatArg,
    with_sort_fields: bool,
) -> std::io::Result<()> {
    let format = args.format.unwrap_or(default_format);
    let text = match format {
        FormatArg::Csv => rows_to_csv(records, with_sort_fields),
        FormatArg::Json => format!("{:#}", records_to_json(records)),
    };
    emit(&text, args.out.as_ref())
}

fn run(cli: &Cli) -> Result<(), Box<dyn std::error::Error>> {
    match &cli.command {
        Command::Partition(args) => {
            let records = cmd_partition(&args.to_spec())?;
            emit_records(&records, args, FormatArg::Json, false)?;
        }
        Command::Sort(args) => {
            let records = cmd_sort(&args.to_spec())?;
            emit_records(&records, args, FormatArg::Json, true)?;
        }
        Command::Sweep(args) => {
            let records = cmd_sweep(&args.to_spec())?;
            emit_records(&records, args, FormatArg::Csv, false)?;
        }
        Command::Runsstats(args) => {
            let report = cmd_runsstats(args.m1, args.m2, args.k, args.trials, args.seed)?;
            emit(&format!("{report:#}"), args.out.as_ref())?;
        }
        Command::AdversarialAudit(args) => {
            let n = args.p as u64 * args.keys_per_proc;
            let report = cmd_adversarial_audit(n, args.p, args.parts, args.seed)?;
            emit(&format!("{report:#}"), args.out.as_ref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let payload = serde_json::json!({ "error": err.to_string() });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}
