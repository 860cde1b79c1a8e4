use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use autoadapt::bench::{run_comparison, Algorithm, BenchModel, BoxplotRow, ComparisonResult, ExperimentConfig};
use autoadapt::engine::TimeSource;
use autoadapt::samplers::SamplerKind;
use autoadapt::{Error, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "autoadapt", version, about = "Adaptive MCMC kernel search benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run replicated comparisons and write results to a directory.
    Run(RunArgs),
    /// Rebuild the table and plot data from a results directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<BenchModel>,
    #[arg(long)]
    model_file: Option<String>,
    #[arg(long)]
    size: Option<usize>,
    /// Comma-separated algorithms.
    #[arg(long, value_delimiter = ',')]
    algo: Option<Vec<Algorithm>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    outer: Option<usize>,
    #[arg(long)]
    inner: Option<usize>,
    #[arg(long = "final")]
    final_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    data_seed: Option<u64>,
    /// Comma-separated candidate sampler kinds.
    #[arg(long, value_delimiter = ',')]
    candidates: Option<Vec<SamplerKind>>,
    /// `cost` or `wall`.
    #[arg(long)]
    time: Option<String>,
    #[arg(long)]
    threads: Option<usize>,
    /// Write final-run traces.
    #[arg(long)]
    traces: bool,
    #[arg(long)]
    out: PathBuf,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg: ExperimentConfig = match &self.config {
            Some(p) => serde_json::from_reader(File::open(p)?)?,
            None => ExperimentConfig::default(),
        };
        if let Some(m) = self.model {
            cfg.model = m;
        }
        if self.model_file.is_some() {
            cfg.model_file = self.model_file.clone();
        }
        macro_rules! set {
            ($($f:ident => $g:ident),*) => {$(if let Some(v) = self.$f.clone() { cfg.$g = v; })*};
        }
        set!(reps => reps, outer => outer, final_iters => final_iters, seed => seed, data_seed => data_seed,
            algo => algorithms, candidates => candidates);
        if self.size.is_some() {
            cfg.size = self.size;
        }
        if self.inner.is_some() {
            cfg.inner = self.inner;
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        if let Some(t) = &self.time {
            cfg.time = match t.as_str() {
                "cost" => TimeSource::Cost,
                "wall" => TimeSource::Wall,
                other => return Err(Error::Config(format!("unknown time source `{other}`"))),
            };
        }
        cfg.keep_traces |= self.traces;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct Timing<'a> {
    algorithm: &'a str,
    rep: usize,
    wall_seconds: f64,
}

fn write_derived(dir: &Path, res: &ComparisonResult) -> Result<()> {
    res.table.write_csv(File::create(dir.join("table.csv"))?)?;
    BoxplotRow::write_csv(&res.boxplot_rows(), File::create(dir.join("boxplot_data.csv"))?)?;
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = args.config()?;
    fs::create_dir_all(&args.out)?;
    let res = run_comparison(&cfg)?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(args.out.join("report.json"))?), &res)?;
    let timing: Vec<Timing> = res
        .arms
        .iter()
        .map(|a| Timing {
            algorithm: a.algorithm.name(),
            rep: a.rep,
            wall_seconds: a.wall_seconds,
        })
        .collect();
    serde_json::to_writer_pretty(File::create(args.out.join("timing.json"))?, &timing)?;
    write_derived(&args.out, &res)?;
    if cfg.keep_traces {
        let dir = args.out.join("traces");
        fs::create_dir_all(&dir)?;
        for a in &res.arms {
            if let Some(t) = &a.final_trace {
                t.write_csv(File::create(dir.join(format!("{}_rep{:02}.csv", a.algorithm, a.rep)))?)?;
            }
        }
    }
    println!("{}", res.table);
    Ok(())
}

fn report(input: &Path) -> Result<()> {
    let res: ComparisonResult = serde_json::from_reader(File::open(input.join("report.json"))?)?;
    write_derived(input, &res)?;
    println!("{}", res.table);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match cli.command {
        Command::Run(args) => run(args),
        Command::Report { input } => report(&input),
    };
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
