use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fastmu::{generate, save_csv, SparsitySetup, SyntheticSpec};
use nmf_bench::{
    aggregate_median, emit_plot, run_experiment, run_nls, sweep_delta, Axis, BenchError,
    ExperimentConfig, ExperimentReport, Schedule, TraceTable,
};

#[derive(Parser)]
#[command(name = "nmf-bench", version, about = "Benchmarks for NMF solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic problem as V.csv, W.csv and H.csv.
    Gen {
        #[arg(long, default_value_t = 200)]
        m: usize,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        rank: usize,
        /// Signal-to-noise ratio in dB; `inf` for noise-free data.
        #[arg(long, default_value_t = 100.0)]
        snr_db: f64,
        /// dense, data_sparse, fac_sparse or fac_data_sparse.
        #[arg(long, default_value = "dense")]
        setup: SparsitySetup,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run every algorithm of a configuration on every seed.
    Run(RunArgs),
    /// Run the roster once per inner-stopping delta of the [sweep] section.
    SweepDelta(RunArgs),
    /// Solve for H with W fixed.
    Nls(RunArgs),
    /// Plot a traces CSV (raw or median) as SVG.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, value_enum)]
        x: XAxis,
        /// Defaults to the CSV path with an .svg extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// One cell at a time, for wall-clock comparisons.
    #[arg(long)]
    timed: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum XAxis {
    Time,
    Iter,
}

fn report(result: Result<ExperimentReport, BenchError>, out: &Path) -> Result<(), BenchError> {
    let report = result?;
    println!(
        "{} trace rows written to {}",
        report.table.rows.len(),
        out.display()
    );
    if report.errors.is_empty() {
        return Ok(());
    }
    for e in &report.errors {
        eprintln!("{} seed {}: {}", e.label, e.seed, e.message);
    }
    Err(BenchError::CellsFailed(report.errors.len()))
}

fn run(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Gen {
            m,
            n,
            rank,
            snr_db,
            setup,
            seed,
            out,
        } => {
            let spec = SyntheticSpec::new(m, n, rank)
                .with_snr_db(snr_db)
                .with_setup(setup)
                .with_seed(seed);
            let problem = generate(&spec)?;
            std::fs::create_dir_all(&out).map_err(|e| BenchError::io(&out, e))?;
            save_csv(&problem.v, out.join("V.csv"))?;
            save_csv(&problem.w_true, out.join("W.csv"))?;
            save_csv(&problem.h_true, out.join("H.csv"))?;
            println!(
                "wrote {}x{} data at rank {rank}, realized SNR {:.3} dB, to {}",
                m,
                n,
                problem.realized_snr_db(),
                out.display()
            );
            Ok(())
        }
        Command::Run(args) => {
            let config = ExperimentConfig::load(&args.config)?;
            let schedule = Schedule::from_env(args.timed)?;
            report(run_experiment(&config, schedule), &config.output_dir)
        }
        Command::Nls(args) => {
            let config = ExperimentConfig::load(&args.config)?;
            let schedule = Schedule::from_env(args.timed)?;
            report(run_nls(&config, schedule), &config.output_dir)
        }
        Command::SweepDelta(args) => {
            let config = ExperimentConfig::load(&args.config)?;
            let schedule = Schedule::from_env(args.timed)?;
            let outcome = sweep_delta(&config, schedule);
            let outcome = outcome.map(|(report, counts)| {
                println!("delta,algorithm,runs,median_inner,mean_inner,median_final_loss");
                for c in &counts {
                    println!(
                        "{:?},{},{},{},{:.3},{:e}",
                        c.delta,
                        c.algorithm,
                        c.runs,
                        c.median_inner,
                        c.mean_inner,
                        c.median_final_loss
                    );
                }
                report
            });
            report(outcome, &config.output_dir)
        }
        Command::Plot { csv, x, out } => {
            let table = TraceTable::load_csv(&csv)?;
            let axis = match x {
                XAxis::Time => Axis::Time,
                XAxis::Iter => Axis::Iteration,
            };
            let medians = aggregate_median(&table, axis)?;
            let out = out.unwrap_or_else(|| csv.with_extension("svg"));
            emit_plot(&medians, axis, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
