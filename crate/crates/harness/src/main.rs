use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use groupbeam_core::array::derive_seed;
use groupbeam_harness::bench::{run_bench, write_bench_csv};
use groupbeam_harness::curves::{
    horizontal_af_curves, linspace, write_horizontal_af, write_isl_trace, write_vertical_af,
};
use groupbeam_harness::grouping::optimize_pattern;
use groupbeam_harness::sweep::{run_sweep, run_trial, write_results_csv, write_timing_csv, SweepContext};
use groupbeam_harness::{BeamKind, Error, ExperimentConfig, Result};

/// Thread count for parallel trials and per-group solves.
const THREADS_ENV: &str = "GROUPBEAM_THREADS";

#[derive(Parser)]
#[command(name = "groupbeam", version, about = "Group-wise beam design and channel estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the antenna grouping pattern and write it as 0/1 CSV.
    EdaOptimize {
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Also write the best-fitness trace.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the configured Monte-Carlo sweep.
    Sweep {
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Wall times go here (default: `<output>.timing.csv`).
        #[arg(long)]
        timing: Option<PathBuf>,
    },
    /// Time every configured estimator on one shared input.
    Bench { config: PathBuf },
    /// Export an ambiguity-function curve.
    Af {
        #[arg(long, value_enum)]
        kind: AfKind,
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Single estimation run at the first sweep point; prints NMSE.
    Estimate {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AfKind {
    Vertical,
    Horizontal,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::EdaOptimize { config, output, trace } => {
            let cfg = ExperimentConfig::load(&config)?;
            let opt = optimize_pattern(&cfg)?;
            opt.result.best.pattern.write_csv(create(&output)?, &opt.header())?;
            if let Some(t) = trace {
                write_isl_trace(&opt.result.trace, create(&t)?)?;
            }
            println!("best fitness {:.6e} feasible {}", opt.result.best.fitness, opt.result.best.feasible);
        }
        Command::Sweep { config, output, timing } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rows = run_sweep(&cfg)?;
            write_results_csv(&rows, create(&output)?)?;
            let timing = timing.unwrap_or_else(|| {
                let mut s = output.clone().into_os_string();
                s.push(".timing.csv");
                PathBuf::from(s)
            });
            write_timing_csv(&rows, create(&timing)?)?;
            let failed = rows.iter().filter(|r| r.nmse.is_nan()).count();
            println!("{} rows, {failed} failed", rows.len());
        }
        Command::Bench { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            write_bench_csv(&run_bench(&cfg)?, std::io::stdout())?;
        }
        Command::Af { kind, config, output } => {
            let cfg = ExperimentConfig::load(&config)?;
            match kind {
                AfKind::Vertical => {
                    let beam = cfg.beam(cfg.beams[0])?;
                    let grid = linspace(cfg.prior.sin_lo(), cfg.prior.sin_hi(), cfg.af_points);
                    write_vertical_af(&beam, cfg.af_sin_theta, &grid, create(&output)?)?;
                }
                AfKind::Horizontal => {
                    let beam_kind =
                        cfg.beams.iter().copied().find(|b| matches!(b, BeamKind::GroupOpt | BeamKind::GroupUniform));
                    let beam_kind = beam_kind
                        .ok_or_else(|| Error::Config("horizontal AF needs a group-wise beam kind".into()))?;
                    let deltas = linspace(-2.0, 2.0, cfg.af_points);
                    let curves = horizontal_af_curves(
                        &cfg.pattern(beam_kind)?,
                        &cfg.partition()?,
                        cfg.geometry.m(),
                        cfg.geometry.t(),
                        &deltas,
                    )?;
                    write_horizontal_af(&deltas, &curves, create(&output)?)?;
                }
            }
        }
        Command::Estimate { config, seed } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.base_seed = derive_seed(cfg.base_seed, &[seed]);
            let ctx = SweepContext::new(&cfg)?;
            for r in run_trial(&cfg, &ctx, 0, &cfg.points[0], 0) {
                println!(
                    "{} {} snr_db={} k_paths={} nmse_db={:.3} support={} time_ms={:.1}",
                    r.beam,
                    r.estimator,
                    r.snr_db,
                    r.k_paths,
                    r.nmse_db(),
                    r.support_size,
                    r.wall_time_ms
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let threads = match v.parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => {
                eprintln!("error kind=config message={:?}", format!("{THREADS_ENV} must be a positive integer"));
                return ExitCode::from(2);
            }
        };
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error kind=runtime message={:?}", e.to_string());
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={} message={:?}", e.kind(), e.to_string());
            ExitCode::from(1)
        }
    }
}
