use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use degenwave::orchestrator::{
    cmd_curvature, cmd_refine, cmd_run, cmd_sweep, exit_code, run_exit_code, RunConfig, SweepConfig,
};
use degenwave::Error;

#[derive(Parser)]
#[command(name = "degenwave", version, about = "Degenerate quasilinear wave laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one configuration until degeneracy or t_max.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
        p: Option<u32>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Run the configuration over a list of rescaling parameters.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        lambdas: Vec<f64>,
        /// Run every point with both P = 1 and P = 2.
        #[arg(long)]
        compare_p: bool,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Repeat the run on successively refined grids.
    Refine {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        /// Permit 3-D levels above 128 points per axis.
        #[arg(long)]
        allow_large: bool,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Evolve to a time and write the curvature fields there.
    Curvature {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        at_time: f64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn load(path: &PathBuf, out_dir: &Option<PathBuf>) -> Result<RunConfig, Error> {
    let mut config = RunConfig::load(path)?;
    if let Some(d) = out_dir {
        config.out_dir = d.clone();
    }
    Ok(config)
}

fn dispatch(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Run {
            config,
            out_dir,
            p,
            lambda,
        } => {
            let mut config = load(&config, &out_dir)?;
            if let Some(p) = p {
                config.p = p;
            }
            if let Some(l) = lambda {
                config = config.with_lambda(l);
            }
            let summary = cmd_run(&config)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(run_exit_code(summary.stop_reason))
        }
        Command::Sweep {
            config,
            lambdas,
            compare_p,
            out_dir,
        } => {
            let base = load(&config, &out_dir)?;
            let dir = base.out_dir.clone();
            let sweep = SweepConfig {
                base,
                lambdas,
                compare_p,
            };
            let rows = cmd_sweep(&sweep, Some(&dir))?;
            println!("{}", degenwave::orchestrator::SweepRow::CSV_HEADER);
            for r in &rows {
                println!("{}", r.csv_record());
            }
            Ok(0)
        }
        Command::Refine {
            config,
            levels,
            allow_large,
            out_dir,
        } => {
            let config = load(&config, &out_dir)?;
            let rows = cmd_refine(&config, levels, allow_large, Some(&config.out_dir))?;
            println!("{}", serde_json::to_string_pretty(&rows)?);
            Ok(0)
        }
        Command::Curvature {
            config,
            at_time,
            out_dir,
        } => {
            let config = load(&config, &out_dir)?;
            let summary = cmd_curvature(&config, at_time, Some(&config.out_dir))?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(threads) = std::env::var("DEGENWAVE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if threads > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
        }
    }
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
