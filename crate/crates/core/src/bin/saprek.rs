use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use saprek::experiments::{
    run_error_vs_epsilon, run_error_vs_iteration, run_lambda_curve, run_table_eps_sweep,
    ExperimentConfig, MatrixKind, DEFAULT_CHECKPOINTS, DEFAULT_EPS_GRID, TABLE_DIMS,
};
use saprek::oracle::{run_oracle_suite, write_oracle_csv};

/// Monte Carlo experiments for RK, REK and SAP-REK(ε). Every subcommand writes CSV.
#[derive(Parser, Debug)]
#[command(name = "saprek", version)]
struct Cli {
    /// Worker threads for parallel trials (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Error against iteration count for REK and SAP-REK at each ε; one CSV per method in --out.
    Converge {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10_000)]
        iters: usize,
        #[arg(long, default_value_t = 10)]
        stride: usize,
        #[arg(long, default_value = "converge")]
        out: PathBuf,
    },
    /// Error against ε at fixed iteration counts.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Iteration counts to report (repeatable).
        #[arg(long = "at")]
        at: Vec<usize>,
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
    },
    /// Smallest positive eigenvalue of the expected update matrix as a function of ε.
    Lambda {
        #[command(flatten)]
        common: Common,
        /// Keep the A_ij² term instead of using the dropped-term surrogate.
        #[arg(long)]
        exact_z: bool,
        #[arg(long, default_value = "lambda.csv")]
        out: PathBuf,
    },
    /// Best ε per matrix size and kind, from the final mean error.
    Table {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10_000)]
        iters: usize,
        /// Dimensions as MxN (repeatable); defaults to 200x10, 200x20, 400x10.
        #[arg(long = "dims", value_parser = parse_dims)]
        dims: Vec<(usize, usize)>,
        #[arg(long, default_value = "table.csv")]
        out: PathBuf,
    },
    /// Cross-validation of closed forms against independent routes.
    Oracle {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "oracle.csv")]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long, default_value = "gaussian")]
    kind: MatrixKind,
    #[arg(long, default_value_t = 200)]
    rows: usize,
    #[arg(long, default_value_t = 10)]
    cols: usize,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// ε values (repeatable); defaults to 1e-5, 1e-4, ..., 1e4.
    #[arg(long = "eps")]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl Common {
    fn config(&self, out: PathBuf) -> ExperimentConfig {
        ExperimentConfig {
            matrix_kind: self.kind,
            m: self.rows,
            n: self.cols,
            trials: self.trials,
            eps_list: if self.eps.is_empty() {
                DEFAULT_EPS_GRID.to_vec()
            } else {
                self.eps.clone()
            },
            base_seed: self.seed,
            output_path: out,
            ..ExperimentConfig::default()
        }
    }
}

fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (m, n) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected MxN, got '{s}'"))?;
    let m = m
        .trim()
        .parse()
        .map_err(|e| format!("bad row count in '{s}': {e}"))?;
    let n = n
        .trim()
        .parse()
        .map_err(|e| format!("bad column count in '{s}': {e}"))?;
    Ok((m, n))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring worker threads")?;
    }
    match cli.command {
        Command::Converge {
            common,
            iters,
            stride,
            out,
        } => {
            let config = ExperimentConfig {
                iterations: iters,
                record_every: stride,
                ..common.config(out)
            };
            for path in run_error_vs_iteration(&config)? {
                println!("{}", path.display());
            }
        }
        Command::Sweep { common, at, out } => {
            let checkpoints = if at.is_empty() {
                DEFAULT_CHECKPOINTS.to_vec()
            } else {
                at
            };
            let config = ExperimentConfig {
                iterations: checkpoints.iter().copied().max().unwrap_or(0),
                checkpoints,
                ..common.config(out)
            };
            println!("{}", run_error_vs_epsilon(&config)?.display());
        }
        Command::Lambda {
            common,
            exact_z,
            out,
        } => {
            println!(
                "{}",
                run_lambda_curve(&common.config(out), exact_z)?.display()
            );
        }
        Command::Table {
            common,
            iters,
            dims,
            out,
        } => {
            let dims = if dims.is_empty() {
                TABLE_DIMS.to_vec()
            } else {
                dims
            };
            let config = ExperimentConfig {
                iterations: iters,
                ..common.config(out)
            };
            println!("{}", run_table_eps_sweep(&config, &dims)?.display());
        }
        Command::Oracle { seed, out } => {
            let checks = run_oracle_suite(seed)?;
            write_oracle_csv(&out, &checks)?;
            let failed: Vec<_> = checks
                .iter()
                .filter(|c| !c.pass())
                .map(|c| c.name)
                .collect();
            println!("{}", out.display());
            if !failed.is_empty() {
                bail!("oracle checks failed: {}", failed.join(", "));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
