mod commands;
mod config;
mod record;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use qcomb::Task;

use config::{parse_range, FileConfig, Method, RunConfig, DEFAULT_MC_SAMPLES, DEFAULT_RESTARTS, DEFAULT_SDP_TOL};

#[derive(Parser)]
#[command(name = "qcomb", version, about = "Optimal quantum combs for unitary transposition and inversion")]
struct Cli {
    /// Worker threads for the parallel stages (defaults to all cores).
    #[arg(long, global = true, env = "QCOMB_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one cell and write a JSON result record.
    Solve(SolveArgs),
    /// Fidelity grid over ranges of d and n, as CSV.
    Table(TableArgs),
    /// Run the verification checks on a stored blocks file.
    Verify(VerifyArgs),
    /// Symmetric and naive parameter counts of the parametrized comb, as CSV.
    CountParams(CountArgs),
    /// Write the reduced SDP of one cell in SDPA sparse format.
    ExportSdpa(ExportArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// TOML file with any of the flag names as keys; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<Task>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// SDP stopping tolerance; the optimizer stops at a gradient norm a tenth of this.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Record path; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    verify: bool,
    #[arg(long)]
    export_sdpa: Option<PathBuf>,
    /// Write the top-level blocks for a later `verify`.
    #[arg(long)]
    blocks_out: Option<PathBuf>,
    #[arg(long)]
    mc_samples: Option<usize>,
    /// Lift the size guards on SDP assembly and full-space checks.
    #[arg(long)]
    force: bool,
}

impl SolveArgs {
    fn into_config(self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let task = match (self.task, file.task) {
            (Some(t), _) => t,
            (None, Some(s)) => s.parse().map_err(|e| anyhow::anyhow!("config task: {e}"))?,
            (None, None) => anyhow::bail!("--task is required"),
        };
        Ok(RunConfig {
            task,
            d: self.d.or(file.d).context("--d is required")?,
            n: self.n.or(file.n).context("--n is required")?,
            method: self.method.or(file.method).unwrap_or(Method::Sdp),
            tol: self.tol.or(file.tol).unwrap_or(DEFAULT_SDP_TOL),
            restarts: self.restarts.or(file.restarts).unwrap_or(DEFAULT_RESTARTS),
            seed: self.seed.or(file.seed).unwrap_or(0),
            output: self.output.or(file.output),
            verify: self.verify || file.verify.unwrap_or(false),
            export_sdpa: self.export_sdpa.or(file.export_sdpa),
            blocks_out: self.blocks_out.or(file.blocks_out),
            mc_samples: self.mc_samples.or(file.mc_samples).unwrap_or(DEFAULT_MC_SAMPLES),
            force: self.force || file.force.unwrap_or(false),
        })
    }
}

#[derive(Args)]
struct TableArgs {
    #[arg(long)]
    task: Task,
    /// `2`, `2..5` (inclusive) or `2,3,5`.
    #[arg(long)]
    d: String,
    #[arg(long)]
    n: String,
    #[arg(long, value_enum, default_value = "sdp")]
    method: Method,
    #[arg(long, default_value_t = DEFAULT_SDP_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    blocks: PathBuf,
    #[arg(long, default_value_t = 0)]
    mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct CountArgs {
    #[arg(long)]
    task: Task,
    #[arg(long)]
    d: String,
    #[arg(long)]
    n: String,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    task: Task,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: usize,
    /// SDPA file path; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

fn csv_sink(path: Option<&PathBuf>) -> Result<Box<dyn std::io::Write>> {
    Ok(match path {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<i32> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Solve(args) => {
            let cfg = args.into_config()?;
            if cfg.force {
                qcomb::choi_verify::set_full_dim_limit(usize::MAX);
            }
            commands::solve(&cfg)
        }
        Command::Table(a) => {
            let cfg = RunConfig {
                task: a.task,
                d: 2,
                n: 1,
                method: a.method,
                tol: a.tol,
                restarts: a.restarts,
                seed: a.seed,
                output: None,
                verify: false,
                export_sdpa: None,
                blocks_out: None,
                mc_samples: 0,
                force: a.force,
            };
            cfg.validate()?;
            let (ds, ns) = (parse_range(&a.d)?, parse_range(&a.n)?);
            commands::table(a.task, &ds, &ns, a.method, &cfg, &mut csv_sink(a.output.as_ref())?)?;
            Ok(commands::exit::OK)
        }
        Command::Verify(a) => {
            if a.force {
                qcomb::choi_verify::set_full_dim_limit(usize::MAX);
            }
            let opts = verify::VerifyOptions { mc_samples: a.mc_samples, seed: a.seed, force: a.force };
            commands::verify_file(&a.blocks, &opts, a.output.as_deref())
        }
        Command::CountParams(a) => {
            let (ds, ns) = (parse_range(&a.d)?, parse_range(&a.n)?);
            commands::count_params(a.task, &ds, &ns, &mut csv_sink(a.output.as_ref())?)?;
            Ok(commands::exit::OK)
        }
        Command::ExportSdpa(a) => {
            commands::export_sdpa(a.task, a.d, a.n, a.force, a.output.as_deref())?;
            Ok(commands::exit::OK)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit::ERROR as u8)
        }
    }
}
