use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bayesbt_cli::config::ExperimentConfig;
use bayesbt_cli::emit::{self, Format};
use bayesbt_cli::error::{CliError, CliResult};
use bayesbt_cli::experiment::{bounds_sweep, run_experiment};
use bayesbt_cli::mtx::write_mtx;
use bayesbt_cli::{priors, synth};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "bayesbt",
    version,
    about = "Low-rank posterior approximations for linear smoothing problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic stable system as A.mtx, B.mtx, C.mtx.
    GenSystem {
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 3)]
        d_out: usize,
        #[arg(long, default_value_t = 10.0)]
        spread: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a rank-deficient prior factor for a system directory.
    GenPrior {
        /// Directory holding A.mtx, B.mtx, C.mtx.
        #[arg(long)]
        system_dir: PathBuf,
        #[arg(long, value_enum)]
        kind: PriorChoice,
        /// Sample count (incompatible) or target rank (compatible).
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output Matrix Market file for the factor `L` with `Γ = L·Lᵀ`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the replicate protocol and emit one row per (replicate, method, rank).
    Run(RunArgs),
    /// Emit the PD-BT error bounds over a rank sweep.
    Bounds(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorChoice {
    Incompatible,
    Compatible,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named parameter preset (requires --system-dir).
    #[arg(long)]
    preset: Option<String>,
    /// Directory with A.mtx, B.mtx, C.mtx for --preset.
    #[arg(long)]
    system_dir: Option<PathBuf>,
    /// Overrides the experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output file; stdout when absent. Run metadata goes to `<out>.meta.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), None) => ExperimentConfig::load(path)?,
            (None, Some(name)) => {
                let dir = self
                    .system_dir
                    .as_deref()
                    .ok_or_else(|| CliError::Config("--preset requires --system-dir".into()))?;
                ExperimentConfig::preset(name, dir)?
            }
            (Some(_), Some(_)) => return Err(CliError::Config("use either --config or --preset".into())),
            (None, None) => return Err(CliError::Config("one of --config or --preset is required".into())),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

fn meta_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenSystem {
            d,
            d_out,
            spread,
            seed,
            out,
        } => {
            let sys = synth::synth_system(d, d_out, spread, seed)?;
            std::fs::create_dir_all(&out).map_err(|e| CliError::Io {
                path: out.clone(),
                source: e,
            })?;
            write_mtx(&out.join("A.mtx"), sys.a())?;
            write_mtx(&out.join("B.mtx"), sys.b().expect("synthetic systems carry B"))?;
            write_mtx(&out.join("C.mtx"), sys.c())?;
            log::info!("wrote d={d} system to {}", out.display());
        }
        Command::GenPrior {
            system_dir,
            kind,
            size,
            seed,
            out,
        } => {
            let sys = synth::load_system(
                &system_dir.join("A.mtx"),
                &system_dir.join("B.mtx"),
                &system_dir.join("C.mtx"),
            )?;
            let rep = match kind {
                PriorChoice::Incompatible => priors::make_prior_incompatible(&sys, size, seed)?,
                PriorChoice::Compatible => priors::make_prior_compatible(&sys, size, seed)?,
            };
            write_mtx(&out, rep.belief.cov_factor.factor())?;
            let summary = serde_json::json!({
                "rank": rep.rank(),
                "degenerate": rep.degenerate,
                "compatibility": rep.compatibility,
                "note": rep.note,
            });
            eprintln!("{summary}");
        }
        Command::Run(args) => {
            let cfg = args.config()?;
            let result = run_experiment(&cfg)?;
            emit::emit(&result.rows, args.format, args.out.as_deref())?;
            let meta = serde_json::to_string_pretty(&result.metadata).map_err(|e| CliError::Output(e.to_string()))?;
            match &args.out {
                Some(out) => {
                    let path = meta_path(out);
                    std::fs::write(&path, meta).map_err(|e| CliError::Io { path, source: e })?;
                }
                None => eprintln!("{meta}"),
            }
        }
        Command::Bounds(args) => {
            let cfg = args.config()?;
            let rows = bounds_sweep(&cfg)?;
            emit::with_output(args.out.as_deref(), |w| match args.format {
                Format::Json => emit::write_json(&rows, w),
                Format::Csv => {
                    writeln!(
                        w,
                        "rank,hankel_tail,inhom_trace_bound,expected_output_error_bound,kappa_estimate,impulse_error_l2_sq,sampled_impulse_error_sq"
                    )
                    .map_err(|e| CliError::Output(e.to_string()))?;
                    for r in &rows {
                        writeln!(
                            w,
                            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                            r.rank,
                            r.hankel_tail,
                            r.inhom_trace_bound,
                            r.expected_output_error_bound,
                            r.kappa_estimate,
                            r.impulse_error_l2_sq,
                            r.sampled_impulse_error_sq
                        )
                        .map_err(|e| CliError::Output(e.to_string()))?;
                    }
                    Ok(())
                }
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
