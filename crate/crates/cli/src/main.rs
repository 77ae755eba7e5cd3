//! `pmtc`: run simulation experiments, fit coupled matrix-tensor clustering
//! to data files and evaluate total R².
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or
//! arguments, 3 infeasible design, 4 shape mismatch, 5 unreadable input.
//! Only the summary table goes to stdout; diagnostics go to stderr.

mod config;
mod eval;
mod failure;
mod fit;
mod manifest;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pmtc::lloyd::{Projection, Schedule};
use serde_json::json;

use crate::failure::{CliResult, Failure};
use crate::manifest::Manifest;

#[derive(Parser)]
#[command(name = "pmtc", version, about = "Panel coupled matrix-tensor clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment from a preset or a configuration file.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// TOML (or .json) experiment configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Named preset: fig1, fig2, fig3, figA1..figA8.
        #[arg(long)]
        preset: Option<String>,
        /// key=value override, repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Coupling weight on the tensor.
        #[arg(long)]
        omega: Option<f64>,
        /// Write one dataset from the base model instead of running the experiment.
        #[arg(long)]
        export: bool,
    },
    /// Estimate memberships (and optionally loadings) from data files.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Characteristics tensor in the binary PMTC format, time last.
        #[arg(long)]
        tensor: PathBuf,
        /// Returns CSV, assets in rows and periods in columns.
        #[arg(long)]
        returns: Option<PathBuf>,
        /// Factor CSV, factors in rows and periods in columns.
        #[arg(long)]
        factors: Option<PathBuf>,
        /// Cluster counts per clustered mode, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        ranks: Vec<usize>,
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
        /// Estimate loadings on the observed factors in --factors.
        #[arg(long, conflicts_with = "factors_latent")]
        factors_observed: bool,
        /// Estimate this many latent factors.
        #[arg(long, value_name = "M")]
        factors_latent: Option<usize>,
        #[arg(long, value_enum, default_value_t = OnOff::On)]
        demean: OnOff,
        /// Replace each characteristic's cross-section by scaled ranks.
        #[arg(long)]
        rank_normalize: bool,
        #[arg(long, value_enum, default_value_t = Refine::Pmtlloyd)]
        refine: Refine,
        #[arg(long, value_enum, default_value_t = ScheduleArg::Simultaneous)]
        schedule: ScheduleArg,
        /// Lloyd iterations; defaults to 2⌈ln p̄⌉.
        #[arg(long)]
        lloyd_iter: Option<usize>,
        /// Fit on the first N periods only.
        #[arg(long, value_name = "N")]
        train: Option<usize>,
    },
    /// Total R² (percent) of group loadings on observed factors.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Mode-1 membership CSV (`id,cluster`).
        #[arg(long)]
        memberships: PathBuf,
        #[arg(long)]
        returns: PathBuf,
        #[arg(long)]
        factors: PathBuf,
        /// Market excess return series.
        #[arg(long)]
        market: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Index)]
        split: SplitArg,
        /// Index split: number of in-sample periods.
        #[arg(long, value_name = "N")]
        train: Option<usize>,
        /// Rolling split: window length in periods.
        #[arg(long, value_name = "W")]
        window: Option<usize>,
        /// Rolling split: one label per period (e.g. the year); runs of equal labels form windows.
        #[arg(long)]
        dates: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OnOff::On)]
        demean: OnOff,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Refine {
    Pmtlloyd,
    Hlloyd,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Simultaneous,
    Sequential,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Index,
    Rolling,
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    if threads == Some(0) {
        return Err(Failure::config("--threads must be positive"));
    }
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.unwrap_or(0))
            .build()
            .map_err(|e| Failure::new(failure::EXIT_RUNTIME, format!("cannot start worker threads: {e}")))?;
        Ok(pool.install(f))
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(f())
    }
}

fn required_out(common: &Common) -> CliResult<PathBuf> {
    common.out.clone().ok_or_else(|| Failure::config("--out is required"))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { common, config, preset, overrides, omega, export } => {
            let mut cfg = config::resolve(preset.as_deref(), config.as_deref())?;
            for kv in &overrides {
                config::apply_override(&mut cfg, kv)?;
            }
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            if let Some(w) = omega {
                cfg.omega = w;
            }
            cfg.validate()?;
            let out = required_out(&common)?;
            let written = with_threads(common.threads, || if export { simulate::export(&cfg, &out) } else { simulate::run(&cfg, &out) })??;
            let mut manifest = Manifest::new("simulate", cfg.seed, common.threads, serde_json::to_value(&cfg).expect("config serializes"));
            manifest.add_outputs(&written)?;
            manifest.write(&out)?;
        }
        Command::Fit {
            common,
            tensor,
            returns,
            factors,
            ranks,
            omega,
            factors_observed,
            factors_latent,
            demean,
            rank_normalize,
            refine,
            schedule,
            lloyd_iter,
            train,
        } => {
            let out = required_out(&common)?;
            let args = fit::FitArgs {
                tensor,
                returns,
                factors_file: factors,
                factors: match (factors_observed, factors_latent) {
                    (true, _) => fit::Factors::Observed,
                    (false, Some(m)) => fit::Factors::Latent(m),
                    (false, None) => fit::Factors::None,
                },
                clusters: ranks,
                omega,
                demean: matches!(demean, OnOff::On),
                rank_normalize,
                refine: match refine {
                    Refine::Pmtlloyd => Some(Projection::Orthogonal),
                    Refine::Hlloyd => Some(Projection::Oblique),
                    Refine::None => None,
                },
                schedule: match schedule {
                    ScheduleArg::Simultaneous => Schedule::Simultaneous,
                    ScheduleArg::Sequential => Schedule::Sequential,
                },
                lloyd_iter,
                train,
                seed: common.seed.unwrap_or(0),
            };
            let written = with_threads(common.threads, || fit::run(&args, &out))??;
            let options = json!({
                "ranks": args.clusters,
                "omega": args.omega,
                "factors": format!("{:?}", args.factors),
                "demean": args.demean,
                "rank_normalize": args.rank_normalize,
                "refine": format!("{:?}", args.refine),
                "schedule": format!("{:?}", args.schedule),
                "lloyd_iter": args.lloyd_iter,
                "train": args.train,
            });
            let mut manifest = Manifest::new("fit", args.seed, common.threads, options);
            for p in [Some(&args.tensor), args.returns.as_ref(), args.factors_file.as_ref()].into_iter().flatten() {
                manifest.add_input(p)?;
            }
            manifest.add_outputs(&written)?;
            manifest.write(&out)?;
        }
        Command::Eval { common, memberships, returns, factors, market, split, train, window, dates, demean } => {
            let split = match split {
                SplitArg::Index => eval::Split::Index { train: train.ok_or_else(|| Failure::config("--split index needs --train N"))? },
                SplitArg::Rolling => {
                    let windows = match (window, &dates) {
                        (_, Some(path)) => eval::label_windows(eval::read_series(path)?.as_slice()),
                        (Some(w), None) if w > 0 => {
                            let t = fit::read_matrix(&returns)?.ncols();
                            eval::fixed_windows(t, w)
                        }
                        _ => return Err(Failure::config("--split rolling needs --window W or --dates FILE")),
                    };
                    eval::Split::Rolling { windows }
                }
            };
            let args = eval::EvalArgs { memberships, returns, factors, market, split, demean: matches!(demean, OnOff::On) };
            let written = with_threads(common.threads, || eval::run(&args, common.out.as_deref()))??;
            if let Some(out) = &common.out {
                let options = json!({ "split": format!("{:?}", args.split), "demean": args.demean });
                let mut manifest = Manifest::new("eval", common.seed.unwrap_or(0), common.threads, options);
                for p in [&args.memberships, &args.returns, &args.factors, &args.market] {
                    manifest.add_input(p)?;
                }
                if let Some(d) = &dates {
                    manifest.add_input(d)?;
                }
                manifest.add_outputs(&written)?;
                manifest.write(out)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
