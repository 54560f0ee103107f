use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use peps_core::design::{g_optimal, leverages, tau_star, TAU_STAR_ITERS};
use peps_core::harness::{
    emit_plots, read_metrics_file, run_experiment, run_repetition, write_metrics, write_results,
    Checkpoints, ExperimentConfig, RepetitionSpec,
};
use peps_core::instances::{make_soare, make_sphere, make_topk};
use peps_core::rng::stream;
use peps_core::sampling::DEFAULT_MC_DRAWS;
use peps_core::{Error, Instance, Result, StrategyConfig, StrategyKind};

#[derive(Parser)]
#[command(name = "peps", version, about = "Best-arm identification in linear bandits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one strategy once and print checkpoint rows as CSV.
    Run {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value = "peps")]
        strategy: String,
        /// Strategy options as a JSON object, e.g. '{"learner": "hedge", "eta_lambda": 0.5}'.
        #[arg(long)]
        strategy_config: Option<String>,
        #[arg(long = "T", short = 'T', default_value_t = 1000)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MC_DRAWS)]
        mc_draws: usize,
        #[arg(long)]
        stride: Option<usize>,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the allocation game and print the optimal design.
    TauStar {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = TAU_STAR_ITERS)]
        iters: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Compute the G-optimal design of the arm set.
    Gdesign {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Write one of the standard instances as JSON.
    GenInstance {
        #[arg(long, value_enum)]
        kind: InstanceKind,
        #[arg(long, default_value_t = 0.1)]
        omega: f64,
        #[arg(long, short = 'd', default_value_t = 6)]
        dim: usize,
        #[arg(long, default_value_t = 20)]
        n_arms: usize,
        #[arg(long, short = 'k', default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Redraw plots from a metrics CSV.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum InstanceKind {
    Soare,
    Sphere,
    Topk,
}

fn load_instance(path: &PathBuf) -> Result<Instance> {
    Instance::from_json(&std::fs::read_to_string(path)?)
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Bench { config, out } => {
            let (cfg, base) = ExperimentConfig::from_file(&config)?;
            let instance = cfg.instance.load(base.as_deref())?;
            log::info!(
                "running {} strategies x {} repetitions on {}",
                cfg.strategies.len(),
                cfg.repetitions,
                instance.name
            );
            let store = run_experiment(&cfg, &instance)?;
            let summary = write_results(&store, &out)?;
            print!("{}", summary.render_table());
            if !store.errors.is_empty() {
                eprintln!("{} repetitions failed; see errors.csv", store.errors.len());
            }
        }
        Command::Run {
            instance,
            strategy,
            strategy_config,
            horizon,
            seed,
            mc_draws,
            stride,
            out,
        } => {
            let inst = load_instance(&instance)?;
            let kind: StrategyKind = strategy.parse()?;
            let mut cfg = match strategy_config {
                Some(text) => {
                    let mut value: serde_json::Value = serde_json::from_str(&text)?;
                    let obj = value
                        .as_object_mut()
                        .ok_or_else(|| Error::Config("--strategy-config must be a JSON object".into()))?;
                    obj.insert("strategy".into(), serde_json::to_value(kind)?);
                    serde_json::from_value::<StrategyConfig>(value)?
                }
                None => StrategyConfig::new(kind),
            };
            cfg = cfg.prepared(&inst)?;
            if horizon == 0 {
                return Err(Error::Config("--T must be at least 1".into()));
            }
            let checkpoints = match stride {
                Some(s) => Checkpoints::Stride { stride: s }.resolve(horizon)?,
                None => Checkpoints::default_schedule(horizon),
            };
            let spec = RepetitionSpec {
                instance: &inst,
                instance_id: &inst.name,
                strategy: &cfg,
                master_seed: seed,
                repetition: 0,
                t_max: horizon,
                checkpoints: &checkpoints,
                mc_draws,
            };
            let rows = run_repetition(&spec, None).map_err(|(t, e)| {
                log::error!("run failed at t={t}");
                e
            })?;
            let mut buf = Vec::new();
            write_metrics(&mut buf, &rows)?;
            emit(out.as_ref(), &String::from_utf8_lossy(&buf))?;
        }
        Command::TauStar { instance, iters, tol } => {
            let inst = load_instance(&instance)?;
            let sol = tau_star(&inst, iters, tol)?;
            if !sol.converged {
                log::warn!("stopped after {} iterations with gap {:e}", sol.iterations, sol.duality_gap_estimate);
            }
            let doc = serde_json::json!({
                "instance": inst.name,
                "tau_star": sol.tau_star,
                "lambda_star": sol.lambda_star.as_slice(),
                "duality_gap_estimate": sol.duality_gap_estimate,
                "iterations": sol.iterations,
                "converged": sol.converged,
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
        Command::Gdesign { instance, tol } => {
            let inst = load_instance(&instance)?;
            let w = g_optimal(inst.arms(), tol)?;
            let max_leverage = leverages(inst.arms(), &w)?.into_iter().fold(0.0, f64::max);
            let doc = serde_json::json!({
                "instance": inst.name,
                "weights": w.as_slice(),
                "max_leverage": max_leverage,
                "dim": inst.dim(),
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
        Command::GenInstance {
            kind,
            omega,
            dim,
            n_arms,
            k,
            seed,
            out,
        } => {
            let inst = match kind {
                InstanceKind::Soare => make_soare(omega)?,
                InstanceKind::Sphere => make_sphere(&mut stream(seed), dim, n_arms)?,
                InstanceKind::Topk => make_topk(dim, k)?,
            };
            emit(out.as_ref(), &(inst.to_json()? + "\n"))?;
        }
        Command::Plot { input, out } => {
            let rows = read_metrics_file(&input)?;
            if rows.is_empty() {
                log::warn!("{} has no rows", input.display());
            }
            for p in emit_plots(&rows, &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
