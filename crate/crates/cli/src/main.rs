use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use onral::dataset::{load_dataset, missing_standard_behaviors, synth_generate, write_dataset};
use onral::harness::{
    emit_outputs, emit_sweep, load_config, oracle_check, parse_override_args, random_models, run_experiment,
    sweep_params, ExperimentConfig,
};

/// Online attribute learning experiments.
#[derive(Parser)]
#[command(name = "onral", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate the configured agents.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Config overrides as `--dotted.key value`.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0..)]
        overrides: Vec<String>,
    },
    /// Run the ITRS agent over the configured alpha/beta grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0..)]
        overrides: Vec<String>,
    },
    /// Write the configured synthetic dataset to disk.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0..)]
        overrides: Vec<String>,
    },
    /// Check a dataset directory for loading errors.
    Validate { dir: PathBuf },
    /// Compare solved policies with the exact finite-horizon optimum on
    /// random single-attribute models.
    Oracle {
        #[arg(long, default_value_t = 20)]
        models: usize,
        #[arg(long, default_value_t = 8)]
        horizon: usize,
        #[arg(long, default_value_t = 10_000)]
        rollouts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn config(path: &Path, overrides: &[String], seed: Option<u64>, out: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut pairs = parse_override_args(overrides)?;
    // flags given after the first override land in the override list
    for (k, _) in pairs.iter_mut() {
        if k == "out" {
            *k = "output.dir".into();
        }
    }
    if let Some(s) = seed {
        pairs.push(("seed".into(), s.to_string()));
    }
    let mut cfg = load_config(path, &pairs).with_context(|| format!("loading {}", path.display()))?;
    if let Some(o) = out {
        cfg.output.dir = o;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config: path,
            seed,
            out,
            overrides,
        } => {
            let cfg = config(&path, &overrides, seed, out)?;
            let result = run_experiment(&cfg)?;
            emit_outputs(&result, &cfg.output.dir, cfg.output.plots)?;
            for r in &result.runs {
                let last = r.metrics.last().expect("at least the pretrained point");
                println!(
                    "{:<18} final accuracy {:.3}  training cost {:.3} h",
                    r.agent,
                    last.accuracy,
                    last.cum_cost_hours()
                );
            }
            println!("results written to {}", cfg.output.dir.display());
        }
        Command::Sweep {
            config: path,
            out,
            overrides,
        } => {
            let cfg = config(&path, &overrides, None, out)?;
            let cells = sweep_params(&cfg)?;
            emit_sweep(&cells, &cfg.output.dir)?;
            let failed = cells.iter().filter(|c| c.error.is_some()).count();
            println!("{} cells, {failed} failed; results in {}", cells.len(), cfg.output.dir.display());
        }
        Command::Synth {
            config: path,
            out,
            overrides,
        } => {
            let cfg = config(&path, &overrides, None, None)?;
            let data = synth_generate(&cfg.dataset.synth.to_config(cfg.seed))?;
            write_dataset(&data, &out)?;
            println!(
                "wrote {} objects, {} instances to {}",
                data.vocab().n_objects(),
                data.instances().len(),
                out.display()
            );
        }
        Command::Validate { dir } => {
            let data = load_dataset(&dir)?;
            let v = data.vocab();
            println!(
                "ok: {} objects, {} attributes, {} behaviors, {} contexts, {} instances",
                v.n_objects(),
                v.n_attributes(),
                v.n_behaviors(),
                v.contexts().len(),
                data.instances().len()
            );
            let missing = missing_standard_behaviors(v);
            if !missing.is_empty() {
                println!("note: default transition graph behaviors absent: {}", missing.join(", "));
            }
        }
        Command::Oracle {
            models,
            horizon,
            rollouts,
            seed,
        } => {
            let ms = random_models(models, (0.6, 0.99), seed)?;
            let cases = oracle_check(&ms, horizon, rollouts, seed)?;
            let mut bad = 0;
            for (i, c) in cases.iter().enumerate() {
                let ok = c.below_oracle(1e-3) && c.within_two_se();
                bad += usize::from(!ok);
                println!(
                    "model {i:>3}: oracle {:>9.3}  policy {:>9.3}  simulated {:>9.3} ± {:.3}  {}",
                    c.oracle,
                    c.policy_exact,
                    c.simulated_mean,
                    c.simulated_se,
                    if ok { "ok" } else { "MISMATCH" }
                );
            }
            if bad > 0 {
                bail!("{bad} of {} models disagree with the oracle", cases.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ONRAL_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
