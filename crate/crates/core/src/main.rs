use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use mkstream::cli::{
    apply_env, emit_summary, parse_plan_unchecked, run_experiment, serialize_plan, write_outputs,
    ExperimentPlan,
};

#[derive(Parser)]
#[command(name = "mkstream", version, about = "(m,k)-frame video-on-demand simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replicates of the configured lambda and strategy.
    Run(Flags),
    /// Every lambda of `lambda_grid` against every strategy of `strategies`.
    Sweep(Flags),
    /// Check a config and print it with defaults filled in.
    Validate(Flags),
}

#[derive(Args)]
struct Flags {
    /// key = value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the CSV files
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; replicate i uses seed + i
    #[arg(long)]
    seed: Option<u64>,
    /// Replicates per (lambda, strategy) cell
    #[arg(long)]
    reps: Option<u32>,
    /// Worker threads (defaults to all cores)
    #[arg(long)]
    jobs: Option<usize>,
}

fn load(flags: &Flags) -> Result<ExperimentPlan<f64>> {
    let text = match &flags.config {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    let mut plan = parse_plan_unchecked::<f64>(&text)?;
    apply_env(&mut plan, std::env::vars())?;
    if let Some(s) = flags.seed {
        plan.base.seed = s;
    }
    if let Some(r) = flags.reps {
        plan.n_reps = r;
    }
    if let Some(o) = &flags.out {
        plan.output_path = o.clone();
    }
    plan.validate()?;
    Ok(plan)
}

fn execute(plan: &ExperimentPlan<f64>, jobs: Option<usize>) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .context("building worker pool")?;
    let results = pool.install(|| run_experiment(plan))?;
    let files = write_outputs(&results, &plan.output_path)?;
    print!("{}", emit_summary(&results)?);
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(flags) => load(flags).and_then(|mut plan| {
            plan.lambda_grid = vec![plan.base.lambda];
            plan.strategies = vec![plan.base.strategy];
            execute(&plan, flags.jobs)
        }),
        Command::Sweep(flags) => load(flags).and_then(|plan| execute(&plan, flags.jobs)),
        Command::Validate(flags) => load(flags).map(|plan| {
            print!("{}", serialize_plan(&plan));
            println!("# ok");
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
