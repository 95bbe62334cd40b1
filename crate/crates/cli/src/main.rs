use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use latent_cascade_cli::{
    cmd_eval, cmd_sample, cmd_sphere, cmd_train, CliError, EvalArgs, ExperimentKind, RunConfig,
    SampleArgs,
};

#[derive(Parser)]
#[command(
    name = "latent-cascade",
    version,
    about = "Train, sample and evaluate cascaded VAEs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunFlags {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed to run; repeat for several. Replaces the configured list.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write into a non-empty run directory.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sphere manifold-recovery experiment.
    Sphere {
        #[command(flatten)]
        run: RunFlags,
        /// Samples drawn at each depth.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train a cascade and save its checkpoints (smiles by default).
    Train {
        #[command(flatten)]
        run: RunFlags,
    },
    /// Sample from a trained cascade.
    Sample {
        /// Seed directory of a run (or a run directory with one seed).
        dir: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Sampling seed; repeat for one file per seed.
        #[arg(long = "seed", default_values_t = [1u64])]
        seeds: Vec<u64>,
        /// Number of stages to decode through (default: all).
        #[arg(long)]
        depth: Option<usize>,
        /// Output directory (default: the cascade directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate SMILES sample files against a reference corpus.
    Eval {
        /// Sample files, one SMILES per line.
        #[arg(required = true)]
        samples: Vec<PathBuf>,
        /// Reference corpus (default: the corpus recorded in the run manifest).
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Run configuration supplying metric settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (default: next to the first sample file).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(flags: &RunFlags, kind: ExperimentKind) -> Result<RunConfig, CliError> {
    let mut config = match &flags.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::defaults_for(kind),
    };
    if !flags.seeds.is_empty() {
        config.seeds = flags.seeds.clone();
    }
    if let Some(out) = &flags.out {
        config.out = out.clone();
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Sphere { run, n } => {
            let mut config = load(&run, ExperimentKind::Sphere)?;
            if let Some(n) = n {
                config.metrics.n_samples = n;
            }
            let dir = cmd_sphere(config, run.force)?;
            println!("{}", dir.display());
        }
        Command::Train { run } => {
            let dir = cmd_train(load(&run, ExperimentKind::Smiles)?, run.force)?;
            println!("{}", dir.display());
        }
        Command::Sample {
            dir,
            n,
            seeds,
            depth,
            out,
        } => {
            let args = SampleArgs {
                n,
                seeds,
                depth,
                out,
            };
            for p in cmd_sample(&dir, &args)? {
                println!("{}", p.display());
            }
        }
        Command::Eval {
            samples,
            reference,
            config,
            out,
        } => {
            let config = config.map(|p| RunConfig::from_file(&p)).transpose()?;
            let args = EvalArgs {
                reference,
                config,
                out,
            };
            let dir = cmd_eval(&samples, &args)?;
            println!("{}", dir.join("eval_report.txt").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
