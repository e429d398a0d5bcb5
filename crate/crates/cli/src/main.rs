use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flowlearn_core::sde::{preset, BENCHMARKS};
use sde_flowlearn::{resolve_out_dir, CliError, ExperimentConfig, Manifest, Pipeline, Scale};

#[derive(Parser)]
#[command(name = "sde-flowlearn", version, about = "Learn stochastic flow maps from SDE trajectory data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; never changes results. Defaults to the config, then all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory [default: config `output_dir`, then $SDE_FLOWLEARN_OUT, then ./sde-flowlearn-out].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trajectories and write the observation pairs.
    Simulate(StageArgs),
    /// Generate labeled data with the reverse ODE.
    Labels(StageArgs),
    /// Train the flow-map network.
    Train(StageArgs),
    /// Roll the trained network forward from the configured initial state.
    Predict(StageArgs),
    /// Compare the surrogate against the benchmark and write metrics.
    Evaluate(StageArgs),
    /// Print the metrics of an evaluated config.
    Report(StageArgs),
    /// Run every stage in order, then print the report.
    Run(StageArgs),
    /// Inspect the built-in benchmark presets.
    Preset {
        #[command(subcommand)]
        command: PresetCommand,
    },
}

#[derive(Subcommand)]
enum PresetCommand {
    /// List benchmark presets.
    List,
    /// Print a preset as an experiment config.
    Show {
        name: String,
        #[arg(long, value_enum, default_value = "desk")]
        scale: Scale,
    },
}

fn pipeline(args: &StageArgs) -> Result<Pipeline, CliError> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let out = resolve_out_dir(args.out.as_deref(), &cfg);
    Pipeline::new(cfg, out, args.workers)
}

fn announce(m: &Manifest, out: &Path) {
    println!("{}: wrote {} ({})", m.stage, out.join(&m.artifact).display(), m.summary);
}

fn stage(name: &str, args: &StageArgs) -> Result<(), CliError> {
    let p = pipeline(args)?;
    announce(&p.run_stage(name)?, &p.out);
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => stage("simulate", &a)?,
        Command::Labels(a) => stage("labels", &a)?,
        Command::Train(a) => stage("train", &a)?,
        Command::Predict(a) => stage("predict", &a)?,
        Command::Evaluate(a) => stage("evaluate", &a)?,
        Command::Report(a) => print!("{}", pipeline(&a)?.report()?),
        Command::Run(a) => {
            let p = pipeline(&a)?;
            for name in sde_flowlearn::STAGES {
                announce(&p.run_stage(name)?, &p.out);
            }
            print!("{}", p.report()?);
        }
        Command::Preset { command: PresetCommand::List } => {
            println!("{:<16} {:>3} {:>12} {:>12} {:>10}", "name", "d", "desk pairs", "full pairs", "full J");
            for name in BENCHMARKS {
                let p = preset(name)?;
                println!(
                    "{:<16} {:>3} {:>12} {:>12} {:>10}",
                    name,
                    p.x0.len(),
                    p.desk_trajectories * p.steps,
                    p.full_trajectories * p.steps,
                    p.full_labels
                );
            }
        }
        Command::Preset { command: PresetCommand::Show { name, scale } } => {
            println!("{}", ExperimentConfig::from_preset(&name, scale)?.to_json());
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
