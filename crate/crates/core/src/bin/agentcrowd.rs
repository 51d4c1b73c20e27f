use std::path::PathBuf;
use std::process::ExitCode;

use agentcrowd::study::{report, run_study, RunOptions, Stage, StudyConfig, StudyError};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "agentcrowd", version, about = "Run simulated-participant user studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage, or those named by --stages.
    Run(StageArgs),
    /// Sample profiles and administer the intake surveys.
    Onboard(StageArgs),
    /// Screen onboarded profiles against the quota.
    Screen(StageArgs),
    /// Run player and NPC interactions for the accepted team.
    Experience(StageArgs),
    /// Interview the team about their interactions.
    Feedback(StageArgs),
    /// Compute coverage, frequency and expert metrics.
    Analyze(StageArgs),
    /// Summarise a finished or partial output directory.
    Report { out_dir: PathBuf },
}

#[derive(Args)]
struct StageArgs {
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Provider for every stage, e.g. `mock` or `openai`.
    #[arg(long)]
    backend: Option<String>,
    /// Comma-separated stage list.
    #[arg(long, value_delimiter = ',')]
    stages: Option<Vec<Stage>>,
    #[arg(long)]
    resume: bool,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn execute(args: StageArgs, only: Option<Stage>) -> Result<(), StudyError> {
    let mut cfg = StudyConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.override_seed(seed);
    }
    if let Some(b) = &args.backend {
        cfg.override_backend(b)?;
    }
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    cfg.validate()?;
    let stages = match (only, args.stages) {
        (Some(s), None) => Some(vec![s]),
        (Some(s), Some(list)) if list != [s] => {
            return Err(StudyError::Config(format!(
                "--stages cannot be combined with the {s} command"
            )))
        }
        (_, list) => list,
    };
    let state = run_study(
        &cfg,
        &RunOptions {
            stages,
            resume: args.resume,
        },
    )?;
    let usage = state.total_usage();
    println!(
        "{}: {} requests, {} failures, cost {:.4}; output in {}",
        state.study,
        usage.requests,
        usage.failures,
        usage.cost,
        cfg.output_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => execute(a, None),
        Command::Onboard(a) => execute(a, Some(Stage::Onboarding)),
        Command::Screen(a) => execute(a, Some(Stage::Screening)),
        Command::Experience(a) => execute(a, Some(Stage::Experiencing)),
        Command::Feedback(a) => execute(a, Some(Stage::Feedback)),
        Command::Analyze(a) => execute(a, Some(Stage::Analysis)),
        Command::Report { out_dir } => report(&out_dir).map(|text| print!("{text}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
