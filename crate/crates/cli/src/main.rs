use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lowrank_adapt_cli::{
    cmd_ablation, cmd_ad, cmd_decompose, cmd_eval, cmd_gensynth, cmd_gradcheck, cmd_train,
    CliError, RunConfig, RUNS_ENV,
};

#[derive(Parser)]
#[command(
    name = "lowrank-adapt",
    about = "Low-rank class-feature adaptation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// key = value configuration file; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides train.seed, which also seeds the generator and the model.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Extra key=value settings applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Factorize class features and write the energy curve.
    Decompose,
    /// Train on the synthetic split.
    Train,
    /// Evaluate the run's model (or the identity initialization).
    Eval,
    /// Action dissimilarity per object.
    Ad,
    /// Finite-difference checks of every loss and adapter block.
    Gradcheck,
    /// Write synthetic features and vocabulary.
    Gensynth,
    /// Train every ablation configuration and tabulate.
    Ablation,
}

fn config(cli: &Cli) -> Result<RunConfig, CliError> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p)?,
        None => String::new(),
    };
    let mut cfg = RunConfig::parse(&text)?;
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<String, CliError> {
    let cfg = config(cli)?;
    let root = std::env::var_os(RUNS_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
    let out = match cli.command {
        Command::Decompose => cmd_decompose(&cfg, &root),
        Command::Train => cmd_train(&cfg, &root),
        Command::Eval => cmd_eval(&cfg, &root),
        Command::Ad => cmd_ad(&cfg, &root),
        Command::Gradcheck => cmd_gradcheck(&cfg, &root),
        Command::Gensynth => cmd_gensynth(&cfg, &root),
        Command::Ablation => cmd_ablation(&cfg, &root),
    }?;
    Ok(format!(
        "run_dir\t{}\n{}",
        out.run_dir.display(),
        out.report
    ))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error\t{}\t{msg}", e.category());
            ExitCode::FAILURE
        }
    }
}
