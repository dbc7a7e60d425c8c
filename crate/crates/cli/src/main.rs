use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use trawl::pipeline::{validate_config, Pipeline, PipelineConfig, Stage};
use trawl::synth::{self, SynthConfig};

/// Knowledge-enhanced CTR pipeline.
#[derive(Parser, Debug)]
#[command(name = "trawl", version, about)]
struct Cli {
    /// Print the default configuration (TOML) and exit.
    #[arg(long)]
    print_defaults: bool,

    /// Log verbosity; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Clone)]
struct StageArgs {
    /// Pipeline configuration file.
    #[arg(long, default_value = "trawl.toml")]
    config: PathBuf,
    /// Recompute even when the manifest says the stage is up to date.
    #[arg(long)]
    force: bool,
    /// Run a single seed instead of the configured evaluation seeds.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse ratings, binarize labels and split users.
    Ingest(StageArgs),
    /// Link item titles to corpus documents.
    Link(StageArgs),
    /// Build raw and extracted knowledge per provider.
    Generate(StageArgs),
    /// Encode knowledge text with the frozen encoder.
    Encode(StageArgs),
    /// Mine SWING positive pairs from training interactions.
    Mine(StageArgs),
    /// Train every configured arm and seed.
    Train(StageArgs),
    /// Score trained checkpoints on the test users.
    Evaluate(StageArgs),
    /// Sweep one hyperparameter on the validation users.
    Sweep(StageArgs),
    /// Run every stage in order.
    RunAll(StageArgs),
    /// Parse and range-check a configuration, printing the normalized result.
    Validate {
        #[arg(long, default_value = "trawl.toml")]
        config: PathBuf,
    },
    /// Write the seeded synthetic dataset and a matching configuration.
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        items: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load_config(path: &Path) -> anyhow::Result<PipelineConfig> {
    validate_config(path).map_err(|e| match e {
        trawl::Error::Config(_) => anyhow::anyhow!("{}: {e}", path.display()),
        other => other.into(),
    })
}

fn run_stage(stage: Option<Stage>, args: &StageArgs) -> anyhow::Result<()> {
    let config = load_config(&args.config)?;
    let pipeline = Pipeline::new(config, args.seed, args.force);
    let outcomes = match stage {
        Some(s) => vec![pipeline.run(s)?],
        None => pipeline.run_all()?,
    };
    for o in outcomes {
        let status = if o.skipped { "skipped (up to date)" } else { "done" };
        println!("{}: {status}, {} artifacts", o.stage, o.outputs.len());
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.print_defaults {
        print!("{}", PipelineConfig::default().to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        anyhow::bail!("no subcommand given; see --help");
    };
    match command {
        Command::Ingest(a) => run_stage(Some(Stage::Ingest), &a),
        Command::Link(a) => run_stage(Some(Stage::Link), &a),
        Command::Generate(a) => run_stage(Some(Stage::Generate), &a),
        Command::Encode(a) => run_stage(Some(Stage::Encode), &a),
        Command::Mine(a) => run_stage(Some(Stage::Mine), &a),
        Command::Train(a) => run_stage(Some(Stage::Train), &a),
        Command::Evaluate(a) => run_stage(Some(Stage::Evaluate), &a),
        Command::Sweep(a) => run_stage(Some(Stage::Sweep), &a),
        Command::RunAll(a) => run_stage(None, &a),
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            print!("{}", cfg.to_toml());
            Ok(())
        }
        Command::Synth {
            out,
            users,
            items,
            seed,
        } => {
            let mut cfg = SynthConfig::default();
            cfg.users = users.unwrap_or(cfg.users);
            cfg.items = items.unwrap_or(cfg.items);
            cfg.seed = seed.unwrap_or(cfg.seed);
            synth::generate(&cfg).write(&out)?;
            let toml = synth::pipeline_config().to_toml();
            let path = out.join("trawl.toml");
            std::fs::write(&path, toml).with_context(|| format!("writing {}", path.display()))?;
            println!("synthetic dataset written to {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
