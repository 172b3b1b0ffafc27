use std::path::PathBuf;
use std::process::ExitCode;

use augpolicy::rl::AgentKind;
use augpolicy_cli::commands::{cmd_ablate, cmd_eval, cmd_gen, cmd_report, cmd_train, cmd_train_agent, with_manifest};
use augpolicy_cli::harness::ablation_table;
use augpolicy_cli::{CliError, RunConfig, TtaMode};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "augpolicy", version, about = "Learned test-time augmentation for real/fake image detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    agent: Option<AgentArg>,

    /// Number of augmentations averaged at test time.
    #[arg(long, global = true)]
    k: Option<usize>,

    #[arg(long, global = true, default_value = "learned")]
    mode: TtaMode,

    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overwrite existing artifacts.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum AgentArg {
    Dqn,
    Ppo,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic two-domain dataset.
    Gen,
    /// Train the classifier on the training domain.
    Train,
    /// Train the augmentation agent against the classifier.
    TrainAgent,
    /// Evaluate every domain's test split with the chosen --mode.
    Eval,
    /// Sweep top-k for learned TTA.
    Ablate,
    /// Aggregate results across seeds.
    Report,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    if let Some(a) = cli.agent {
        cfg.agent.kind = match a {
            AgentArg::Dqn => AgentKind::Dqn,
            AgentArg::Ppo => AgentKind::Ppo,
        };
    }
    if let Some(k) = cli.k {
        cfg.tta.k = k;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    cfg.validate()?;
    let force = cli.force;
    match cli.command {
        Command::Gen => with_manifest(&cfg, "gen", || cmd_gen(&cfg, force)),
        Command::Train => with_manifest(&cfg, "train", || cmd_train(&cfg, force)),
        Command::TrainAgent => with_manifest(&cfg, "train-agent", || cmd_train_agent(&cfg, force)),
        Command::Eval => with_manifest(&cfg, "eval", || {
            for r in cmd_eval(&cfg, cli.mode, force)? {
                println!(
                    "{} k={} {} -> {}: auc {:.4} pauc {:.4} eer {:.4}",
                    r.mode, r.k, r.train_domain, r.eval_domain, r.auc, r.pauc, r.eer
                );
            }
            Ok(())
        }),
        Command::Ablate => with_manifest(&cfg, "ablate", || {
            print!("{}", ablation_table(&cmd_ablate(&cfg, force)?));
            Ok(())
        }),
        Command::Report => with_manifest(&cfg, "report", || {
            cmd_report(&cfg, force)?;
            print!("{}", std::fs::read_to_string(cfg.out.join("report.md")).unwrap_or_default());
            Ok(())
        }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
