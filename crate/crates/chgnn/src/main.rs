use std::path::PathBuf;
use std::process::ExitCode;

use chgnn::report::{stats_report, write_report};
use chgnn::{load_config, load_dataset, run, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chgnn", version, about = "Contrastive semi-supervised hypergraph node classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on the first split and write metrics, losses, checkpoint and embeddings.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report test accuracy of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Write structural statistics of a dataset.
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        p_node: f64,
        #[arg(long, default_value_t = 0.8)]
        p_tau: f64,
    },
    /// Cross-validate over every fold.
    Folds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train { config, data, out } => {
            let cfg = load_config(&config)?;
            let ds = load_dataset(&data)?;
            let m = run::train_command(&ds, &cfg, &out)?;
            println!("{}", serde_json::json!({"test_accuracy": m.mean_accuracy}));
        }
        Command::Eval { checkpoint, data } => {
            let ds = load_dataset(&data)?;
            let acc = run::eval_command(&checkpoint, &ds)?;
            println!("{}", serde_json::json!({"test_accuracy": acc}));
        }
        Command::Stats { data, out, p_node, p_tau } => {
            let ds = load_dataset(&data)?;
            write_report(&out, &stats_report(&ds.graph, p_node, p_tau)?)?;
        }
        Command::Folds { config, data, out } => {
            let cfg = load_config(&config)?;
            let ds = load_dataset(&data)?;
            let m = run::folds_command(&ds, &cfg, &out)?;
            println!(
                "{}",
                serde_json::json!({"mean_accuracy": m.mean_accuracy, "std_accuracy": m.std_accuracy})
            );
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
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
