use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pause_lab::experiments::{Lab, RunConfig, Variant};
use pause_lab::Result;

/// Pause-token training experiments at desk scale.
///
/// Any config key can also be given as a flag, e.g. `--model.d-model 64` or
/// `--train.lr=3e-4`; flags override the config file and `PAUSE_LAB_SEED`.
#[derive(Parser, Debug)]
#[command(name = "pause-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for checkpoints, curves and reports.
    #[arg(long, default_value = "runs/default")]
    run_dir: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Mode {
    Std,
    Pause,
    Both,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pretrain the standard and/or pause model on the task corpus.
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "both")]
        mode: Mode,
    },
    /// Finetune `run.variant` on the first task with `train.seed`.
    Finetune {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a finetuned checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Defaults to the run's `run.variant` model for the first task and `train.seed`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// All variants × tasks × seeds.
    Matrix {
        #[command(flatten)]
        common: Common,
    },
    /// Finetune and evaluate across `sweep.mft_grid`.
    SweepMft {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluation-only sweep over inference delays.
    SweepMinf {
        #[command(flatten)]
        common: Common,
        /// Defaults to the run's `run.variant` model for the first task and `train.seed`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Append vs prepend with `pause.m_ft` pauses.
    Placement {
        #[command(flatten)]
        common: Common,
    },
    /// Filler-token delay on a standard finetuned model.
    Filler {
        #[command(flatten)]
        common: Common,
        /// Defaults to the run's StdPT_StdFT model for the first task and `train.seed`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Self::Pretrain { common, .. }
            | Self::Finetune { common }
            | Self::Eval { common, .. }
            | Self::Matrix { common }
            | Self::SweepMft { common }
            | Self::SweepMinf { common, .. }
            | Self::Placement { common }
            | Self::Filler { common, .. } => common,
        }
    }
}

/// Pulls `--a.b value` / `--a.b=value` pairs out of argv; the rest goes to clap.
type Split = (Vec<String>, Vec<(String, String)>);

fn split_overrides(args: Vec<String>) -> std::result::Result<Split, String> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let is_key = arg.starts_with("--") && arg.split('=').next().is_some_and(|k| k.contains('.'));
        if !is_key {
            rest.push(arg);
            continue;
        }
        if let Some((k, v)) = arg.split_once('=') {
            overrides.push((k.to_string(), v.to_string()));
        } else {
            let v = it.next().ok_or_else(|| format!("flag {arg} needs a value"))?;
            overrides.push((arg, v));
        }
    }
    Ok((rest, overrides))
}

fn print_file(path: &Path) {
    if let Ok(text) = fs::read_to_string(path) {
        print!("{text}");
    }
}

fn run(cli: Cli, overrides: Vec<(String, String)>) -> Result<()> {
    let common = cli.command.common();
    let text = common.config.as_ref().map(fs::read_to_string).transpose()?;
    let mut cfg = RunConfig::resolve(text.as_deref(), &overrides)?;
    let sweep_like = matches!(cli.command, Command::SweepMft { .. } | Command::Placement { .. });
    if sweep_like && !cfg.explicit.contains("run.variant") {
        cfg.variant = Variant::PausePtPauseFt;
    }
    let lab = Lab::new(cfg, &common.run_dir)?;
    let cfg = lab.config().clone();
    let task = cfg.tasks[0];
    let seed = cfg.finetune.seed;
    let default_ckpt = |variant| lab.finetuned_path(variant, task, seed);
    let summary = common.run_dir.join("summary.txt");
    match &cli.command {
        Command::Pretrain { mode, .. } => {
            let modes: &[bool] = match mode {
                Mode::Std => &[false],
                Mode::Pause => &[true],
                Mode::Both => &[false, true],
            };
            for &pause in modes {
                let r = lab.pretrain(pause)?;
                println!(
                    "{}: {} steps, {} tokens, meaningful share {:.4} -> {}",
                    if pause { "pause" } else { "std" },
                    r.steps_run,
                    r.tokens_seen,
                    r.meaningful_share(),
                    lab.pretrain_path(pause).display()
                );
            }
            return Ok(());
        }
        Command::Finetune { .. } => {
            lab.finetune_one()?;
        }
        Command::Eval { checkpoint, .. } => {
            let spec = lab.spec_for(cfg.variant, task, true)?;
            let path = checkpoint.clone().unwrap_or_else(|| default_ckpt(cfg.variant));
            lab.eval_checkpoint(&path, task, spec.m_ft, spec.m_inf, seed)?;
        }
        Command::Matrix { .. } => {
            lab.run_variant_matrix()?;
        }
        Command::SweepMft { .. } => {
            lab.sweep_mft(cfg.variant, task, &cfg.mft_grid)?;
            print_file(&common.run_dir.join("sweep_mft.csv"));
        }
        Command::SweepMinf { checkpoint, .. } => {
            let spec = lab.spec_for(cfg.variant, task, true)?;
            let path = checkpoint.clone().unwrap_or_else(|| default_ckpt(cfg.variant));
            lab.sweep_minf(&path, task, spec.m_ft, seed)?;
            print_file(&common.run_dir.join("sweep_minf.csv"));
        }
        Command::Placement { .. } => {
            lab.compare_placement(cfg.variant, task, cfg.m_ft)?;
            print_file(&common.run_dir.join("placement.csv"));
        }
        Command::Filler { checkpoint, .. } => {
            let path = checkpoint.clone().unwrap_or_else(|| default_ckpt(Variant::StdPtStdFt));
            lab.filler_baseline(&path, task, &cfg.filler_counts, seed)?;
        }
    }
    print_file(&summary);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let (args, overrides) = match split_overrides(std::env::args().collect()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    match run(cli, overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
