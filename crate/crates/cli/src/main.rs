use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};

use ising_ep_cli::{
    cmd_dump_problem, cmd_energy_dist, cmd_eval, cmd_train, ConfigError, RunConfig, Split,
};

#[derive(Parser)]
#[command(
    name = "ising-ep",
    version,
    about = "Train Ising machines with Equilibrium Propagation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(clap::Args)]
struct Common {
    /// TOML settings file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides data.dir
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Overrides seed
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn resolve(&self, out: Option<&PathBuf>) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.data_dir {
            cfg.data_dir = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = out {
            cfg.out = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write metrics and checkpoints
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Reuse a non-empty output directory
        #[arg(long)]
        force: bool,
    },
    /// Accuracy and MSE of a checkpoint
    Eval {
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Directory for eval.json
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Energy distribution of one test image under two checkpoints
    EnergyDist {
        before: PathBuf,
        after: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        image: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Print the Ising problem of one example
    DumpProblem {
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long, default_value_t = 0)]
        image: usize,
        /// Write to a file instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, out, force } => {
            let cfg = common.resolve(out.as_ref())?;
            let outcome = cmd_train(&cfg, force)?;
            if let Some(m) = outcome.metrics.last() {
                println!(
                    "epoch {}: train {:.2}% test {:.2}% (mse {:.4} / {:.4})",
                    m.epoch, m.train_acc, m.test_acc, m.train_mse, m.test_mse
                );
            }
            println!("wrote {}", outcome.out.display());
        }
        Command::Eval {
            checkpoint,
            common,
            split,
            out,
            force,
        } => {
            let cfg = common.resolve(None)?;
            let r = cmd_eval(&checkpoint, &cfg, split.into(), out.as_deref(), force)?;
            println!(
                "accuracy {:.2}% mse {:.4} over {} examples",
                r.accuracy, r.mse, r.n_examples
            );
        }
        Command::EnergyDist {
            before,
            after,
            common,
            image,
            samples,
            out,
            force,
        } => {
            let cfg = common.resolve(None)?;
            let r = cmd_energy_dist(&before, &after, &cfg, image, samples, out.as_deref(), force)?;
            println!("before: mean {:.4} std {:.4}", r.before.mean, r.before.std);
            println!("after:  mean {:.4} std {:.4}", r.after.mean, r.after.std);
        }
        Command::DumpProblem {
            checkpoint,
            common,
            split,
            image,
            out,
        } => {
            let cfg = common.resolve(None)?;
            let text = cmd_dump_problem(&checkpoint, &cfg, split.into(), image)?;
            match out {
                Some(p) => std::fs::write(&p, text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
