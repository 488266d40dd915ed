//! `patchgroup`: two-stage patient-level MSS/MSI classification pipeline.

use std::path::PathBuf;
use std::process::ExitCode as ProcessExit;

use clap::{Args, Parser, Subcommand};

use patchgroup_cli::commands::{self, CompareArgs, Ctx};
use patchgroup_cli::error::ExitCode;

#[derive(Parser)]
#[command(
    name = "patchgroup",
    about = "Momentum-contrast patch embeddings and group-level patient classification",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, short = 'c')]
    config: PathBuf,
    /// Training seed; defaults to the first entry of `seeds` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root override (flag beats PATCHGROUP_OUT beats config).
    #[arg(long)]
    out_root: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset onto disk with its manifest.
    Synth(Common),
    /// Contrastive pretraining of the patch encoder (stage 1).
    TrainStage1(Common),
    /// Embed all patches with the frozen encoder into store files.
    Extract(Common),
    /// Train the group-level classifier head (stage 2).
    TrainHead(Common),
    /// Train the per-patch supervised baseline.
    TrainBaseline(Common),
    /// Evaluate one method on the validation split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Which pipeline to evaluate.
        #[arg(long, value_parser = ["grouped", "baseline"])]
        method: String,
        /// Evaluate on the class- and patch-count-balanced patient subset.
        #[arg(long)]
        balanced: bool,
    },
    /// Compare two sets of evaluation reports (paired by seed).
    Compare {
        /// Report files for the first method.
        #[arg(long = "a", required = true, num_args = 1..)]
        a: Vec<PathBuf>,
        /// Report files for the second method.
        #[arg(long = "b", required = true, num_args = 1..)]
        b: Vec<PathBuf>,
        #[arg(long, default_value = "grouped")]
        label_a: String,
        #[arg(long, default_value = "baseline")]
        label_b: String,
        /// Optional accuracy-curve files for the first method.
        #[arg(long = "curve-a", num_args = 0..)]
        curves_a: Vec<PathBuf>,
        /// Optional accuracy-curve files for the second method.
        #[arg(long = "curve-b", num_args = 0..)]
        curves_b: Vec<PathBuf>,
        /// Output directory for the summary and plots.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render two-column curve files to a PNG chart.
    Plot {
        /// Input curve files (x<TAB>y lines).
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
}

fn pick_seed(ctx: &Ctx, flag: Option<u64>) -> u64 {
    flag.unwrap_or_else(|| ctx.cfg.seeds.first().copied().unwrap_or(0))
}

fn run() -> Result<(), patchgroup_cli::CliError> {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help/version are not errors
            if e.kind() == clap::error::ErrorKind::DisplayHelp
                || e.kind() == clap::error::ErrorKind::DisplayVersion
            {
                print!("{e}");
                return Ok(());
            }
            eprint!("{e}");
            std::process::exit(ExitCode::UserError as i32);
        }
    };
    match cli.command {
        Command::Synth(c) => {
            let ctx = Ctx::new(&c.config, c.out_root.as_deref())?;
            commands::cmd_synth(&ctx, c.seed)?;
        }
        Command::TrainStage1(c) => {
            let ctx = Ctx::new(&c.config, c.out_root.as_deref())?;
            let seed = pick_seed(&ctx, c.seed);
            commands::cmd_train_stage1(&ctx, seed)?;
        }
        Command::Extract(c) => {
            let ctx = Ctx::new(&c.config, c.out_root.as_deref())?;
            let seed = pick_seed(&ctx, c.seed);
            commands::cmd_extract(&ctx, seed)?;
        }
        Command::TrainHead(c) => {
            let ctx = Ctx::new(&c.config, c.out_root.as_deref())?;
            let seed = pick_seed(&ctx, c.seed);
            commands::cmd_train_head(&ctx, seed)?;
        }
        Command::TrainBaseline(c) => {
            let ctx = Ctx::new(&c.config, c.out_root.as_deref())?;
            let seed = pick_seed(&ctx, c.seed);
            commands::cmd_train_baseline(&ctx, seed)?;
        }
        Command::Eval { common, method, balanced } => {
            let ctx = Ctx::new(&common.config, common.out_root.as_deref())?;
            let seed = pick_seed(&ctx, common.seed);
            commands::cmd_eval(&ctx, seed, &method, balanced)?;
        }
        Command::Compare { a, b, label_a, label_b, curves_a, curves_b, out } => {
            commands::cmd_compare(&CompareArgs {
                a,
                b,
                label_a,
                label_b,
                curves_a,
                curves_b,
                out,
            })?;
        }
        Command::Plot { input, output } => {
            commands::cmd_plot(&input, &output)?;
        }
    }
    Ok(())
}

fn main() -> ProcessExit {
    match run() {
        Ok(()) => ProcessExit::from(ExitCode::Ok as u8),
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ProcessExit::from(e.exit_code() as u8)
        }
    }
}
