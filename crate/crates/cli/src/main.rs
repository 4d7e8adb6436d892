//! `tplscan`: build library databases, train the function embedding, scan
//! binaries and evaluate on the synthetic corpus.
//!
//! Exit status is 0 on success, 1 on error and 2 when the command finished
//! but skipped inputs or steps (see the warnings on stderr).

mod commands;
mod config;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use tplscan_core::evaluation::Variant;
use tplscan_core::Provenance;

use commands::Status;
use config::{ChannelArg, Config, Format};

#[derive(Parser)]
#[command(
    name = "tplscan",
    version,
    about = "Third-party library detection for native binaries"
)]
struct Cli {
    /// TOML configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    channels: Option<ChannelArg>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Fail on the first unreadable input instead of skipping it.
    #[arg(long, global = true)]
    strict: bool,
    /// Per-binary time limit.
    #[arg(long, global = true)]
    timeout_mins: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Database operations.
    Db {
        #[command(subcommand)]
        command: DbCommand,
    },
    /// Extract features from an ELF file or manifest and print a manifest.
    Extract {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, requires = "version")]
        library: Option<String>,
        #[arg(long = "lib-version", id = "version", requires = "library")]
        version: Option<String>,
    },
    /// Train an embedding model on labelled function pairs.
    Train {
        /// A `training_pairs.json` file.
        #[arg(long, conflicts_with = "corpus")]
        pairs: Option<PathBuf>,
        /// A corpus directory; its `training_pairs.json` is used.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Scan one binary or manifest against a database.
    Scan {
        target: PathBuf,
        #[arg(long)]
        db: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the ablation variants over a corpus.
    Eval {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Restrict to these variants (repeatable).
        #[arg(long = "variant")]
        variants: Vec<String>,
        /// Directory for `metrics.csv` and `metrics.json`.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Synthetic corpus operations.
    Corpus {
        #[command(subcommand)]
        command: CorpusCommand,
    },
}

#[derive(Subcommand)]
enum DbCommand {
    /// Index every manifest or ELF file in a directory.
    Build {
        input: PathBuf,
        #[arg(long)]
        db: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Generate a seeded corpus.
    Gen {
        #[arg(short, long)]
        output: PathBuf,
        /// Proportion of basic features stripped from targets.
        #[arg(long)]
        strip: Option<f64>,
    },
}

fn configure(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(c) = cli.channels {
        cfg.channels = c;
    }
    if let Some(f) = cli.format {
        cfg.format = f;
    }
    cfg.strict |= cli.strict;
    if let Some(t) = cli.timeout_mins {
        cfg.timeout_mins = t;
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Status> {
    let mut cfg = configure(&cli)?;
    if let Some(j) = cfg.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global()?;
    }
    let paths = cfg.paths.clone();
    match cli.command {
        Command::Db {
            command: DbCommand::Build { input, db, model },
        } => {
            let db = commands::resolve(db, &paths.db, "database")?;
            commands::db_build(&cfg, &input, &db, model.or(paths.model).as_deref())
        }
        Command::Extract {
            input,
            output,
            library,
            version,
        } => {
            let provenance = library
                .zip(version)
                .map(|(library, version)| Provenance { library, version });
            commands::extract(&cfg, &input, output.as_deref(), provenance)
        }
        Command::Train { pairs, corpus, output } => {
            let pairs = match pairs {
                Some(p) => p,
                None => commands::resolve(corpus, &paths.corpus, "corpus")?.join("training_pairs.json"),
            };
            let output = commands::resolve(output, &paths.model, "model")?;
            commands::train_model(&cfg, &pairs, &output)
        }
        Command::Scan {
            target,
            db,
            model,
            output,
        } => {
            let db = commands::resolve(db, &paths.db, "database")?;
            commands::scan(&cfg, &target, &db, model.or(paths.model).as_deref(), output.as_deref())
        }
        Command::Eval {
            corpus,
            model,
            variants,
            output,
        } => {
            let corpus = commands::resolve(corpus, &paths.corpus, "corpus")?;
            let variants = variants
                .iter()
                .map(|v| v.parse::<Variant>())
                .collect::<tplscan_core::Result<Vec<_>>>()?;
            commands::eval(
                &cfg,
                &corpus,
                model.or(paths.model).as_deref(),
                &variants,
                output.as_deref(),
            )
        }
        Command::Corpus {
            command: CorpusCommand::Gen { output, strip },
        } => {
            if let Some(s) = strip {
                cfg.corpus.strip = s;
            }
            commands::corpus_gen(&cfg, &output)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(Status::Success) => ExitCode::SUCCESS,
        Ok(Status::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
