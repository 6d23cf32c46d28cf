//! Command-line front end.

use std::ffi::OsString;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::bridge::serve;
use crate::config::RunConfig;
use crate::pipeline::{cmd_generate, cmd_rate, cmd_score, PipelineError, CORPUS_MANIFEST, SCORED_MANIFEST};
use crate::sas::{discretize, score_random, Lexicon, OutputMode, DEFAULT_DEAD_ZONE};
use crate::selftest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sasrate", version, about = "Rate sentiment analysis systems for gender and race bias")]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the template corpora.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score every corpus with every configured SAS.
    Score {
        #[arg(long)]
        config: PathBuf,
        /// Corpus manifest written by `generate`.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute bias scores and ratings from scored corpora.
    Rate {
        #[arg(long)]
        config: PathBuf,
        /// Scored manifest written by `score`.
        #[arg(long)]
        scored: PathBuf,
        /// Number of rating levels (overrides the config).
        #[arg(long)]
        levels: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in oracle checks.
    Selftest,
    /// Serve a built-in SAS over stdin/stdout with the sas-score/1 protocol.
    Serve {
        #[arg(long, value_enum)]
        kind: ServeKind,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "continuous")]
        mode: ServeMode,
        #[arg(long, default_value_t = DEFAULT_DEAD_ZONE)]
        dead_zone: f64,
        #[arg(long)]
        name: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ServeKind {
    Lexicon,
    Random,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ServeMode {
    Continuous,
    Discrete,
}

fn load(path: &Path) -> Result<RunConfig, PipelineError> {
    Ok(RunConfig::load(path)?)
}

fn report(err: PipelineError) -> i32 {
    eprintln!("error: {err}");
    err.exit_code()
}

fn run_serve(kind: ServeKind, seed: Option<u64>, mode: ServeMode, dead_zone: f64, name: Option<String>) -> i32 {
    let mode = match mode {
        ServeMode::Continuous => OutputMode::Continuous,
        ServeMode::Discrete => OutputMode::Discrete,
    };
    let name = name.unwrap_or_else(|| match kind {
        ServeKind::Lexicon => "sasrate-lexicon".to_string(),
        ServeKind::Random => "sasrate-random".to_string(),
    });
    let lexicon = Lexicon::default();
    let stdout = io::stdout();
    let reader = BufReader::new(io::stdin());
    let result = match kind {
        ServeKind::Lexicon => serve(reader, stdout.lock(), &name, |id, text| {
            let raw = lexicon.score_text(id, text).map_err(|e| e.to_string())?;
            Ok(match mode {
                OutputMode::Continuous => raw.value(),
                OutputMode::Discrete => discretize(raw, dead_zone).value(),
            })
        }),
        ServeKind::Random => {
            let Some(seed) = seed else {
                eprintln!("error: --seed is required for --kind random");
                return EXIT_VALIDATION;
            };
            serve(reader, stdout.lock(), &name, |id, _| Ok(score_random(id, seed, mode).value()))
        }
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    match cli.command {
        Command::Generate { config, out } => {
            let result = load(&config).and_then(|c| {
                let dir = out.unwrap_or_else(|| c.output_dir.clone());
                cmd_generate(&c, &dir).map(|m| (m, dir))
            });
            match result {
                Ok((m, dir)) => {
                    println!("{} corpora written; manifest {}", m.corpora.len(), dir.join(CORPUS_MANIFEST).display());
                    EXIT_OK
                }
                Err(e) => report(e),
            }
        }
        Command::Score { config, corpus, out } => {
            let result = load(&config).and_then(|c| {
                let dir = out.unwrap_or_else(|| c.output_dir.clone());
                cmd_score(&c, &corpus, &dir).map(|m| (m, dir))
            });
            match result {
                Ok((m, dir)) => {
                    for f in m.failed() {
                        eprintln!("warning: SAS {} failed: {}", f.name, f.error.as_deref().unwrap_or("unknown error"));
                    }
                    let files: usize = m.sas.iter().map(|s| s.files.len()).sum();
                    println!("{files} scored files written; manifest {}", dir.join(SCORED_MANIFEST).display());
                    EXIT_OK
                }
                Err(e) => report(e),
            }
        }
        Command::Rate {
            config,
            scored,
            levels,
            out,
        } => {
            let result = load(&config).and_then(|c| {
                let dir = out.unwrap_or_else(|| c.output_dir.clone());
                cmd_rate(&c, &scored, levels, &dir).map(|r| (r, dir))
            });
            match result {
                Ok((reports, dir)) => {
                    for (view, report) in reports {
                        println!("{}:", dir.join(&view.dir).display());
                        print!("{}", report.to_markdown());
                    }
                    EXIT_OK
                }
                Err(e) => report(e),
            }
        }
        Command::Selftest => {
            let mut failed = 0;
            for c in selftest::run() {
                match c.outcome {
                    Ok(()) => println!("PASS {}", c.name),
                    Err(e) => {
                        failed += 1;
                        println!("FAIL {}: {e}", c.name);
                    }
                }
            }
            if failed == 0 {
                EXIT_OK
            } else {
                EXIT_RUNTIME
            }
        }
        Command::Serve {
            kind,
            seed,
            mode,
            dead_zone,
            name,
        } => run_serve(kind, seed, mode, dead_zone, name),
    }
}
