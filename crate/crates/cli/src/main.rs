mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rule_ood::detection::{Metric, Mode};

use crate::config::ConfigFile;

#[derive(Parser, Debug)]
#[command(
    name = "rule-ood",
    version,
    about = "Rule-hit histogram out-of-distribution detection"
)]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Ruleset file in the rule DSL.
    #[arg(long, global = true)]
    rules: Option<PathBuf>,
    /// Baseline file to write (baseline) or read (detect, stream).
    #[arg(long, global = true)]
    baseline: Option<PathBuf>,
    /// TOML file with run settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    mode: Option<Mode>,
    /// Split size.
    #[arg(long = "ns", global = true)]
    n_s: Option<usize>,
    /// Number of training splits.
    #[arg(long = "ntr", global = true)]
    n_tr: Option<usize>,
    /// Number of operational splits.
    #[arg(long = "nop", global = true)]
    n_op: Option<usize>,
    /// Pushes between stream detections.
    #[arg(long, global = true)]
    stride: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true)]
    label_column: Option<String>,
    #[arg(long, global = true)]
    sigma_floor: Option<f64>,
    /// Comma-separated metric roster, e.g. `wmi,l1,l2`.
    #[arg(long, global = true, value_delimiter = ',')]
    metrics: Option<Vec<Metric>>,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    #[value(alias = "json-document")]
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Induce a ruleset from labeled data with a depth-limited CART tree.
    Induce {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long)]
        min_leaf: Option<usize>,
    },
    /// Build baselines from training data and write the baseline file.
    Baseline {
        #[arg(long)]
        data: PathBuf,
    },
    /// Score operational data against a baseline file.
    Detect {
        #[arg(long)]
        data: PathBuf,
    },
    /// Slide a window over rows from a file or stdin and detect per tick.
    Stream {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Window length; defaults to the baseline split size.
        #[arg(long)]
        window: Option<usize>,
        /// Pushes between group-mode snapshots.
        #[arg(long)]
        group_stride: Option<usize>,
    },
    /// Measure false positive and false negative rates over repetitions.
    Eval {
        #[arg(long, requires = "ood_data", conflicts_with = "generator")]
        in_data: Option<PathBuf>,
        #[arg(long, requires = "in_data")]
        ood_data: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "mixture")]
        generator: commands::Generator,
        /// Shift of the out-of-distribution source, in standard deviations
        /// (mixture) or tilt units (grid).
        #[arg(long, default_value_t = 2.0)]
        shift: f64,
        #[arg(long, default_value_t = 3)]
        shifted_features: usize,
        #[arg(long)]
        repetitions: Option<usize>,
        /// Use the full-size repetition count.
        #[arg(long)]
        full_scale: bool,
        /// Samples drawn for rule induction when no ruleset is given.
        #[arg(long, default_value_t = 20_000)]
        induce_samples: usize,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long)]
        min_leaf: Option<usize>,
    },
    /// Rolling mean, variance, skewness and kurtosis of every feature.
    Featurize {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        window: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Common {
    fn flags(&self) -> ConfigFile {
        ConfigFile {
            mode: self.mode,
            n_s: self.n_s,
            n_tr: self.n_tr,
            n_op: self.n_op,
            seed: self.seed,
            sigma_floor: self.sigma_floor,
            metrics: self.metrics.clone(),
            label_column: self.label_column.clone(),
            stride: self.stride,
            ..Default::default()
        }
    }

    fn settings(&self, extra: ConfigFile) -> anyhow::Result<ConfigFile> {
        let file = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        Ok(file.overlay(self.flags()).overlay(extra))
    }
}

pub const EXIT_OOD: u8 = 3;
pub const EXIT_MISMATCH: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            let mismatch = e.chain().any(|c| {
                matches!(
                    c.downcast_ref::<rule_ood::Error>(),
                    Some(rule_ood::Error::FingerprintMismatch { .. })
                )
            });
            eprintln!("error: {e:#}");
            if mismatch {
                eprintln!("baseline does not match the ruleset; no verdict");
                ExitCode::from(EXIT_MISMATCH)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
            || matches!(
                c.downcast_ref::<rule_ood::Error>(),
                Some(rule_ood::Error::Io(io)) if io.kind() == std::io::ErrorKind::BrokenPipe
            )
    })
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let c = &cli.common;
    match cli.command {
        Command::Induce {
            data,
            out,
            max_depth,
            min_leaf,
        } => {
            let s = c.settings(ConfigFile {
                max_depth,
                min_leaf,
                ..Default::default()
            })?;
            commands::induce(&s.resolve()?, &data, out.as_deref())
        }
        Command::Baseline { data } => {
            let s = c.settings(ConfigFile::default())?.resolve()?;
            commands::baseline(c, &s, &data)
        }
        Command::Detect { data } => {
            let s = c.settings(ConfigFile::default())?.resolve()?;
            commands::detect(c, &s, &data)
        }
        Command::Stream {
            data,
            window,
            group_stride,
        } => {
            let s = c
                .settings(ConfigFile {
                    group_stride,
                    ..Default::default()
                })?
                .resolve()?;
            commands::stream(c, &s, data.as_deref(), window)
        }
        Command::Eval {
            in_data,
            ood_data,
            generator,
            shift,
            shifted_features,
            repetitions,
            full_scale,
            induce_samples,
            max_depth,
            min_leaf,
        } => {
            let s = c.settings(ConfigFile {
                repetitions,
                full_scale: full_scale.then_some(true),
                max_depth,
                min_leaf,
                ..Default::default()
            })?;
            let sources = match (in_data, ood_data) {
                (Some(i), Some(o)) => commands::Sources::Files(i, o),
                _ => commands::Sources::Generated {
                    generator,
                    shift,
                    shifted_features,
                },
            };
            commands::eval(c, s, sources, induce_samples)
        }
        Command::Featurize { data, window, out } => {
            let s = c.settings(ConfigFile::default())?.resolve()?;
            commands::featurize(&s, &data, window, out.as_deref())
        }
    }
}
