use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tirtone::embedding::{DEFAULT_PERIOD_HI, DEFAULT_PERIOD_LO};
use tirtone::training::{TaskLoss, TrainConfig, DEFAULT_EDGE_LAMBDA};

use crate::config::{Command, Operator, RunConfig};
use crate::error::{CliError, Result};

/// Radiometric thermal-infrared tone mapping.
#[derive(Debug, Parser)]
#[command(name = "tirtone", version)]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Camera profile (TOML) used to convert counts to temperature.
    #[arg(long, global = true)]
    pub profile: Option<PathBuf>,
    /// Run the command described by a TOML run config instead of a subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print the resolved run config and exit without running it.
    #[arg(long, global = true)]
    pub print_config: bool,
    #[command(subcommand)]
    pub command: Option<Sub>,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Convert a raw frame to a temperature map (TCEL).
    Convert {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Also write an 8-bit min-max preview PNG.
        #[arg(long)]
        preview: Option<PathBuf>,
        /// Keep only the low 14 bits of 16-bit PNG samples.
        #[arg(long)]
        mask_14bit: bool,
    },
    /// Tone-map a raw frame to an 8-bit PNG.
    Tonemap(TonemapArgs),
    /// Write the thermal embedding of a frame (TEMB).
    Embed {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Comma-separated periods in °C; sampled from --seed when omitted.
        #[arg(long, value_delimiter = ',')]
        periods: Option<Vec<f64>>,
        #[arg(long, default_value_t = 3)]
        n_channels: usize,
        /// Write each channel as an 8-bit PNG into this directory.
        #[arg(long)]
        png_dir: Option<PathBuf>,
        #[arg(long)]
        mask_14bit: bool,
    },
    /// Generate a synthetic scene dataset directory.
    Generate {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 3)]
        n_objects: usize,
        #[arg(long, default_value_t = 4)]
        n_regions: usize,
    },
    /// Train a compression network on a dataset directory.
    Train(TrainArgs),
    /// Compare the outputs of two checkpoints on a dataset.
    Compare {
        dataset: PathBuf,
        checkpoint_a: PathBuf,
        checkpoint_b: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Write the two average histograms as CSV files into this directory.
        #[arg(long)]
        histograms: Option<PathBuf>,
    },
    /// Time the embedding and the compression network.
    Bench {
        #[arg(long, default_value_t = 3)]
        n_channels: usize,
        #[arg(long, default_value_t = 640)]
        width: usize,
        #[arg(long, default_value_t = 512)]
        height: usize,
        #[arg(long, default_value_t = 20)]
        iters: usize,
    },
    /// Report the mean compression weights of a checkpoint on a dataset.
    InspectWeights {
        checkpoint: PathBuf,
        dataset: PathBuf,
        /// Evaluate under these comma-separated periods instead of the checkpoint's.
        #[arg(long, value_delimiter = ',')]
        periods: Option<Vec<f64>>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OperatorName {
    Raw,
    Minmax,
    Clip,
    He,
    Fieldscale,
    Tcnet,
}

#[derive(Debug, Args)]
pub struct TonemapArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, value_enum)]
    pub operator: OperatorName,
    /// Lower clip percentile, as a fraction.
    #[arg(long, default_value_t = 0.01)]
    pub lo: f64,
    /// Upper clip percentile, as a fraction.
    #[arg(long, default_value_t = 0.99)]
    pub hi: f64,
    /// Histogram bin width in counts for `he`.
    #[arg(long, default_value_t = 30)]
    pub bin_width: u32,
    /// Grid rows for `fieldscale`.
    #[arg(long, default_value_t = 4)]
    pub rows: usize,
    /// Grid columns for `fieldscale`.
    #[arg(long, default_value_t = 4)]
    pub cols: usize,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Where the `tcnet` weight CSV goes (default: next to the output).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub mask_14bit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossName {
    ObjectContrast,
    EdgeFidelity,
    Reconstruction,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub dataset: PathBuf,
    /// Output checkpoint (TCNW).
    #[arg(short, long)]
    pub output: PathBuf,
    /// Output JSON-lines training log.
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, value_enum, default_value = "object-contrast")]
    pub loss: LossName,
    #[arg(long, default_value_t = DEFAULT_EDGE_LAMBDA)]
    pub edge_lambda: f64,
    #[arg(long, default_value_t = 3)]
    pub n_channels: usize,
    #[arg(long, default_value_t = DEFAULT_PERIOD_LO)]
    pub period_lo: f64,
    #[arg(long, default_value_t = DEFAULT_PERIOD_HI)]
    pub period_hi: f64,
    /// Keep the initial periods for every step instead of redrawing them.
    #[arg(long)]
    pub freeze_periods: bool,
    /// Comma-separated periods used for the whole run.
    #[arg(long, value_delimiter = ',')]
    pub fixed_periods: Option<Vec<f64>>,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
}

impl Cli {
    /// Resolves the invocation into a validated run config.
    pub fn resolve(self) -> Result<RunConfig> {
        let mut cfg = match (self.config, self.command) {
            (Some(_), Some(_)) => {
                return Err(CliError::usage("--config cannot be combined with a subcommand"));
            }
            (None, None) => return Err(CliError::usage("no subcommand given (see --help)")),
            (Some(path), None) => {
                let mut cfg = RunConfig::parse(&crate::output::read_text(&path)?)?;
                if self.profile.is_some() {
                    cfg.profile = self.profile;
                }
                if let Some(seed) = self.seed {
                    cfg.seed = Some(seed);
                    if let Command::Train { train, .. } = &mut cfg.command {
                        train.seed = seed;
                    }
                }
                cfg
            }
            (None, Some(sub)) => RunConfig {
                command: sub.into_command(self.seed)?,
                seed: self.seed,
                profile: self.profile,
            },
        };
        if let Command::Train { train, .. } = &cfg.command {
            cfg.seed = Some(train.seed);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Sub {
    fn into_command(self, seed: Option<u64>) -> Result<Command> {
        Ok(match self {
            Sub::Convert {
                input,
                output,
                preview,
                mask_14bit,
            } => Command::Convert {
                input,
                output,
                preview,
                mask_14bit,
            },
            Sub::Tonemap(a) => {
                let operator = match a.operator {
                    OperatorName::Raw => Operator::Raw,
                    OperatorName::Minmax => Operator::Minmax,
                    OperatorName::Clip => Operator::Clip { lo: a.lo, hi: a.hi },
                    OperatorName::He => Operator::He { bin_width: a.bin_width },
                    OperatorName::Fieldscale => Operator::Fieldscale {
                        rows: a.rows,
                        cols: a.cols,
                    },
                    OperatorName::Tcnet => Operator::Tcnet,
                };
                Command::Tonemap {
                    input: a.input,
                    output: a.output,
                    operator,
                    checkpoint: a.checkpoint,
                    weights: a.weights,
                    mask_14bit: a.mask_14bit,
                }
            }
            Sub::Embed {
                input,
                output,
                periods,
                n_channels,
                png_dir,
                mask_14bit,
            } => Command::Embed {
                n_channels: periods.as_ref().map_or(n_channels, Vec::len),
                input,
                output,
                periods,
                png_dir,
                mask_14bit,
            },
            Sub::Generate {
                output,
                count,
                width,
                height,
                n_objects,
                n_regions,
            } => Command::Generate {
                output,
                count,
                width,
                height,
                n_objects,
                n_regions,
            },
            Sub::Train(a) => {
                let seed = seed.ok_or_else(|| CliError::usage("train needs --seed"))?;
                let loss = match a.loss {
                    LossName::ObjectContrast => TaskLoss::ObjectContrast,
                    LossName::EdgeFidelity => TaskLoss::EdgeFidelity { lambda: a.edge_lambda },
                    LossName::Reconstruction => TaskLoss::Reconstruction,
                };
                let mut train = TrainConfig::new(seed, loss);
                train.n_channels = a.fixed_periods.as_ref().map_or(a.n_channels, Vec::len);
                train.period_lo = a.period_lo;
                train.period_hi = a.period_hi;
                train.resample_periods = !a.freeze_periods;
                train.fixed_periods = a.fixed_periods;
                train.epochs = a.epochs;
                train.batch_size = a.batch_size;
                train.lr = a.lr;
                Command::Train {
                    dataset: a.dataset,
                    checkpoint: a.output,
                    log: a.log,
                    train,
                }
            }
            Sub::Compare {
                dataset,
                checkpoint_a,
                checkpoint_b,
                output,
                histograms,
            } => Command::Compare {
                dataset,
                checkpoints: [checkpoint_a, checkpoint_b],
                output,
                histograms,
            },
            Sub::Bench {
                n_channels,
                width,
                height,
                iters,
            } => Command::Bench {
                n_channels,
                width,
                height,
                iters,
            },
            Sub::InspectWeights {
                checkpoint,
                dataset,
                periods,
                output,
            } => Command::InspectWeights {
                checkpoint,
                dataset,
                periods,
                output,
            },
        })
    }
}
