//! The resolved form of one invocation. Every command line is turned into
//! a [`RunConfig`] before it runs, and the same structure can be written to
//! and read from a TOML file with `--config`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use tirtone::training::TrainConfig;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Camera profile TOML.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<PathBuf>,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Command {
    Convert {
        input: PathBuf,
        output: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        preview: Option<PathBuf>,
        #[serde(default)]
        mask_14bit: bool,
    },
    Tonemap {
        input: PathBuf,
        output: PathBuf,
        operator: Operator,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        checkpoint: Option<PathBuf>,
        /// Weight report for the `tcnet` operator; defaults to the output
        /// path with extension `omega.csv`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<PathBuf>,
        #[serde(default)]
        mask_14bit: bool,
    },
    Embed {
        input: PathBuf,
        output: PathBuf,
        /// Explicit periods; sampled from the seed when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        periods: Option<Vec<f64>>,
        n_channels: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        png_dir: Option<PathBuf>,
        #[serde(default)]
        mask_14bit: bool,
    },
    Generate {
        output: PathBuf,
        count: usize,
        width: usize,
        height: usize,
        n_objects: usize,
        n_regions: usize,
    },
    Train {
        dataset: PathBuf,
        checkpoint: PathBuf,
        log: PathBuf,
        train: TrainConfig,
    },
    Compare {
        dataset: PathBuf,
        checkpoints: [PathBuf; 2],
        output: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        histograms: Option<PathBuf>,
    },
    Bench {
        n_channels: usize,
        width: usize,
        height: usize,
        iters: usize,
    },
    InspectWeights {
        checkpoint: PathBuf,
        dataset: PathBuf,
        /// Evaluate under these periods instead of the checkpoint's.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        periods: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        output: Option<PathBuf>,
    },
}

/// A tone-mapping operator and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Operator {
    Raw,
    Minmax,
    Clip { lo: f64, hi: f64 },
    He { bin_width: u32 },
    Fieldscale { rows: usize, cols: usize },
    Tcnet,
}

impl Operator {
    pub fn name(&self) -> &'static str {
        match self {
            Operator::Raw => "raw",
            Operator::Minmax => "minmax",
            Operator::Clip { .. } => "clip",
            Operator::He { .. } => "he",
            Operator::Fieldscale { .. } => "fieldscale",
            Operator::Tcnet => "tcnet",
        }
    }
}

impl RunConfig {
    /// Canonical TOML text: parsing it yields an equal config, and
    /// re-serializing that yields the same text.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks invariants that span fields.
    pub fn validate(&self) -> Result<()> {
        match &self.command {
            Command::Train { train, .. } => {
                if let Some(seed) = self.seed {
                    if seed != train.seed {
                        return Err(CliError::Config(format!(
                            "seed {seed} disagrees with train.seed {}",
                            train.seed
                        )));
                    }
                }
                train.validate()?;
            }
            Command::Tonemap {
                operator, checkpoint, ..
            } => {
                if *operator == Operator::Tcnet && checkpoint.is_none() {
                    return Err(CliError::usage("operator tcnet needs --checkpoint"));
                }
                if *operator == Operator::Tcnet && self.profile.is_none() {
                    return Err(CliError::usage("operator tcnet needs --profile"));
                }
            }
            Command::Embed {
                periods, n_channels, ..
            } => {
                if let Some(p) = periods {
                    if p.len() != *n_channels {
                        return Err(CliError::usage(format!(
                            "{} periods given for {n_channels} channels",
                            p.len()
                        )));
                    }
                } else if self.seed.is_none() {
                    return Err(CliError::usage("embed needs --periods or --seed to sample them"));
                }
            }
            Command::Generate { .. } => {
                if self.seed.is_none() {
                    return Err(CliError::usage("generate needs --seed"));
                }
            }
            Command::Bench { iters, .. } => {
                if *iters < crate::commands::MIN_BENCH_ITERS {
                    return Err(CliError::usage(format!(
                        "bench needs at least {} iterations, got {iters}",
                        crate::commands::MIN_BENCH_ITERS
                    )));
                }
            }
            Command::Convert { .. } | Command::Compare { .. } | Command::InspectWeights { .. } => {}
        }
        Ok(())
    }
}
