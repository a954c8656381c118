use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tirtone::baselines::{
    quantize, tonemap_clip, tonemap_fieldscale_lite, tonemap_he, tonemap_minmax, tonemap_raw, HeBins, ToneMapped8,
};
use tirtone::compression::{
    compress_embeddings, compress_forward, inspect_weights, stack_embeddings, CompressionNet, NetConfig,
};
use tirtone::diffmath::Checkpoint;
use tirtone::embedding::{
    embed, embedding_to_images, encode_temb, sample_periods, PeriodSet, DEFAULT_PERIOD_HI, DEFAULT_PERIOD_LO,
};
use tirtone::metrics::{comparison_csv, output_stats, DEFAULT_KL_SMOOTHING};
use tirtone::radiometry::{
    counts_to_celsius, encode_temperature, load_profile, load_raw_frame, CameraProfile, FrameFormat, RadiometricFrame,
    TemperatureMap,
};
use tirtone::training::{
    artifact_rejection_probe, infer, load_dataset, model_from_checkpoint, synthetic_profile, train, write_dataset,
    SceneParams, TrainConfig,
};

use crate::config::{Command, Operator, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{read_bytes, write_atomic, write_dir_atomic, write_gray_png, write_rgb_png};

pub const MIN_BENCH_ITERS: usize = 10;

/// Runs a validated config and returns the text to print on stdout.
pub fn execute(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    match &cfg.command {
        Command::Convert {
            input,
            output,
            preview,
            mask_14bit,
        } => convert(cfg, input, output, preview.as_deref(), *mask_14bit),
        Command::Tonemap {
            input,
            output,
            operator,
            checkpoint,
            weights,
            mask_14bit,
        } => {
            let frame = load_frame(input, *mask_14bit)?;
            if let Operator::Tcnet = operator {
                let checkpoint = checkpoint.as_deref().expect("validated");
                let weights = weights.clone().unwrap_or_else(|| output.with_extension("omega.csv"));
                tonemap_tcnet(&frame, &require_profile(cfg)?, checkpoint, output, &weights)
            } else {
                let img = tonemap_baseline(&frame, operator)?;
                write_gray_png(output, img.width(), img.height(), img.into_gray())?;
                Ok(format!("wrote {} ({})\n", output.display(), operator.name()))
            }
        }
        Command::Embed {
            input,
            output,
            periods,
            n_channels,
            png_dir,
            mask_14bit,
        } => {
            let periods = match periods {
                Some(p) => PeriodSet::new(p.clone())?,
                None => sample_periods(
                    *n_channels,
                    DEFAULT_PERIOD_LO,
                    DEFAULT_PERIOD_HI,
                    cfg.seed.expect("validated"),
                )?,
            };
            let temp = temperature(cfg, input, *mask_14bit)?;
            let emb = embed(&temp, &periods);
            write_atomic(output, &encode_temb(&emb))?;
            if let Some(dir) = png_dir {
                fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
                for (k, img) in embedding_to_images(&emb).into_iter().enumerate() {
                    write_gray_png(
                        &dir.join(format!("channel_{k}.png")),
                        img.width(),
                        img.height(),
                        img.into_gray(),
                    )?;
                }
            }
            Ok(format!(
                "wrote {}\nperiods: {}\n",
                output.display(),
                join(periods.periods())
            ))
        }
        Command::Generate {
            output,
            count,
            width,
            height,
            n_objects,
            n_regions,
        } => {
            let profile = match &cfg.profile {
                Some(p) => load_profile(p)?,
                None => synthetic_profile(),
            };
            let params = SceneParams {
                width: *width,
                height: *height,
                n_objects: *n_objects,
                n_regions: *n_regions,
                ..SceneParams::default()
            };
            let seed = cfg.seed.expect("validated");
            write_dir_atomic(output, |tmp| Ok(write_dataset(tmp, seed, *count, &params, &profile)?))?;
            Ok(format!("wrote {count} scenes to {}\n", output.display()))
        }
        Command::Train {
            dataset,
            checkpoint,
            log,
            train: config,
        } => run_train(dataset, checkpoint, log, config),
        Command::Compare {
            dataset,
            checkpoints,
            output,
            histograms,
        } => compare(dataset, checkpoints, output, histograms.as_deref()),
        Command::Bench {
            n_channels,
            width,
            height,
            iters,
        } => {
            let seed = cfg.seed.unwrap_or(0);
            let report = bench(*n_channels, *width, *height, *iters, seed)?;
            Ok(report.to_string())
        }
        Command::InspectWeights {
            checkpoint,
            dataset,
            periods,
            output,
        } => {
            let (net, ck_periods) = model_from_checkpoint(&Checkpoint::decode(&read_bytes(checkpoint)?)?)?;
            let periods = match periods {
                Some(p) => PeriodSet::new(p.clone())?,
                None => ck_periods,
            };
            let data = load_dataset(dataset)?;
            let csv = artifact_rejection_probe(&net, &periods, data.samples())?.to_csv();
            match output {
                Some(path) => {
                    write_atomic(path, csv.as_bytes())?;
                    Ok(format!("wrote {}\n", path.display()))
                }
                None => Ok(csv),
            }
        }
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn require_profile(cfg: &RunConfig) -> Result<CameraProfile> {
    let path = cfg
        .profile
        .as_ref()
        .ok_or_else(|| CliError::usage("this command needs --profile"))?;
    Ok(load_profile(path)?)
}

fn load_frame(path: &Path, mask_14bit: bool) -> Result<RadiometricFrame> {
    Ok(load_raw_frame(path, FrameFormat::from_path(path), mask_14bit)?)
}

fn temperature(cfg: &RunConfig, input: &Path, mask_14bit: bool) -> Result<TemperatureMap> {
    let profile = require_profile(cfg)?;
    let frame = load_frame(input, mask_14bit)?;
    Ok(counts_to_celsius(&frame, &profile)?)
}

fn convert(cfg: &RunConfig, input: &Path, output: &Path, preview: Option<&Path>, mask_14bit: bool) -> Result<String> {
    let temp = temperature(cfg, input, mask_14bit)?;
    write_atomic(output, &encode_temperature(&temp))?;
    if let Some(path) = preview {
        let c = temp.celsius();
        let (lo, hi) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(f64::from(v)), hi.max(f64::from(v)))
        });
        let gray = c
            .iter()
            .map(|&v| {
                if hi > lo {
                    quantize((f64::from(v) - lo) / (hi - lo) * 255.0)
                } else {
                    0
                }
            })
            .collect();
        write_gray_png(path, temp.width(), temp.height(), gray)?;
    }
    Ok(format!("wrote {}\n", output.display()))
}

pub fn tonemap_baseline(frame: &RadiometricFrame, operator: &Operator) -> Result<ToneMapped8> {
    Ok(match *operator {
        Operator::Raw => tonemap_raw(frame),
        Operator::Minmax => tonemap_minmax(frame),
        Operator::Clip { lo, hi } => tonemap_clip(frame, lo, hi)?,
        Operator::He { bin_width } => tonemap_he(frame, HeBins::Width(bin_width))?,
        Operator::Fieldscale { rows, cols } => tonemap_fieldscale_lite(frame, rows, cols)?,
        Operator::Tcnet => return Err(CliError::usage("tcnet is not a baseline operator")),
    })
}

fn tonemap_tcnet(
    frame: &RadiometricFrame,
    profile: &CameraProfile,
    checkpoint: &Path,
    output: &Path,
    weights: &Path,
) -> Result<String> {
    let (net, periods) = model_from_checkpoint(&Checkpoint::decode(&read_bytes(checkpoint)?)?)?;
    let temp = counts_to_celsius(frame, profile)?;
    let emb = embed(&temp, &periods);
    let (images, omegas) = compress_embeddings(&net, &[emb])?;
    let img = &images[0];
    let report = inspect_weights(&omegas[0], &periods)?;
    write_rgb_png(output, img.width(), img.height(), img.to_rgb8())?;
    write_atomic(weights, report.to_csv().as_bytes())?;
    Ok(format!("wrote {} and {}\n", output.display(), weights.display()))
}

fn run_train(dataset: &Path, checkpoint: &Path, log: &Path, config: &TrainConfig) -> Result<String> {
    let data = load_dataset(dataset)?;
    let model = train(config, &data)?;
    write_atomic(checkpoint, &model.to_checkpoint().encode())?;
    write_atomic(log, model.log.to_jsonl().as_bytes())?;
    let losses = model.log.epoch_losses();
    let mut out = String::new();
    writeln!(out, "trained {} epochs on {} scenes", losses.len(), data.len()).unwrap();
    if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
        writeln!(out, "mean loss: epoch 1 {first:.6}, final {last:.6}").unwrap();
    }
    writeln!(out, "periods: {}", join(model.periods.periods())).unwrap();
    Ok(out)
}

fn label_of(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned())
}

fn compare(dataset: &Path, checkpoints: &[PathBuf; 2], output: &Path, histograms: Option<&Path>) -> Result<String> {
    let data = load_dataset(dataset)?;
    let mut models = Vec::with_capacity(2);
    for path in checkpoints {
        models.push(model_from_checkpoint(&Checkpoint::decode(&read_bytes(path)?)?)?);
    }
    let (na, nb) = (models[0].0.n_channels(), models[1].0.n_channels());
    if na != nb {
        return Err(CliError::usage(format!(
            "incompatible checkpoints: {na} and {nb} embedding channels"
        )));
    }
    let mut labels = [label_of(&checkpoints[0]), label_of(&checkpoints[1])];
    if labels[0] == labels[1] {
        labels[0].push_str("#1");
        labels[1].push_str("#2");
    }
    let mut stats = Vec::with_capacity(2);
    for ((net, periods), label) in models.iter().zip(&labels) {
        let (images, _) = infer(net, periods, data.samples())?;
        stats.push(output_stats(label.clone(), &images)?);
    }
    let csv = comparison_csv(&stats[0], &stats[1], DEFAULT_KL_SMOOTHING)?;
    write_atomic(output, csv.as_bytes())?;
    if let Some(dir) = histograms {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        for (s, name) in stats.iter().zip(["hist_a.csv", "hist_b.csv"]) {
            write_atomic(&dir.join(name), s.histogram.to_csv().as_bytes())?;
        }
    }
    Ok(csv)
}

/// Median wall-clock times in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReport {
    pub n_channels: usize,
    pub width: usize,
    pub height: usize,
    pub iters: usize,
    pub embed_ms: f64,
    pub compress_ms: f64,
}

impl std::fmt::Display for BenchReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "bench n_channels={} size={}x{} iters={}",
            self.n_channels, self.width, self.height, self.iters
        )?;
        writeln!(f, "embed_ms_median={:.3}", self.embed_ms)?;
        writeln!(f, "compress_forward_ms_median={:.3}", self.compress_ms)
    }
}

pub fn median(mut samples: Vec<f64>) -> f64 {
    assert!(!samples.is_empty(), "median of no samples");
    samples.sort_by(f64::total_cmp);
    let m = samples.len() / 2;
    if samples.len() % 2 == 1 {
        samples[m]
    } else {
        0.5 * (samples[m - 1] + samples[m])
    }
}

/// A random temperature map spanning typical scene temperatures.
pub fn bench_temperature(width: usize, height: usize, seed: u64) -> Result<TemperatureMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let celsius = (0..width * height).map(|_| rng.random_range(-20.0f32..120.0)).collect();
    Ok(TemperatureMap::new(width, height, celsius)?)
}

/// Per-iteration wall times of `embed` in milliseconds.
pub fn time_embedding(n_channels: usize, width: usize, height: usize, iters: usize, seed: u64) -> Result<Vec<f64>> {
    let temp = bench_temperature(width, height, seed)?;
    let periods = sample_periods(n_channels, DEFAULT_PERIOD_LO, DEFAULT_PERIOD_HI, seed)?;
    // One untimed pass to fault in the output allocation path.
    std::hint::black_box(embed(&temp, &periods));
    Ok((0..iters)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(embed(std::hint::black_box(&temp), &periods));
            t.elapsed().as_secs_f64() * 1e3
        })
        .collect())
}

/// Per-iteration wall times of a single-image `compress_forward` in milliseconds.
pub fn time_compression(n_channels: usize, width: usize, height: usize, iters: usize, seed: u64) -> Result<Vec<f64>> {
    let temp = bench_temperature(width, height, seed)?;
    let periods = sample_periods(n_channels, DEFAULT_PERIOD_LO, DEFAULT_PERIOD_HI, seed)?;
    let batch = stack_embeddings(&[embed(&temp, &periods)])?;
    let net = CompressionNet::<f32>::init(NetConfig::new(n_channels), seed)?;
    std::hint::black_box(compress_forward(&net, &batch)?);
    let mut out = Vec::with_capacity(iters);
    for _ in 0..iters {
        let t = Instant::now();
        std::hint::black_box(compress_forward(&net, std::hint::black_box(&batch))?);
        out.push(t.elapsed().as_secs_f64() * 1e3);
    }
    Ok(out)
}

pub fn bench(n_channels: usize, width: usize, height: usize, iters: usize, seed: u64) -> Result<BenchReport> {
    if iters < MIN_BENCH_ITERS {
        return Err(CliError::usage(format!(
            "bench needs at least {MIN_BENCH_ITERS} iterations, got {iters}"
        )));
    }
    Ok(BenchReport {
        n_channels,
        width,
        height,
        iters,
        embed_ms: median(time_embedding(n_channels, width, height, iters, seed)?),
        compress_ms: median(time_compression(n_channels, width, height, iters, seed)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn bench_rejects_few_iterations() {
        assert_eq!(bench(3, 16, 16, 5, 0).unwrap_err().exit_code(), 2);
        let r = bench(3, 16, 16, 10, 0).unwrap();
        assert!(r.embed_ms >= 0.0 && r.compress_ms >= 0.0);
    }

    #[test]
    fn tcnet_is_not_a_baseline() {
        let frame = RadiometricFrame::new(2, 2, 14, vec![1, 2, 3, 4]).unwrap();
        assert!(tonemap_baseline(&frame, &Operator::Tcnet).is_err());
        assert_eq!(
            tonemap_baseline(&frame, &Operator::Minmax).unwrap().gray(),
            &[0, 85, 170, 255]
        );
    }
}
