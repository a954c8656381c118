//! End-to-end training of the compression network against a task loss.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compression::{
    compress_backward, compress_forward, inspect_weights, CompressionNet, CompressionWeights, NetConfig,
    ToneMappedImage, WeightReport, OUT_CHANNELS,
};
use crate::diffmath::{Adam, Checkpoint, Tensor};
use crate::embedding::{embed_into, sample_periods, sample_periods_with, PeriodSet};
use crate::error::{Error, Result};
use crate::training::dataset::{Dataset, Sample};
use crate::training::loss::TaskLoss;

/// Training hyperparameters. The seed has no default: every run names it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    #[serde(default = "defaults::n_channels")]
    pub n_channels: usize,
    #[serde(default = "defaults::period_lo")]
    pub period_lo: f64,
    #[serde(default = "defaults::period_hi")]
    pub period_hi: f64,
    /// Draw fresh periods for every step; evaluation always uses the
    /// periods drawn at initialization.
    #[serde(default = "defaults::resample")]
    pub resample_periods: bool,
    /// Use these periods throughout instead of sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_periods: Option<Vec<f64>>,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::lr")]
    pub lr: f64,
    #[serde(default = "defaults::loss")]
    pub loss: TaskLoss,
}

mod defaults {
    use super::TaskLoss;
    use crate::embedding::{DEFAULT_PERIOD_HI, DEFAULT_PERIOD_LO};

    pub fn n_channels() -> usize {
        3
    }
    pub fn period_lo() -> f64 {
        DEFAULT_PERIOD_LO
    }
    pub fn period_hi() -> f64 {
        DEFAULT_PERIOD_HI
    }
    pub fn resample() -> bool {
        true
    }
    pub fn epochs() -> usize {
        30
    }
    pub fn batch_size() -> usize {
        8
    }
    pub fn lr() -> f64 {
        1e-3
    }
    pub fn loss() -> TaskLoss {
        TaskLoss::ObjectContrast
    }
}

impl TrainConfig {
    pub fn new(seed: u64, loss: TaskLoss) -> Self {
        TrainConfig {
            seed,
            n_channels: defaults::n_channels(),
            period_lo: defaults::period_lo(),
            period_hi: defaults::period_hi(),
            resample_periods: defaults::resample(),
            fixed_periods: None,
            epochs: defaults::epochs(),
            batch_size: defaults::batch_size(),
            lr: defaults::lr(),
            loss,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_channels == 0 {
            return Err(Error::invalid("n_channels", "must be at least 1"));
        }
        if !(self.period_lo.is_finite() && self.period_hi.is_finite() && self.period_lo > 0.0)
            || self.period_lo > self.period_hi
        {
            return Err(Error::invalid(
                "period range",
                format!("need 0 < lo <= hi, got [{}, {}]", self.period_lo, self.period_hi),
            ));
        }
        if let Some(fixed) = &self.fixed_periods {
            if fixed.len() != self.n_channels {
                return Err(Error::invalid(
                    "fixed_periods",
                    format!("has {} entries for {} channels", fixed.len(), self.n_channels),
                ));
            }
            PeriodSet::new(fixed.clone())?;
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::invalid("lr", format!("{} is not a non-negative rate", self.lr)));
        }
        if let TaskLoss::EdgeFidelity { lambda } = self.loss {
            if !(lambda.is_finite() && lambda >= 0.0) {
                return Err(Error::invalid("lambda", "must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// Seeds for network initialization, period sampling and shuffling.
    fn sub_seeds(&self) -> [u64; 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        [rng.random(), rng.random(), rng.random()]
    }

    /// The network every run with this seed and channel count starts from.
    pub fn initial_net(&self) -> Result<CompressionNet<f32>> {
        CompressionNet::init(NetConfig::new(self.n_channels), self.sub_seeds()[0])
    }

    /// Periods used at evaluation time, rounded to `f32` so a model behaves
    /// the same before and after a checkpoint round trip.
    pub fn eval_periods(&self) -> Result<PeriodSet> {
        let drawn = match &self.fixed_periods {
            Some(fixed) => fixed.clone(),
            None => sample_periods(self.n_channels, self.period_lo, self.period_hi, self.sub_seeds()[1])?
                .periods()
                .to_vec(),
        };
        PeriodSet::new(drawn.into_iter().map(|p| f64::from(p as f32)).collect())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Step {
        epoch: usize,
        step: usize,
        loss: f64,
        periods: Vec<f64>,
    },
    /// End-of-epoch summary with the weights of the first scene under the
    /// evaluation periods.
    Epoch {
        epoch: usize,
        mean_loss: f64,
        periods: Vec<f64>,
        omega: Vec<f64>,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    pub fn epoch_losses(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::Epoch { mean_loss, .. } => Some(*mean_loss),
                LogRecord::Step { .. } => None,
            })
            .collect()
    }

    /// Line-delimited JSON, one record per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            writeln!(out, "{}", serde_json::to_string(r).expect("log record serializes")).unwrap();
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Parse {
                    what: format!("training log line {}", i + 1),
                    reason: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainLog { records })
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub net: CompressionNet<f32>,
    /// Periods frozen for inference.
    pub periods: PeriodSet,
    pub log: TrainLog,
}

impl TrainedModel {
    /// Network parameters plus a `periods` tensor.
    pub fn to_checkpoint(&self) -> Checkpoint {
        model_checkpoint(&self.net, &self.periods)
    }
}

pub fn model_checkpoint(net: &CompressionNet<f32>, periods: &PeriodSet) -> Checkpoint {
    let mut ck = net.to_checkpoint();
    let d: Vec<f32> = periods.periods().iter().map(|&p| p as f32).collect();
    ck.push("periods", Tensor::new([d.len()], d).expect("rank 1"));
    ck
}

/// Network and evaluation periods stored by [`model_checkpoint`].
pub fn model_from_checkpoint(ck: &Checkpoint) -> Result<(CompressionNet<f32>, PeriodSet)> {
    let net = CompressionNet::from_checkpoint(ck)?;
    let periods = PeriodSet::new(ck.get("periods")?.data().iter().map(|&p| f64::from(p)).collect())?;
    if periods.len() != net.n_channels() {
        return Err(Error::Shape(format!(
            "checkpoint has {} periods for {} channels",
            periods.len(),
            net.n_channels()
        )));
    }
    Ok((net, periods))
}

/// Writes the embeddings of `samples` into a `[B, N, H, W]` batch.
fn embed_batch(samples: &[&Sample], periods: &[f64], plane: usize) -> Result<Tensor<f32>> {
    let n = periods.len();
    let mut data = vec![0.0f32; samples.len() * n * plane];
    for (s, out) in samples.iter().zip(data.chunks_exact_mut(n * plane)) {
        embed_into(&s.celsius, periods, out);
    }
    let (h, w) = (samples[0].annotations.height(), samples[0].annotations.width());
    Tensor::new([samples.len(), n, h, w], data)
}

/// Mean task loss of a batch and its gradient with respect to the images.
fn batch_loss(loss: &TaskLoss, images: &Tensor<f32>, samples: &[&Sample]) -> Result<(f64, Tensor<f32>)> {
    let img_len = images.len() / samples.len();
    let inv_b = 1.0 / samples.len() as f32;
    let mut total = 0.0f64;
    let mut grad = Vec::with_capacity(images.len());
    for (s, img) in samples.iter().zip(images.data().chunks_exact(img_len)) {
        let (l, g) = loss.evaluate(img, &s.annotations, &s.celsius)?;
        total += f64::from(l);
        grad.extend(g.into_iter().map(|v| v * inv_b));
    }
    Ok((
        total / samples.len() as f64,
        Tensor::new(images.shape().to_vec(), grad)?,
    ))
}

/// Trains from the seed's initial network. Single-threaded and fully
/// determined by `(config, dataset)`.
pub fn train(config: &TrainConfig, dataset: &Dataset) -> Result<TrainedModel> {
    config.validate()?;
    let net = config.initial_net()?;
    train_from(net, config, dataset)
}

/// Trains a given network; the periods and shuffling still follow the
/// config's seed.
pub fn train_from(mut net: CompressionNet<f32>, config: &TrainConfig, dataset: &Dataset) -> Result<TrainedModel> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Missing("scenes in dataset"));
    }
    if net.n_channels() != config.n_channels {
        return Err(Error::Shape(format!(
            "network has {} channels, config {}",
            net.n_channels(),
            config.n_channels
        )));
    }
    let [_, period_seed, shuffle_seed] = config.sub_seeds();
    let eval_periods = config.eval_periods()?;
    // The step stream continues the evaluation draw so step 0 does not
    // simply repeat it.
    let mut period_rng = ChaCha8Rng::seed_from_u64(period_seed);
    sample_periods_with(&mut period_rng, config.n_channels, config.period_lo, config.period_hi)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let mut adam = Adam::new(config.lr as f32);
    let plane = dataset.width() * dataset.height();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = TrainLog::default();
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        let mut periods = eval_periods.clone();
        for chunk in order.chunks(config.batch_size) {
            if config.resample_periods && config.fixed_periods.is_none() {
                periods = sample_periods_with(&mut period_rng, config.n_channels, config.period_lo, config.period_hi)?;
            }
            let samples: Vec<&Sample> = chunk.iter().map(|&i| &dataset.samples()[i]).collect();
            let batch = embed_batch(&samples, periods.periods(), plane)?;
            let out = compress_forward(&net, &batch)?;
            let (loss, grad) = batch_loss(&config.loss, &out.images, &samples)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, step, loss });
            }
            net.zero_grad();
            compress_backward(&mut net, &out.cache, &grad)?;
            adam.step(&mut net.params_mut())?;
            if net.params().iter().any(|(_, t)| !t.all_finite()) {
                return Err(Error::Diverged { epoch, step, loss });
            }
            log.records.push(LogRecord::Step {
                epoch,
                step,
                loss,
                periods: periods.periods().to_vec(),
            });
            epoch_loss += loss;
            batches += 1;
            step += 1;
        }
        let (_, weights) = infer(&net, &eval_periods, &dataset.samples()[..1])?;
        log.records.push(LogRecord::Epoch {
            epoch,
            mean_loss: epoch_loss / batches as f64,
            periods: periods.periods().to_vec(),
            omega: weights[0].as_slice().to_vec(),
        });
    }
    net.zero_grad();
    Ok(TrainedModel {
        net,
        periods: eval_periods,
        log,
    })
}

const INFER_CHUNK: usize = 16;

/// Tone-mapped images and weights for every sample.
pub fn infer(
    net: &CompressionNet<f32>,
    periods: &PeriodSet,
    samples: &[Sample],
) -> Result<(Vec<ToneMappedImage>, Vec<CompressionWeights>)> {
    if periods.len() != net.n_channels() {
        return Err(Error::Shape(format!(
            "{} periods for a {}-channel network",
            periods.len(),
            net.n_channels()
        )));
    }
    let mut images = Vec::with_capacity(samples.len());
    let mut weights = Vec::with_capacity(samples.len());
    let n = net.n_channels();
    for chunk in samples.chunks(INFER_CHUNK) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let (h, w) = (chunk[0].annotations.height(), chunk[0].annotations.width());
        let batch = embed_batch(&refs, periods.periods(), h * w)?;
        let out = compress_forward(net, &batch)?;
        let img_len = OUT_CHANNELS * h * w;
        for (img, om) in out
            .images
            .data()
            .chunks_exact(img_len)
            .zip(out.weights.data().chunks_exact(OUT_CHANNELS * n))
        {
            images.push(ToneMappedImage::new(
                w,
                h,
                img.iter().map(|v| v.clamp(0.0, 255.0)).collect(),
            )?);
            weights.push(CompressionWeights::new(n, om.iter().map(|&v| f64::from(v)).collect())?);
        }
    }
    Ok((images, weights))
}

/// Mean task loss over a dataset under fixed periods.
pub fn evaluate_loss(
    net: &CompressionNet<f32>,
    periods: &PeriodSet,
    loss: &TaskLoss,
    dataset: &Dataset,
) -> Result<f64> {
    let (images, _) = infer(net, periods, dataset.samples())?;
    let mut total = 0.0;
    for (img, s) in images.iter().zip(dataset.samples()) {
        total += f64::from(loss.evaluate(img.data(), &s.annotations, &s.celsius)?.0);
    }
    Ok(total / dataset.len() as f64)
}

/// Weights averaged over all samples.
pub fn mean_weights(net: &CompressionNet<f32>, periods: &PeriodSet, samples: &[Sample]) -> Result<CompressionWeights> {
    let (_, weights) = infer(net, periods, samples)?;
    let n = net.n_channels();
    let mut acc = vec![0.0f64; OUT_CHANNELS * n];
    for w in &weights {
        for (a, v) in acc.iter_mut().zip(w.as_slice()) {
            *a += v;
        }
    }
    let count = weights.len().max(1) as f64;
    // Renormalize rows so rounding in the accumulation cannot break the
    // row-sum invariant.
    for row in acc.chunks_exact_mut(n) {
        let s: f64 = row.iter().map(|v| v / count).sum();
        row.iter_mut().for_each(|v| *v = *v / count / s);
    }
    CompressionWeights::new(n, acc)
}

/// Per-embedding average weights of `net` over `samples` under `periods`,
/// ordered by period. Used to check that an artifact-prone short period is
/// given the least weight.
pub fn artifact_rejection_probe(
    net: &CompressionNet<f32>,
    periods: &PeriodSet,
    samples: &[Sample],
) -> Result<WeightReport> {
    let weights = mean_weights(net, periods, samples)?;
    inspect_weights(&weights, periods)
}
