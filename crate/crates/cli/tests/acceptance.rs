//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any criterion fails.

#[path = "../../core/tests/support/gradients.rs"]
mod gradients;

use std::f64::consts::PI;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tirtone::baselines::{tonemap_clip, tonemap_fieldscale_lite, tonemap_he, tonemap_minmax, HeBins};
use tirtone::compression::{
    compress_embeddings, compress_forward, inspect_weights, CompressionNet, CompressionWeights, NetConfig,
};
use tirtone::diffmath::Tensor;
use tirtone::embedding::{embed, embed_into, PeriodSet};
use tirtone::metrics::{histogram_kl, output_stats, DEFAULT_KL_SMOOTHING};
use tirtone::radiometry::{
    counts_to_celsius, encode_tirf, profile_to_toml, CameraProfile, RadiometricFrame, TemperatureMap,
};
use tirtone::training::{
    artifact_rejection_probe, evaluate_loss, generate_scenes, infer, synthetic_profile, train, Dataset, SceneParams,
    TaskLoss, TrainConfig,
};
use tirtone_cli::commands::{median, time_embedding};

const EMBED_TOL: f64 = 1e-5;
const ANCHOR_TOL: f64 = 1e-6;
const ROUND_TRIP_TOL: f64 = 1e-6;
const ROW_SUM_TOL: f64 = 1e-6;
/// Gray levels an `f32` convex combination may overshoot its envelope by.
const ENVELOPE_TOL: f32 = 1e-3;
const OMEGA_GAP: f64 = 0.05;
const KL_GAP: f64 = 0.1;
const TRAIN_SEED: u64 = 1;
/// Held-out scenes come from the training generator seed plus this offset.
const HELD_OUT_OFFSET: u64 = 1000;
const PROBE_PERIODS: [f64; 3] = [2.0, 13.5, 45.0];
const TE3_BUDGET_MS: f64 = 20.0;
const TE10_BUDGET_MS: f64 = 100.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, budget: Duration) -> bool {
    elapsed < budget
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut out = [0.0f32];
    for _ in 0..1000 {
        let c: f32 = rng.random_range(-60.0..160.0);
        let d: f64 = rng.random_range(1.0..60.0);
        embed_into(&[c], &[d], &mut out);
        let reference = 127.5 * (PI * f64::from(c) / d).sin() + 127.5;
        worst = worst.max((f64::from(out[0]) - reference).abs());
    }
    let mut anchor_worst = 0.0f64;
    for d in [4.5f64, 13.5, 45.0, 2.0, 30.0] {
        for (c, expected) in [(0.0, 127.5), (d / 2.0, 255.0), (d, 127.5), (1.5 * d, 0.0)] {
            embed_into(&[c as f32], &[d], &mut out);
            anchor_worst = anchor_worst.max((f64::from(out[0]) - expected).abs());
        }
    }
    let elapsed = t.elapsed();
    outcome(
        worst < EMBED_TOL && anchor_worst < ANCHOR_TOL && within(elapsed, Duration::from_secs(1)),
        format!(
            "max err {worst:.2e} (tol {EMBED_TOL:e}), anchors {anchor_worst:.2e} (tol {ANCHOR_TOL:e}), {elapsed:.2?}"
        ),
    )
}

fn random_profile(rng: &mut ChaCha8Rng) -> CameraProfile {
    let offset_o = rng.random_range(0.0..2000.0);
    CameraProfile {
        name: "random".into(),
        planck_p: rng.random_range(1000.0..2000.0),
        planck_r: rng.random_range(1e5..1e6),
        offset_o,
        calib_f: rng.random_range(0.5..2.0),
        count_min: offset_o.floor() as u32 + 1,
        count_max: 16383,
    }
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    let mut frame_mismatch = 0usize;
    for _ in 0..10_000 {
        let profile = random_profile(&mut rng);
        profile.validate().expect("generated profiles are valid");
        let count = rng.random_range(profile.count_min..=profile.count_max);
        let celsius = profile
            .count_to_celsius(f64::from(count))
            .expect("count in profile range");
        let back = profile
            .count_to_celsius(profile.celsius_to_count(celsius))
            .expect("inverse stays in range");
        worst = worst.max((back - celsius).abs());
        let frame = RadiometricFrame::new(1, 1, 14, vec![count]).unwrap();
        if counts_to_celsius(&frame, &profile).unwrap().celsius()[0] != celsius as f32 {
            frame_mismatch += 1;
        }
    }
    let elapsed = t.elapsed();
    outcome(
        worst < ROUND_TRIP_TOL && frame_mismatch == 0 && within(elapsed, Duration::from_secs(1)),
        format!(
            "max err {worst:.2e} °C (tol {ROUND_TRIP_TOL:e}), frame path mismatches {frame_mismatch}, {elapsed:.2?}"
        ),
    )
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let mut worst = (0.0f64, String::new());
    let mut failures = Vec::new();
    let mut total = 0usize;
    let mut checks: Vec<(u64, &str, _)> = Vec::new();
    for seed in 1..=5 {
        checks.extend(gradients::toy_checks(seed).into_iter().map(|(n, c)| (seed, n, c)));
    }
    checks.extend(gradients::composed_checks(1).into_iter().map(|(n, c)| (1, n, c)));
    for (seed, name, check) in checks {
        total += check.checked;
        if check.max_rel > worst.0 {
            worst = (check.max_rel, format!("{name}, seed {seed}"));
        }
        if !check.passes(gradients::GRAD_TOL) {
            failures.push(format!("{name} seed {seed}: {:.2e}", check.max_rel));
        }
    }
    let elapsed = t.elapsed();
    outcome(
        failures.is_empty() && within(elapsed, Duration::from_secs(60)),
        format!(
            "{total} coordinates over seeds 1-5, worst rel err {:.2e} ({}), tol {:e}, {elapsed:.2?}{}",
            worst.0,
            worst.1,
            gradients::GRAD_TOL,
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failing: {}", failures.join("; "))
            }
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst_sum = 0.0f64;
    let mut min_entry = f64::INFINITY;
    for case in 0..100 {
        let n = rng.random_range(1..=8);
        let (h, w) = (rng.random_range(5..=20), rng.random_range(5..=20));
        let net = CompressionNet::<f32>::init(NetConfig::new(n), case).unwrap();
        let x = Tensor::<f32>::from_fn([2, n, h, w], |_| rng.random_range(0.0..255.0));
        let out = compress_forward(&net, &x).unwrap();
        for row in out.weights.data().chunks_exact(n) {
            let s: f64 = row.iter().map(|&v| f64::from(v)).sum();
            worst_sum = worst_sum.max((s - 1.0).abs());
            min_entry = row.iter().fold(min_entry, |m, &v| m.min(f64::from(v)));
        }
    }
    let periods = PeriodSet::new(vec![4.5, 13.5, 45.0]).unwrap();
    let table = |omega: Vec<f64>| {
        let report = inspect_weights(&CompressionWeights::new(3, omega).unwrap(), &periods).unwrap();
        report
            .averages
            .iter()
            .map(|a| (a.2 * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>()
    };
    let detection = table(vec![0.265, 0.386, 0.349, 0.194, 0.236, 0.570, 0.137, 0.332, 0.531]);
    let depth = table(vec![0.108, 0.573, 0.319, 0.004, 0.251, 0.745, 0.001, 0.788, 0.211]);
    outcome(
        worst_sum < ROW_SUM_TOL
            && min_entry > 0.0
            && detection == [0.199, 0.318, 0.483]
            && depth == [0.038, 0.537, 0.425],
        format!(
            "max |row sum - 1| {worst_sum:.2e} (tol {ROW_SUM_TOL:e}), min entry {min_entry:.2e}, averages {detection:?} / {depth:?}"
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0f32;
    let mut pixels = 0usize;
    for case in 0..100 {
        let n = rng.random_range(1..=6);
        let (h, w) = (rng.random_range(5..=24), rng.random_range(5..=24));
        let net = CompressionNet::<f32>::init(NetConfig::new(n), 1000 + case).unwrap();
        let periods = PeriodSet::new((0..n).map(|_| rng.random_range(1.0..60.0)).collect()).unwrap();
        let celsius = (0..h * w).map(|_| rng.random_range(-30.0f32..120.0)).collect();
        let emb = embed(&TemperatureMap::new(w, h, celsius).unwrap(), &periods);
        let (images, _) = compress_embeddings(&net, std::slice::from_ref(&emb)).unwrap();
        for p in 0..h * w {
            let vals: Vec<f32> = (0..n).map(|k| emb.channel(k)[p]).collect();
            let lo = vals.iter().copied().fold(f32::INFINITY, f32::min);
            let hi = vals.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            for c in 0..3 {
                let v = images[0].channel(c)[p];
                worst = worst.max(lo - v).max(v - hi);
            }
            pixels += 1;
        }
    }
    outcome(
        worst <= ENVELOPE_TOL,
        format!("{pixels} pixels, max envelope excess {worst:.2e} gray levels (tol {ENVELOPE_TOL:e})"),
    )
}

fn oracle_rescale(c: u32, lo: u32, hi: u32) -> u8 {
    if hi <= lo {
        return 0;
    }
    let v = (f64::from(c.clamp(lo, hi)) - f64::from(lo)) * 255.0 / f64::from(hi - lo);
    v.round() as u8
}

/// Smallest sample with at least `pct` of all samples at or below it.
fn oracle_percentile(counts: &[u32], pct: f64) -> u32 {
    let n = counts.len() as f64;
    let mut candidates: Vec<u32> = counts.to_vec();
    candidates.sort_unstable();
    candidates.dedup();
    for v in candidates {
        let at_or_below = counts.iter().filter(|&&c| c <= v).count() as f64;
        if at_or_below >= pct * n - 1e-9 && at_or_below >= 1.0 {
            return v;
        }
    }
    unreachable!("the maximum satisfies every percentile")
}

fn oracle_he(counts: &[u32], bin_width: u32) -> Vec<u8> {
    let lo = *counts.iter().min().unwrap();
    let n = counts.len() as f64;
    counts
        .iter()
        .map(|&c| {
            let bin = (c - lo) / bin_width;
            let below = counts.iter().filter(|&&o| (o - lo) / bin_width <= bin).count() as f64;
            (255.0 * below / n).round() as u8
        })
        .collect()
}

fn random_frame(rng: &mut ChaCha8Rng) -> RadiometricFrame {
    let base = rng.random_range(1000u32..12000);
    let spread = match rng.random_range(0..3) {
        0 => rng.random_range(1u32..50),
        1 => rng.random_range(50u32..800),
        _ => rng.random_range(800u32..4000),
    };
    let counts = (0..32 * 32).map(|_| base + rng.random_range(0..=spread)).collect();
    RadiometricFrame::new(32, 32, 14, counts).unwrap()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut mismatches = Vec::new();
    for i in 0..50 {
        let f = random_frame(&mut rng);
        let minmax = tonemap_minmax(&f);
        if tonemap_clip(&f, 0.0, 1.0).unwrap() != minmax {
            mismatches.push(format!("frame {i}: clip(0,1) != minmax"));
        }
        if tonemap_fieldscale_lite(&f, 1, 1).unwrap() != minmax {
            mismatches.push(format!("frame {i}: fieldscale(1,1) != minmax"));
        }
        let (lo_pct, hi_pct) = (rng.random_range(0.0..0.2), rng.random_range(0.8..1.0));
        let (lo, hi) = (
            oracle_percentile(f.counts(), lo_pct),
            oracle_percentile(f.counts(), hi_pct),
        );
        let expected: Vec<u8> = f.counts().iter().map(|&c| oracle_rescale(c, lo, hi)).collect();
        if tonemap_clip(&f, lo_pct, hi_pct).unwrap().gray() != expected.as_slice() {
            mismatches.push(format!("frame {i}: clip({lo_pct:.3},{hi_pct:.3}) differs from oracle"));
        }
        for width in [1, 30] {
            if tonemap_he(&f, HeBins::Width(width)).unwrap().gray() != oracle_he(f.counts(), width).as_slice() {
                mismatches.push(format!("frame {i}: he(width {width}) differs from oracle"));
            }
        }
    }
    outcome(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            "50 frames of 32x32, all byte-exact".to_string()
        } else {
            mismatches.join("; ")
        },
    )
}

fn scenes(seed: u64, count: usize) -> Dataset {
    let profile = synthetic_profile();
    Dataset::from_scenes(
        &generate_scenes(seed, count, &SceneParams::default(), &profile).unwrap(),
        &profile,
    )
    .unwrap()
}

fn criterion_7() -> Outcome {
    let t = Instant::now();
    let data = scenes(TRAIN_SEED, 200);
    let held = scenes(TRAIN_SEED + HELD_OUT_OFFSET, 20);
    let losses = [TaskLoss::ObjectContrast, TaskLoss::EdgeFidelity { lambda: 0.5 }];
    let mut lines = Vec::new();
    let mut improved = true;
    let mut outputs = Vec::new();
    let mut inits = Vec::new();
    for loss in losses {
        let cfg = TrainConfig {
            resample_periods: false,
            ..TrainConfig::new(TRAIN_SEED, loss)
        };
        let init_net = cfg.initial_net().unwrap();
        inits.push(init_net.to_checkpoint().encode());
        let model = train(&cfg, &data).unwrap();
        let initial = evaluate_loss(&init_net, &model.periods, &loss, &data).unwrap();
        let fin = evaluate_loss(&model.net, &model.periods, &loss, &data).unwrap();
        let ok = fin < initial - 0.5 * initial.abs();
        improved &= ok;
        lines.push(format!(
            "{} loss {initial:.4} -> {fin:.4} ({:.2}x){}",
            loss.name(),
            fin / initial,
            if ok { "" } else { " [below 1.5x]" }
        ));
        let (images, weights) = infer(&model.net, &model.periods, held.samples()).unwrap();
        outputs.push((output_stats(loss.name(), &images).unwrap(), weights));
    }
    let same_init = inits[0] == inits[1];
    let omega_gap = outputs[0]
        .1
        .iter()
        .zip(&outputs[1].1)
        .flat_map(|(a, b)| a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()))
        .fold(0.0f64, f64::max);
    let kl = histogram_kl(&outputs[0].0.histogram, &outputs[1].0.histogram, DEFAULT_KL_SMOOTHING).unwrap();
    let elapsed = t.elapsed();
    outcome(
        same_init && improved && omega_gap > OMEGA_GAP && kl > KL_GAP && within(elapsed, Duration::from_secs(600)),
        format!(
            "{}; held-out max |dω| {omega_gap:.3} (> {OMEGA_GAP}), KL {kl:.3} nats (> {KL_GAP}); entropy {:.3} / {:.3} bits; same init {same_init}; {elapsed:.1?}",
            lines.join(", "),
            outputs[0].0.mean_entropy,
            outputs[1].0.mean_entropy,
        ),
    )
}

fn criterion_8() -> Outcome {
    let params = SceneParams::default();
    let mut passed = 0;
    let mut lines = Vec::new();
    for seed in 1..=3u64 {
        let data = scenes(seed, 200);
        let held = scenes(seed + HELD_OUT_OFFSET, 20);
        let cfg = TrainConfig {
            fixed_periods: Some(PROBE_PERIODS.to_vec()),
            ..TrainConfig::new(seed, TaskLoss::ObjectContrast)
        };
        let model = train(&cfg, &data).unwrap();
        let report = artifact_rejection_probe(&model.net, &model.periods, held.samples()).unwrap();
        let ok = report.periods_of_min() == PROBE_PERIODS[0];
        passed += usize::from(ok);
        lines.push(format!(
            "seed {seed}: {} [{}]",
            report
                .averages
                .iter()
                .map(|a| format!("D={} {:.3}", a.1, a.2))
                .collect::<Vec<_>>()
                .join(" "),
            if ok { "pass" } else { "fail" }
        ));
    }
    outcome(
        passed >= 2 && params.delta_range.0 > 4.0,
        format!("{passed}/3 seeds put the least weight on D=2 ({})", lines.join("; ")),
    )
}

trait MinPeriod {
    fn periods_of_min(&self) -> f64;
}

impl MinPeriod for tirtone::compression::WeightReport {
    fn periods_of_min(&self) -> f64 {
        let k = self.argmin_average();
        self.averages.iter().find(|a| a.0 == k).expect("argmin is reported").1
    }
}

fn criterion_9() -> Outcome {
    let te3 = median(time_embedding(3, 640, 512, 31, 9).unwrap());
    let te10 = median(time_embedding(10, 640, 512, 31, 9).unwrap());
    outcome(
        te3 < TE3_BUDGET_MS && te10 < TE10_BUDGET_MS,
        format!(
            "median TE(3) {te3:.2} ms (< {TE3_BUDGET_MS}), TE(10) {te10:.2} ms (< {TE10_BUDGET_MS}), ratio {:.2}",
            te10 / te3
        ),
    )
}

fn cli(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tirtone"))
        .args(args.iter().map(|a| a.as_ref()))
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_default()
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let run = || -> Result<Vec<(String, bool)>, String> {
        let data = p("data");
        cli(&[
            &"--seed",
            &"10",
            &"generate",
            &"-o",
            &data,
            &"--count",
            &"16",
            &"--width",
            &"32",
            &"--height",
            &"32",
        ])?;
        fs::write(p("camera.toml"), profile_to_toml(&synthetic_profile())).map_err(|e| e.to_string())?;
        let mut pairs = Vec::new();
        for run in 0..2 {
            let (ck, log) = (p(&format!("m{run}.tcnw")), p(&format!("m{run}.jsonl")));
            cli(&[
                &"--seed",
                &"10",
                &"train",
                &data,
                &"-o",
                &ck,
                &"--log",
                &log,
                &"--epochs",
                &"3",
                &"--loss",
                &"edge-fidelity",
            ])?;
        }
        pairs.push(("checkpoint".to_string(), read(&p("m0.tcnw")) == read(&p("m1.tcnw"))));
        pairs.push(("log".to_string(), read(&p("m0.jsonl")) == read(&p("m1.jsonl"))));

        let frame = p("frame.tirf");
        let source = &generate_scenes(77, 1, &SceneParams::default(), &synthetic_profile()).unwrap()[0];
        fs::write(&frame, encode_tirf(&source.frame).unwrap()).map_err(|e| e.to_string())?;
        for op in ["raw", "minmax", "clip", "he", "fieldscale", "tcnet"] {
            for run in 0..2 {
                let out = p(&format!("{op}{run}.png"));
                let csv = p(&format!("{op}{run}.csv"));
                cli(&[
                    &"--profile",
                    &p("camera.toml"),
                    &"tonemap",
                    &frame,
                    &"-o",
                    &out,
                    &"--operator",
                    &op,
                    &"--checkpoint",
                    &p("m0.tcnw"),
                    &"--weights",
                    &csv,
                ])?;
            }
            let same = read(&p(&format!("{op}0.png"))) == read(&p(&format!("{op}1.png")))
                && read(&p(&format!("{op}0.csv"))) == read(&p(&format!("{op}1.csv")));
            pairs.push((
                format!("tonemap {op}"),
                same && !read(&p(&format!("{op}0.png"))).is_empty(),
            ));
        }
        Ok(pairs)
    };
    match run() {
        Ok(pairs) => {
            let differing: Vec<&str> = pairs.iter().filter(|p| !p.1).map(|p| p.0.as_str()).collect();
            outcome(
                differing.is_empty(),
                if differing.is_empty() {
                    format!("{} artifacts byte-identical across runs", pairs.len())
                } else {
                    format!("differing: {}", differing.join(", "))
                },
            )
        }
        Err(e) => outcome(false, format!("CLI failed: {}", e.trim())),
    }
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "embedding pointwise correctness", criterion_1),
        (2, "temperature round trip", criterion_2),
        (3, "gradient integrity", criterion_3),
        (4, "row-stochastic weights", criterion_4),
        (5, "convexity bound", criterion_5),
        (6, "baseline oracle equivalence", criterion_6),
        (7, "task adaptivity", criterion_7),
        (8, "artifact rejection", criterion_8),
        (9, "embedding throughput", criterion_9),
        (10, "determinism", criterion_10),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| panic.downcast_ref::<&str>().copied())
                .unwrap_or("panic");
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "{} criterion {id:>2} ({name}): {}",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
