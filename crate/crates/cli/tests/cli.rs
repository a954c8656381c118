use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tirtone::embedding::{decode_temb, PeriodSet};
use tirtone::radiometry::{decode_temperature, encode_tirf, profile_to_toml, RadiometricFrame};
use tirtone::training::synthetic_profile;

fn tirtone(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tirtone"))
        .args(args.iter().map(|a| a.as_ref()))
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Workspace {
            dir: tempfile::tempdir().unwrap(),
        };
        fs::write(ws.path("camera.toml"), profile_to_toml(&synthetic_profile())).unwrap();
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// A frame whose counts map to a smooth range of temperatures.
    fn frame(&self, name: &str, w: usize, h: usize) -> PathBuf {
        let p = synthetic_profile();
        let counts = (0..w * h)
            .map(|i| {
                let t = -5.0 + 50.0 * (i % w) as f64 / w as f64 + 10.0 * (i / w) as f64 / h as f64;
                p.celsius_to_count(t).round() as u32
            })
            .collect();
        self.write_frame(name, RadiometricFrame::new(w, h, 14, counts).unwrap())
    }

    fn write_frame(&self, name: &str, frame: RadiometricFrame) -> PathBuf {
        let path = self.path(name);
        fs::write(&path, encode_tirf(&frame).unwrap()).unwrap();
        path
    }

    fn dataset(&self, name: &str, seed: u64, count: usize) -> PathBuf {
        let dir = self.path(name);
        let out = tirtone(&[
            &"--seed",
            &seed.to_string(),
            &"generate",
            &"-o",
            &dir,
            &"--count",
            &count.to_string(),
            &"--width",
            &"32",
            &"--height",
            &"32",
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        dir
    }

    fn train(&self, data: &Path, name: &str, loss: &str, n_channels: usize) -> PathBuf {
        let ck = self.path(&format!("{name}.tcnw"));
        let log = self.path(&format!("{name}.jsonl"));
        let out = tirtone(&[
            &"--seed",
            &"5",
            &"train",
            &data,
            &"-o",
            &ck,
            &"--log",
            &log,
            &"--loss",
            &loss,
            &"--epochs",
            &"2",
            &"--n-channels",
            &n_channels.to_string(),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        ck
    }
}

#[test]
fn convert_writes_temperature_map() {
    let ws = Workspace::new();
    let frame = ws.frame("f.tirf", 16, 8);
    let (out_path, preview) = (ws.path("f.tcel"), ws.path("f.png"));
    let out = tirtone(&[
        &"--profile",
        &ws.path("camera.toml"),
        &"convert",
        &frame,
        &"-o",
        &out_path,
        &"--preview",
        &preview,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let map = decode_temperature(&fs::read(&out_path).unwrap()).unwrap();
    assert_eq!((map.width(), map.height()), (16, 8));
    assert!((f64::from(map.celsius()[0]) + 5.0).abs() < 0.05);
    let img = image::open(&preview).unwrap().into_luma8();
    assert_eq!(img.dimensions(), (16, 8));
}

#[test]
fn convert_reports_saturated_pixel_index() {
    let ws = Workspace::new();
    let mut counts = vec![8000u32; 12];
    counts[7] = 300; // below the profile offset
    let frame = ws.write_frame("bad.tirf", RadiometricFrame::new(4, 3, 14, counts).unwrap());
    let out_path = ws.path("bad.tcel");
    let out = tirtone(&[
        &"--profile",
        &ws.path("camera.toml"),
        &"convert",
        &frame,
        &"-o",
        &out_path,
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("index 7"), "{}", stderr(&out));
    assert!(!out_path.exists());
}

#[test]
fn missing_profile_file_is_io_error() {
    let ws = Workspace::new();
    let frame = ws.frame("f.tirf", 4, 4);
    let out = tirtone(&[
        &"--profile",
        &ws.path("nope.toml"),
        &"convert",
        &frame,
        &"-o",
        &ws.path("x"),
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    let out = tirtone(&[&"convert", &frame, &"-o", &ws.path("x")]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn missing_input_is_io_error() {
    let ws = Workspace::new();
    let out = tirtone(&[
        &"tonemap",
        &ws.path("absent.tirf"),
        &"-o",
        &ws.path("x.png"),
        &"--operator",
        &"raw",
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn minmax_of_constant_frame_is_black() {
    let ws = Workspace::new();
    let frame = ws.write_frame("c.tirf", RadiometricFrame::new(5, 4, 14, vec![7000; 20]).unwrap());
    let png = ws.path("c.png");
    let out = tirtone(&[&"tonemap", &frame, &"-o", &png, &"--operator", &"minmax"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let img = image::open(&png).unwrap().into_luma8();
    assert!(img.as_raw().iter().all(|&v| v == 0));
}

#[test]
fn full_range_clip_equals_minmax_bytes() {
    let ws = Workspace::new();
    let frame = ws.frame("f.tirf", 20, 10);
    let (a, b) = (ws.path("clip.png"), ws.path("minmax.png"));
    let out = tirtone(&[
        &"tonemap",
        &frame,
        &"-o",
        &a,
        &"--operator",
        &"clip",
        &"--lo",
        &"0",
        &"--hi",
        &"1",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = tirtone(&[&"tonemap", &frame, &"-o", &b, &"--operator", &"minmax"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn every_baseline_operator_runs() {
    let ws = Workspace::new();
    let frame = ws.frame("f.tirf", 24, 16);
    for op in ["raw", "minmax", "clip", "he", "fieldscale"] {
        let png = ws.path(&format!("{op}.png"));
        let out = tirtone(&[&"tonemap", &frame, &"-o", &png, &"--operator", &op]);
        assert_eq!(code(&out), 0, "{op}: {}", stderr(&out));
        assert_eq!(image::open(&png).unwrap().into_luma8().dimensions(), (24, 16));
    }
    let out = tirtone(&[&"tonemap", &frame, &"-o", &ws.path("x.png"), &"--operator", &"bogus"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn tcnet_requires_checkpoint() {
    let ws = Workspace::new();
    let frame = ws.frame("f.tirf", 16, 16);
    let out = tirtone(&[
        &"--profile",
        &ws.path("camera.toml"),
        &"tonemap",
        &frame,
        &"-o",
        &ws.path("x.png"),
        &"--operator",
        &"tcnet",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("checkpoint"));
}

#[test]
fn embed_writes_channels_with_given_periods() {
    let ws = Workspace::new();
    let frame = ws.frame("f.tirf", 8, 6);
    let (temb, pngs) = (ws.path("f.temb"), ws.path("channels"));
    let out = tirtone(&[
        &"--profile",
        &ws.path("camera.toml"),
        &"embed",
        &frame,
        &"-o",
        &temb,
        &"--periods",
        &"5,20",
        &"--png-dir",
        &pngs,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("periods: 5,20"));
    let emb = decode_temb(&fs::read(&temb).unwrap(), PeriodSet::new(vec![5.0, 20.0]).unwrap()).unwrap();
    assert_eq!((emb.channels(), emb.width(), emb.height()), (2, 8, 6));
    assert!(pngs.join("channel_1.png").exists());
    // Sampled periods need a seed.
    let out = tirtone(&[&"--profile", &ws.path("camera.toml"), &"embed", &frame, &"-o", &temb]);
    assert_eq!(code(&out), 2);
}

#[test]
fn bench_rejects_too_few_iterations() {
    let out = tirtone(&[&"bench", &"--iters", &"5"]);
    assert_eq!(code(&out), 2);
    let out = tirtone(&[&"bench", &"--iters", &"10", &"--width", &"64", &"--height", &"48"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(
        text.contains("embed_ms_median=") && text.contains("compress_forward_ms_median="),
        "{text}"
    );
}

#[test]
fn generate_refuses_existing_directory() {
    let ws = Workspace::new();
    let dir = ws.dataset("data", 1, 2);
    assert!(dir.join("manifest.json").exists());
    let out = tirtone(&[&"--seed", &"1", &"generate", &"-o", &dir, &"--count", &"2"]);
    assert_eq!(code(&out), 2);
    let out = tirtone(&[&"generate", &"-o", &ws.path("other")]);
    assert_eq!(code(&out), 2, "generate without a seed");
}

#[test]
fn trained_checkpoint_drives_tcnet_deterministically() {
    let ws = Workspace::new();
    let data = ws.dataset("data", 2, 6);
    let ck = ws.train(&data, "model", "object-contrast", 3);
    let frame = ws.frame("f.tirf", 32, 24);
    let mut outputs = Vec::new();
    for run in 0..2 {
        let png = ws.path(&format!("tc{run}.png"));
        let csv = ws.path(&format!("tc{run}.csv"));
        let out = tirtone(&[
            &"--profile",
            &ws.path("camera.toml"),
            &"tonemap",
            &frame,
            &"-o",
            &png,
            &"--operator",
            &"tcnet",
            &"--checkpoint",
            &ck,
            &"--weights",
            &csv,
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        outputs.push((fs::read(png).unwrap(), fs::read_to_string(csv).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let csv = &outputs[0].1;
    assert!(csv.starts_with("channel,D,omega\n"));
    assert_eq!(csv.lines().filter(|l| l.starts_with("avg,")).count(), 3);

    // The default weight path sits next to the image.
    let png = ws.path("default.png");
    let out = tirtone(&[
        &"--profile",
        &ws.path("camera.toml"),
        &"tonemap",
        &frame,
        &"-o",
        &png,
        &"--operator",
        &"tcnet",
        &"--checkpoint",
        &ck,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(ws.path("default.omega.csv").exists());

    let out = tirtone(&[&"inspect-weights", &ck, &data, &"--periods", &"2,13.5,45"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("avg,2,"));
}

#[test]
fn compare_same_checkpoint_has_zero_kl() {
    let ws = Workspace::new();
    let data = ws.dataset("data", 3, 4);
    let ck = ws.train(&data, "m", "edge-fidelity", 3);
    let csv_path = ws.path("cmp.csv");
    let hist = ws.path("hist");
    let out = tirtone(&[&"compare", &data, &ck, &ck, &"-o", &csv_path, &"--histograms", &hist]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(&csv_path).unwrap();
    let kl_line = csv.lines().find(|l| l.starts_with("kl_nats,")).unwrap();
    let kl: f64 = kl_line.rsplit(',').next().unwrap().parse().unwrap();
    assert!(kl.abs() < 1e-6, "{csv}");
    assert!(hist.join("hist_a.csv").exists());

    let other = ws.train(&data, "n4", "edge-fidelity", 4);
    let out = tirtone(&[&"compare", &data, &ck, &other, &"-o", &ws.path("bad.csv")]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("incompatible"));

    let empty = ws.path("empty");
    fs::create_dir(&empty).unwrap();
    let out = tirtone(&[&"compare", &empty, &ck, &ck, &"-o", &ws.path("e.csv")]);
    assert_ne!(code(&out), 0);
    assert!(!ws.path("e.csv").exists());
}

#[test]
fn train_is_reproducible() {
    let ws = Workspace::new();
    let data = ws.dataset("data", 4, 4);
    let a = ws.train(&data, "a", "reconstruction", 3);
    let b = ws.train(&data, "b", "reconstruction", 3);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(
        fs::read(ws.path("a.jsonl")).unwrap(),
        fs::read(ws.path("b.jsonl")).unwrap()
    );
}

#[test]
fn printed_config_runs_and_round_trips() {
    let ws = Workspace::new();
    let frame = ws.frame("f.tirf", 12, 12);
    let png = ws.path("he.png");
    let out = tirtone(&[&"--print-config", &"tonemap", &frame, &"-o", &png, &"--operator", &"he"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let cfg = ws.path("run.toml");
    fs::write(&cfg, &text).unwrap();
    let again = tirtone(&[&"--config", &cfg, &"--print-config"]);
    assert_eq!(stdout(&again), text);
    assert!(!png.exists());
    let run = tirtone(&[&"--config", &cfg]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    assert!(png.exists());

    fs::write(&cfg, "[command]\nsubcommand = \"nope\"\n").unwrap();
    assert_eq!(code(&tirtone(&[&"--config", &cfg])), 2);
}
