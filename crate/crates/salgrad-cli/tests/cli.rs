//! End-to-end binary tests: flags, files, exit codes, determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use salgrad::synthetic;
use salgrad::Tensor;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_salgrad"))
}

fn save_png(path: &Path, t: &Tensor) {
    let mut img = image::RgbImage::new(t.width() as u32, t.height() as u32);
    for (p, px) in img.pixels_mut().enumerate() {
        for c in 0..3 {
            px.0[c] = (t.data()[p * 3 + c].clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    img.save(path).unwrap();
}

fn save_mask_png(path: &Path, mask: &Tensor) {
    let mut img = image::GrayImage::new(mask.width() as u32, mask.height() as u32);
    for (p, px) in img.pixels_mut().enumerate() {
        px.0[0] = if mask.data()[p] > 0.0 { 255 } else { 0 };
    }
    img.save(path).unwrap();
}

struct Workdir(PathBuf);

impl Workdir {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("salgrad-cli-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        Workdir(dir)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

impl Drop for Workdir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn disk_files(dir: &Workdir) -> (PathBuf, PathBuf) {
    let (img, mask) = synthetic::red_disk_on_gray(48, 48);
    let img_path = dir.path("disk.png");
    let mask_path = dir.path("mask.png");
    save_png(&img_path, &img);
    save_mask_png(&mask_path, &mask);
    (img_path, mask_path)
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn zero_iterations_is_byte_equivalent_to_reencode() {
    let dir = Workdir::new("iters0");
    let (img_path, mask_path) = disk_files(&dir);
    // the reference: decode then re-encode with the same encoder
    let reference = dir.path("reference.png");
    let decoded = image::open(&img_path).unwrap().to_rgb8();
    decoded.save(&reference).unwrap();
    for operator in ["recolor", "noise", "warp"] {
        let out = dir.path(&format!("out-{operator}"));
        run_ok(bin()
            .args(["edit", "--operator", operator, "--iters", "0"])
            .arg("--image")
            .arg(&img_path)
            .arg("--mask")
            .arg(&mask_path)
            .arg("--out")
            .arg(&out));
        let edited = std::fs::read(out.join("edited.png")).unwrap();
        let expect = std::fs::read(&reference).unwrap();
        assert_eq!(edited, expect, "operator {operator} not byte-equivalent at zero iterations");
    }
}

#[test]
fn edit_writes_all_outputs_and_reduces_saliency() {
    let dir = Workdir::new("edit");
    let (img_path, mask_path) = disk_files(&dir);
    let out = dir.path("out");
    run_ok(bin()
        .args(["edit", "--operator", "recolor", "--iters", "80", "--seed", "3"])
        .arg("--image")
        .arg(&img_path)
        .arg("--mask")
        .arg(&mask_path)
        .arg("--out")
        .arg(&out));
    for f in ["edited.png", "saliency_before.png", "saliency_after.png", "trace.csv", "params.sgop", "manifest.txt"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines[0], "iter,loss_sal,loss_sim,tv,total,mask_mean_saliency");
    assert_eq!(lines.len(), 82, "header + 81 rows");
    let col = |line: &str| line.split(',').next_back().unwrap().parse::<f64>().unwrap();
    let first = col(lines[1]);
    let min_later = lines[2..].iter().map(|l| col(l)).fold(f64::INFINITY, f64::min);
    assert!(min_later <= 0.5 * first, "saliency {first} -> {min_later}");
}

#[test]
fn target_one_raises_trace_saliency() {
    let dir = Workdir::new("t1");
    let (img_path, mask_path) = disk_files(&dir);
    let out = dir.path("out");
    run_ok(bin()
        .args(["edit", "--operator", "recolor", "--target", "one", "--iters", "120"])
        .arg("--image")
        .arg(&img_path)
        .arg("--mask")
        .arg(&mask_path)
        .arg("--out")
        .arg(&out));
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    let col = |line: &str| line.split(',').next_back().unwrap().parse::<f64>().unwrap();
    let first = col(lines[1]);
    let last = col(lines.last().unwrap());
    assert!(last >= first, "target one should not lower saliency: {first} -> {last}");
    let max_later = lines[2..].iter().map(|l| col(l)).fold(0.0_f64, f64::max);
    assert!(max_later > first * 1.1, "saliency never rose: {first} -> max {max_later}");
}

#[test]
fn baseline_operator_runs_without_optimization() {
    let dir = Workdir::new("baseline");
    let (img_path, mask_path) = disk_files(&dir);
    let out = dir.path("out");
    run_ok(bin()
        .args(["edit", "--operator", "baseline"])
        .arg("--image")
        .arg(&img_path)
        .arg("--mask")
        .arg(&mask_path)
        .arg("--out")
        .arg(&out));
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 3, "header + before/after rows");
    // painting the disk with surround gray chroma lowers its saliency
    let col = |line: &str| line.split(',').next_back().unwrap().parse::<f64>().unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert!(col(lines[2]) < 0.6 * col(lines[1]));
}

#[test]
fn manifest_rerun_reproduces_run_byte_identically() {
    let dir = Workdir::new("manifest");
    let (img_path, mask_path) = disk_files(&dir);
    let out1 = dir.path("out1");
    run_ok(bin()
        .args(["edit", "--operator", "noise", "--iters", "12", "--seed", "9"])
        .arg("--image")
        .arg(&img_path)
        .arg("--mask")
        .arg(&mask_path)
        .arg("--out")
        .arg(&out1));
    let out2 = dir.path("out2");
    run_ok(bin()
        .arg("edit")
        .arg("--config")
        .arg(out1.join("manifest.txt"))
        .arg("--out")
        .arg(&out2));
    for f in ["edited.png", "saliency_before.png", "saliency_after.png", "trace.csv", "params.sgop"] {
        assert_eq!(
            std::fs::read(out1.join(f)).unwrap(),
            std::fs::read(out2.join(f)).unwrap(),
            "{f} differs after manifest rerun"
        );
    }
}

#[test]
fn auto_on_uniform_image_gives_empty_report_and_exit_zero() {
    let dir = Workdir::new("auto-uniform");
    let img_path = dir.path("gray.png");
    save_png(&img_path, &synthetic::gray(48, 48, 0.5));
    let out = dir.path("out");
    run_ok(bin()
        .args(["auto", "--candidates", "recolor"])
        .arg("--image")
        .arg(&img_path)
        .arg("--out")
        .arg(&out));
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert_eq!(report.trim(), "regions=0");
    // unedited output
    let edited = image::open(out.join("edited.png")).unwrap().to_rgb8();
    let orig = image::open(&img_path).unwrap().to_rgb8();
    assert_eq!(edited.as_raw(), orig.as_raw());
}

#[test]
fn auto_finds_two_blobs_and_logs_candidates() {
    let dir = Workdir::new("auto-blobs");
    let (img, _, _) = synthetic::two_blobs(64, 64);
    let img_path = dir.path("blobs.png");
    save_png(&img_path, &img);
    let out = dir.path("out");
    run_ok(bin()
        .args(["auto", "--candidates", "recolor", "--threshold", "0.15"])
        .arg("--image")
        .arg(&img_path)
        .arg("--out")
        .arg(&out))
    ;
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.starts_with("regions=2"), "report: {report}");
    assert_eq!(report.matches("candidate=recolor").count(), 2);
    assert!(out.join("regions.png").exists());
    assert!(out.join("params.sgop").exists());
    // every region should see a solid predicted reduction
    for line in report.lines().filter(|l| l.contains("operator=")) {
        let red: f64 = line
            .split_whitespace()
            .find_map(|t| t.strip_prefix("reduction_pct="))
            .unwrap()
            .parse()
            .unwrap();
        assert!(red > 30.0, "weak reduction in: {line}");
    }
}

#[test]
fn auto_applies_plans_to_frames() {
    let dir = Workdir::new("auto-frames");
    let (img, _, _) = synthetic::two_blobs(64, 64);
    let img_path = dir.path("blobs.png");
    save_png(&img_path, &img);
    let frames_dir = dir.path("frames");
    std::fs::create_dir_all(&frames_dir).unwrap();
    for i in 0..3 {
        save_png(&frames_dir.join(format!("frame_{i:03}.png")), &img);
    }
    let out = dir.path("out");
    run_ok(bin()
        .args(["auto", "--candidates", "recolor"])
        .arg("--image")
        .arg(&img_path)
        .arg("--frames")
        .arg(&frames_dir)
        .arg("--out")
        .arg(&out));
    let edited_frames: Vec<_> = (0..3)
        .map(|i| std::fs::read(out.join("frames").join(format!("frame_{i:03}.png"))).unwrap())
        .collect();
    assert_eq!(edited_frames[0], edited_frames[1]);
    assert_eq!(edited_frames[1], edited_frames[2]);
    assert_eq!(edited_frames[0], std::fs::read(out.join("edited.png")).unwrap());
}

#[test]
fn inspect_peak_lands_inside_the_disk() {
    let dir = Workdir::new("inspect");
    let (img_path, _) = disk_files(&dir);
    let out = dir.path("out");
    run_ok(bin().arg("inspect").arg("--image").arg(&img_path).arg("--out").arg(&out));
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(out.join("saliency.png").exists());
    let peak1 = summary
        .lines()
        .find(|l| l.starts_with("peak1="))
        .expect("peak line");
    let coords: Vec<f64> = peak1["peak1=".len()..]
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    // disk of radius 4.8 centered at (24, 24) in the 48x48 stimulus
    let d = ((coords[0] - 24.0).powi(2) + (coords[1] - 24.0).powi(2)).sqrt();
    assert!(d <= 4.8, "top peak at ({}, {}) lies outside the disk", coords[0], coords[1]);
    // a uniform image reports a flat map
    let gray_path = dir.path("gray.png");
    save_png(&gray_path, &synthetic::gray(48, 48, 0.5));
    let out2 = dir.path("out2");
    run_ok(bin().arg("inspect").arg("--image").arg(&gray_path).arg("--out").arg(&out2));
    let summary = std::fs::read_to_string(out2.join("summary.txt")).unwrap();
    let val = |key: &str| -> f64 {
        summary
            .lines()
            .find(|l| l.starts_with(key))
            .unwrap()
            .split('=')
            .nth(1)
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(val("max") - val("min") < 0.05);
}

#[test]
fn thread_cap_does_not_change_auto_results() {
    let dir = Workdir::new("threads");
    let (img_path, _) = disk_files(&dir);
    let serial = dir.path("serial");
    let parallel = dir.path("parallel");
    for (out, threads) in [(&serial, "1"), (&parallel, "3")] {
        run_ok(bin()
            .args(["auto", "--candidates", "recolor,noise"])
            .arg("--image")
            .arg(&img_path)
            .arg("--out")
            .arg(out)
            .env("SALGRAD_THREADS", threads));
    }
    for f in ["edited.png", "report.txt", "params.sgop", "regions.png"] {
        assert_eq!(
            std::fs::read(serial.join(f)).unwrap(),
            std::fs::read(parallel.join(f)).unwrap(),
            "{f} differs between thread caps"
        );
    }
}

#[test]
fn target_map_file_behaves_like_its_constant() {
    let dir = Workdir::new("targetmap");
    let (img_path, mask_path) = disk_files(&dir);
    // an all-black target map is the same thing as --target zero
    let tmap = dir.path("target.png");
    save_mask_png(&tmap, &Tensor::zeros(48, 48, 1));
    let out_zero = dir.path("zero");
    let out_map = dir.path("map");
    for (out, target) in [(&out_zero, "zero".to_string()), (&out_map, tmap.display().to_string())] {
        run_ok(bin()
            .args(["edit", "--operator", "recolor", "--iters", "15", "--target", &target])
            .arg("--image")
            .arg(&img_path)
            .arg("--mask")
            .arg(&mask_path)
            .arg("--out")
            .arg(out));
    }
    assert_eq!(
        std::fs::read(out_zero.join("edited.png")).unwrap(),
        std::fs::read(out_map.join("edited.png")).unwrap()
    );
}

#[test]
fn eval_prints_one_line_per_metric() {
    let dir = Workdir::new("eval");
    let (img_path, mask_path) = disk_files(&dir);
    let out = run_ok(bin()
        .arg("eval")
        .arg("--original")
        .arg(&img_path)
        .arg("--edited")
        .arg(&img_path)
        .arg("--mask")
        .arg(&mask_path));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "reduction_pct=0");
    assert!(lines[1].starts_with("outside_mse="));
}

#[test]
fn exit_codes_follow_the_declared_mapping() {
    let dir = Workdir::new("exitcodes");
    let (img_path, mask_path) = disk_files(&dir);
    // missing file
    let st = bin()
        .args(["edit", "--image", "/nonexistent.png"])
        .arg("--mask")
        .arg(&mask_path)
        .arg("--out")
        .arg(dir.path("o1"))
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(1), "missing file should exit 1");
    // corrupt image
    let bad = dir.path("bad.png");
    std::fs::write(&bad, b"not a png at all").unwrap();
    let st = bin()
        .arg("edit")
        .arg("--image")
        .arg(&bad)
        .arg("--mask")
        .arg(&mask_path)
        .arg("--out")
        .arg(dir.path("o2"))
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(1), "corrupt file should exit 1");
    // mask dimension mismatch
    let small_mask = dir.path("small-mask.png");
    save_mask_png(&small_mask, &Tensor::zeros(16, 16, 1).map(|_| 1.0));
    let st = bin()
        .arg("edit")
        .arg("--image")
        .arg(&img_path)
        .arg("--mask")
        .arg(&small_mask)
        .arg("--out")
        .arg(dir.path("o3"))
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(1), "dimension mismatch should exit 1");
    // unknown flag
    let st = bin().args(["edit", "--frobnicate"]).output().unwrap();
    assert_eq!(st.status.code(), Some(1), "usage error should exit 1");
    // runtime abort: a divergent learning rate overflows the convnet
    let st = bin()
        .args(["edit", "--operator", "convnet", "--lr", "1e300", "--iters", "4"])
        .arg("--image")
        .arg(&img_path)
        .arg("--mask")
        .arg(&mask_path)
        .arg("--out")
        .arg(dir.path("o4"))
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(2), "nonfinite abort should exit 2");
    // best-so-far outputs still written
    assert!(dir.path("o4").join("edited.png").exists());
    assert!(dir.path("o4").join("trace.csv").exists());
}

#[test]
fn soft_mask_flag_feathers_the_mask() {
    let dir = Workdir::new("softmask");
    let (img_path, mask_path) = disk_files(&dir);
    let hard = dir.path("hard");
    let soft = dir.path("soft");
    for (flagged, out) in [(false, &hard), (true, &soft)] {
        let mut cmd = bin();
        cmd.args(["edit", "--operator", "noise", "--iters", "8", "--seed", "1"]);
        if flagged {
            cmd.arg("--soft-mask");
        }
        run_ok(cmd
            .arg("--image")
            .arg(&img_path)
            .arg("--mask")
            .arg(&mask_path)
            .arg("--out")
            .arg(out));
    }
    assert_ne!(
        std::fs::read(hard.join("edited.png")).unwrap(),
        std::fs::read(soft.join("edited.png")).unwrap(),
        "feathered mask should change the edit"
    );
}
