//! The four subcommands; every run that produces files also writes a
//! manifest whose key=value lines feed back through --config to reproduce
//! the run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use salgrad::colorvision::{active_backend, SaliencyMap};
use salgrad::objective::{
    optimize, Mask, RunConfig, RunOutcome, TargetMap, Trace, TraceRow,
};
use salgrad::operators::{
    baseline_surround_recolor, sidecar, OperatorKind, OperatorParams, DEFAULT_RING_WIDTH,
};
use salgrad::pipeline::{
    apply_to_frames, saliency_reduction, save_plans, segment_distractors, select_operator,
    RegionEditPlan, SelectConfig, DEFAULT_CANDIDATES, DEFAULT_THRESHOLD,
};
use salgrad::Tensor;

use crate::io;
use crate::{AutoArgs, CliError, CliResult, EditArgs, EvalArgs, InspectArgs};

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::usage(e.to_string())
}

type Config = BTreeMap<String, String>;

fn load_config(path: &Option<PathBuf>) -> Result<Config, CliError> {
    match path {
        Some(p) => io::read_kv(p).map_err(usage),
        None => Ok(Config::new()),
    }
}

fn pick_str(flag: &Option<String>, cfg: &Config, key: &str) -> Option<String> {
    flag.clone().or_else(|| cfg.get(key).cloned())
}

fn pick_path(flag: &Option<PathBuf>, cfg: &Config, key: &str) -> Option<PathBuf> {
    flag.clone().or_else(|| cfg.get(key).map(PathBuf::from))
}

fn pick_parse<T: std::str::FromStr>(
    flag: Option<T>,
    cfg: &Config,
    key: &str,
) -> Result<Option<T>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match cfg.get(key) {
        Some(v) => v
            .parse::<T>()
            .map(Some)
            .map_err(|_| CliError::usage(format!("config key {key} has invalid value '{v}'"))),
        None => Ok(None),
    }
}

fn require<T>(v: Option<T>, what: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::usage(format!("--{what} is required")))
}

fn ensure_out_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::usage(format!("cannot create output directory {}: {e}", out.display())))
}

fn check_run_inputs(image: &Tensor, mask: Option<&Mask>) -> Result<(), CliError> {
    if image.height() < 32 || image.width() < 32 {
        return Err(CliError::usage(format!(
            "image {} is smaller than the 32px minimum",
            image.shape()
        )));
    }
    if let Some(m) = mask {
        if (m.values().height(), m.values().width()) != (image.height(), image.width()) {
            return Err(CliError::usage(format!(
                "mask size {} does not match image size {}",
                m.values().shape(),
                image.shape()
            )));
        }
        if m.is_empty() {
            return Err(CliError::usage("mask selects no pixels"));
        }
    }
    Ok(())
}

fn eager_trace_row(
    iter: usize,
    image: &Tensor,
    edited: &Tensor,
    mask: &Mask,
    map: &SaliencyMap,
) -> TraceRow {
    let n = map.values().numel() as f64;
    let loss_sal: f64 = map
        .values()
        .data()
        .iter()
        .zip(mask.values().data())
        .map(|(s, m)| (m * s) * (m * s))
        .sum::<f64>()
        / n;
    let n3 = image.numel() as f64;
    let mut loss_sim = 0.0;
    for (p, &m) in mask.values().data().iter().enumerate() {
        for c in 0..3 {
            let d = (1.0 - m) * (edited.data()[p * 3 + c] - image.data()[p * 3 + c]);
            loss_sim += d * d;
        }
    }
    loss_sim /= n3;
    TraceRow {
        iter,
        loss_sal,
        loss_sim,
        tv: 0.0,
        total: loss_sal,
        mask_mean_saliency: map.masked_mean(mask.values()),
    }
}

pub fn edit(args: EditArgs) -> CliResult {
    let cfg = load_config(&args.config)?;
    let image_path = require(pick_path(&args.image, &cfg, "image"), "image")?;
    let mask_path = require(pick_path(&args.mask, &cfg, "mask"), "mask")?;
    let out = require(pick_path(&args.out, &cfg, "out"), "out")?;
    let operator_str = pick_str(&args.operator, &cfg, "operator").unwrap_or_else(|| "recolor".into());
    let operator: OperatorKind = operator_str.parse().map_err(CliError::usage)?;
    let target_str = pick_str(&args.target, &cfg, "target").unwrap_or_else(|| "zero".into());
    let soft_mask = args.soft_mask || cfg.get("soft_mask").map(|v| v == "true").unwrap_or(false);

    let mut rc = RunConfig::defaults(operator);
    rc.beta = pick_parse(args.beta, &cfg, "beta")?.unwrap_or(rc.beta);
    rc.gamma = pick_parse(args.gamma, &cfg, "gamma")?.unwrap_or(rc.gamma);
    rc.lr = pick_parse(args.lr, &cfg, "lr")?.unwrap_or(rc.lr);
    rc.iters = pick_parse(args.iters, &cfg, "iters")?.unwrap_or(rc.iters);
    rc.seed = pick_parse(args.seed, &cfg, "seed")?.unwrap_or(rc.seed);

    let image = io::load_rgb(&image_path).map_err(usage)?;
    let mask = io::load_mask(&mask_path, soft_mask).map_err(usage)?;
    check_run_inputs(&image, Some(&mask))?;
    rc.target = match target_str.as_str() {
        "zero" => TargetMap::Constant(0.0),
        "one" => TargetMap::Constant(1.0),
        path => {
            let t = io::load_mask(Path::new(path), false).map_err(usage)?;
            TargetMap::Map(t.values().clone())
        }
    };

    ensure_out_dir(&out)?;
    let backend = active_backend();
    let before = backend.predict(&image);

    let (edited, params, trace, outcome) = if operator == OperatorKind::Baseline {
        let edited = baseline_surround_recolor(&image, mask.values(), DEFAULT_RING_WIDTH)
            .map_err(usage)?;
        let after = backend.predict(&edited);
        let mut trace = Trace::new();
        trace.push(eager_trace_row(0, &image, &image, &mask, &before));
        trace.push(eager_trace_row(1, &image, &edited, &mask, &after));
        (edited, OperatorParams::Baseline { ring_width: DEFAULT_RING_WIDTH }, trace, RunOutcome::Completed)
    } else {
        let res = optimize(&image, &mask, &rc).map_err(usage)?;
        (res.edited, res.params, res.trace, res.outcome)
    };

    let after = backend.predict(&edited);
    io::save_rgb(&out.join("edited.png"), &edited).map_err(usage)?;
    io::save_saliency(&out.join("saliency_before.png"), &before).map_err(usage)?;
    io::save_saliency(&out.join("saliency_after.png"), &after).map_err(usage)?;
    std::fs::write(out.join("trace.csv"), trace.to_csv())
        .map_err(|e| CliError::usage(format!("cannot write trace.csv: {e}")))?;
    sidecar::save_params(&out.join("params.sgop"), &params).map_err(usage)?;
    io::write_kv(
        &out.join("manifest.txt"),
        &[
            ("command", "edit".into()),
            ("image", image_path.display().to_string()),
            ("mask", mask_path.display().to_string()),
            ("operator", operator.to_string()),
            ("target", target_str.clone()),
            ("beta", rc.beta.to_string()),
            ("gamma", rc.gamma.to_string()),
            ("lr", rc.lr.to_string()),
            ("iters", rc.iters.to_string()),
            ("seed", rc.seed.to_string()),
            ("soft_mask", soft_mask.to_string()),
            ("out", out.display().to_string()),
            ("version", env!("CARGO_PKG_VERSION").into()),
        ],
    )
    .map_err(usage)?;

    match outcome {
        RunOutcome::Completed => Ok(()),
        RunOutcome::Aborted { iter, reason } => {
            Err(CliError::Runtime(format!("optimization aborted at iteration {iter}: {reason}")))
        }
    }
}

/// Distinct overlay colors for region visualization.
const REGION_COLORS: [[f64; 3]; 6] = [
    [1.0, 0.2, 0.2],
    [0.2, 0.5, 1.0],
    [0.2, 0.9, 0.3],
    [1.0, 0.8, 0.1],
    [0.9, 0.3, 0.9],
    [0.2, 0.9, 0.9],
];

fn regions_visualization(image: &Tensor, plans: &[RegionEditPlan]) -> Tensor {
    // dimmed grayscale base with each region tinted
    let mut out = Tensor::zeros(image.height(), image.width(), 3);
    for (p, px) in image.data().chunks_exact(3).enumerate() {
        let gray = 0.35 * (px[0] + px[1] + px[2]) / 3.0 + 0.2;
        for c in 0..3 {
            out.data_mut()[p * 3 + c] = gray;
        }
    }
    for (i, plan) in plans.iter().enumerate() {
        let color = REGION_COLORS[i % REGION_COLORS.len()];
        for (p, &m) in plan.region.mask.values().data().iter().enumerate() {
            if m > 0.0 {
                for c in 0..3 {
                    out.data_mut()[p * 3 + c] = color[c];
                }
            }
        }
    }
    out
}

pub fn auto(args: AutoArgs) -> CliResult {
    let cfg = load_config(&args.config)?;
    let image_path = require(pick_path(&args.image, &cfg, "image"), "image")?;
    let out = require(pick_path(&args.out, &cfg, "out"), "out")?;
    let threshold = pick_parse(args.threshold, &cfg, "threshold")?.unwrap_or(DEFAULT_THRESHOLD);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CliError::usage(format!("threshold must lie in [0,1], got {threshold}")));
    }
    let frames_dir = pick_path(&args.frames, &cfg, "frames");
    let protect_path = pick_path(&args.protect, &cfg, "protect");
    let candidates_str = pick_str(&args.candidates, &cfg, "candidates")
        .unwrap_or_else(|| DEFAULT_CANDIDATES.map(|c| c.to_string()).join(","));
    let mut candidates = Vec::new();
    for part in candidates_str.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let op: OperatorKind = part.parse().map_err(CliError::usage)?;
        if !op.is_differentiable() {
            return Err(CliError::usage(format!("candidate '{op}' cannot be optimized")));
        }
        candidates.push(op);
    }
    if candidates.is_empty() {
        return Err(CliError::usage("no operator candidates given"));
    }
    let threads = std::env::var("SALGRAD_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(1)
        .max(1);

    let image = io::load_rgb(&image_path).map_err(usage)?;
    check_run_inputs(&image, None)?;
    let protect = match &protect_path {
        Some(p) => {
            let m = io::load_mask(p, false).map_err(usage)?;
            if (m.values().height(), m.values().width()) != (image.height(), image.width()) {
                return Err(CliError::usage("protect mask size does not match the image"));
            }
            Some(m)
        }
        None => None,
    };

    ensure_out_dir(&out)?;
    let backend = active_backend();
    let map = backend.predict(&image);
    let regions = segment_distractors(&map, threshold, protect.as_ref());

    let mut plans: Vec<RegionEditPlan> = Vec::new();
    let select_cfg = SelectConfig { threads, ..Default::default() };
    for region in &regions {
        let plan = select_operator(&image, region, &candidates, &select_cfg, backend.as_ref())
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        plans.push(plan);
    }

    let edited = apply_to_frames(std::slice::from_ref(&image), &plans)
        .map_err(|e| CliError::usage(e.to_string()))?
        .remove(0);
    io::save_rgb(&out.join("edited.png"), &edited).map_err(usage)?;
    io::save_rgb(&out.join("regions.png"), &regions_visualization(&image, &plans)).map_err(usage)?;
    save_plans(&out.join("params.sgop"), &plans, image.height(), image.width()).map_err(usage)?;

    let mut report = format!("regions={}\n", plans.len());
    for (i, plan) in plans.iter().enumerate() {
        let reduction = saliency_reduction(&image, &edited, &plan.region.mask, backend.as_ref())
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        report.push_str(&format!(
            "region={i} bbox={},{},{},{} peak={} operator={} achieved={} reduction_pct={}\n",
            plan.region.bbox.top,
            plan.region.bbox.left,
            plan.region.bbox.height,
            plan.region.bbox.width,
            plan.region.peak_saliency,
            plan.operator,
            plan.achieved_saliency,
            reduction,
        ));
        for cand in &plan.candidates {
            let first = cand.trace.first().map_or(f64::NAN, |r| r.mask_mean_saliency);
            let cand_reduction =
                if first > 0.0 { 100.0 * (1.0 - cand.achieved_saliency / first) } else { 0.0 };
            report.push_str(&format!(
                "region={i} candidate={} reduction_pct={} aborted={}\n",
                cand.operator, cand_reduction, cand.aborted
            ));
        }
    }
    std::fs::write(out.join("report.txt"), &report)
        .map_err(|e| CliError::usage(format!("cannot write report.txt: {e}")))?;

    if let Some(frames_dir) = &frames_dir {
        let paths = io::list_frames(frames_dir).map_err(usage)?;
        let frames_out = out.join("frames");
        ensure_out_dir(&frames_out)?;
        for path in paths {
            let frame = io::load_rgb(&path).map_err(usage)?;
            if (frame.height(), frame.width()) != (image.height(), image.width()) {
                return Err(CliError::usage(format!(
                    "frame {} size {} does not match the planning image {}",
                    path.display(),
                    frame.shape(),
                    image.shape()
                )));
            }
            let edited_frame = apply_to_frames(std::slice::from_ref(&frame), &plans)
                .map_err(|e| CliError::usage(e.to_string()))?
                .remove(0);
            let name = path.file_name().expect("frame file name");
            io::save_rgb(&frames_out.join(name), &edited_frame).map_err(usage)?;
        }
    }

    io::write_kv(
        &out.join("manifest.txt"),
        &[
            ("command", "auto".into()),
            ("image", image_path.display().to_string()),
            ("frames", frames_dir.map(|p| p.display().to_string()).unwrap_or_default()),
            ("threshold", threshold.to_string()),
            ("protect", protect_path.map(|p| p.display().to_string()).unwrap_or_default()),
            ("candidates", candidates_str.clone()),
            ("out", out.display().to_string()),
            ("version", env!("CARGO_PKG_VERSION").into()),
        ],
    )
    .map_err(usage)?;
    Ok(())
}

pub fn inspect(args: InspectArgs) -> CliResult {
    let cfg = load_config(&args.config)?;
    let image_path = require(pick_path(&args.image, &cfg, "image"), "image")?;
    let out = require(pick_path(&args.out, &cfg, "out"), "out")?;
    let image = io::load_rgb(&image_path).map_err(usage)?;
    check_run_inputs(&image, None)?;
    ensure_out_dir(&out)?;
    let map = active_backend().predict(&image);
    io::save_saliency(&out.join("saliency.png"), &map).map_err(usage)?;

    // top-5 peak coordinates by value, ties to earlier row-major order
    let mut indexed: Vec<(usize, f64)> =
        map.values().data().iter().copied().enumerate().collect();
    indexed.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let w = map.shape().width;
    let mut summary = format!("min={}\nmax={}\nmean={}\n", map.min(), map.max(), map.mean());
    for (rank, (idx, v)) in indexed.iter().take(5).enumerate() {
        summary.push_str(&format!("peak{}={},{},{}\n", rank + 1, idx / w, idx % w, v));
    }
    std::fs::write(out.join("summary.txt"), &summary)
        .map_err(|e| CliError::usage(format!("cannot write summary.txt: {e}")))?;
    io::write_kv(
        &out.join("manifest.txt"),
        &[
            ("command", "inspect".into()),
            ("image", image_path.display().to_string()),
            ("out", out.display().to_string()),
            ("version", env!("CARGO_PKG_VERSION").into()),
        ],
    )
    .map_err(usage)?;
    Ok(())
}

pub fn eval(args: EvalArgs) -> CliResult {
    let cfg = load_config(&args.config)?;
    let original_path = require(pick_path(&args.original, &cfg, "original"), "original")?;
    let edited_path = require(pick_path(&args.edited, &cfg, "edited"), "edited")?;
    let mask_path = require(pick_path(&args.mask, &cfg, "mask"), "mask")?;
    let original = io::load_rgb(&original_path).map_err(usage)?;
    let edited = io::load_rgb(&edited_path).map_err(usage)?;
    if original.shape() != edited.shape() {
        return Err(CliError::usage(format!(
            "image sizes differ: {} vs {}",
            original.shape(),
            edited.shape()
        )));
    }
    let mask = io::load_mask(&mask_path, false).map_err(usage)?;
    if (mask.values().height(), mask.values().width()) != (original.height(), original.width()) {
        return Err(CliError::usage("mask size does not match the images"));
    }
    check_run_inputs(&original, Some(&mask))?;
    let backend = active_backend();
    let reduction = saliency_reduction(&original, &edited, &mask, backend.as_ref())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut outside = 0.0;
    let mut n = 0.0;
    for (p, &m) in mask.values().data().iter().enumerate() {
        if m == 0.0 {
            for c in 0..3 {
                let d = edited.data()[p * 3 + c] - original.data()[p * 3 + c];
                outside += d * d;
                n += 1.0;
            }
        }
    }
    let outside_mse = if n > 0.0 { outside / n } else { 0.0 };
    println!("reduction_pct={reduction}");
    println!("outside_mse={outside_mse}");
    Ok(())
}
