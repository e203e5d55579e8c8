//! End-to-end benchmark dry runs used to calibrate and freeze thresholds.

use std::time::Instant;

use salgrad::colorvision::{predict_saliency, BuiltinSaliency};
use salgrad::objective::{optimize, Mask, RunConfig, TargetMap};
use salgrad::operators::{convnet_forward, convnet_pretrain, psnr, ConvNetParams, OperatorKind, PRETRAIN_ITERS};
use salgrad::pipeline::saliency_reduction;
use salgrad::synthetic;
use salgrad::Tensor;

fn masked_mse(a: &Tensor, b: &Tensor, mask: &Tensor, inside: bool) -> f64 {
    let mut sum = 0.0;
    let mut n = 0.0;
    for (p, &m) in mask.data().iter().enumerate() {
        let sel = if inside { m > 0.0 } else { m == 0.0 };
        if sel {
            for c in 0..3 {
                let d = a.data()[p * 3 + c] - b.data()[p * 3 + c];
                sum += d * d;
                n += 1.0;
            }
        }
    }
    sum / n
}

fn report(label: &str, img: &Tensor, mask: &Tensor, cfg: &RunConfig) {
    let t0 = Instant::now();
    let mask_m = Mask::new(mask.clone());
    let res = optimize(img, &mask_m, cfg).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let first = res.trace.first().unwrap();
    let last = res.trace.last().unwrap();
    let best = &res.trace.rows()[res.best_iter];
    let out_mse = masked_mse(&res.edited, img, mask, false);
    let in_mse = masked_mse(&res.edited, img, mask, true);
    let red = saliency_reduction(img, &res.edited, &mask_m, &BuiltinSaliency::default()).unwrap();
    println!(
        "{label}: {secs:.1}s  sal0={:.4} salBest={:.4} salLast={:.4} ratio={:.3} reduction={red:.1}%  outMSE={out_mse:.2e} inMSE={in_mse:.4}  bestIter={} outcome={:?}",
        first.mask_mean_saliency,
        best.mask_mean_saliency,
        last.mask_mean_saliency,
        best.mask_mean_saliency / first.mask_mean_saliency,
        res.best_iter,
        res.outcome
    );
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(|s| s.as_str()).unwrap_or("all");

    if which == "all" || which == "recolor" {
        let (img, mask) = synthetic::red_disk_on_gray(128, 128);
        let cfg = RunConfig::defaults(OperatorKind::Recolor);
        report("recolor/disk128/T0", &img, &mask, &cfg);
    }
    if which == "all" || which == "increase" {
        let (img, mask) = synthetic::red_disk_on_gray(128, 128);
        let mut cfg = RunConfig::defaults(OperatorKind::Recolor);
        cfg.target = TargetMap::Constant(1.0);
        report("recolor/disk128/T1", &img, &mask, &cfg);
    }
    if which == "all" || which == "noise" {
        let (img, mask) = synthetic::red_disk_on_gray(128, 128);
        let cfg = RunConfig::defaults(OperatorKind::Noise);
        report("noise/disk128/T0", &img, &mask, &cfg);
    }
    if which == "all" || which == "warp" {
        let (img, mask) = synthetic::square_on_texture(128, 128, 12);
        let cfg = RunConfig::defaults(OperatorKind::Warp);
        report("warp/square128/T0", &img, &mask, &cfg);
        // area shrink via color-distance segmentation
        let mask_m = Mask::new(mask.clone());
        let res = optimize(&img, &mask_m, &cfg).unwrap();
        let close = |t: &Tensor| -> usize {
            t.data()
                .chunks_exact(3)
                .filter(|p| {
                    let d = (p[0] - synthetic::SQUARE_RGB[0]).powi(2)
                        + (p[1] - synthetic::SQUARE_RGB[1]).powi(2)
                        + (p[2] - synthetic::SQUARE_RGB[2]).powi(2);
                    d.sqrt() < 0.25
                })
                .count()
        };
        println!("square area before={} after={}", close(&img), close(&res.edited));
    }
    if which == "all" || which == "convnet" {
        let (img, _) = synthetic::red_disk_on_gray(64, 64);
        let mut params = ConvNetParams::random(0);
        let t0 = Instant::now();
        convnet_pretrain(&img, &mut params, PRETRAIN_ITERS).unwrap();
        let p = psnr(&convnet_forward(&img, &params), &img);
        println!("convnet pretrain: {:.1}s PSNR={p:.1} dB", t0.elapsed().as_secs_f64());
        let (img, mask) = synthetic::red_disk_on_gray(64, 64);
        let cfg = RunConfig::defaults(OperatorKind::Convnet);
        report("convnet/disk64/T0", &img, &mask, &cfg);
    }
    if which == "stats" {
        let (img, mask) = synthetic::red_disk_on_gray(128, 128);
        let map = predict_saliency(&img);
        let mask_m = Mask::new(mask.clone());
        println!(
            "disk128: in-mask mean={:.4} min={:.4} max={:.4} bg(far)~min",
            map.masked_mean(mask_m.values()),
            map.min(),
            map.max()
        );
    }
}
