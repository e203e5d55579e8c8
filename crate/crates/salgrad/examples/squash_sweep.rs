//! Sweep logistic squash constants against the canonical raw map to pick
//! values satisfying the pop-out calibration with headroom for the
//! increase benchmark.

use salgrad::colorvision::BuiltinSaliency;
use salgrad::synthetic;
use salgrad::Graph;

fn main() {
    let (img, mask) = synthetic::red_disk_on_gray(128, 128);
    let mut g = Graph::new();
    let x = g.input(img.clone());
    let raw = BuiltinSaliency::default().raw_node(&mut g, x);
    let v = g.value(raw).clone();
    let (h, w) = (128usize, 128usize);
    let radius = 12.8;
    let (cy, cx) = (64.0, 64.0);
    let logistic = |x: f64| 1.0 / (1.0 + (-x).exp());
    for (mu, s) in [
        (0.08, 0.02),
        (0.09, 0.02),
        (0.10, 0.02),
        (0.11, 0.02),
        (0.10, 0.015),
        (0.11, 0.025),
        (0.12, 0.025),
        (0.12, 0.02),
    ] {
        let mut core = (0.0, 0.0);
        let mut far = (0.0, 0.0);
        let mut inm = (0.0, 0.0);
        let mut bg0 = 0.0;
        for y in 0..h {
            for x in 0..w {
                let sal = logistic((v.at(y, x, 0) - mu) / s);
                let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
                if d <= radius * 0.5 {
                    core.0 += sal;
                    core.1 += 1.0;
                }
                if d >= radius * 2.0 {
                    far.0 += sal;
                    far.1 += 1.0;
                }
                if mask.at(y, x, 0) > 0.0 {
                    inm.0 += sal;
                    inm.1 += 1.0;
                }
            }
        }
        bg0 += logistic((0.0 - mu) / s);
        println!(
            "mu={mu:.3} s={s:.3}: core={:.3} far={:.4} in-mask={:.3} zero-raw={:.4} (want core>0.7 far<0.2 in-mask<=0.72 zero<0.15)",
            core.0 / core.1,
            far.0 / far.1,
            inm.0 / inm.1,
            bg0
        );
    }
}
