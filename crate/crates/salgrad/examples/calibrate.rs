//! Prints raw conspicuity statistics on the canonical stimuli, used to pick
//! the frozen logistic squash constants.

use salgrad::colorvision::BuiltinSaliency;
use salgrad::synthetic;
use salgrad::{Graph, Tensor};

fn stats(label: &str, img: &Tensor, mask: Option<&Tensor>) {
    let mut g = Graph::new();
    let x = g.input(img.clone());
    let raw = BuiltinSaliency::default().raw_node(&mut g, x);
    let v = g.value(raw);
    let mn = v.data().iter().copied().fold(f64::INFINITY, f64::min);
    let mx = v.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = v.data().iter().sum::<f64>() / v.numel() as f64;
    print!("{label}: raw min={mn:.5} max={mx:.5} mean={mean:.5}");
    if let Some(m) = mask {
        let num: f64 = v.data().iter().zip(m.data()).map(|(a, b)| a * b).sum();
        let den: f64 = m.data().iter().sum();
        let onum: f64 = v.data().iter().zip(m.data()).map(|(a, b)| a * (1.0 - b)).sum();
        let oden: f64 = m.data().iter().map(|b| 1.0 - b).sum();
        print!("  in-mask={:.5} out={:.5}", num / den, onum / oden);
        // core (half-radius) and far (2x radius) stats for the disk
        let (h, w) = (img.height(), img.width());
        let (cy, cx) = (h as f64 / 2.0, w as f64 / 2.0);
        let radius = 0.1 * w as f64;
        let mut core_sum = 0.0;
        let mut core_n = 0.0;
        let mut far_sum = 0.0;
        let mut far_n = 0.0;
        for y in 0..h {
            for x in 0..w {
                let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
                if d <= radius * 0.5 {
                    core_sum += v.at(y, x, 0);
                    core_n += 1.0;
                }
                if d >= radius * 2.0 {
                    far_sum += v.at(y, x, 0);
                    far_n += 1.0;
                }
            }
        }
        print!("  core={:.5} far={:.5}", core_sum / core_n, far_sum / far_n);
    }
    println!();
}

fn main() {
    let (disk, mask) = synthetic::red_disk_on_gray(128, 128);
    stats("disk128", &disk, Some(&mask));
    let (disk64, mask64) = synthetic::red_disk_on_gray(64, 64);
    stats("disk64", &disk64, Some(&mask64));
    let (sq, sqmask) = synthetic::square_on_texture(96, 96, 12);
    stats("square96", &sq, Some(&sqmask));
    stats("gray", &synthetic::gray(128, 128, 0.5), None);
    let (blobs, ma, _) = synthetic::two_blobs(96, 96);
    stats("blobs", &blobs, Some(&ma));
}
