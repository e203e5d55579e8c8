//! Pretraining convergence probe: loss trajectories across learning rates.
//! Documents why the 50-iteration identity pretraining cannot reach 40 dB
//! from the std-0.05 random init (see the acceptance suite output).

use salgrad::objective::Adam;
use salgrad::operators::{convnet_forward, convnet_forward_node, psnr, ConvNetParams};
use salgrad::synthetic;
use salgrad::{Graph, NodeId, Tensor};

fn run(image: &Tensor, lr: f64, iters: usize, seed: u64) -> Vec<(usize, f64)> {
    let mut params = ConvNetParams::random(seed);
    let mut adam = Adam::new(lr);
    let mut track = Vec::new();
    for k in 0..iters {
        let mut g = Graph::new();
        let img = g.input(image.clone());
        let nodes: Vec<NodeId> = params.tensors().into_iter().map(|t| g.param(t.clone())).collect();
        let out = convnet_forward_node(&mut g, img, &nodes);
        let diff = g.sub(out, img);
        let sq = g.square(diff);
        let loss = g.reduce_mean(sq, None);
        g.backward(loss).unwrap();
        let grads: Vec<Option<Tensor>> = nodes.iter().map(|&n| g.grad(n)).collect();
        let mut tensors = params.tensors_mut();
        adam.step(&mut tensors, &grads).unwrap();
        if [9, 19, 29, 39, 49, 99, 199, 399].contains(&k) {
            track.push((k + 1, psnr(&convnet_forward(image, &params), image)));
        }
    }
    track
}

fn main() {
    let (img, _) = synthetic::red_disk_on_gray(32, 32);
    for lr in [0.005, 0.01, 0.02, 0.03] {
        let t = run(&img, lr, 400, 0);
        let s: Vec<String> = t.iter().map(|(k, p)| format!("{k}:{p:.1}")).collect();
        println!("lr={lr}: {}", s.join(" "));
    }
}
