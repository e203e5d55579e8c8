//! Behavioral runs: effects that only show up over a real optimization.

use salgrad::colorvision::{BuiltinSaliency, SaliencyBackend};
use salgrad::diffcore::{Graph, Tensor};
use salgrad::objective::{
    loss_sal_node, loss_sim_node, optimize_with_backend, Adam, Mask, RunConfig, TargetMap,
};
use salgrad::operators::{mask_to_rgb, noise_apply_node, OperatorKind};
use salgrad::pipeline::{
    apply_to_frames, saliency_reduction, segment_distractors, select_operator, SelectConfig,
};
use salgrad::synthetic;

fn out_of_mask_mse(a: &Tensor, b: &Tensor, mask: &Tensor) -> f64 {
    let mut sum = 0.0;
    let mut n = 0.0;
    for (p, &m) in mask.data().iter().enumerate() {
        if m == 0.0 {
            for c in 0..3 {
                let d = a.data()[p * 3 + c] - b.data()[p * 3 + c];
                sum += d * d;
                n += 1.0;
            }
        }
    }
    sum / n
}

/// With beta = 0 nothing anchors out-of-mask pixels: a perturbation allowed
/// to touch the whole image drifts outside the loss mask, while beta = 10
/// pins it down.
#[test]
fn beta_zero_lets_out_of_mask_pixels_drift() {
    let (img, disk_mask) = synthetic::red_disk_on_gray(48, 48);
    let backend = BuiltinSaliency::default();
    let full = Tensor::filled(48, 48, 1, 1.0);
    let full3 = mask_to_rgb(&full);
    let inv_disk3 = mask_to_rgb(&disk_mask).map(|v| 1.0 - v);
    let target = Tensor::zeros(48, 48, 1);

    let run = |beta: f64| -> Tensor {
        let mut delta = Tensor::zeros(48, 48, 3);
        let mut adam = Adam::new(0.02);
        let mut edited_out = img.clone();
        for _ in 0..80 {
            let mut g = Graph::new();
            let img_n = g.input(img.clone());
            let d = g.param(delta.clone());
            let full3_n = g.input(full3.clone());
            let edited = noise_apply_node(&mut g, img_n, d, full3_n);
            let sal = backend.predict_node(&mut g, edited);
            let t = g.input(target.clone());
            let m = g.input(disk_mask.clone());
            let l_sal = loss_sal_node(&mut g, sal, t, m);
            let inv = g.input(inv_disk3.clone());
            let l_sim = loss_sim_node(&mut g, edited, img_n, inv);
            let sim_s = g.scale(l_sim, beta);
            let total = g.add(l_sal, sim_s);
            g.backward(total).unwrap();
            let grad = g.grad(d);
            edited_out = g.value(edited).clone();
            adam.step(&mut [&mut delta], &[grad]).unwrap();
        }
        edited_out
    };

    let drift_free = run(0.0);
    let drift_pinned = run(10.0);
    let mse_free = out_of_mask_mse(&drift_free, &img, &disk_mask);
    let mse_pinned = out_of_mask_mse(&drift_pinned, &img, &disk_mask);
    assert!(
        mse_free > 4.0 * mse_pinned,
        "expected unpinned drift to dominate: beta=0 MSE {mse_free:.2e} vs beta=10 MSE {mse_pinned:.2e}"
    );
}

/// Plans computed on one frame re-apply across a static sequence with a
/// per-frame reduction close to the planning frame's.
#[test]
fn static_sequence_keeps_planning_frame_reduction() {
    let (img, _) = synthetic::red_disk_on_gray(64, 64);
    let backend = BuiltinSaliency::default();
    let map = backend.predict(&img);
    let regions = segment_distractors(&map, 0.15, None);
    assert_eq!(regions.len(), 1, "the disk should segment as one region");
    let cfg = SelectConfig { iters: 150, ..Default::default() };
    let plan = select_operator(&img, &regions[0], &[OperatorKind::Recolor], &cfg, &backend).unwrap();

    let frames: Vec<Tensor> = (0..10).map(|_| img.clone()).collect();
    let edited = apply_to_frames(&frames, std::slice::from_ref(&plan)).unwrap();
    let planning_reduction =
        saliency_reduction(&img, &edited[0], &plan.region.mask, &backend).unwrap();
    assert!(planning_reduction > 20.0, "plan too weak: {planning_reduction:.1}%");
    for (i, frame) in edited.iter().enumerate() {
        let r = saliency_reduction(&img, frame, &plan.region.mask, &backend).unwrap();
        assert!(
            (r - planning_reduction).abs() <= 5.0,
            "frame {i} reduction {r:.1}% vs planning {planning_reduction:.1}%"
        );
    }
}

/// The T = 1 objective raises in-mask saliency on a short run.
#[test]
fn target_one_raises_in_mask_saliency() {
    let (img, mask) = synthetic::red_disk_on_gray(64, 64);
    let mask = Mask::new(mask);
    let mut cfg = RunConfig::defaults(OperatorKind::Recolor);
    cfg.target = TargetMap::Constant(1.0);
    cfg.iters = 120;
    let res = optimize_with_backend(&img, &mask, &cfg, &BuiltinSaliency::default()).unwrap();
    let first = res.trace.first().unwrap().mask_mean_saliency;
    let best_row = &res.trace.rows()[res.best_iter];
    assert!(
        best_row.mask_mean_saliency > first * 1.2,
        "saliency did not rise: {:.3} -> {:.3}",
        first,
        best_row.mask_mean_saliency
    );
}

/// The best-so-far return guarantees the reported total never exceeds the
/// starting objective.
#[test]
fn returned_total_never_exceeds_initial() {
    let (img, mask) = synthetic::red_disk_on_gray(48, 48);
    let mask = Mask::new(mask);
    let backend = BuiltinSaliency::default();
    for op in [OperatorKind::Recolor, OperatorKind::Warp, OperatorKind::Noise] {
        let mut cfg = RunConfig::defaults(op);
        cfg.iters = 30;
        let res = optimize_with_backend(&img, &mask, &cfg, &backend).unwrap();
        let first = res.trace.first().unwrap().total;
        let best = res.trace.rows()[res.best_iter].total;
        assert!(best <= first, "{op}: best {best} > initial {first}");
    }
}

/// Selection reports exactly the argmin of its own candidate runs on the
/// real backend.
#[test]
fn selection_is_argmin_of_recorded_runs() {
    let (img, _) = synthetic::red_disk_on_gray(48, 48);
    let backend = BuiltinSaliency::default();
    let map = backend.predict(&img);
    let regions = segment_distractors(&map, 0.15, None);
    assert!(!regions.is_empty());
    let cfg = SelectConfig { iters: 40, ..Default::default() };
    let plan = select_operator(
        &img,
        &regions[0],
        &[OperatorKind::Recolor, OperatorKind::Noise],
        &cfg,
        &backend,
    )
    .unwrap();
    let min = plan
        .candidates
        .iter()
        .filter(|c| !c.aborted)
        .map(|c| c.achieved_saliency)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(plan.achieved_saliency, min);
    let winner = plan
        .candidates
        .iter()
        .position(|c| !c.aborted && c.achieved_saliency == min)
        .unwrap();
    assert_eq!(plan.operator, plan.candidates[winner].operator);
}
