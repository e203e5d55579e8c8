//! The application layer: segment distracting regions automatically, pick
//! the best operator per region, re-apply frozen parameters across frames,
//! and measure the achieved saliency reduction.

mod container;

use std::collections::VecDeque;

use thiserror::Error;

use crate::colorvision::{SaliencyBackend, SaliencyMap};
use crate::diffcore::Tensor;
use crate::objective::{optimize_with_backend, Mask, RunConfig, RunOutcome, TargetMap, Trace};
use crate::operators::{OperatorKind, OperatorParams};

pub use container::{load_plans, save_plans};

/// Segmentation threshold on predicted saliency.
pub const DEFAULT_THRESHOLD: f64 = 0.15;

/// Components covering at least this fraction of the image are assumed to
/// be the subject, not a distractor.
pub const SUBJECT_AREA_FRACTION: f64 = 0.25;

/// Default operator candidates, strongest effect first.
pub const DEFAULT_CANDIDATES: [OperatorKind; 3] =
    [OperatorKind::Warp, OperatorKind::Recolor, OperatorKind::Convnet];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bbox {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

/// One connected super-threshold component.
#[derive(Debug, Clone)]
pub struct DistractorRegion {
    pub mask: Mask,
    pub bbox: Bbox,
    pub peak_saliency: f64,
}

/// 4-connected components of {saliency > threshold}, minus protected
/// pixels, skipping components at least `SUBJECT_AREA_FRACTION` of the
/// image; sorted by descending peak saliency.
pub fn segment_distractors(
    saliency: &SaliencyMap,
    threshold: f64,
    protect: Option<&Mask>,
) -> Vec<DistractorRegion> {
    assert!((0.0..=1.0).contains(&threshold), "threshold must lie in [0,1], got {threshold}");
    let (h, w) = (saliency.shape().height, saliency.shape().width);
    if let Some(p) = protect {
        assert_eq!(
            (p.values().height(), p.values().width()),
            (h, w),
            "protect mask must match the saliency map size"
        );
    }
    let eligible = |y: usize, x: usize| -> bool {
        saliency.at(y, x) > threshold && protect.is_none_or(|p| p.values().at(y, x, 0) == 0.0)
    };
    let cap = (SUBJECT_AREA_FRACTION * (h * w) as f64) as usize;
    let mut visited = vec![false; h * w];
    let mut regions = Vec::new();
    for sy in 0..h {
        for sx in 0..w {
            if visited[sy * w + sx] || !eligible(sy, sx) {
                continue;
            }
            let mut pixels = Vec::new();
            let mut queue = VecDeque::from([(sy, sx)]);
            visited[sy * w + sx] = true;
            while let Some((y, x)) = queue.pop_front() {
                pixels.push((y, x));
                let neighbors = [
                    (y.wrapping_sub(1), x),
                    (y + 1, x),
                    (y, x.wrapping_sub(1)),
                    (y, x + 1),
                ];
                for (ny, nx) in neighbors {
                    if ny < h && nx < w && !visited[ny * w + nx] && eligible(ny, nx) {
                        visited[ny * w + nx] = true;
                        queue.push_back((ny, nx));
                    }
                }
            }
            if pixels.len() >= cap {
                continue;
            }
            let mut mask = Tensor::zeros(h, w, 1);
            let (mut top, mut left, mut bottom, mut right) = (h, w, 0, 0);
            let mut peak = 0.0_f64;
            for &(y, x) in &pixels {
                mask.set(y, x, 0, 1.0);
                top = top.min(y);
                left = left.min(x);
                bottom = bottom.max(y);
                right = right.max(x);
                peak = peak.max(saliency.at(y, x));
            }
            regions.push(DistractorRegion {
                mask: Mask::new(mask),
                bbox: Bbox { top, left, height: bottom - top + 1, width: right - left + 1 },
                peak_saliency: peak,
            });
        }
    }
    regions.sort_by(|a, b| {
        b.peak_saliency
            .partial_cmp(&a.peak_saliency)
            .unwrap()
            .then((a.bbox.top, a.bbox.left).cmp(&(b.bbox.top, b.bbox.left)))
    });
    regions
}

/// One candidate's optimization outcome inside select_operator.
#[derive(Debug, Clone)]
pub struct CandidateRun {
    pub operator: OperatorKind,
    pub trace: Trace,
    pub achieved_saliency: f64,
    pub aborted: bool,
}

/// The chosen edit for one region.
#[derive(Debug, Clone)]
pub struct RegionEditPlan {
    pub region: DistractorRegion,
    pub operator: OperatorKind,
    pub params: OperatorParams,
    pub achieved_saliency: f64,
    pub candidates: Vec<CandidateRun>,
}

/// Knobs shared by all candidate runs in a selection.
#[derive(Debug, Clone)]
pub struct SelectConfig {
    pub iters: usize,
    pub beta: f64,
    pub gamma: f64,
    pub seed: u64,
    /// Upper bound on concurrent candidate optimizations.
    pub threads: usize,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            iters: crate::objective::DEFAULT_ITERS,
            beta: crate::objective::DEFAULT_BETA,
            gamma: crate::objective::DEFAULT_GAMMA,
            seed: 0,
            threads: 1,
        }
    }
}

type CandidateOutcome = Result<(CandidateRun, OperatorParams, Tensor), crate::objective::RunError>;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("no candidate operators supplied")]
    NoCandidates,
    #[error("all {0} candidate optimizations aborted")]
    AllAborted(usize),
    #[error("candidate setup failed: {0}")]
    Run(#[from] crate::objective::RunError),
}

/// Optimize every candidate on the region's mask and keep the operator
/// whose returned iterate has the lowest mean in-mask saliency. Ties break
/// toward the earlier list position.
pub fn select_operator(
    image: &Tensor,
    region: &DistractorRegion,
    candidates: &[OperatorKind],
    cfg: &SelectConfig,
    backend: &dyn SaliencyBackend,
) -> Result<RegionEditPlan, SelectError> {
    if candidates.is_empty() {
        return Err(SelectError::NoCandidates);
    }
    let run_one = |op: OperatorKind| -> CandidateOutcome {
        let mut rc = RunConfig::defaults(op);
        rc.beta = cfg.beta;
        rc.gamma = cfg.gamma;
        rc.iters = cfg.iters;
        rc.seed = cfg.seed;
        rc.target = TargetMap::Constant(0.0);
        let res = optimize_with_backend(image, &region.mask, &rc, backend)?;
        let aborted = matches!(res.outcome, RunOutcome::Aborted { .. });
        let achieved = res.achieved_saliency();
        Ok((
            CandidateRun { operator: op, trace: res.trace, achieved_saliency: achieved, aborted },
            res.params,
            res.edited,
        ))
    };

    let workers = cfg.threads.max(1).min(candidates.len());
    let mut slots: Vec<Option<CandidateOutcome>> = Vec::new();
    if workers <= 1 {
        for &op in candidates {
            slots.push(Some(run_one(op)));
        }
    } else {
        slots.resize_with(candidates.len(), || None);
        std::thread::scope(|scope| {
            let chunks: Vec<(usize, &mut Option<_>)> = slots.iter_mut().enumerate().collect();
            let mut per_worker: Vec<Vec<(usize, &mut Option<_>)>> = Vec::new();
            per_worker.resize_with(workers, Vec::new);
            for (i, slot) in chunks {
                per_worker[i % workers].push((i, slot));
            }
            for work in per_worker {
                scope.spawn(move || {
                    for (i, slot) in work {
                        *slot = Some(run_one(candidates[i]));
                    }
                });
            }
        });
    }

    let mut runs = Vec::with_capacity(candidates.len());
    let mut best: Option<(usize, f64, OperatorParams)> = None;
    for (i, slot) in slots.into_iter().enumerate() {
        let (run, params, _edited) = slot.expect("candidate slot filled")?;
        if !run.aborted {
            let a = run.achieved_saliency;
            if best.as_ref().is_none_or(|(_, b, _)| a < *b) {
                best = Some((i, a, params));
            }
        }
        runs.push(run);
    }
    let Some((idx, achieved, params)) = best else {
        return Err(SelectError::AllAborted(candidates.len()));
    };
    Ok(RegionEditPlan {
        region: region.clone(),
        operator: candidates[idx],
        params,
        achieved_saliency: achieved,
        candidates: runs,
    })
}

#[derive(Debug, Error)]
pub enum FramesError {
    #[error("frame {index} size {got} does not match the planning frame size {want}")]
    DimensionMismatch { index: usize, got: String, want: String },
}

/// Blend an edited image into the original over a region mask.
fn blend_masked(base: &Tensor, edited: &Tensor, mask: &Mask) -> Tensor {
    let mut out = base.clone();
    for (p, &m) in mask.values().data().iter().enumerate() {
        if m > 0.0 {
            for c in 0..base.channels() {
                let i = p * base.channels() + c;
                out.data_mut()[i] = (1.0 - m) * base.data()[i] + m * edited.data()[i];
            }
        }
    }
    out
}

/// Re-apply frozen per-region parameters to every frame, in plan order,
/// without re-optimizing. Each frame is edited independently.
pub fn apply_to_frames(frames: &[Tensor], plans: &[RegionEditPlan]) -> Result<Vec<Tensor>, FramesError> {
    let want = plans.first().map(|p| {
        (p.region.mask.values().height(), p.region.mask.values().width())
    });
    let mut out = Vec::with_capacity(frames.len());
    for (index, frame) in frames.iter().enumerate() {
        if let Some((h, w)) = want {
            if (frame.height(), frame.width()) != (h, w) {
                return Err(FramesError::DimensionMismatch {
                    index,
                    got: frame.shape().to_string(),
                    want: format!("{h}x{w}"),
                });
            }
        }
        let mut img = frame.clone();
        for plan in plans {
            let edited = plan.params.apply(&img, plan.region.mask.values());
            img = blend_masked(&img, &edited, &plan.region.mask);
        }
        out.push(img);
    }
    Ok(out)
}

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("saliency of the original is zero everywhere inside the mask")]
    ZeroDenominator,
    #[error("image sizes differ: {0} vs {1}")]
    DimensionMismatch(String, String),
}

/// Model-predicted saliency reduction inside a mask, in percent; positive
/// means reduced: 100 * sum(M o (S(I) - S(E))) / sum(M o S(I)).
pub fn saliency_reduction(
    original: &Tensor,
    edited: &Tensor,
    mask: &Mask,
    backend: &dyn SaliencyBackend,
) -> Result<f64, MetricError> {
    if original.shape() != edited.shape() {
        return Err(MetricError::DimensionMismatch(
            original.shape().to_string(),
            edited.shape().to_string(),
        ));
    }
    let s_orig = backend.predict(original);
    let s_edit = backend.predict(edited);
    let mut num = 0.0;
    let mut den = 0.0;
    for ((so, se), m) in s_orig.values().data().iter().zip(s_edit.values().data()).zip(mask.values().data()) {
        num += m * (so - se);
        den += m * so;
    }
    if den == 0.0 {
        return Err(MetricError::ZeroDenominator);
    }
    Ok(100.0 * num / den)
}
