//! Plan container file: one sidecar holding a region table (bbox, operator
//! tag, achieved/peak stats, mask bitmap offsets, parameter blob offsets)
//! for the whole frame-sequence edit.

use std::io::Read;
use std::path::Path;

use crate::diffcore::Tensor;
use crate::objective::Mask;
use crate::operators::sidecar::{
    decode_params, encode_params, SidecarError, KIND_PLAN_CONTAINER, MAGIC, VERSION,
};

use super::{Bbox, DistractorRegion, RegionEditPlan};

struct TableEntry {
    bbox: Bbox,
    tag_byte: u8,
    peak: f64,
    achieved: f64,
    mask_off: u64,
    mask_len: u64,
    blob_off: u64,
    blob_len: u64,
}

const ENTRY_BYTES: usize = 4 * 4 + 1 + 8 + 8 + 4 * 8;

fn operator_tag_byte(plan: &RegionEditPlan) -> u8 {
    // the same tag values as single-parameter records
    match plan.operator {
        crate::operators::OperatorKind::Recolor => 1,
        crate::operators::OperatorKind::Warp => 2,
        crate::operators::OperatorKind::Convnet => 3,
        crate::operators::OperatorKind::Noise => 4,
        crate::operators::OperatorKind::Baseline => 5,
    }
}

/// Serialize plans for an image of the given size.
pub fn encode_plans(plans: &[RegionEditPlan], img_h: usize, img_w: usize) -> Vec<u8> {
    let mut header = Vec::new();
    header.extend_from_slice(&MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    header.push(KIND_PLAN_CONTAINER);
    header.extend_from_slice(&(img_h as u32).to_le_bytes());
    header.extend_from_slice(&(img_w as u32).to_le_bytes());
    header.extend_from_slice(&(plans.len() as u32).to_le_bytes());
    let table_start = header.len();
    let payload_start = table_start + plans.len() * ENTRY_BYTES;

    let mut payload = Vec::new();
    let mut entries = Vec::with_capacity(plans.len());
    for plan in plans {
        let bbox = plan.region.bbox;
        let mut mask_bytes = Vec::with_capacity(bbox.height * bbox.width);
        for y in bbox.top..bbox.top + bbox.height {
            for x in bbox.left..bbox.left + bbox.width {
                mask_bytes.push(if plan.region.mask.values().at(y, x, 0) > 0.0 { 1u8 } else { 0u8 });
            }
        }
        let blob = encode_params(&plan.params);
        let mask_off = (payload_start + payload.len()) as u64;
        payload.extend_from_slice(&mask_bytes);
        let blob_off = (payload_start + payload.len()) as u64;
        payload.extend_from_slice(&blob);
        entries.push(TableEntry {
            bbox,
            tag_byte: operator_tag_byte(plan),
            peak: plan.region.peak_saliency,
            achieved: plan.achieved_saliency,
            mask_off,
            mask_len: mask_bytes.len() as u64,
            blob_off,
            blob_len: blob.len() as u64,
        });
    }

    let mut out = header;
    for e in &entries {
        for d in [e.bbox.top, e.bbox.left, e.bbox.height, e.bbox.width] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.push(e.tag_byte);
        out.extend_from_slice(&e.peak.to_le_bytes());
        out.extend_from_slice(&e.achieved.to_le_bytes());
        for v in [e.mask_off, e.mask_len, e.blob_off, e.blob_len] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&payload);
    out
}

pub fn decode_plans(bytes: &[u8]) -> Result<(Vec<RegionEditPlan>, usize, usize), SidecarError> {
    let mut r = bytes;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(SidecarError::BadMagic);
    }
    let mut b2 = [0u8; 2];
    r.read_exact(&mut b2)?;
    let version = u16::from_le_bytes(b2);
    if version != VERSION {
        return Err(SidecarError::BadVersion(version));
    }
    let mut b1 = [0u8; 1];
    r.read_exact(&mut b1)?;
    if b1[0] != KIND_PLAN_CONTAINER {
        return Err(SidecarError::BadKind(b1[0]));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let img_h = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let img_w = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let count = u32::from_le_bytes(b4) as usize;

    let mut plans = Vec::with_capacity(count);
    for _ in 0..count {
        let mut dims = [0usize; 4];
        for d in &mut dims {
            r.read_exact(&mut b4)?;
            *d = u32::from_le_bytes(b4) as usize;
        }
        r.read_exact(&mut b1)?;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let peak = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let achieved = f64::from_le_bytes(b8);
        let mut offs = [0u64; 4];
        for o in &mut offs {
            r.read_exact(&mut b8)?;
            *o = u64::from_le_bytes(b8);
        }
        let bbox = Bbox { top: dims[0], left: dims[1], height: dims[2], width: dims[3] };
        let range = |off: u64, len: u64| -> Result<&[u8], SidecarError> {
            bytes
                .get(off as usize..(off + len) as usize)
                .ok_or_else(|| SidecarError::Malformed("offset out of range".into()))
        };
        let mask_bytes = range(offs[0], offs[1])?;
        if mask_bytes.len() != bbox.height * bbox.width {
            return Err(SidecarError::Malformed("mask bitmap size mismatch".into()));
        }
        let mut mask = Tensor::zeros(img_h, img_w, 1);
        for (i, &m) in mask_bytes.iter().enumerate() {
            if m != 0 {
                mask.set(bbox.top + i / bbox.width, bbox.left + i % bbox.width, 0, 1.0);
            }
        }
        let params = decode_params(range(offs[2], offs[3])?)?;
        plans.push(RegionEditPlan {
            region: DistractorRegion { mask: Mask::new(mask), bbox, peak_saliency: peak },
            operator: params.kind(),
            params,
            achieved_saliency: achieved,
            candidates: Vec::new(),
        });
    }
    Ok((plans, img_h, img_w))
}

pub fn save_plans(path: &Path, plans: &[RegionEditPlan], img_h: usize, img_w: usize) -> Result<(), SidecarError> {
    std::fs::write(path, encode_plans(plans, img_h, img_w))?;
    Ok(())
}

pub fn load_plans(path: &Path) -> Result<(Vec<RegionEditPlan>, usize, usize), SidecarError> {
    decode_plans(&std::fs::read(path)?)
}
