//! Binary sidecar serialization of operator parameters: magic "SGOP",
//! version, operator tag, shape headers, little-endian 64-bit values.
//! A plan container (kind 1) holds a region table plus one parameter blob
//! per region so a whole frame-sequence edit travels in one file.

use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::diffcore::{Shape, Tensor};

use super::convnet::{ConvLayer, ConvNetParams, CHANNEL_PLAN, KERNEL_SIZE};
use super::noise::NoiseParams;
use super::recolor::RecolorGrid;
use super::warp::ComposedWarp;
use super::{OperatorKind, OperatorParams};

pub const MAGIC: [u8; 4] = *b"SGOP";
pub const VERSION: u16 = 1;

/// File kind: a single operator parameter record.
pub const KIND_PARAMS: u8 = 0;
/// File kind: a region plan container.
pub const KIND_PLAN_CONTAINER: u8 = 1;

#[derive(Debug, Error)]
pub enum SidecarError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes (not an SGOP file)")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u16),
    #[error("unsupported file kind {0}")]
    BadKind(u8),
    #[error("unknown operator tag {0}")]
    BadTag(u8),
    #[error("malformed payload: {0}")]
    Malformed(String),
}

fn tag_of(kind: OperatorKind) -> u8 {
    match kind {
        OperatorKind::Recolor => 1,
        OperatorKind::Warp => 2,
        OperatorKind::Convnet => 3,
        OperatorKind::Noise => 4,
        OperatorKind::Baseline => 5,
    }
}

fn write_tensor(out: &mut Vec<u8>, t: &Tensor) {
    out.push(3u8);
    for d in [t.height(), t.width(), t.channels()] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_tensor(r: &mut impl Read) -> Result<Tensor, SidecarError> {
    let mut b1 = [0u8; 1];
    r.read_exact(&mut b1)?;
    if b1[0] != 3 {
        return Err(SidecarError::Malformed(format!("expected 3 dims, got {}", b1[0])));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        *d = u32::from_le_bytes(b4) as usize;
    }
    let n = dims[0] * dims[1] * dims[2];
    if n > (1 << 28) {
        return Err(SidecarError::Malformed(format!("tensor too large: {dims:?}")));
    }
    let mut data = Vec::with_capacity(n);
    let mut b8 = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b8)?;
        data.push(f64::from_le_bytes(b8));
    }
    Ok(Tensor::new(Shape::new(dims[0], dims[1], dims[2]), data))
}

fn params_tensors(params: &OperatorParams) -> Vec<Tensor> {
    match params {
        OperatorParams::Recolor(g) => vec![g.theta().clone()],
        OperatorParams::Warp(w) => vec![w.displacement().clone()],
        OperatorParams::Convnet(c) => c.tensors().into_iter().cloned().collect(),
        OperatorParams::Noise(n) => vec![n.delta().clone()],
        OperatorParams::Baseline { ring_width } => vec![Tensor::scalar(*ring_width as f64)],
    }
}

/// Serialize one operator's parameters (a complete standalone record).
pub fn encode_params(params: &OperatorParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(KIND_PARAMS);
    out.push(tag_of(params.kind()));
    let tensors = params_tensors(params);
    out.push(tensors.len() as u8);
    for t in &tensors {
        write_tensor(&mut out, t);
    }
    out
}

fn read_header(r: &mut impl Read, want_kind: u8) -> Result<(), SidecarError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(SidecarError::BadMagic);
    }
    let mut v = [0u8; 2];
    r.read_exact(&mut v)?;
    let version = u16::from_le_bytes(v);
    if version != VERSION {
        return Err(SidecarError::BadVersion(version));
    }
    let mut k = [0u8; 1];
    r.read_exact(&mut k)?;
    if k[0] != want_kind {
        return Err(SidecarError::BadKind(k[0]));
    }
    Ok(())
}

pub fn decode_params(bytes: &[u8]) -> Result<OperatorParams, SidecarError> {
    let mut r = bytes;
    read_header(&mut r, KIND_PARAMS)?;
    let mut b1 = [0u8; 1];
    r.read_exact(&mut b1)?;
    let tag = b1[0];
    r.read_exact(&mut b1)?;
    let count = b1[0] as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        tensors.push(read_tensor(&mut r)?);
    }
    let expect = |n: usize| -> Result<(), SidecarError> {
        if tensors.len() == n {
            Ok(())
        } else {
            Err(SidecarError::Malformed(format!("tag {tag} expects {n} tensors, got {}", tensors.len())))
        }
    };
    match tag {
        1 => {
            expect(1)?;
            Ok(OperatorParams::Recolor(RecolorGrid::from_theta(tensors.remove(0))))
        }
        2 => {
            expect(1)?;
            Ok(OperatorParams::Warp(ComposedWarp::from_displacement(tensors.remove(0))))
        }
        3 => {
            expect(10)?;
            let mut layers = Vec::with_capacity(5);
            for (i, pair) in tensors.chunks_exact(2).enumerate() {
                let (cin, cout) = (CHANNEL_PLAN[i], CHANNEL_PLAN[i + 1]);
                if pair[0].shape() != Shape::new(KERNEL_SIZE, KERNEL_SIZE, cin * cout) {
                    return Err(SidecarError::Malformed(format!("layer {i} kernel shape {}", pair[0].shape())));
                }
                layers.push(ConvLayer { kernels: pair[0].clone(), bias: pair[1].clone() });
            }
            Ok(OperatorParams::Convnet(ConvNetParams::from_layers(layers)))
        }
        4 => {
            expect(1)?;
            Ok(OperatorParams::Noise(NoiseParams::from_delta(tensors.remove(0))))
        }
        5 => {
            expect(1)?;
            let ring = tensors[0].scalar_value();
            Ok(OperatorParams::Baseline { ring_width: ring as usize })
        }
        other => Err(SidecarError::BadTag(other)),
    }
}

pub fn save_params(path: &Path, params: &OperatorParams) -> Result<(), SidecarError> {
    let bytes = encode_params(params);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<OperatorParams, SidecarError> {
    let bytes = std::fs::read(path)?;
    decode_params(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn params_round_trip_all_operators() {
        let mut rng = StdRng::seed_from_u64(113);
        let mut grid = RecolorGrid::identity(8);
        for v in grid.theta_mut().data_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
        let mut disp = Tensor::zeros(12, 10, 2);
        for v in disp.data_mut() {
            *v = rng.gen_range(-2.0..2.0);
        }
        let mut delta = Tensor::zeros(6, 6, 3);
        for v in delta.data_mut() {
            *v = rng.gen_range(-0.3..0.3);
        }
        let cases = vec![
            OperatorParams::Recolor(grid),
            OperatorParams::Warp(ComposedWarp::from_displacement(disp)),
            OperatorParams::Convnet(ConvNetParams::random(3)),
            OperatorParams::Noise(NoiseParams::from_delta(delta)),
            OperatorParams::Baseline { ring_width: 8 },
        ];
        for params in cases {
            let bytes = encode_params(&params);
            assert_eq!(&bytes[..4], b"SGOP");
            let back = decode_params(&bytes).unwrap();
            assert_eq!(back, params);
        }
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        assert!(matches!(decode_params(b"NOPE...."), Err(SidecarError::BadMagic)));
        let mut bytes = encode_params(&OperatorParams::Baseline { ring_width: 4 });
        bytes[4] = 9; // version
        assert!(matches!(decode_params(&bytes), Err(SidecarError::BadVersion(_))));
        let bytes = encode_params(&OperatorParams::Baseline { ring_width: 4 });
        assert!(matches!(decode_params(&bytes[..10]), Err(SidecarError::Io(_))));
    }
}
