//! Compute kernels shared by the forward pass and its adjoints.
//!
//! Every kernel here is written against raw slices so the backward pass can
//! reuse the exact same arithmetic. Boundary policy: sampling kernels clamp
//! to the edge, convolution zero-pads, separable blurs replicate the edge
//! (so a constant image blurs to itself).

use super::tensor::{Shape, Tensor};

/// Normalized 1-D Gaussian, truncated at radius ceil(3*sigma).
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0, "gaussian blur requires sigma > 0, got {sigma}");
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|t| (-((t * t) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

#[inline]
fn clamp_i(v: i64, max: usize) -> usize {
    v.clamp(0, max as i64 - 1) as usize
}

/// Horizontal pass with replicated edges: dst[y,x,c] = sum_t k[t] src[y, clamp(x+t-r), c].
pub fn blur_pass_h(src: &[f64], dst: &mut [f64], shape: Shape, kernel: &[f64]) {
    let (h, w, c) = (shape.height, shape.width, shape.channels);
    let r = (kernel.len() / 2) as i64;
    for y in 0..h {
        let row = &src[y * w * c..(y + 1) * w * c];
        let out = &mut dst[y * w * c..(y + 1) * w * c];
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (t, &kv) in kernel.iter().enumerate() {
                    let sx = clamp_i(x as i64 + t as i64 - r, w);
                    acc += kv * row[sx * c + ch];
                }
                out[x * c + ch] = acc;
            }
        }
    }
}

/// Adjoint of [`blur_pass_h`]: scatters with the same weights.
pub fn blur_pass_h_adjoint(gout: &[f64], gsrc: &mut [f64], shape: Shape, kernel: &[f64]) {
    let (h, w, c) = (shape.height, shape.width, shape.channels);
    let r = (kernel.len() / 2) as i64;
    for y in 0..h {
        let grow = &gout[y * w * c..(y + 1) * w * c];
        let gin = &mut gsrc[y * w * c..(y + 1) * w * c];
        for x in 0..w {
            for ch in 0..c {
                let g = grow[x * c + ch];
                if g == 0.0 {
                    continue;
                }
                for (t, &kv) in kernel.iter().enumerate() {
                    let sx = clamp_i(x as i64 + t as i64 - r, w);
                    gin[sx * c + ch] += kv * g;
                }
            }
        }
    }
}

/// Vertical pass with replicated edges.
pub fn blur_pass_v(src: &[f64], dst: &mut [f64], shape: Shape, kernel: &[f64]) {
    let (h, w, c) = (shape.height, shape.width, shape.channels);
    let r = (kernel.len() / 2) as i64;
    let stride = w * c;
    for y in 0..h {
        let out = &mut dst[y * stride..(y + 1) * stride];
        out.fill(0.0);
        for (t, &kv) in kernel.iter().enumerate() {
            let sy = clamp_i(y as i64 + t as i64 - r, h);
            let row = &src[sy * stride..(sy + 1) * stride];
            for (o, &v) in out.iter_mut().zip(row.iter()) {
                *o += kv * v;
            }
        }
    }
}

/// Adjoint of [`blur_pass_v`].
pub fn blur_pass_v_adjoint(gout: &[f64], gsrc: &mut [f64], shape: Shape, kernel: &[f64]) {
    let (h, w, c) = (shape.height, shape.width, shape.channels);
    let r = (kernel.len() / 2) as i64;
    let stride = w * c;
    for y in 0..h {
        let grow = &gout[y * stride..(y + 1) * stride];
        for (t, &kv) in kernel.iter().enumerate() {
            let sy = clamp_i(y as i64 + t as i64 - r, h);
            let gin = &mut gsrc[sy * stride..(sy + 1) * stride];
            for (gi, &g) in gin.iter_mut().zip(grow.iter()) {
                *gi += kv * g;
            }
        }
    }
}

pub fn gaussian_blur_forward(input: &Tensor, kernel: &[f64]) -> Tensor {
    let shape = input.shape();
    let mut tmp = vec![0.0; shape.numel()];
    let mut out = vec![0.0; shape.numel()];
    blur_pass_h(input.data(), &mut tmp, shape, kernel);
    blur_pass_v(&tmp, &mut out, shape, kernel);
    Tensor::new(shape, out)
}

pub fn gaussian_blur_backward(gout: &[f64], gin: &mut [f64], shape: Shape, kernel: &[f64]) {
    let mut gtmp = vec![0.0; shape.numel()];
    blur_pass_v_adjoint(gout, &mut gtmp, shape, kernel);
    blur_pass_h_adjoint(&gtmp, gin, shape, kernel);
}

/// Same-padding (zero) cross-correlation, stride 1.
///
/// Kernels are stored as a (k, k, cin*cout) tensor with channel index
/// ci*cout + co; bias is (1, 1, cout).
pub fn conv2d_forward(input: &Tensor, kernels: &Tensor, bias: &Tensor, k: usize, cin: usize, cout: usize) -> Tensor {
    let (h, w) = (input.height(), input.width());
    let r = (k / 2) as i64;
    let kd = kernels.data();
    let bd = bias.data();
    let id = input.data();
    let mut out = vec![0.0; h * w * cout];
    for y in 0..h {
        for x in 0..w {
            let o = &mut out[(y * w + x) * cout..(y * w + x + 1) * cout];
            o.copy_from_slice(bd);
            for dy in 0..k {
                let sy = y as i64 + dy as i64 - r;
                if sy < 0 || sy >= h as i64 {
                    continue;
                }
                for dx in 0..k {
                    let sx = x as i64 + dx as i64 - r;
                    if sx < 0 || sx >= w as i64 {
                        continue;
                    }
                    let pix = &id[((sy as usize) * w + sx as usize) * cin..][..cin];
                    let kbase = (dy * k + dx) * cin * cout;
                    for (ci, &v) in pix.iter().enumerate() {
                        if v == 0.0 {
                            continue;
                        }
                        let krow = &kd[kbase + ci * cout..][..cout];
                        for (oc, &kv) in o.iter_mut().zip(krow.iter()) {
                            *oc += v * kv;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(Shape::new(h, w, cout), out)
}

#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward(
    gout: &[f64],
    input: &Tensor,
    kernels: &Tensor,
    k: usize,
    cin: usize,
    cout: usize,
    gin: Option<&mut [f64]>,
    gkernels: Option<&mut [f64]>,
    gbias: Option<&mut [f64]>,
) {
    let (h, w) = (input.height(), input.width());
    let r = (k / 2) as i64;
    let kd = kernels.data();
    let id = input.data();
    if let Some(gb) = gbias {
        for y in 0..h {
            for x in 0..w {
                let go = &gout[(y * w + x) * cout..][..cout];
                for (b, &g) in gb.iter_mut().zip(go.iter()) {
                    *b += g;
                }
            }
        }
    }
    let mut gin = gin;
    let mut gkernels = gkernels;
    for y in 0..h {
        for x in 0..w {
            let go = &gout[(y * w + x) * cout..][..cout];
            for dy in 0..k {
                let sy = y as i64 + dy as i64 - r;
                if sy < 0 || sy >= h as i64 {
                    continue;
                }
                for dx in 0..k {
                    let sx = x as i64 + dx as i64 - r;
                    if sx < 0 || sx >= w as i64 {
                        continue;
                    }
                    let pbase = ((sy as usize) * w + sx as usize) * cin;
                    let kbase = (dy * k + dx) * cin * cout;
                    if let Some(gi) = gin.as_deref_mut() {
                        for ci in 0..cin {
                            let krow = &kd[kbase + ci * cout..][..cout];
                            let mut acc = 0.0;
                            for (kv, g) in krow.iter().zip(go.iter()) {
                                acc += kv * g;
                            }
                            gi[pbase + ci] += acc;
                        }
                    }
                    if let Some(gk) = gkernels.as_deref_mut() {
                        for ci in 0..cin {
                            let v = id[pbase + ci];
                            if v == 0.0 {
                                continue;
                            }
                            let krow = &mut gk[kbase + ci * cout..][..cout];
                            for (kg, &g) in krow.iter_mut().zip(go.iter()) {
                                *kg += v * g;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Source position and blend factor for one align-corners output index.
#[inline]
fn resample_coord(out_i: usize, out_n: usize, in_n: usize) -> (usize, f64) {
    if out_n == 1 || in_n == 1 {
        return (0, 0.0);
    }
    let scale = (in_n - 1) as f64 / (out_n - 1) as f64;
    let src = out_i as f64 * scale;
    let i0 = (src.floor() as usize).min(in_n - 2);
    (i0, src - i0 as f64)
}

pub fn resample_bilinear_forward(input: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    assert!(out_h >= 1 && out_w >= 1, "resample target must be at least 1x1");
    let (h, w, c) = (input.height(), input.width(), input.channels());
    let id = input.data();
    let mut out = vec![0.0; out_h * out_w * c];
    for oy in 0..out_h {
        let (y0, fy) = resample_coord(oy, out_h, h);
        let y1 = (y0 + 1).min(h - 1);
        for ox in 0..out_w {
            let (x0, fx) = resample_coord(ox, out_w, w);
            let x1 = (x0 + 1).min(w - 1);
            let w00 = (1.0 - fy) * (1.0 - fx);
            let w01 = (1.0 - fy) * fx;
            let w10 = fy * (1.0 - fx);
            let w11 = fy * fx;
            for ch in 0..c {
                out[(oy * out_w + ox) * c + ch] = w00 * id[(y0 * w + x0) * c + ch]
                    + w01 * id[(y0 * w + x1) * c + ch]
                    + w10 * id[(y1 * w + x0) * c + ch]
                    + w11 * id[(y1 * w + x1) * c + ch];
            }
        }
    }
    Tensor::new(Shape::new(out_h, out_w, c), out)
}

pub fn resample_bilinear_backward(gout: &[f64], gin: &mut [f64], in_shape: Shape, out_h: usize, out_w: usize) {
    let (h, w, c) = (in_shape.height, in_shape.width, in_shape.channels);
    for oy in 0..out_h {
        let (y0, fy) = resample_coord(oy, out_h, h);
        let y1 = (y0 + 1).min(h - 1);
        for ox in 0..out_w {
            let (x0, fx) = resample_coord(ox, out_w, w);
            let x1 = (x0 + 1).min(w - 1);
            let w00 = (1.0 - fy) * (1.0 - fx);
            let w01 = (1.0 - fy) * fx;
            let w10 = fy * (1.0 - fx);
            let w11 = fy * fx;
            for ch in 0..c {
                let g = gout[(oy * out_w + ox) * c + ch];
                if g == 0.0 {
                    continue;
                }
                gin[(y0 * w + x0) * c + ch] += w00 * g;
                gin[(y0 * w + x1) * c + ch] += w01 * g;
                gin[(y1 * w + x0) * c + ch] += w10 * g;
                gin[(y1 * w + x1) * c + ch] += w11 * g;
            }
        }
    }
}

/// One clamped bilinear tap: cell corner indices, in-cell fractions and the
/// clamp-aware derivative factors of the fractions w.r.t. the raw coordinate.
#[inline]
pub fn sample_cell(coord: f64, n: usize) -> (usize, f64, f64) {
    if n == 1 {
        return (0, 0.0, 0.0);
    }
    let max = (n - 1) as f64;
    let clamped = coord.clamp(0.0, max);
    let i0 = (clamped.floor() as usize).min(n - 2);
    let frac = clamped - i0 as f64;
    // derivative of the clamped coordinate: zero once we are at or past the edge
    let dfrac = if coord > 0.0 && coord < max { 1.0 } else { 0.0 };
    (i0, frac, dfrac)
}

/// Bilinear lookup of a (h, w, c) tensor at real pixel coordinates (y, x),
/// clamped to the valid rectangle.
pub fn bilinear_at(data: &[f64], shape: Shape, y: f64, x: f64, ch: usize) -> f64 {
    let (h, w, c) = (shape.height, shape.width, shape.channels);
    let (y0, fy, _) = sample_cell(y, h);
    let (x0, fx, _) = sample_cell(x, w);
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    (1.0 - fy) * (1.0 - fx) * data[(y0 * w + x0) * c + ch]
        + (1.0 - fy) * fx * data[(y0 * w + x1) * c + ch]
        + fy * (1.0 - fx) * data[(y1 * w + x0) * c + ch]
        + fy * fx * data[(y1 * w + x1) * c + ch]
}

/// Backward warp: out(i,j) = input sampled at coords(i,j) = (y, x) pairs.
pub fn grid_sample_forward(input: &Tensor, coords: &Tensor) -> Tensor {
    let in_shape = input.shape();
    let (oh, ow) = (coords.height(), coords.width());
    let c = in_shape.channels;
    let id = input.data();
    let cd = coords.data();
    let mut out = vec![0.0; oh * ow * c];
    for i in 0..oh {
        for j in 0..ow {
            let y = cd[(i * ow + j) * 2];
            let x = cd[(i * ow + j) * 2 + 1];
            for ch in 0..c {
                out[(i * ow + j) * c + ch] = bilinear_at(id, in_shape, y, x, ch);
            }
        }
    }
    Tensor::new(Shape::new(oh, ow, c), out)
}

pub fn grid_sample_backward(
    gout: &[f64],
    input: &Tensor,
    coords: &Tensor,
    gin: Option<&mut [f64]>,
    gcoords: Option<&mut [f64]>,
) {
    let shape = input.shape();
    let (h, w, c) = (shape.height, shape.width, shape.channels);
    let (oh, ow) = (coords.height(), coords.width());
    let id = input.data();
    let cd = coords.data();
    let mut gin = gin;
    let mut gcoords = gcoords;
    for i in 0..oh {
        for j in 0..ow {
            let y = cd[(i * ow + j) * 2];
            let x = cd[(i * ow + j) * 2 + 1];
            let (y0, fy, dfy) = sample_cell(y, h);
            let (x0, fx, dfx) = sample_cell(x, w);
            let y1 = (y0 + 1).min(h - 1);
            let x1 = (x0 + 1).min(w - 1);
            for ch in 0..c {
                let g = gout[(i * ow + j) * c + ch];
                if g == 0.0 {
                    continue;
                }
                let v00 = id[(y0 * w + x0) * c + ch];
                let v01 = id[(y0 * w + x1) * c + ch];
                let v10 = id[(y1 * w + x0) * c + ch];
                let v11 = id[(y1 * w + x1) * c + ch];
                if let Some(gi) = gin.as_deref_mut() {
                    gi[(y0 * w + x0) * c + ch] += (1.0 - fy) * (1.0 - fx) * g;
                    gi[(y0 * w + x1) * c + ch] += (1.0 - fy) * fx * g;
                    gi[(y1 * w + x0) * c + ch] += fy * (1.0 - fx) * g;
                    gi[(y1 * w + x1) * c + ch] += fy * fx * g;
                }
                if let Some(gc) = gcoords.as_deref_mut() {
                    let dy = (1.0 - fx) * (v10 - v00) + fx * (v11 - v01);
                    let dx = (1.0 - fy) * (v01 - v00) + fy * (v11 - v10);
                    gc[(i * ow + j) * 2] += dfy * dy * g;
                    gc[(i * ow + j) * 2 + 1] += dfx * dx * g;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_kernel_normalized_and_peaked() {
        let k = gaussian_kernel(1.0);
        assert_eq!(k.len(), 7);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mid = k.len() / 2;
        assert!(k.iter().enumerate().all(|(i, &v)| v <= k[mid] || i == mid));
    }

    #[test]
    fn blur_preserves_constants() {
        let img = Tensor::filled(5, 7, 2, 0.321);
        let k = gaussian_kernel(1.5);
        let out = gaussian_blur_forward(&img, &k);
        assert!(out.max_abs_diff(&img) < 1e-12);
    }

    #[test]
    fn resample_identity_when_same_size() {
        let mut img = Tensor::zeros(3, 4, 1);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = i as f64 * 0.1;
        }
        let out = resample_bilinear_forward(&img, 3, 4);
        assert_eq!(out, img);
    }

    #[test]
    fn resample_column_midpoint() {
        let col = Tensor::new(Shape::new(2, 1, 1), vec![0.0, 1.0]);
        let out = resample_bilinear_forward(&col, 3, 1);
        assert_eq!(out.data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn grid_sample_identity_coords() {
        let mut img = Tensor::zeros(3, 3, 2);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = i as f64;
        }
        let mut coords = Tensor::zeros(3, 3, 2);
        for y in 0..3 {
            for x in 0..3 {
                coords.set(y, x, 0, y as f64);
                coords.set(y, x, 1, x as f64);
            }
        }
        let out = grid_sample_forward(&img, &coords);
        assert_eq!(out, img);
    }

    #[test]
    fn grid_sample_midpoint_average() {
        let img = Tensor::new(Shape::new(1, 2, 1), vec![0.0, 1.0]);
        let coords = Tensor::new(Shape::new(1, 1, 2), vec![0.0, 0.5]);
        let out = grid_sample_forward(&img, &coords);
        assert_eq!(out.data(), &[0.5]);
    }
}
