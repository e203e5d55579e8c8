//! Scalar sRGB <-> CIELab conversion with analytic Jacobians (D65 white).
//!
//! The forward formulas and their derivatives are shared by the tape
//! primitives and the eager helpers, so both paths stay bit-identical.

/// sRGB (linear light) to XYZ, D65.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

const XYZ_TO_RGB: [[f64; 3]; 3] = [
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
];

/// D65 reference white.
const WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

const DELTA: f64 = 6.0 / 29.0;
const DELTA3: f64 = DELTA * DELTA * DELTA;
const GAMMA_KNEE: f64 = 0.04045;
const LINEAR_KNEE: f64 = 0.0031308;

#[inline]
fn srgb_to_linear(c: f64) -> f64 {
    if c <= GAMMA_KNEE {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
fn srgb_to_linear_deriv(c: f64) -> f64 {
    if c <= GAMMA_KNEE {
        1.0 / 12.92
    } else {
        (2.4 / 1.055) * ((c + 0.055) / 1.055).powf(1.4)
    }
}

/// Inverse gamma; the linear branch extends below zero so out-of-gamut
/// values stay differentiable instead of producing NaN.
#[inline]
fn linear_to_srgb(v: f64) -> f64 {
    if v <= LINEAR_KNEE {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

#[inline]
fn linear_to_srgb_deriv(v: f64) -> f64 {
    if v <= LINEAR_KNEE {
        12.92
    } else {
        (1.055 / 2.4) * v.powf(1.0 / 2.4 - 1.0)
    }
}

/// The CIE lightness function: cube root with a linear segment below
/// (6/29)^3 so the derivative stays finite at black.
#[inline]
fn lab_f(t: f64) -> f64 {
    if t > DELTA3 {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

#[inline]
fn lab_f_deriv(t: f64) -> f64 {
    if t > DELTA3 {
        let r = t.cbrt();
        1.0 / (3.0 * r * r)
    } else {
        1.0 / (3.0 * DELTA * DELTA)
    }
}

#[inline]
fn lab_f_inv(u: f64) -> f64 {
    if u > DELTA {
        u * u * u
    } else {
        3.0 * DELTA * DELTA * (u - 4.0 / 29.0)
    }
}

#[inline]
fn lab_f_inv_deriv(u: f64) -> f64 {
    if u > DELTA {
        3.0 * u * u
    } else {
        3.0 * DELTA * DELTA
    }
}

/// Convert one sRGB pixel (components in [0,1]) to (L, a, b).
pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = [srgb_to_linear(rgb[0]), srgb_to_linear(rgb[1]), srgb_to_linear(rgb[2])];
    let mut f = [0.0; 3];
    for (i, fi) in f.iter_mut().enumerate() {
        let t = (RGB_TO_XYZ[i][0] * lin[0] + RGB_TO_XYZ[i][1] * lin[1] + RGB_TO_XYZ[i][2] * lin[2]) / WHITE[i];
        *fi = lab_f(t);
    }
    [116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])]
}

/// Forward value plus the 3x3 Jacobian d(L,a,b)/d(r,g,b).
pub fn srgb_to_lab_jacobian(rgb: [f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let gp = [srgb_to_linear_deriv(rgb[0]), srgb_to_linear_deriv(rgb[1]), srgb_to_linear_deriv(rgb[2])];
    let lin = [srgb_to_linear(rgb[0]), srgb_to_linear(rgb[1]), srgb_to_linear(rgb[2])];
    let mut f = [0.0; 3];
    // df_i/drgb_j, chained through the matrix, white point and gamma
    let mut df = [[0.0; 3]; 3];
    for i in 0..3 {
        let t = (RGB_TO_XYZ[i][0] * lin[0] + RGB_TO_XYZ[i][1] * lin[1] + RGB_TO_XYZ[i][2] * lin[2]) / WHITE[i];
        f[i] = lab_f(t);
        let fp = lab_f_deriv(t);
        for j in 0..3 {
            df[i][j] = fp * RGB_TO_XYZ[i][j] / WHITE[i] * gp[j];
        }
    }
    let lab = [116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])];
    let mut jac = [[0.0; 3]; 3];
    for j in 0..3 {
        jac[0][j] = 116.0 * df[1][j];
        jac[1][j] = 500.0 * (df[0][j] - df[1][j]);
        jac[2][j] = 200.0 * (df[1][j] - df[2][j]);
    }
    (lab, jac)
}

/// Convert one (L, a, b) pixel back to sRGB. Out-of-gamut results are left
/// as-is; clamping belongs at the serialization boundary.
pub fn lab_to_srgb(lab: [f64; 3]) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let f = [fy + lab[1] / 500.0, fy, fy - lab[2] / 200.0];
    let xyz = [WHITE[0] * lab_f_inv(f[0]), WHITE[1] * lab_f_inv(f[1]), WHITE[2] * lab_f_inv(f[2])];
    let mut rgb = [0.0; 3];
    for (i, ri) in rgb.iter_mut().enumerate() {
        let v = XYZ_TO_RGB[i][0] * xyz[0] + XYZ_TO_RGB[i][1] * xyz[1] + XYZ_TO_RGB[i][2] * xyz[2];
        *ri = linear_to_srgb(v);
    }
    rgb
}

/// Forward value plus the 3x3 Jacobian d(r,g,b)/d(L,a,b).
pub fn lab_to_srgb_jacobian(lab: [f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let fy = (lab[0] + 16.0) / 116.0;
    let f = [fy + lab[1] / 500.0, fy, fy - lab[2] / 200.0];
    // df_i/d(L,a,b)
    let dfl = [
        [1.0 / 116.0, 1.0 / 500.0, 0.0],
        [1.0 / 116.0, 0.0, 0.0],
        [1.0 / 116.0, 0.0, -1.0 / 200.0],
    ];
    let xyz = [WHITE[0] * lab_f_inv(f[0]), WHITE[1] * lab_f_inv(f[1]), WHITE[2] * lab_f_inv(f[2])];
    let dxyz = [
        WHITE[0] * lab_f_inv_deriv(f[0]),
        WHITE[1] * lab_f_inv_deriv(f[1]),
        WHITE[2] * lab_f_inv_deriv(f[2]),
    ];
    let mut rgb = [0.0; 3];
    let mut jac = [[0.0; 3]; 3];
    for i in 0..3 {
        let v = XYZ_TO_RGB[i][0] * xyz[0] + XYZ_TO_RGB[i][1] * xyz[1] + XYZ_TO_RGB[i][2] * xyz[2];
        rgb[i] = linear_to_srgb(v);
        let gv = linear_to_srgb_deriv(v);
        for j in 0..3 {
            // chain through xyz_k and f_k
            let mut acc = 0.0;
            for k in 0..3 {
                acc += XYZ_TO_RGB[i][k] * dxyz[k] * dfl[k][j];
            }
            jac[i][j] = gv * acc;
        }
    }
    (rgb, jac)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_and_black_anchors() {
        let white = srgb_to_lab([1.0, 1.0, 1.0]);
        assert!((white[0] - 100.0).abs() < 1e-2);
        assert!(white[1].abs() < 0.01 && white[2].abs() < 0.01);
        let black = srgb_to_lab([0.0, 0.0, 0.0]);
        assert!(black.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn round_trip_is_tight() {
        let mut worst: f64 = 0.0;
        let mut v = 0.123_f64;
        for _ in 0..1000 {
            // cheap deterministic value stream in [0,1]
            let r = v;
            v = (v * 16807.0).fract();
            let g = v;
            v = (v * 16807.0).fract();
            let b = v;
            v = (v * 16807.0).fract();
            let lab = srgb_to_lab([r, g, b]);
            let back = lab_to_srgb(lab);
            for (orig, rec) in [r, g, b].iter().zip(back.iter()) {
                worst = worst.max((orig - rec).abs());
            }
        }
        assert!(worst < 1e-3, "round trip error {worst}");
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let h = 1e-6;
        let pix = [0.43, 0.27, 0.81];
        let (_, jac) = srgb_to_lab_jacobian(pix);
        for j in 0..3 {
            let mut hi = pix;
            hi[j] += h;
            let mut lo = pix;
            lo[j] -= h;
            let fhi = srgb_to_lab(hi);
            let flo = srgb_to_lab(lo);
            for i in 0..3 {
                let num = (fhi[i] - flo[i]) / (2.0 * h);
                assert!((num - jac[i][j]).abs() < 1e-5, "rgb->lab J[{i}][{j}]: {num} vs {}", jac[i][j]);
            }
        }
        let lab = [55.0, 20.0, -35.0];
        let (_, jac) = lab_to_srgb_jacobian(lab);
        for j in 0..3 {
            let mut hi = lab;
            hi[j] += h;
            let mut lo = lab;
            lo[j] -= h;
            let fhi = lab_to_srgb(hi);
            let flo = lab_to_srgb(lo);
            for i in 0..3 {
                let num = (fhi[i] - flo[i]) / (2.0 * h);
                assert!((num - jac[i][j]).abs() < 1e-6, "lab->rgb J[{i}][{j}]: {num} vs {}", jac[i][j]);
            }
        }
    }
}
