//! Real spherical harmonics up to degree 3, in the basis and sign convention
//! used by the common Gaussian splatting exporters.

use crate::math::Vec3;

pub const MAX_DEGREE: usize = 3;

pub const C0: f64 = 0.282_094_791_773_878_14;
pub const C1: f64 = 0.488_602_511_902_919_9;
pub const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Offset added to the raw SH sum before clamping.
pub const COLOR_OFFSET: f64 = 0.5;

/// Number of coefficients per channel for a degree.
pub const fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Basis values for `dir` (assumed unit length). Only the first
/// `coeff_count(degree)` entries are written.
pub fn basis(degree: usize, dir: &Vec3) -> [f64; 16] {
    let mut b = [0.0; 16];
    let [x, y, z] = *dir;
    b[0] = C0;
    if degree >= 1 {
        b[1] = -C1 * y;
        b[2] = C1 * z;
        b[3] = -C1 * x;
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b[4] = C2[0] * x * y;
        b[5] = C2[1] * y * z;
        b[6] = C2[2] * (2.0 * zz - xx - yy);
        b[7] = C2[3] * x * z;
        b[8] = C2[4] * (xx - yy);
        if degree >= 3 {
            b[9] = C3[0] * y * (3.0 * xx - yy);
            b[10] = C3[1] * x * y * z;
            b[11] = C3[2] * y * (4.0 * zz - xx - yy);
            b[12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
            b[13] = C3[4] * x * (4.0 * zz - xx - yy);
            b[14] = C3[5] * z * (xx - yy);
            b[15] = C3[6] * x * (xx - 3.0 * yy);
        }
    }
    b
}

/// Partial derivatives of every basis function with respect to the raw
/// direction components `(x, y, z)`, treating them as independent.
pub fn basis_partials(degree: usize, dir: &Vec3) -> [Vec3; 16] {
    let mut d = [[0.0; 3]; 16];
    let [x, y, z] = *dir;
    if degree >= 1 {
        d[1] = [0.0, -C1, 0.0];
        d[2] = [0.0, 0.0, C1];
        d[3] = [-C1, 0.0, 0.0];
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        d[4] = [C2[0] * y, C2[0] * x, 0.0];
        d[5] = [0.0, C2[1] * z, C2[1] * y];
        d[6] = [-2.0 * C2[2] * x, -2.0 * C2[2] * y, 4.0 * C2[2] * z];
        d[7] = [C2[3] * z, 0.0, C2[3] * x];
        d[8] = [2.0 * C2[4] * x, -2.0 * C2[4] * y, 0.0];
        if degree >= 3 {
            d[9] = [6.0 * C3[0] * x * y, C3[0] * (3.0 * xx - 3.0 * yy), 0.0];
            d[10] = [C3[1] * y * z, C3[1] * x * z, C3[1] * x * y];
            d[11] = [
                -2.0 * C3[2] * x * y,
                C3[2] * (4.0 * zz - xx - 3.0 * yy),
                8.0 * C3[2] * y * z,
            ];
            d[12] = [
                -6.0 * C3[3] * x * z,
                -6.0 * C3[3] * y * z,
                C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy),
            ];
            d[13] = [
                C3[4] * (4.0 * zz - 3.0 * xx - yy),
                -2.0 * C3[4] * x * y,
                8.0 * C3[4] * x * z,
            ];
            d[14] = [2.0 * C3[5] * x * z, -2.0 * C3[5] * y * z, C3[5] * (xx - yy)];
            d[15] = [C3[6] * (3.0 * xx - 3.0 * yy), -6.0 * C3[6] * x * y, 0.0];
        }
    }
    d
}

/// Unclamped per-channel SH sum plus the offset. `coeffs` is laid out as
/// `[coefficient][channel]`, i.e. `coeffs[k * 3 + c]`.
pub fn raw_color(coeffs: &[f64], degree: usize, dir: &Vec3) -> [f64; 3] {
    let b = basis(degree, dir);
    let mut c = [COLOR_OFFSET; 3];
    for (k, bk) in b.iter().take(coeff_count(degree)).enumerate() {
        for ch in 0..3 {
            c[ch] += coeffs[k * 3 + ch] * bk;
        }
    }
    c
}

/// View-dependent RGB: SH sum, `+0.5`, clamped at zero.
pub fn eval_sh_color(coeffs: &[f64], dir: &Vec3, degree: usize) -> [f64; 3] {
    raw_color(coeffs, degree, dir).map(|v| v.max(0.0))
}

/// DC coefficient that reproduces `rgb` for a degree-0 evaluation.
pub fn rgb_to_dc(rgb: f64) -> f64 {
    (rgb - COLOR_OFFSET) / C0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_zero_constant() {
        let coeffs = [0.3, -0.2, 1.0];
        let c = eval_sh_color(&coeffs, &[0.0, 0.6, 0.8], 0);
        for ch in 0..3 {
            assert!((c[ch] - (coeffs[ch] * 0.28209479 + 0.5).max(0.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_coefficients_give_mid_gray() {
        let coeffs = [0.0; 48];
        for dir in [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.48, 0.6, 0.64]] {
            assert_eq!(eval_sh_color(&coeffs, &dir, 3), [0.5, 0.5, 0.5]);
        }
    }

    #[test]
    fn negative_sum_clamps_to_zero() {
        let coeffs = [-10.0, 0.0, 0.0];
        assert_eq!(eval_sh_color(&coeffs, &[0.0, 0.0, 1.0], 0)[0], 0.0);
    }

    #[test]
    fn partials_match_finite_differences() {
        let dir = [0.3, -0.5, 0.81];
        let h = 1e-6;
        let d = basis_partials(3, &dir);
        for axis in 0..3 {
            let mut p = dir;
            let mut m = dir;
            p[axis] += h;
            m[axis] -= h;
            let bp = basis(3, &p);
            let bm = basis(3, &m);
            for k in 0..16 {
                let fd = (bp[k] - bm[k]) / (2.0 * h);
                assert!((fd - d[k][axis]).abs() < 1e-8, "k={k} axis={axis}");
            }
        }
    }

    #[test]
    fn dc_roundtrip() {
        for rgb in [0.0, 0.25, 0.9] {
            assert!((rgb_to_dc(rgb) * C0 + 0.5 - rgb).abs() < 1e-15);
        }
    }
}
