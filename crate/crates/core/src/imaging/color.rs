//! sRGB (D65) <-> CIELAB colorimetry.

use rayon::prelude::*;

use super::{ImageLab, ImageRgb};

const WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

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

const DELTA: f64 = 6.0 / 29.0;

#[inline]
pub fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
pub fn linear_to_srgb(l: f64) -> f64 {
    if l <= 0.0031308 {
        12.92 * l
    } else {
        1.055 * l.powf(1.0 / 2.4) - 0.055
    }
}

#[inline]
fn lab_f(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

#[inline]
fn lab_f_inv(t: f64) -> f64 {
    if t > DELTA {
        t * t * t
    } else {
        3.0 * DELTA * DELTA * (t - 4.0 / 29.0)
    }
}

fn mat_mul(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub(crate) fn rgb_pixel_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let xyz = mat_mul(&RGB_TO_XYZ, rgb.map(srgb_to_linear));
    let fx = lab_f(xyz[0] / WHITE[0]);
    let fy = lab_f(xyz[1] / WHITE[1]);
    let fz = lab_f(xyz[2] / WHITE[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

pub(crate) fn lab_pixel_to_rgb(lab: [f64; 3]) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let xyz = [WHITE[0] * lab_f_inv(fx), WHITE[1] * lab_f_inv(fy), WHITE[2] * lab_f_inv(fz)];
    mat_mul(&XYZ_TO_RGB, xyz).map(|l| linear_to_srgb(l.clamp(0.0, 1.0)).clamp(0.0, 1.0))
}

pub fn srgb_to_lab(img: &ImageRgb) -> ImageLab {
    let mut data = vec![0.0; img.data().len()];
    data.par_chunks_mut(3)
        .zip(img.data().par_chunks(3))
        .for_each(|(dst, src)| dst.copy_from_slice(&rgb_pixel_to_lab([src[0], src[1], src[2]])));
    ImageLab { width: img.width(), height: img.height(), data }
}

/// Out-of-gamut colors are clamped to `[0, 1]`.
pub fn lab_to_srgb(lab: &ImageLab) -> ImageRgb {
    let mut data = vec![0.0; lab.data().len()];
    data.par_chunks_mut(3)
        .zip(lab.data().par_chunks(3))
        .for_each(|(dst, src)| dst.copy_from_slice(&lab_pixel_to_rgb([src[0], src[1], src[2]])));
    ImageRgb { width: lab.width(), height: lab.height(), data }
}
