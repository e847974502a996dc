//! Image containers and the depth / disparity / transmittance conversions.
//!
//! Scalar maps store `f64` per pixel in row-major order. A missing
//! measurement is encoded as [`MISSING`] (a NaN), which no valid depth,
//! disparity or transmittance can take.

mod color;
pub mod io;

pub use color::{lab_to_srgb, linear_to_srgb, srgb_to_lab, srgb_to_linear};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentinel for pixels without a measurement.
pub const MISSING: f64 = f64::NAN;

/// Smallest transmittance produced by [`transmittance_from_depth`]; keeps
/// `exp(-beta * l)` inside `(0, 1]` when it would underflow.
pub const MIN_TRANSMITTANCE: f64 = f64::MIN_POSITIVE;

#[inline]
pub fn is_missing(v: f64) -> bool {
    v.is_nan()
}

/// sRGB image with channel values in `[0, 1]`, interleaved RGB.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageRgb {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::InvalidParameter(format!(
                "RGB buffer has {} values, expected {}",
                data.len(),
                width * height * 3
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!("RGB value {v} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self { width, height, data }
    }

    /// Builds an image from a per-pixel function; values are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).map(|c| c.clamp(0.0, 1.0)));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixel_at(y * self.width + x)
    }

    pub fn pixel_at(&self, i: usize) -> [f64; 3] {
        [self.data[3 * i], self.data[3 * i + 1], self.data[3 * i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// Mirror left/right.
    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                let src = 3 * (y * self.width + self.width - 1 - x);
                let dst = 3 * (y * self.width + x);
                out.data[dst..dst + 3].copy_from_slice(&self.data[src..src + 3]);
            }
        }
        out
    }
}

/// CIELAB image (D65), interleaved `(L*, a*, b*)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageLab {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageLab {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::InvalidParameter(format!(
                "Lab buffer has {} values, expected {}",
                data.len(),
                width * height * 3
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("Lab buffer contains non-finite values".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixel_at(y * self.width + x)
    }

    pub fn pixel_at(&self, i: usize) -> [f64; 3] {
        [self.data[3 * i], self.data[3 * i + 1], self.data[3 * i + 2]]
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                let src = 3 * (y * self.width + self.width - 1 - x);
                let dst = 3 * (y * self.width + x);
                out.data[dst..dst + 3].copy_from_slice(&self.data[src..src + 3]);
            }
        }
        out
    }
}

macro_rules! scalar_map {
    ($(#[$meta:meta])* $name:ident, $valid:expr, $what:literal) => {
        $(#[$meta])*
        #[derive(Clone, Debug)]
        pub struct $name {
            width: usize,
            height: usize,
            data: Vec<f64>,
        }

        impl $name {
            pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
                if data.len() != width * height {
                    return Err(Error::InvalidParameter(format!(
                        concat!($what, " buffer has {} values, expected {}"),
                        data.len(),
                        width * height
                    )));
                }
                let valid: fn(f64) -> bool = $valid;
                if let Some(v) = data.iter().find(|v| !is_missing(**v) && !valid(**v)) {
                    return Err(Error::InvalidParameter(format!(
                        concat!("invalid ", $what, " value {}"),
                        v
                    )));
                }
                Ok(Self { width, height, data })
            }

            pub fn filled(width: usize, height: usize, value: f64) -> Self {
                Self { width, height, data: vec![value; width * height] }
            }

            pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
                let mut data = Vec::with_capacity(width * height);
                for y in 0..height {
                    for x in 0..width {
                        data.push(f(x, y));
                    }
                }
                Self::new(width, height, data)
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn dims(&self) -> (usize, usize) {
                (self.width, self.height)
            }

            pub fn len(&self) -> usize {
                self.data.len()
            }

            pub fn is_empty(&self) -> bool {
                self.data.is_empty()
            }

            pub fn data(&self) -> &[f64] {
                &self.data
            }

            pub fn into_data(self) -> Vec<f64> {
                self.data
            }

            pub fn get(&self, x: usize, y: usize) -> f64 {
                self.data[y * self.width + x]
            }

            pub fn missing_count(&self) -> usize {
                self.data.iter().filter(|v| is_missing(**v)).count()
            }

            pub fn flip_horizontal(&self) -> Self {
                let w = self.width;
                let data = (0..self.data.len())
                    .map(|i| {
                        let (x, y) = (i % w, i / w);
                        self.data[y * w + w - 1 - x]
                    })
                    .collect();
                Self { width: w, height: self.height, data }
            }
        }

        impl PartialEq for $name {
            /// Missing pixels compare equal to each other.
            fn eq(&self, other: &Self) -> bool {
                self.width == other.width
                    && self.height == other.height
                    && self
                        .data
                        .iter()
                        .zip(&other.data)
                        .all(|(a, b)| a == b || (is_missing(*a) && is_missing(*b)))
            }
        }
    };
}

scalar_map!(
    /// Stereo disparity in pixels; `0` and [`MISSING`] both mean "no depth".
    DisparityMap,
    |v| v.is_finite() && v >= 0.0,
    "disparity"
);

scalar_map!(
    /// Metric depth in meters.
    DepthMap,
    |v| v.is_finite() && v > 0.0,
    "depth"
);

scalar_map!(
    /// Per-pixel transmittance. Completed maps hold values in `(0, 1]`;
    /// initial maps may carry [`MISSING`].
    TransmittanceMap,
    |v| (0.0..=1.0).contains(&v),
    "transmittance"
);

impl TransmittanceMap {
    /// No missing pixels and every value strictly positive.
    pub fn is_complete(&self) -> bool {
        self.data.iter().all(|v| *v > 0.0 && *v <= 1.0)
    }
}

/// Per-pixel semantic class ids with optional instance ids.
///
/// With instances present, pixels of the same class but different instance
/// get distinct filter reference keys, so adjacent objects of one class are
/// kept apart.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SemanticLabeling {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    instances: Option<Vec<u32>>,
}

impl SemanticLabeling {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "label buffer has {} values, expected {}",
                labels.len(),
                width * height
            )));
        }
        Ok(Self { width, height, labels, instances: None })
    }

    pub fn filled(width: usize, height: usize, label: u32) -> Self {
        Self { width, height, labels: vec![label; width * height], instances: None }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u32) -> Self {
        let mut labels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                labels.push(f(x, y));
            }
        }
        Self { width, height, labels, instances: None }
    }

    pub fn with_instances(mut self, instances: Vec<u32>) -> Result<Self> {
        if instances.len() != self.labels.len() {
            return Err(Error::InvalidParameter(format!(
                "instance buffer has {} values, expected {}",
                instances.len(),
                self.labels.len()
            )));
        }
        self.instances = Some(instances);
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn instances(&self) -> Option<&[u32]> {
        self.instances.as_deref()
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Opaque reference key per pixel: class id in the high half, instance
    /// id (0 without instances) in the low half.
    pub fn reference_keys(&self) -> Vec<u64> {
        match &self.instances {
            Some(inst) => self
                .labels
                .iter()
                .zip(inst)
                .map(|(&c, &i)| (u64::from(c) << 32) | u64::from(i))
                .collect(),
            None => self.labels.iter().map(|&c| u64::from(c) << 32).collect(),
        }
    }

    pub fn flip_horizontal(&self) -> Self {
        let w = self.width;
        let flip = |v: &Vec<u32>| {
            (0..v.len()).map(|i| v[(i / w) * w + w - 1 - i % w]).collect::<Vec<_>>()
        };
        Self {
            width: w,
            height: self.height,
            labels: flip(&self.labels),
            instances: self.instances.as_ref().map(flip),
        }
    }
}

/// Rectified stereo rig. The principal point is the image center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    /// meters
    pub baseline: f64,
    /// pixels
    pub focal_length: f64,
}

impl Default for CameraModel {
    /// Cityscapes-like rig.
    fn default() -> Self {
        Self { baseline: 0.209313, focal_length: 2262.52 }
    }
}

impl CameraModel {
    pub fn new(baseline: f64, focal_length: f64) -> Result<Self> {
        let cam = Self { baseline, focal_length };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.baseline > 0.0 && self.baseline.is_finite()) {
            return Err(Error::InvalidParameter(format!("camera baseline {} must be > 0", self.baseline)));
        }
        if !(self.focal_length > 0.0 && self.focal_length.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "camera focal length {} must be > 0",
                self.focal_length
            )));
        }
        Ok(())
    }

    /// Ratio of Euclidean ray length to z-depth at pixel `(x, y)`.
    pub fn ray_length_factor(&self, x: usize, y: usize, width: usize, height: usize) -> f64 {
        let dx = x as f64 - (width as f64 - 1.0) / 2.0;
        let dy = y as f64 - (height as f64 - 1.0) / 2.0;
        (1.0 + (dx * dx + dy * dy) / (self.focal_length * self.focal_length)).sqrt()
    }
}

/// Planar z-depth `baseline * focal / d`; zero or missing disparity maps to [`MISSING`].
pub fn disparity_to_depth(d: &DisparityMap, cam: &CameraModel) -> DepthMap {
    let bf = cam.baseline * cam.focal_length;
    let data = d
        .data()
        .iter()
        .map(|&v| if is_missing(v) || v <= 0.0 { MISSING } else { bf / v })
        .collect();
    DepthMap { width: d.width(), height: d.height(), data }
}

/// Inverse of [`disparity_to_depth`] on finite pixels.
pub fn depth_to_disparity(depth: &DepthMap, cam: &CameraModel) -> DisparityMap {
    let bf = cam.baseline * cam.focal_length;
    let data = depth
        .data()
        .iter()
        .map(|&z| if is_missing(z) { MISSING } else { bf / z })
        .collect();
    DisparityMap { width: depth.width(), height: depth.height(), data }
}

/// Converts planar z-depth to distance along the pixel's viewing ray.
pub fn z_depth_to_distance(depth: &DepthMap, cam: &CameraModel) -> DepthMap {
    let (w, h) = depth.dims();
    let data = depth
        .data()
        .iter()
        .enumerate()
        .map(|(i, &z)| if is_missing(z) { MISSING } else { z * cam.ray_length_factor(i % w, i / w, w, h) })
        .collect();
    DepthMap { width: w, height: h, data }
}

/// `t = exp(-beta * l)` per pixel, missing pixels stay missing.
pub fn transmittance_from_depth(depth: &DepthMap, beta: f64) -> Result<TransmittanceMap> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("attenuation coefficient {beta} must be >= 0")));
    }
    let data = depth
        .data()
        .iter()
        .map(|&l| if is_missing(l) { MISSING } else { transmittance(beta, l) })
        .collect();
    Ok(TransmittanceMap { width: depth.width(), height: depth.height(), data })
}

#[inline]
pub(crate) fn transmittance(beta: f64, distance: f64) -> f64 {
    (-beta * distance).exp().max(MIN_TRANSMITTANCE)
}


#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn single(v: f64) -> DisparityMap {
        DisparityMap::new(1, 1, vec![v]).unwrap()
    }

    #[test]
    fn disparity_to_depth_arithmetic() {
        let cam = CameraModel::new(0.5, 1000.0).unwrap();
        assert_relative_eq!(disparity_to_depth(&single(100.0), &cam).get(0, 0), 5.0);
        assert!(is_missing(disparity_to_depth(&single(MISSING), &cam).get(0, 0)));
        assert!(is_missing(disparity_to_depth(&single(0.0), &cam).get(0, 0)));
    }

    #[test]
    fn camera_rejects_non_positive() {
        assert!(CameraModel::new(0.0, 10.0).is_err());
        assert!(CameraModel::new(1.0, -1.0).is_err());
    }

    #[test]
    fn transmittance_values() {
        let d = DepthMap::new(3, 1, vec![100.0, 149.8, MISSING]).unwrap();
        let t0 = transmittance_from_depth(&d, 0.0).unwrap();
        assert_eq!(t0.get(0, 0), 1.0);
        assert_eq!(t0.get(1, 0), 1.0);
        assert!(is_missing(t0.get(2, 0)));

        let t = transmittance_from_depth(&d, 0.01).unwrap();
        assert_relative_eq!(t.get(0, 0), 0.367879, epsilon = 1e-6);
        let t = transmittance_from_depth(&d, 0.02).unwrap();
        assert_relative_eq!(t.get(1, 0), 0.0500, epsilon = 1e-4);
        assert!(transmittance_from_depth(&d, -0.01).is_err());
    }

    #[test]
    fn transmittance_never_underflows_to_zero() {
        let d = DepthMap::new(1, 1, vec![1e6]).unwrap();
        let t = transmittance_from_depth(&d, 0.02).unwrap();
        assert!(t.is_complete());
    }

    #[test]
    fn ray_factor_is_one_at_center() {
        let cam = CameraModel::new(0.2, 500.0).unwrap();
        assert_eq!(cam.ray_length_factor(2, 2, 5, 5), 1.0);
        assert!(cam.ray_length_factor(0, 0, 5, 5) > 1.0);
    }

    #[test]
    fn map_validation() {
        assert!(DepthMap::new(1, 1, vec![0.0]).is_err());
        assert!(DisparityMap::new(1, 1, vec![-1.0]).is_err());
        assert!(TransmittanceMap::new(1, 1, vec![1.5]).is_err());
        assert!(TransmittanceMap::new(2, 1, vec![0.5]).is_err());
    }

    proptest! {
        #[test]
        fn transmittance_strictly_decreasing(beta in 1e-4f64..0.1, a in 0.1f64..500.0, gap in 0.01f64..100.0) {
            let d = DepthMap::new(2, 1, vec![a, a + gap]).unwrap();
            let t = transmittance_from_depth(&d, beta).unwrap();
            prop_assert!(t.get(1, 0) < t.get(0, 0));
        }

        #[test]
        fn disparity_depth_round_trip(vals in proptest::collection::vec(0.01f64..300.0, 1..64)) {
            let cam = CameraModel::default();
            let n = vals.len();
            let d = DisparityMap::new(n, 1, vals.clone()).unwrap();
            let back = depth_to_disparity(&disparity_to_depth(&d, &cam), &cam);
            for (a, b) in vals.iter().zip(back.data()) {
                prop_assert!(((a - b) / a).abs() < 1e-6);
            }
        }
    }
}
