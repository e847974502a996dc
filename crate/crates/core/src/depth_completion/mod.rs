//! Depth denoising and completion: SLIC superpixels over the CIELAB image,
//! one RANSAC depth plane per superpixel, replacement of missing and
//! outlying depths by the plane, and conversion to an initial transmittance.

mod ransac;
mod slic;

pub use ransac::{fit_plane_ransac, Plane};
pub use slic::{slic_superpixels, SuperpixelSegmentation};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::imaging::{
    disparity_to_depth, is_missing, transmittance_from_depth, z_depth_to_distance, CameraModel, DepthMap,
    DisparityMap, ImageLab, TransmittanceMap,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompletionParams {
    /// Requested superpixel count, clamped to the pixel count.
    pub superpixels: usize,
    pub compactness: f64,
    pub ransac_iters: usize,
    /// meters
    pub inlier_tol: f64,
    /// Share of valid depths a superpixel needs to get its own plane.
    pub min_valid_fraction: f64,
    pub seed: u64,
}

impl Default for CompletionParams {
    fn default() -> Self {
        Self {
            superpixels: 2048,
            compactness: 10.0,
            ransac_iters: 500,
            inlier_tol: 0.5,
            min_valid_fraction: 0.2,
            seed: 0,
        }
    }
}

impl CompletionParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.superpixels == 0 {
            return bad("superpixels must be >= 1".into());
        }
        if !(self.compactness > 0.0 && self.compactness.is_finite()) {
            return bad(format!("compactness {} must be > 0", self.compactness));
        }
        if self.ransac_iters == 0 {
            return bad("ransac_iters must be >= 1".into());
        }
        if !(self.inlier_tol > 0.0 && self.inlier_tol.is_finite()) {
            return bad(format!("inlier_tol {} must be > 0", self.inlier_tol));
        }
        if !(self.min_valid_fraction > 0.0 && self.min_valid_fraction <= 1.0) {
            return bad(format!("min_valid_fraction {} must be in (0, 1]", self.min_valid_fraction));
        }
        Ok(())
    }
}

fn superpixel_rng(seed: u64, id: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Completed planar z-depth (meters) for every pixel.
///
/// Superpixels with at least `min_valid_fraction` valid depths get their own
/// RANSAC plane; the rest borrow the plane of the superpixel with the nearest
/// centroid. Missing pixels, and valid pixels farther than `inlier_tol` from
/// their own superpixel's plane, take the plane depth, clamped to the range
/// of valid input depths.
pub fn complete_depth(d: &DisparityMap, img: &ImageLab, cam: &CameraModel, params: &CompletionParams) -> Result<DepthMap> {
    check_dims("disparity vs image", img.dims(), d.dims())?;
    cam.validate()?;
    params.validate()?;
    let (w, h) = d.dims();
    if w * h == 0 {
        return Err(Error::EmptyImage);
    }

    let z = disparity_to_depth(d, cam);
    let (zmin, zmax) = z
        .data()
        .iter()
        .filter(|v| !is_missing(**v))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if zmin > zmax {
        return Err(Error::NoValidSuperpixel);
    }

    let seg = slic_superpixels(img, params.superpixels.min(w * h), params.compactness)?;
    let members = seg.members();

    // independent per superpixel; rng seeded by id so the schedule does not matter
    let own: Vec<Option<Plane>> = members
        .par_iter()
        .enumerate()
        .map(|(id, pix)| {
            let pts: Vec<[f64; 3]> = pix
                .iter()
                .filter(|&&i| !is_missing(z.data()[i]))
                .map(|&i| [(i % w) as f64, (i / w) as f64, z.data()[i]])
                .collect();
            if pts.len() < 3 || (pts.len() as f64) < params.min_valid_fraction * pix.len() as f64 {
                return None;
            }
            let mut rng = superpixel_rng(params.seed, id);
            fit_plane_ransac(&pts, params.ransac_iters, params.inlier_tol, &mut rng).ok()
        })
        .collect();

    let centroids = seg.centroids();
    let fitted: Vec<usize> = (0..own.len()).filter(|&i| own[i].is_some()).collect();
    if fitted.is_empty() {
        return Err(Error::NoValidSuperpixel);
    }
    let planes: Vec<Plane> = (0..own.len())
        .map(|i| match own[i] {
            Some(p) => p,
            None => {
                let (cx, cy) = centroids[i];
                let nearest = fitted
                    .iter()
                    .copied()
                    .min_by(|&a, &b| {
                        let da = (centroids[a].0 - cx).powi(2) + (centroids[a].1 - cy).powi(2);
                        let db = (centroids[b].0 - cx).powi(2) + (centroids[b].1 - cy).powi(2);
                        da.total_cmp(&db)
                    })
                    .expect("at least one fitted superpixel");
                own[nearest].expect("fitted")
            }
        })
        .collect();

    let labels = seg.labels();
    let data = z
        .data()
        .par_iter()
        .enumerate()
        .map(|(i, &zi)| {
            let sp = labels[i] as usize;
            let plane_z = || planes[sp].eval((i % w) as f64, (i / w) as f64).clamp(zmin, zmax);
            if is_missing(zi) {
                plane_z()
            } else if own[sp].is_some() && (zi - planes[sp].eval((i % w) as f64, (i / w) as f64)).abs() > params.inlier_tol {
                plane_z()
            } else {
                zi
            }
        })
        .collect();
    DepthMap::new(w, h, data)
}

/// Initial complete transmittance `t_hat = exp(-beta * l)` from a noisy,
/// incomplete disparity map, with `l` the ray distance of the completed depth.
pub fn complete_transmittance(
    d: &DisparityMap,
    img: &ImageLab,
    cam: &CameraModel,
    beta: f64,
    params: &CompletionParams,
) -> Result<TransmittanceMap> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("attenuation coefficient {beta} must be >= 0")));
    }
    let depth = complete_depth(d, img, cam, params)?;
    transmittance_from_depth(&z_depth_to_distance(&depth, cam), beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{depth_to_disparity, srgb_to_lab, ImageRgb, MISSING};
    use rand::Rng;

    const W: usize = 64;
    const H: usize = 48;

    fn cam() -> CameraModel {
        CameraModel::new(0.2, 500.0).unwrap()
    }

    fn planar_depth() -> DepthMap {
        DepthMap::from_fn(W, H, |x, y| 12.0 + 0.05 * x as f64 + 0.08 * y as f64).unwrap()
    }

    fn params() -> CompletionParams {
        CompletionParams { superpixels: 24, ..Default::default() }
    }

    fn lab() -> ImageLab {
        srgb_to_lab(&ImageRgb::filled(W, H, [0.5, 0.45, 0.4]))
    }

    fn truth_t(beta: f64) -> TransmittanceMap {
        transmittance_from_depth(&z_depth_to_distance(&planar_depth(), &cam()), beta).unwrap()
    }

    #[test]
    fn noiseless_complete_input_is_unchanged() {
        let d = depth_to_disparity(&planar_depth(), &cam());
        let t = complete_transmittance(&d, &lab(), &cam(), 0.01, &params()).unwrap();
        let truth = transmittance_from_depth(&z_depth_to_distance(&disparity_to_depth(&d, &cam()), &cam()), 0.01).unwrap();
        for (a, b) in t.data().iter().zip(truth.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn idempotent_on_planar_input() {
        let d = depth_to_disparity(&planar_depth(), &cam());
        let once = complete_depth(&d, &lab(), &cam(), &params()).unwrap();
        let twice = complete_depth(&depth_to_disparity(&once, &cam()), &lab(), &cam(), &params()).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn hole_is_filled_from_plane() {
        let mut raw = depth_to_disparity(&planar_depth(), &cam()).into_data();
        for y in 20..30 {
            for x in 30..40 {
                raw[y * W + x] = MISSING;
            }
        }
        let d = DisparityMap::new(W, H, raw).unwrap();
        let t = complete_transmittance(&d, &lab(), &cam(), 0.01, &params()).unwrap();
        assert!(t.is_complete());
        let err = t.data().iter().zip(truth_t(0.01).data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-3, "max err {err}");
    }

    #[test]
    fn salt_and_pepper_outliers_are_replaced() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut raw = depth_to_disparity(&planar_depth(), &cam()).into_data();
        for v in raw.iter_mut() {
            if rng.gen_bool(0.05) {
                *v = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(20.0..60.0) };
            }
        }
        let d = DisparityMap::new(W, H, raw).unwrap();
        let t = complete_transmittance(&d, &lab(), &cam(), 0.01, &params()).unwrap();
        let mut errs: Vec<f64> = t.data().iter().zip(truth_t(0.01).data()).map(|(a, b)| (a - b).abs()).collect();
        errs.sort_by(f64::total_cmp);
        let p99 = errs[(errs.len() as f64 * 0.99) as usize - 1];
        assert!(p99 < 1e-2, "p99 {p99}");
    }

    #[test]
    fn sparse_superpixels_inherit_planes() {
        // right third has no disparity at all
        let mut raw = depth_to_disparity(&planar_depth(), &cam()).into_data();
        for (i, v) in raw.iter_mut().enumerate() {
            if i % W >= 44 {
                *v = MISSING;
            }
        }
        let d = DisparityMap::new(W, H, raw).unwrap();
        let t = complete_transmittance(&d, &lab(), &cam(), 0.01, &params()).unwrap();
        assert!(t.is_complete());
    }

    #[test]
    fn all_missing_is_an_error() {
        let d = DisparityMap::filled(8, 8, MISSING);
        let lab = srgb_to_lab(&ImageRgb::filled(8, 8, [0.5; 3]));
        assert!(matches!(complete_depth(&d, &lab, &cam(), &params()), Err(Error::NoValidSuperpixel)));
    }

    #[test]
    fn dimension_mismatch() {
        let d = DisparityMap::filled(8, 8, 10.0);
        let lab = srgb_to_lab(&ImageRgb::filled(8, 7, [0.5; 3]));
        assert!(matches!(complete_depth(&d, &lab, &cam(), &params()), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn parameter_validation() {
        assert!(CompletionParams { min_valid_fraction: 0.0, ..Default::default() }.validate().is_err());
        assert!(CompletionParams { min_valid_fraction: 1.5, ..Default::default() }.validate().is_err());
        assert!(CompletionParams { inlier_tol: -1.0, ..Default::default() }.validate().is_err());
        assert!(CompletionParams::default().validate().is_ok());
    }
}
