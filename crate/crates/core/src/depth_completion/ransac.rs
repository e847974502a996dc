use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `depth = a * x + b * y + c`, with `x`, `y` in pixels and depth in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Plane {
    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.a * x + self.b * y + self.c
    }

    #[inline]
    pub fn residual(&self, p: &[f64; 3]) -> f64 {
        p[2] - self.eval(p[0], p[1])
    }

    /// Exact plane through three points, `None` when they are collinear in `(x, y)`.
    pub fn through(p: &[f64; 3], q: &[f64; 3], r: &[f64; 3]) -> Option<Plane> {
        let (ux, uy, uz) = (q[0] - p[0], q[1] - p[1], q[2] - p[2]);
        let (vx, vy, vz) = (r[0] - p[0], r[1] - p[1], r[2] - p[2]);
        let det = ux * vy - vx * uy;
        let scale = (ux.abs() + uy.abs()) * (vx.abs() + vy.abs());
        if det.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return None;
        }
        let a = (uz * vy - vz * uy) / det;
        let b = (ux * vz - vx * uz) / det;
        let c = p[2] - a * p[0] - b * p[1];
        Some(Plane { a, b, c }).filter(|pl| pl.a.is_finite() && pl.b.is_finite() && pl.c.is_finite())
    }

    /// Least-squares fit, `None` when the points are collinear in `(x, y)`.
    pub fn least_squares<'a>(points: impl IntoIterator<Item = &'a [f64; 3]> + Clone) -> Option<Plane> {
        let mut n = 0.0;
        let (mut mx, mut my, mut mz) = (0.0, 0.0, 0.0);
        for p in points.clone() {
            n += 1.0;
            mx += p[0];
            my += p[1];
            mz += p[2];
        }
        if n < 3.0 {
            return None;
        }
        mx /= n;
        my /= n;
        mz /= n;
        let (mut sxx, mut sxy, mut syy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for p in points {
            let (dx, dy, dz) = (p[0] - mx, p[1] - my, p[2] - mz);
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
            sxz += dx * dz;
            syz += dy * dz;
        }
        let det = sxx * syy - sxy * sxy;
        if !(det > 1e-10 * sxx * syy) {
            return None;
        }
        let a = (sxz * syy - syz * sxy) / det;
        let b = (syz * sxx - sxz * sxy) / det;
        Some(Plane { a, b, c: mz - a * mx - b * my })
    }
}

/// RANSAC plane fit: the minimal-sample plane with the most inliers
/// (`|residual| <= tol`, earliest wins ties) is refit by least squares on
/// its inliers.
pub fn fit_plane_ransac<R: Rng + ?Sized>(points: &[[f64; 3]], iters: usize, tol: f64, rng: &mut R) -> Result<Plane> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints(points.len()));
    }
    if iters == 0 {
        return Err(Error::InvalidParameter("ransac_iters must be >= 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("inlier tolerance {tol} must be > 0")));
    }

    let mut best: Option<(usize, Plane)> = None;
    for _ in 0..iters {
        let idx = rand::seq::index::sample(rng, points.len(), 3);
        let Some(plane) = Plane::through(&points[idx.index(0)], &points[idx.index(1)], &points[idx.index(2)]) else {
            continue;
        };
        let inliers = points.iter().filter(|p| plane.residual(p).abs() <= tol).count();
        if best.is_none_or(|(n, _)| inliers > n) {
            best = Some((inliers, plane));
        }
    }

    let (_, plane) = best.ok_or(Error::DegenerateSamples(iters))?;
    let inliers = points.iter().filter(|p| plane.residual(p).abs() <= tol);
    Ok(Plane::least_squares(inliers).unwrap_or(plane))
}
