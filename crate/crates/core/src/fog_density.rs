//! Fog density estimation: five hand-crafted image statistics and a ridge
//! regressor mapping them to the attenuation coefficient, plus ranking of
//! a dataset by estimated density.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fog_synthesis::{dark_channel, luminance};
use crate::imaging::ImageRgb;

pub const FEATURE_DIM: usize = 5;
pub const FEATURE_NAMES: [&str; FEATURE_DIM] =
    ["dark_channel", "local_contrast", "gradient", "bright_fraction", "saturation"];
pub const SCHEMA_VERSION: u32 = 1;

/// Side of the local-contrast window.
pub const CONTRAST_WINDOW: usize = 7;
/// Luminance above which a pixel counts as bright.
pub const BRIGHT_THRESHOLD: f64 = 0.7;

pub type FeatureVector = [f64; FEATURE_DIM];

fn luma(img: &ImageRgb) -> Vec<f64> {
    img.pixels().map(luminance).collect()
}

/// Mean over pixels of the luminance standard deviation in a square window
/// (truncated at the border). Sums run over luminance minus its global mean,
/// so flat images give exactly zero.
fn local_contrast(y: &[f64], w: usize, h: usize, radius: usize) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    // integral images of the centered signal and its square
    let stride = w + 1;
    let mut s1 = vec![0.0; stride * (h + 1)];
    let mut s2 = vec![0.0; stride * (h + 1)];
    for r in 0..h {
        for c in 0..w {
            let v = y[r * w + c] - mean;
            let i = (r + 1) * stride + c + 1;
            s1[i] = v + s1[i - 1] + s1[i - stride] - s1[i - stride - 1];
            s2[i] = v * v + s2[i - 1] + s2[i - stride] - s2[i - stride - 1];
        }
    }
    let rect = |s: &[f64], r0: usize, r1: usize, c0: usize, c1: usize| {
        s[r1 * stride + c1] - s[r0 * stride + c1] - s[r1 * stride + c0] + s[r0 * stride + c0]
    };
    let mut total = 0.0;
    for r in 0..h {
        let (r0, r1) = (r.saturating_sub(radius), (r + radius + 1).min(h));
        for c in 0..w {
            let (c0, c1) = (c.saturating_sub(radius), (c + radius + 1).min(w));
            let n = ((r1 - r0) * (c1 - c0)) as f64;
            let m = rect(&s1, r0, r1, c0, c1) / n;
            let var = rect(&s2, r0, r1, c0, c1) / n - m * m;
            total += var.max(0.0).sqrt();
        }
    }
    total / y.len() as f64
}

/// Mean magnitude of the central-difference luminance gradient, with
/// replicated borders.
fn mean_gradient(y: &[f64], w: usize, h: usize) -> f64 {
    let mut total = 0.0;
    for r in 0..h {
        for c in 0..w {
            let gx = (y[r * w + (c + 1).min(w - 1)] - y[r * w + c.saturating_sub(1)]) / 2.0;
            let gy = (y[(r + 1).min(h - 1) * w + c] - y[r.saturating_sub(1) * w + c]) / 2.0;
            total += (gx * gx + gy * gy).sqrt();
        }
    }
    total / y.len() as f64
}

fn saturation(p: [f64; 3]) -> f64 {
    let max = p[0].max(p[1]).max(p[2]);
    let min = p[0].min(p[1]).min(p[2]);
    if max > 0.0 {
        (max - min) / max
    } else {
        0.0
    }
}

/// Features in [`FEATURE_NAMES`] order.
pub fn extract_features(img: &ImageRgb) -> Result<FeatureVector> {
    let (w, h) = img.dims();
    if w * h == 0 {
        return Err(Error::EmptyImage);
    }
    let n = (w * h) as f64;
    let y = luma(img);
    Ok([
        dark_channel(img).iter().sum::<f64>() / n,
        local_contrast(&y, w, h, CONTRAST_WINDOW / 2),
        mean_gradient(&y, w, h),
        y.iter().filter(|&&v| v > BRIGHT_THRESHOLD).count() as f64 / n,
        img.pixels().map(saturation).sum::<f64>() / n,
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityModel {
    pub schema_version: u32,
    pub features: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub ridge: f64,
}

impl DensityModel {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidModel(format!(
                "schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.features != FEATURE_NAMES {
            return Err(Error::InvalidModel(format!("feature list {:?} does not match {FEATURE_NAMES:?}", self.features)));
        }
        if self.weights.len() != FEATURE_DIM || !self.weights.iter().chain([&self.bias]).all(|v| v.is_finite()) {
            return Err(Error::InvalidModel(format!("need {FEATURE_DIM} finite weights and a finite bias")));
        }
        Ok(())
    }

    pub fn predict(&self, f: &FeatureVector) -> f64 {
        let raw = self.bias + self.weights.iter().zip(f).map(|(w, x)| w * x).sum::<f64>();
        raw.max(0.0)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Unweighted ridge fit; see [`fit_density_regressor_weighted`].
pub fn fit_density_regressor(samples: &[(FeatureVector, f64)], ridge: f64) -> Result<DensityModel> {
    let weighted: Vec<_> = samples.iter().map(|&(f, b)| (f, b, 1.0)).collect();
    fit_density_regressor_weighted(&weighted, ridge)
}

/// Weighted ridge least squares on `(features, beta, weight)`.
///
/// Features are centered and scaled by their weighted standard deviation
/// before the ridge penalty is applied, and the solution is mapped back to
/// raw feature units. The bias is not penalized. A weight of `k` is
/// equivalent to repeating the sample `k` times.
pub fn fit_density_regressor_weighted(samples: &[(FeatureVector, f64, f64)], ridge: f64) -> Result<DensityModel> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidParameter(format!("ridge {ridge} must be >= 0")));
    }
    if samples.len() < FEATURE_DIM + 1 {
        return Err(Error::InvalidParameter(format!(
            "need at least {} samples, got {}",
            FEATURE_DIM + 1,
            samples.len()
        )));
    }
    if samples.iter().any(|s| !(s.2 > 0.0 && s.2.is_finite()) || !s.1.is_finite() || s.0.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidParameter("samples must be finite with positive weights".into()));
    }

    let wsum: f64 = samples.iter().map(|s| s.2).sum();
    let mut mean = [0.0; FEATURE_DIM];
    let mut ymean = 0.0;
    for (f, y, wt) in samples {
        for j in 0..FEATURE_DIM {
            mean[j] += wt * f[j] / wsum;
        }
        ymean += wt * y / wsum;
    }
    let mut scale = [0.0; FEATURE_DIM];
    for (f, _, wt) in samples {
        for j in 0..FEATURE_DIM {
            scale[j] += wt * (f[j] - mean[j]).powi(2) / wsum;
        }
    }
    let scale = scale.map(|v| if v > 0.0 { v.sqrt() } else { 1.0 });

    let mut a = DMatrix::<f64>::zeros(FEATURE_DIM, FEATURE_DIM);
    let mut b = DVector::<f64>::zeros(FEATURE_DIM);
    for (f, y, wt) in samples {
        let z: [f64; FEATURE_DIM] = std::array::from_fn(|j| (f[j] - mean[j]) / scale[j]);
        for r in 0..FEATURE_DIM {
            for c in 0..FEATURE_DIM {
                a[(r, c)] += wt * z[r] * z[c];
            }
            b[r] += wt * z[r] * (y - ymean);
        }
    }

    let eig = a.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.max();
    if ridge == 0.0 && eig.eigenvalues.min() <= 1e-12 * max_eig.max(f64::MIN_POSITIVE) {
        return Err(Error::RankDeficient);
    }
    for j in 0..FEATURE_DIM {
        a[(j, j)] += ridge;
    }
    let v = a.cholesky().ok_or(Error::RankDeficient)?.solve(&b);

    let weights: Vec<f64> = (0..FEATURE_DIM).map(|j| v[j] / scale[j]).collect();
    let bias = ymean - weights.iter().zip(&mean).map(|(w, m)| w * m).sum::<f64>();
    let model = DensityModel {
        schema_version: SCHEMA_VERSION,
        features: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        weights,
        bias,
        ridge,
    };
    model.validate()?;
    Ok(model)
}

/// Estimated attenuation coefficient, clamped at zero.
pub fn estimate_beta(model: &DensityModel, img: &ImageRgb) -> Result<f64> {
    model.validate()?;
    Ok(model.predict(&extract_features(img)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub image: String,
    pub beta_hat: f64,
    pub percentile: f64,
}

/// Ascending by estimated density.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct RankedDataset {
    pub entries: Vec<RankedEntry>,
}

impl RankedDataset {
    /// Ranks `(id, beta_hat)` pairs; equal estimates are ordered by id.
    pub fn from_estimates(mut estimates: Vec<(String, f64)>) -> Result<Self> {
        if estimates.is_empty() {
            return Err(Error::InvalidParameter("cannot rank an empty dataset".into()));
        }
        estimates.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        let n = estimates.len();
        let entries = estimates
            .into_iter()
            .enumerate()
            .map(|(rank, (image, beta_hat))| RankedEntry {
                image,
                beta_hat,
                percentile: if n > 1 { 100.0 * rank as f64 / (n - 1) as f64 } else { 0.0 },
            })
            .collect();
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One compact JSON object per line.
    pub fn to_json_lines(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("plain struct serializes") + "\n")
            .collect()
    }

    pub fn from_json_lines(text: &str, path: &Path) -> Result<Self> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::json(path, e)))
            .collect::<Result<_>>()?;
        Ok(Self { entries })
    }
}

/// Estimates density per image (in parallel) and ranks the set.
pub fn rank_dataset(model: &DensityModel, images: &[(String, ImageRgb)]) -> Result<RankedDataset> {
    model.validate()?;
    let estimates = images
        .par_iter()
        .map(|(id, img)| Ok((id.clone(), estimate_beta(model, img)?)))
        .collect::<Result<Vec<_>>>()?;
    RankedDataset::from_estimates(estimates)
}
