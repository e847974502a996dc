//! Homogeneous fog: the optical model `I = R t + L (1 - t)`, the
//! visibility bound on `beta`, atmospheric light estimation, and the full
//! clear-scene-to-foggy-scene pipeline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depth_completion::{complete_transmittance, CompletionParams};
use crate::dual_bilateral::{filter_grid, FilterParams};
use crate::error::{check_dims, Error, Result, StageContext};
use crate::imaging::{
    linear_to_srgb, srgb_to_lab, srgb_to_linear, CameraModel, DisparityMap, ImageRgb, SemanticLabeling,
    TransmittanceMap,
};

/// Smallest attenuation coefficient that still counts as fog (MOR under 1 km).
pub const MIN_FOG_BETA: f64 = 2.996e-3;

/// Contrast threshold constant: MOR = `MOR_CONSTANT / beta`.
pub const MOR_CONSTANT: f64 = 2.996;

/// Dark-channel window side, pixels.
pub const DARK_CHANNEL_WINDOW: usize = 15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FogConfig {
    /// Attenuation coefficient, 1/m. Zero means no fog.
    pub beta: f64,
    /// sRGB atmospheric light; estimated from the clear image when unset.
    pub atmospheric_light: Option<[f64; 3]>,
    /// Permit `0 < beta < MIN_FOG_BETA` (haze rather than fog).
    pub allow_haze: bool,
    /// Share of darkest-channel-brightest pixels considered for the light.
    pub light_quantile: f64,
}

impl Default for FogConfig {
    fn default() -> Self {
        Self { beta: 0.01, atmospheric_light: None, allow_haze: false, light_quantile: 0.001 }
    }
}

impl FogConfig {
    pub fn validate(&self) -> Result<()> {
        validate_beta(self.beta, self.allow_haze)?;
        if let Some(l) = self.atmospheric_light {
            if l.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::InvalidParameter(format!("atmospheric light {l:?} must lie in [0, 1]")));
            }
        }
        if !(self.light_quantile > 0.0 && self.light_quantile <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "light_quantile {} must be in (0, 1]",
                self.light_quantile
            )));
        }
        Ok(())
    }
}

/// Accepts `beta == 0` or `beta >= MIN_FOG_BETA`; haze in between only when allowed.
pub fn validate_beta(beta: f64, allow_haze: bool) -> Result<()> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("attenuation coefficient {beta} must be >= 0")));
    }
    if beta > 0.0 && beta < MIN_FOG_BETA && !allow_haze {
        return Err(Error::BelowFogBound { beta });
    }
    Ok(())
}

/// Meteorological optical range in meters.
pub fn mor_from_beta(beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta {beta} must be > 0")));
    }
    Ok(MOR_CONSTANT / beta)
}

pub fn beta_from_mor(mor: f64) -> Result<f64> {
    if !(mor > 0.0 && mor.is_finite()) {
        return Err(Error::InvalidParameter(format!("MOR {mor} must be > 0")));
    }
    Ok(MOR_CONSTANT / mor)
}

pub(crate) fn luminance(rgb: [f64; 3]) -> f64 {
    0.2126 * rgb[0] + 0.7152 * rgb[1] + 0.0722 * rgb[2]
}

/// Separable min filter over a square window of side `2 * radius + 1`,
/// truncated at the border.
pub(crate) fn min_filter(src: &[f64], w: usize, h: usize, radius: usize) -> Vec<f64> {
    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(w - 1);
            rows[y * w + x] = src[y * w + lo..=y * w + hi].iter().cloned().fold(f64::INFINITY, f64::min);
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(h - 1);
        for x in 0..w {
            out[y * w + x] = (lo..=hi).map(|yy| rows[yy * w + x]).fold(f64::INFINITY, f64::min);
        }
    }
    out
}

/// Per-pixel channel minimum, min-filtered over a
/// [`DARK_CHANNEL_WINDOW`]-pixel window.
pub fn dark_channel(img: &ImageRgb) -> Vec<f64> {
    let (w, h) = img.dims();
    if w * h == 0 {
        return Vec::new();
    }
    let mins: Vec<f64> = img.pixels().map(|p| p[0].min(p[1]).min(p[2])).collect();
    min_filter(&mins, w, h, DARK_CHANNEL_WINDOW / 2)
}

/// Dark-channel atmospheric light: among the `quantile` share of pixels with
/// the highest dark channel (at least one), the color of the brightest.
pub fn estimate_atmospheric_light(img: &ImageRgb, quantile: f64) -> Result<[f64; 3]> {
    if img.is_empty() {
        return Err(Error::EmptyImage);
    }
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(Error::InvalidParameter(format!("quantile {quantile} must be in (0, 1]")));
    }
    let dark = dark_channel(img);
    let n = dark.len();
    let k = ((quantile * n as f64).ceil() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dark[b].total_cmp(&dark[a]).then(a.cmp(&b)));
    let best = order[..k]
        .iter()
        .copied()
        .reduce(|a, b| if luminance(img.pixel_at(b)) > luminance(img.pixel_at(a)) { b } else { a })
        .expect("k >= 1");
    Ok(img.pixel_at(best))
}

/// Composites fog over `clear` in linear RGB. Pixels with `t == 1` are copied
/// unchanged.
pub fn synthesize_fog(clear: &ImageRgb, t: &TransmittanceMap, light: [f64; 3]) -> Result<ImageRgb> {
    check_dims("transmittance vs image", clear.dims(), t.dims())?;
    if light.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::InvalidParameter(format!("atmospheric light {light:?} must lie in [0, 1]")));
    }
    if t.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidParameter("transmittance must be complete and within [0, 1]".into()));
    }
    let l_lin = light.map(srgb_to_linear);
    let data: Vec<f64> = clear
        .data()
        .par_chunks(3)
        .zip(t.data().par_iter())
        .flat_map_iter(|(px, &ti)| {
            let out: [f64; 3] = if ti == 1.0 {
                [px[0], px[1], px[2]]
            } else {
                std::array::from_fn(|c| {
                    let lin = srgb_to_linear(px[c]) * ti + l_lin[c] * (1.0 - ti);
                    linear_to_srgb(lin).clamp(0.0, 1.0)
                })
            };
            out
        })
        .collect();
    ImageRgb::new(clear.width(), clear.height(), data)
}

/// Everything the pipeline produced for one scene.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub foggy: ImageRgb,
    /// Filtered transmittance actually used for compositing.
    pub transmittance: TransmittanceMap,
    pub atmospheric_light: [f64; 3],
}

/// Full clear-to-foggy pipeline: CIELAB conversion, depth completion,
/// dual-reference filtering, compositing. Errors name the failing stage.
pub fn simulate_scene_parts(
    clear: &ImageRgb,
    d: &DisparityMap,
    h: &SemanticLabeling,
    cam: &CameraModel,
    fog: &FogConfig,
    comp: &CompletionParams,
    filt: &FilterParams,
) -> Result<Simulation> {
    fog.validate().stage("validation")?;
    check_dims("disparity vs image", clear.dims(), d.dims()).stage("validation")?;
    check_dims("labels vs image", clear.dims(), h.dims()).stage("validation")?;
    let light = match fog.atmospheric_light {
        Some(l) => l,
        None => estimate_atmospheric_light(clear, fog.light_quantile).stage("atmospheric light")?,
    };
    if fog.beta == 0.0 {
        let (w, ht) = clear.dims();
        return Ok(Simulation {
            foggy: clear.clone(),
            transmittance: TransmittanceMap::filled(w, ht, 1.0),
            atmospheric_light: light,
        });
    }
    let lab = srgb_to_lab(clear);
    let t_hat = complete_transmittance(d, &lab, cam, fog.beta, comp).stage("depth completion")?;
    let t = filter_grid(&t_hat, &lab, h, filt).stage("filtering")?;
    let foggy = synthesize_fog(clear, &t, light).stage("compositing")?;
    Ok(Simulation { foggy, transmittance: t, atmospheric_light: light })
}

pub fn simulate_scene(
    clear: &ImageRgb,
    d: &DisparityMap,
    h: &SemanticLabeling,
    cam: &CameraModel,
    fog: &FogConfig,
    comp: &CompletionParams,
    filt: &FilterParams,
) -> Result<ImageRgb> {
    simulate_scene_parts(clear, d, h, cam, fog, comp, filt).map(|s| s.foggy)
}
