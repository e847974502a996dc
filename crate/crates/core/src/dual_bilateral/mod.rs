//! Dual-reference cross-bilateral filter.
//!
//! Each output pixel is a weighted mean of the initial transmittance over a
//! spatial neighbourhood. The weight of neighbour `q` for pixel `p` is
//!
//! ```text
//! G_s(|q - p|) * ( [h(q) == h(p)] + mu * G_c(|J(q) - J(p)|) )
//! ```
//!
//! with `h` the semantic (or instance) reference and `J` the CIELAB image.
//! [`filter_exact`] evaluates this directly; [`filter_grid`] splits it into a
//! per-label 2D grid (the semantic term) and a 5D `(x, y, L*, a*, b*)` grid
//! (the color term) and combines both only at slicing time.

mod exact;
mod grid;

pub use exact::filter_exact;
pub use grid::{color_grid_bytes, filter_grid};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{is_missing, ImageLab, SemanticLabeling, TransmittanceMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    /// Weight of the color term relative to the semantic term.
    pub mu: f64,
    /// Spatial kernel scale, pixels.
    pub sigma_s: f64,
    /// Color kernel scale, CIELAB units.
    pub sigma_c: f64,
    /// Square neighbourhood radius for [`filter_exact`]; `ceil(3 * sigma_s)` when unset.
    pub window_radius: Option<usize>,
    /// Upper bound on a single color-grid allocation, MiB. Shared by the
    /// worker threads, so each tile gets `cap / threads`.
    pub grid_memory_cap_mib: usize,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self { mu: 5.0, sigma_s: 20.0, sigma_c: 10.0, window_radius: None, grid_memory_cap_mib: 1024 }
    }
}

impl FilterParams {
    pub fn radius(&self) -> usize {
        self.window_radius.unwrap_or_else(|| (3.0 * self.sigma_s).ceil() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return bad(format!("mu {} must be >= 0", self.mu));
        }
        if !(self.sigma_s > 0.0 && self.sigma_s.is_finite()) {
            return bad(format!("sigma_s {} must be > 0", self.sigma_s));
        }
        if !(self.sigma_c > 0.0 && self.sigma_c.is_finite()) {
            return bad(format!("sigma_c {} must be > 0", self.sigma_c));
        }
        if self.radius() < 1 {
            return bad("window_radius must be >= 1".into());
        }
        Ok(())
    }
}

fn check_inputs(t_hat: &TransmittanceMap, lab: &ImageLab, h: &SemanticLabeling, p: &FilterParams) -> Result<()> {
    p.validate()?;
    crate::error::check_dims("image vs transmittance", t_hat.dims(), lab.dims())?;
    crate::error::check_dims("labels vs transmittance", t_hat.dims(), h.dims())?;
    if t_hat.data().iter().any(|v| is_missing(*v)) {
        return Err(Error::InvalidParameter("transmittance to filter has missing pixels".into()));
    }
    Ok(())
}

#[inline]
fn gaussian(d2: f64, sigma: f64) -> f64 {
    (-d2 / (2.0 * sigma * sigma)).exp()
}
