use rayon::prelude::*;

use super::{check_inputs, gaussian, FilterParams};
use crate::error::Result;
use crate::imaging::{ImageLab, SemanticLabeling, TransmittanceMap};

/// Direct evaluation over the square window of radius `p.radius()`.
pub fn filter_exact(
    t_hat: &TransmittanceMap,
    lab: &ImageLab,
    h: &SemanticLabeling,
    p: &FilterParams,
) -> Result<TransmittanceMap> {
    check_inputs(t_hat, lab, h, p)?;
    let (w, ht) = t_hat.dims();
    let r = p.radius() as isize;
    let spatial: Vec<f64> = (0..=r).map(|d| gaussian((d * d) as f64, p.sigma_s)).collect();
    let keys = h.reference_keys();
    let t = t_hat.data();
    let j = lab.data();

    let mut out = vec![0.0; w * ht];
    out.par_chunks_mut(w.max(1)).enumerate().for_each(|(y, row)| {
        let y = y as isize;
        let qy0 = (y - r).max(0);
        let qy1 = (y + r).min(ht as isize - 1);
        for (x, o) in row.iter_mut().enumerate() {
            let x = x as isize;
            let pi = (y as usize) * w + x as usize;
            let (kp, jp) = (keys[pi], &j[3 * pi..3 * pi + 3]);
            let qx0 = (x - r).max(0);
            let qx1 = (x + r).min(w as isize - 1);
            let (mut num, mut den) = (0.0, 0.0);
            for qy in qy0..=qy1 {
                let gy = spatial[(qy - y).unsigned_abs()];
                for qx in qx0..=qx1 {
                    let qi = qy as usize * w + qx as usize;
                    let jq = &j[3 * qi..3 * qi + 3];
                    let dc = (jq[0] - jp[0]).powi(2) + (jq[1] - jp[1]).powi(2) + (jq[2] - jp[2]).powi(2);
                    let same = if keys[qi] == kp { 1.0 } else { 0.0 };
                    let wgt = gy * spatial[(qx - x).unsigned_abs()] * (same + p.mu * gaussian(dc, p.sigma_c));
                    num += wgt * t[qi];
                    den += wgt;
                }
            }
            *o = num / den;
        }
    });
    TransmittanceMap::new(w, ht, out.into_iter().map(|v: f64| v.clamp(0.0, 1.0)).collect())
}
