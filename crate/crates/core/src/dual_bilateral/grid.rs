use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{check_inputs, FilterParams};
use crate::error::{Error, Result};
use crate::imaging::{ImageLab, SemanticLabeling, TransmittanceMap};

/// Kernel scale in grid cells: cells are half the kernel sigma on every axis.
const SIGMA_CELLS: f64 = 2.0;
/// Taps either side of the center, covering 3 sigma.
const KERNEL_RADIUS: usize = 6;
/// Tile halo in cells: blur reach plus one cell of multilinear splat.
const HALO: i64 = KERNEL_RADIUS as i64 + 1;

/// Blur taps in cell units. Multilinear splat and slice each add a tent of
/// variance 1/6 cell^2, so the blur sigma is reduced to keep the total at
/// `SIGMA_CELLS`; taps are scaled so the per-axis mass matches an
/// unnormalized Gaussian of that sigma.
fn blur_kernel() -> Vec<f64> {
    let sigma_b2 = SIGMA_CELLS * SIGMA_CELLS - 2.0 / 6.0;
    let r = KERNEL_RADIUS as i64;
    let raw: Vec<f64> = (-r..=r).map(|k| (-((k * k) as f64) / (2.0 * sigma_b2)).exp()).collect();
    let scale = (2.0 * std::f64::consts::PI).sqrt() * SIGMA_CELLS / raw.iter().sum::<f64>();
    raw.into_iter().map(|g| g * scale).collect()
}

/// Dense D-dimensional grid of homogeneous `(sum, weight)` pairs. Cell
/// indices are absolute (`floor(coord)`), so grids built over overlapping
/// regions agree on shared cells.
struct Grid<const D: usize> {
    dims: [usize; D],
    strides: [usize; D],
    origin: [i64; D],
    data: Vec<f64>,
}

impl<const D: usize> Grid<D> {
    fn cell_count(lo: &[i64; D], hi: &[i64; D]) -> usize {
        (0..D).map(|d| (hi[d] - lo[d] + 2) as usize).product()
    }

    /// Covers every point whose floor lies in `lo..=hi`, plus the upper corner.
    fn new(lo: [i64; D], hi: [i64; D]) -> Self {
        let dims: [usize; D] = std::array::from_fn(|d| (hi[d] - lo[d] + 2) as usize);
        let mut strides = [1usize; D];
        for d in (0..D.saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * dims[d + 1];
        }
        let cells = dims.iter().product::<usize>();
        Self { dims, strides, origin: lo, data: vec![0.0; 2 * cells] }
    }

    #[inline]
    fn corners(&self, c: &[f64; D]) -> ([usize; D], [f64; D]) {
        let mut base = [0usize; D];
        let mut frac = [0.0; D];
        for d in 0..D {
            let f = c[d].floor();
            base[d] = (f as i64 - self.origin[d]) as usize;
            frac[d] = c[d] - f;
        }
        (base, frac)
    }

    fn splat(&mut self, c: &[f64; D], value: f64) {
        let (base, frac) = self.corners(c);
        for m in 0..1usize << D {
            let mut wgt = 1.0;
            let mut idx = 0;
            for d in 0..D {
                let up = (m >> d) & 1;
                wgt *= if up == 1 { frac[d] } else { 1.0 - frac[d] };
                idx += (base[d] + up) * self.strides[d];
            }
            if wgt > 0.0 {
                self.data[2 * idx] += wgt * value;
                self.data[2 * idx + 1] += wgt;
            }
        }
    }

    fn slice(&self, c: &[f64; D]) -> (f64, f64) {
        let (base, frac) = self.corners(c);
        let (mut num, mut den) = (0.0, 0.0);
        for m in 0..1usize << D {
            let mut wgt = 1.0;
            let mut idx = 0;
            for d in 0..D {
                let up = (m >> d) & 1;
                wgt *= if up == 1 { frac[d] } else { 1.0 - frac[d] };
                idx += (base[d] + up) * self.strides[d];
            }
            if wgt > 0.0 {
                num += wgt * self.data[2 * idx];
                den += wgt * self.data[2 * idx + 1];
            }
        }
        (num, den)
    }

    fn blur(&mut self, kernel: &[f64]) {
        for axis in 0..D {
            self.blur_axis(axis, kernel);
        }
    }

    fn blur_axis(&mut self, axis: usize, kernel: &[f64]) {
        let n = self.dims[axis];
        let s = self.strides[axis];
        let r = kernel.len() / 2;
        let outer = self.data.len() / 2 / (n * s);
        let mut line = vec![0.0; 2 * n];
        for o in 0..outer {
            for i in 0..s {
                let base = o * n * s + i;
                let mut nonzero = false;
                for k in 0..n {
                    let src = 2 * (base + k * s);
                    line[2 * k] = self.data[src];
                    line[2 * k + 1] = self.data[src + 1];
                    nonzero |= line[2 * k + 1] != 0.0;
                }
                if !nonzero {
                    continue;
                }
                for k in 0..n {
                    let (mut a, mut b) = (0.0, 0.0);
                    for j in k.saturating_sub(r)..=(k + r).min(n - 1) {
                        let g = kernel[j + r - k];
                        a += g * line[2 * j];
                        b += g * line[2 * j + 1];
                    }
                    let dst = 2 * (base + k * s);
                    self.data[dst] = a;
                    self.data[dst + 1] = b;
                }
            }
        }
    }
}

/// Semantic term: one 2D grid per reference key over that key's bounding
/// box. Returns per-pixel `(numerator, denominator)`.
fn semantic_terms(t: &[f64], keys: &[u64], w: usize, cell: f64, kernel: &[f64]) -> Vec<(f64, f64)> {
    let mut layers: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, &k) in keys.iter().enumerate() {
        layers.entry(k).or_default().push(i);
    }
    let coord = |i: usize| [(i % w) as f64 / cell, (i / w) as f64 / cell];

    let parts: Vec<Vec<(usize, f64, f64)>> = layers
        .into_par_iter()
        .map(|(_, pix)| {
            let mut lo = [i64::MAX; 2];
            let mut hi = [i64::MIN; 2];
            for &i in &pix {
                let c = coord(i);
                for d in 0..2 {
                    lo[d] = lo[d].min(c[d].floor() as i64);
                    hi[d] = hi[d].max(c[d].floor() as i64);
                }
            }
            let mut grid = Grid::<2>::new(lo, hi);
            for &i in &pix {
                grid.splat(&coord(i), t[i]);
            }
            grid.blur(kernel);
            pix.iter()
                .map(|&i| {
                    let (n, d) = grid.slice(&coord(i));
                    (i, n, d)
                })
                .collect()
        })
        .collect();

    let mut out = vec![(0.0, 0.0); keys.len()];
    for (i, n, d) in parts.into_iter().flatten() {
        out[i] = (n, d);
    }
    out
}

struct ColorLayout {
    spatial_cell: f64,
    color_cell: f64,
    color_lo: [i64; 3],
    color_hi: [i64; 3],
}

impl ColorLayout {
    fn new(lab: &ImageLab, p: &FilterParams) -> Self {
        let color_cell = p.sigma_c / SIGMA_CELLS;
        let mut color_lo = [i64::MAX; 3];
        let mut color_hi = [i64::MIN; 3];
        for px in lab.data().chunks_exact(3) {
            for c in 0..3 {
                let f = (px[c] / color_cell).floor() as i64;
                color_lo[c] = color_lo[c].min(f);
                color_hi[c] = color_hi[c].max(f);
            }
        }
        Self { spatial_cell: p.sigma_s / SIGMA_CELLS, color_cell, color_lo, color_hi }
    }

    fn color_cells(&self) -> usize {
        (0..3).map(|c| (self.color_hi[c] - self.color_lo[c] + 2) as usize).product()
    }

    fn bytes(&self, spatial_x: usize, spatial_y: usize) -> usize {
        spatial_x * spatial_y * self.color_cells() * 2 * std::mem::size_of::<f64>()
    }

    #[inline]
    fn coord(&self, x: usize, y: usize, j: &[f64]) -> [f64; 5] {
        [
            x as f64 / self.spatial_cell,
            y as f64 / self.spatial_cell,
            j[0] / self.color_cell,
            j[1] / self.color_cell,
            j[2] / self.color_cell,
        ]
    }

    fn cell_of(&self, px: usize) -> i64 {
        (px as f64 / self.spatial_cell).floor() as i64
    }
}

/// Bytes of the untiled 5D color grid for this image and parameters.
pub fn color_grid_bytes(lab: &ImageLab, p: &FilterParams) -> usize {
    let layout = ColorLayout::new(lab, p);
    let (w, h) = lab.dims();
    let nx = (layout.cell_of(w.saturating_sub(1)) + 2) as usize;
    let ny = (layout.cell_of(h.saturating_sub(1)) + 2) as usize;
    layout.bytes(nx, ny)
}

/// Color term over the 5D grid, tiled spatially so each tile fits
/// `cap / threads`. Cell indices are absolute and every tile carries a full
/// blur halo, so the result does not depend on the tiling.
fn color_terms(t: &[f64], lab: &ImageLab, p: &FilterParams, kernel: &[f64]) -> Result<Vec<(f64, f64)>> {
    let (w, h) = lab.dims();
    let layout = ColorLayout::new(lab, p);
    let col_cell: Vec<i64> = (0..w).map(|x| layout.cell_of(x)).collect();
    let row_cell: Vec<i64> = (0..h).map(|y| layout.cell_of(y)).collect();
    let (max_cx, max_cy) = (col_cell[w - 1], row_cell[h - 1]);

    let cap = p.grid_memory_cap_mib.saturating_mul(1 << 20);
    let per_tile_cap = cap / rayon::current_num_threads().max(1);
    let untiled = layout.bytes((max_cx + 2) as usize, (max_cy + 2) as usize);
    let tile = if untiled <= per_tile_cap {
        (max_cx.max(max_cy) + 1) as usize
    } else {
        let side = |t: usize| t + 2 * HALO as usize + 1;
        let fits = |t: usize| layout.bytes(side(t), side(t)) <= per_tile_cap;
        if !fits(1) {
            return Err(Error::GridMemoryExceeded { required: layout.bytes(side(1), side(1)), cap: per_tile_cap });
        }
        let mut t = 1;
        while t <= max_cx.max(max_cy) as usize && fits(t + 1) {
            t += 1;
        }
        t
    } as i64;

    let mut tiles = Vec::new();
    for ty in (0..=max_cy).step_by(tile as usize) {
        for tx in (0..=max_cx).step_by(tile as usize) {
            tiles.push((tx, ty));
        }
    }

    let j = lab.data();
    let parts: Vec<Vec<(usize, f64, f64)>> = tiles
        .into_par_iter()
        .map(|(tx, ty)| {
            let core_x = tx..=(tx + tile - 1);
            let core_y = ty..=(ty + tile - 1);
            let halo_x = (tx - HALO)..=(tx + tile - 1 + HALO);
            let halo_y = (ty - HALO)..=(ty + tile - 1 + HALO);
            let xs: Vec<usize> = (0..w).filter(|&x| halo_x.contains(&col_cell[x])).collect();
            let ys: Vec<usize> = (0..h).filter(|&y| halo_y.contains(&row_cell[y])).collect();

            let mut lo = [i64::MAX; 5];
            let mut hi = [i64::MIN; 5];
            for &y in &ys {
                for &x in &xs {
                    let i = y * w + x;
                    let c = layout.coord(x, y, &j[3 * i..3 * i + 3]);
                    for d in 0..5 {
                        lo[d] = lo[d].min(c[d].floor() as i64);
                        hi[d] = hi[d].max(c[d].floor() as i64);
                    }
                }
            }
            debug_assert!(Grid::<5>::cell_count(&lo, &hi) * 16 <= per_tile_cap.max(untiled));
            let mut grid = Grid::<5>::new(lo, hi);
            for &y in &ys {
                for &x in &xs {
                    let i = y * w + x;
                    grid.splat(&layout.coord(x, y, &j[3 * i..3 * i + 3]), t[i]);
                }
            }
            grid.blur(kernel);

            let mut out = Vec::new();
            for &y in ys.iter().filter(|&&y| core_y.contains(&row_cell[y])) {
                for &x in xs.iter().filter(|&&x| core_x.contains(&col_cell[x])) {
                    let i = y * w + x;
                    let (n, d) = grid.slice(&layout.coord(x, y, &j[3 * i..3 * i + 3]));
                    out.push((i, n, d));
                }
            }
            out
        })
        .collect();

    let mut out = vec![(0.0, 0.0); w * h];
    for (i, n, d) in parts.into_iter().flatten() {
        out[i] = (n, d);
    }
    Ok(out)
}

/// Grid-accelerated approximation of [`super::filter_exact`]:
/// `t = (N_sem + mu * N_col) / (D_sem + mu * D_col)` per pixel.
pub fn filter_grid(
    t_hat: &TransmittanceMap,
    lab: &ImageLab,
    h: &SemanticLabeling,
    p: &FilterParams,
) -> Result<TransmittanceMap> {
    check_inputs(t_hat, lab, h, p)?;
    let (w, ht) = t_hat.dims();
    if w * ht == 0 {
        return Err(Error::EmptyImage);
    }
    let kernel = blur_kernel();
    let t = t_hat.data();
    let sem = semantic_terms(t, &h.reference_keys(), w, p.sigma_s / SIGMA_CELLS, &kernel);
    let data: Vec<f64> = if p.mu > 0.0 {
        let col = color_terms(t, lab, p, &kernel)?;
        sem.iter()
            .zip(&col)
            .map(|(&(ns, ds), &(nc, dc))| ((ns + p.mu * nc) / (ds + p.mu * dc)).clamp(0.0, 1.0))
            .collect()
    } else {
        sem.iter().map(|&(n, d)| (n / d).clamp(0.0, 1.0)).collect()
    };
    TransmittanceMap::new(w, ht, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{srgb_to_lab, ImageRgb};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn case(seed: u64, w: usize, h: usize) -> (TransmittanceMap, ImageLab, SemanticLabeling) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = TransmittanceMap::from_fn(w, h, |_, _| rng.gen_range(0.05..1.0)).unwrap();
        let img = ImageRgb::from_fn(w, h, |_, _| [rng.gen(), rng.gen(), rng.gen()]);
        let l = SemanticLabeling::from_fn(w, h, |_, _| rng.gen_range(0..3));
        (t, srgb_to_lab(&img), l)
    }

    #[test]
    fn kernel_mass_and_peak() {
        let k = blur_kernel();
        assert_eq!(k.len(), 2 * KERNEL_RADIUS + 1);
        let mass: f64 = k.iter().sum();
        assert!((mass - (2.0 * std::f64::consts::PI).sqrt() * SIGMA_CELLS).abs() < 1e-12);
        assert!((k[KERNEL_RADIUS] - 1.0).abs() < 0.06);
    }

    #[test]
    fn splat_slice_partition_of_unity() {
        let mut g = Grid::<3>::new([0, 0, 0], [3, 3, 3]);
        g.splat(&[1.25, 2.5, 0.75], 0.6);
        let total: f64 = g.data.chunks(2).map(|c| c[1]).sum();
        assert!((total - 1.0).abs() < 1e-15);
        let (n, d) = g.slice(&[1.25, 2.5, 0.75]);
        assert!((n / d - 0.6).abs() < 1e-15);
    }

    #[test]
    fn constant_input_is_exact() {
        let (_, lab, l) = case(11, 40, 30);
        let t = TransmittanceMap::filled(40, 30, 0.42);
        let out = filter_grid(&t, &lab, &l, &FilterParams::default()).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.42).abs() < 1e-12));
    }

    #[test]
    fn tiling_does_not_change_result() {
        let (t, _, l) = case(12, 96, 80);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        // muted colors keep the color extent small enough for a tile to fit
        let lab = srgb_to_lab(&ImageRgb::from_fn(96, 80, |_, _| {
            let g: f64 = rng.gen_range(0.4..0.6);
            [g + rng.gen_range(0.0..0.05), g, g - rng.gen_range(0.0..0.05)]
        }));
        let p = FilterParams { sigma_s: 3.0, ..Default::default() };
        let whole = filter_grid(&t, &lab, &l, &p).unwrap();
        let tight = FilterParams { grid_memory_cap_mib: 1, ..p.clone() };
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let bytes = color_grid_bytes(&lab, &tight);
        assert!(bytes > 2 << 20, "test must force tiling, grid is {bytes} B");
        let tiled = pool.install(|| filter_grid(&t, &lab, &l, &tight)).unwrap();
        assert_eq!(whole, tiled);
    }

    #[test]
    fn memory_cap_is_enforced() {
        let (t, lab, l) = case(13, 64, 64);
        let p = FilterParams { grid_memory_cap_mib: 0, ..Default::default() };
        assert!(matches!(filter_grid(&t, &lab, &l, &p), Err(Error::GridMemoryExceeded { .. })));
    }

    #[test]
    fn output_within_input_range() {
        let (t, lab, l) = case(14, 50, 40);
        let (lo, hi) = t.data().iter().fold((1.0f64, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        let out = filter_grid(&t, &lab, &l, &FilterParams::default()).unwrap();
        assert!(out.data().iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
    }

    #[test]
    fn mu_zero_keeps_labels_apart() {
        let lab = srgb_to_lab(&ImageRgb::filled(30, 20, [0.5; 3]));
        let l = SemanticLabeling::from_fn(30, 20, |x, y| u32::from(x + y > 25));
        let t = TransmittanceMap::from_fn(30, 20, |x, y| if x + y > 25 { 0.9 } else { 0.1 }).unwrap();
        let p = FilterParams { mu: 0.0, ..Default::default() };
        let out = filter_grid(&t, &lab, &l, &p).unwrap();
        for (a, b) in out.data().iter().zip(t.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn close_to_exact_filter() {
        let (t, lab, l) = case(15, 64, 64);
        let p = FilterParams::default();
        let g = filter_grid(&t, &lab, &l, &p).unwrap();
        let e = super::super::filter_exact(&t, &lab, &l, &p).unwrap();
        let dev: Vec<f64> = g.data().iter().zip(e.data()).map(|(a, b)| (a - b).abs()).collect();
        let max = dev.iter().cloned().fold(0.0, f64::max);
        let mean = dev.iter().sum::<f64>() / dev.len() as f64;
        eprintln!("max {max:e} mean {mean:e}");
        assert!(max < 5e-3 && mean < 5e-4, "max {max} mean {mean}");
    }
}
