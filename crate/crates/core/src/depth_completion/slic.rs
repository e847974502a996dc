use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::imaging::ImageLab;

const ITERATIONS: usize = 10;

/// Superpixel id per pixel, ids dense in `0..count`, each id 4-connected.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuperpixelSegmentation {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    count: usize,
}

impl SuperpixelSegmentation {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Pixel indices per superpixel, in raster order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i);
        }
        out
    }

    pub fn centroids(&self) -> Vec<(f64, f64)> {
        let mut acc = vec![(0.0, 0.0, 0usize); self.count];
        for (i, &l) in self.labels.iter().enumerate() {
            let a = &mut acc[l as usize];
            a.0 += (i % self.width) as f64;
            a.1 += (i / self.width) as f64;
            a.2 += 1;
        }
        acc.into_iter().map(|(x, y, n)| (x / n as f64, y / n as f64)).collect()
    }
}

#[derive(Clone, Copy, Debug)]
struct Center {
    lab: [f64; 3],
    x: f64,
    y: f64,
}

/// Seeds laid out in rows so that exactly `k` are placed.
fn seed_positions(w: usize, h: usize, k: usize) -> Vec<(usize, usize)> {
    let rows = ((k as f64 * h as f64 / w as f64).sqrt().round() as usize)
        .max(k.div_ceil(w))
        .clamp(1, h.min(k));
    let mut seeds = Vec::with_capacity(k);
    for r in 0..rows {
        let in_row = (r + 1) * k / rows - r * k / rows;
        let y = ((r as f64 + 0.5) * h as f64 / rows as f64) as usize;
        for j in 0..in_row {
            let x = ((j as f64 + 0.5) * w as f64 / in_row as f64) as usize;
            seeds.push((x.min(w - 1), y.min(h - 1)));
        }
    }
    seeds
}

fn lab_gradient(img: &ImageLab, x: usize, y: usize) -> f64 {
    let (w, h) = img.dims();
    if x == 0 || y == 0 || x + 1 >= w || y + 1 >= h {
        return f64::INFINITY;
    }
    let d2 = |p: [f64; 3], q: [f64; 3]| (0..3).map(|c| (p[c] - q[c]).powi(2)).sum::<f64>();
    d2(img.pixel(x + 1, y), img.pixel(x - 1, y)) + d2(img.pixel(x, y + 1), img.pixel(x, y - 1))
}

/// SLIC clustering in `(L*, a*, b*, x, y)` with spatial distance weighted by
/// `compactness / S`, `S = sqrt(N / k)`. Fragments disconnected from their
/// cluster's largest component are merged into an adjacent superpixel, so the
/// returned count can be below `k`.
pub fn slic_superpixels(img: &ImageLab, k: usize, compactness: f64) -> Result<SuperpixelSegmentation> {
    let (w, h) = img.dims();
    let n = w * h;
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("superpixel count {k} must be in 1..={n}")));
    }
    if !(compactness > 0.0 && compactness.is_finite()) {
        return Err(Error::InvalidParameter(format!("compactness {compactness} must be > 0")));
    }

    let mut centers: Vec<Center> = seed_positions(w, h, k)
        .into_iter()
        .map(|(sx, sy)| {
            // nudge off edges: lowest gradient in the 3x3 neighbourhood
            let mut best = (sx, sy);
            let mut best_g = lab_gradient(img, sx, sy);
            for ny in sy.saturating_sub(1)..=(sy + 1).min(h - 1) {
                for nx in sx.saturating_sub(1)..=(sx + 1).min(w - 1) {
                    let g = lab_gradient(img, nx, ny);
                    if g < best_g {
                        best_g = g;
                        best = (nx, ny);
                    }
                }
            }
            Center { lab: img.pixel(best.0, best.1), x: best.0 as f64, y: best.1 as f64 }
        })
        .collect();

    let step = (n as f64 / k as f64).sqrt();
    let spatial_weight = (compactness / step).powi(2);
    let reach = (2.0 * step).ceil() as isize;
    let dist = |c: &Center, i: usize| {
        let p = img.pixel_at(i);
        let dc = (p[0] - c.lab[0]).powi(2) + (p[1] - c.lab[1]).powi(2) + (p[2] - c.lab[2]).powi(2);
        let ds = ((i % w) as f64 - c.x).powi(2) + ((i / w) as f64 - c.y).powi(2);
        dc + ds * spatial_weight
    };

    let mut labels = vec![u32::MAX; n];
    let mut best = vec![f64::INFINITY; n];
    for _ in 0..ITERATIONS {
        best.fill(f64::INFINITY);
        labels.fill(u32::MAX);
        for (ci, c) in centers.iter().enumerate() {
            let (cx, cy) = (c.x.round() as isize, c.y.round() as isize);
            let y0 = (cy - reach).max(0) as usize;
            let y1 = ((cy + reach) as usize).min(h - 1);
            let x0 = (cx - reach).max(0) as usize;
            let x1 = ((cx + reach) as usize).min(w - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = y * w + x;
                    let d = dist(c, i);
                    if d < best[i] {
                        best[i] = d;
                        labels[i] = ci as u32;
                    }
                }
            }
        }
        for i in 0..n {
            if labels[i] == u32::MAX {
                let (ci, _) = centers
                    .iter()
                    .enumerate()
                    .map(|(ci, c)| (ci, dist(c, i)))
                    .fold((0, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc });
                labels[i] = ci as u32;
            }
        }

        let mut sums = vec![[0.0f64; 6]; centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            let p = img.pixel_at(i);
            let s = &mut sums[l as usize];
            s[0] += p[0];
            s[1] += p[1];
            s[2] += p[2];
            s[3] += (i % w) as f64;
            s[4] += (i / w) as f64;
            s[5] += 1.0;
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s[5] > 0.0 {
                *c = Center { lab: [s[0] / s[5], s[1] / s[5], s[2] / s[5]], x: s[3] / s[5], y: s[4] / s[5] };
            }
        }
    }

    let labels = enforce_connectivity(&labels, w, h, centers.len());
    let count = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    Ok(SuperpixelSegmentation { width: w, height: h, labels, count })
}

/// Keeps each cluster's largest 4-connected component, merges the rest into
/// an adjacent resolved component, then renumbers ids densely.
fn enforce_connectivity(labels: &[u32], w: usize, h: usize, clusters: usize) -> Vec<u32> {
    let n = w * h;
    let mut comp = vec![usize::MAX; n];
    let mut comp_label = Vec::new();
    let mut comp_size = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = comp_label.len();
        let label = labels[start];
        comp[start] = id;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if comp[j] == usize::MAX && labels[j] == label {
                    comp[j] = id;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        comp_label.push(label);
        comp_size.push(size);
    }

    let ncomp = comp_label.len();
    let mut main_of = vec![usize::MAX; clusters];
    for c in 0..ncomp {
        let l = comp_label[c] as usize;
        if main_of[l] == usize::MAX || comp_size[c] > comp_size[main_of[l]] {
            main_of[l] = c;
        }
    }

    let mut adjacent = vec![BTreeSet::new(); ncomp];
    for i in 0..n {
        let (x, y) = (i % w, i / w);
        for j in [(x + 1 < w).then(|| i + 1), (y + 1 < h).then(|| i + w)].into_iter().flatten() {
            let (a, b) = (comp[i], comp[j]);
            if a != b {
                adjacent[a].insert(b);
                adjacent[b].insert(a);
            }
        }
    }

    let mut resolved: Vec<Option<u32>> = (0..ncomp)
        .map(|c| (main_of[comp_label[c] as usize] == c).then_some(comp_label[c]))
        .collect();
    loop {
        let mut progress = false;
        let mut pending = false;
        for c in 0..ncomp {
            if resolved[c].is_some() {
                continue;
            }
            match adjacent[c].iter().find_map(|&nb| resolved[nb]) {
                Some(l) => {
                    resolved[c] = Some(l);
                    progress = true;
                }
                None => pending = true,
            }
        }
        if !pending || !progress {
            break;
        }
    }

    let mut remap = vec![u32::MAX; clusters];
    let mut next = 0u32;
    for l in 0..clusters {
        if main_of[l] != usize::MAX {
            remap[l] = next;
            next += 1;
        }
    }
    comp.iter().map(|&c| remap[resolved[c].expect("image is connected") as usize]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{srgb_to_lab, ImageRgb};

    fn is_four_connected(seg: &SuperpixelSegmentation) -> bool {
        let (w, h) = (seg.width(), seg.height());
        for members in seg.members() {
            if members.is_empty() {
                return false;
            }
            let set: std::collections::HashSet<usize> = members.iter().copied().collect();
            let mut seen = std::collections::HashSet::new();
            let mut stack = vec![members[0]];
            seen.insert(members[0]);
            while let Some(i) = stack.pop() {
                let (x, y) = (i % w, i / w);
                let nbrs = [
                    (x > 0).then(|| i - 1),
                    (x + 1 < w).then(|| i + 1),
                    (y > 0).then(|| i - w),
                    (y + 1 < h).then(|| i + w),
                ];
                for j in nbrs.into_iter().flatten() {
                    if set.contains(&j) && seen.insert(j) {
                        stack.push(j);
                    }
                }
            }
            if seen.len() != members.len() {
                return false;
            }
        }
        true
    }

    #[test]
    fn seeds_count_exactly_k() {
        for (w, h, k) in [(64, 64, 4), (64, 64, 3), (10, 1, 7), (1, 9, 9), (2048, 1024, 2048), (5, 5, 25)] {
            let s = seed_positions(w, h, k);
            assert_eq!(s.len(), k);
            let uniq: BTreeSet<_> = s.iter().collect();
            assert_eq!(uniq.len(), k, "{w}x{h} k={k}");
        }
    }

    #[test]
    fn single_superpixel() {
        let lab = srgb_to_lab(&ImageRgb::from_fn(20, 10, |x, y| [x as f64 / 20.0, y as f64 / 10.0, 0.3]));
        let seg = slic_superpixels(&lab, 1, 10.0).unwrap();
        assert_eq!(seg.count(), 1);
        assert!(seg.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn uniform_image_splits_evenly() {
        let lab = srgb_to_lab(&ImageRgb::filled(64, 64, [0.4, 0.4, 0.4]));
        let seg = slic_superpixels(&lab, 4, 10.0).unwrap();
        assert_eq!(seg.count(), 4);
        for m in seg.members() {
            assert!((819..=1229).contains(&m.len()), "area {}", m.len());
        }
    }

    #[test]
    fn two_tone_boundary() {
        let lab = srgb_to_lab(&ImageRgb::from_fn(64, 32, |x, _| if x < 29 { [0.1, 0.2, 0.1] } else { [0.9, 0.8, 0.7] }));
        let seg = slic_superpixels(&lab, 2, 10.0).unwrap();
        assert_eq!(seg.count(), 2);
        // boundary column per row lies within 2 px of the tone edge
        for y in 0..32 {
            let left = seg.get(0, y);
            let edge = (0..64).find(|&x| seg.get(x, y) != left).unwrap();
            assert!((edge as i64 - 29).abs() <= 2, "row {y}: edge {edge}");
        }
    }

    #[test]
    fn rejects_bad_k() {
        let lab = srgb_to_lab(&ImageRgb::filled(4, 4, [0.5; 3]));
        assert!(slic_superpixels(&lab, 0, 10.0).is_err());
        assert!(slic_superpixels(&lab, 17, 10.0).is_err());
        assert!(slic_superpixels(&lab, 16, 10.0).is_ok());
    }

    #[test]
    fn connectivity_on_noisy_image() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let img = ImageRgb::from_fn(48, 40, |_, _| [rng.gen(), rng.gen(), rng.gen()]);
        let seg = slic_superpixels(&srgb_to_lab(&img), 30, 5.0).unwrap();
        assert!(seg.count() >= 1 && seg.count() <= 30);
        assert!(seg.labels().iter().all(|&l| (l as usize) < seg.count()));
        assert!(is_four_connected(&seg));
    }

    #[test]
    fn enforce_connectivity_merges_fragment() {
        // 0 0 1 1
        // 0 0 1 1
        // 1 1 0 1   <- both bottom-row fragments are cut off from their cluster
        let labels = vec![0, 0, 1, 1, 0, 0, 1, 1, 1, 1, 0, 1];
        let out = enforce_connectivity(&labels, 4, 3, 2);
        assert_eq!(&out[8..], &[0, 0, 1, 1]);
        assert_eq!(out.iter().filter(|&&l| l == 0).count(), 6);
    }
}
