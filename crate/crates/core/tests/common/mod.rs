#![allow(dead_code)]

use foghorn::depth_completion::CompletionParams;
use foghorn::dual_bilateral::FilterParams;
use foghorn::fog_density::{extract_features, FeatureVector};
use foghorn::fog_synthesis::{simulate_scene, FogConfig};
use foghorn::imaging::ImageRgb;
use foghorn::synthetic::street_scene;
use rayon::prelude::*;

pub const SWEEP_BETAS: [f64; 4] = [0.0, 0.005, 0.01, 0.02];
pub const W: usize = 96;
pub const H: usize = 64;

pub fn completion() -> CompletionParams {
    CompletionParams { superpixels: 96, ..Default::default() }
}

/// One base scene rendered at every sweep density.
pub fn sweep(seed: u64) -> Vec<ImageRgb> {
    let s = street_scene(seed, W, H);
    SWEEP_BETAS
        .iter()
        .map(|&beta| {
            let fog = FogConfig { beta, ..Default::default() };
            simulate_scene(&s.clear, &s.disparity, &s.labels, &s.camera, &fog, &completion(), &FilterParams::default())
                .expect("synthetic scene simulates")
        })
        .collect()
}

/// `(base seed, beta, features)` for every image of every base.
pub fn sweep_features(seeds: std::ops::Range<u64>) -> Vec<(u64, f64, FeatureVector)> {
    let per_base: Vec<Vec<(u64, f64, FeatureVector)>> = seeds
        .into_par_iter()
        .map(|seed| {
            sweep(seed)
                .iter()
                .zip(SWEEP_BETAS)
                .map(|(img, beta)| (seed, beta, extract_features(img).unwrap()))
                .collect()
        })
        .collect();
    per_base.into_iter().flatten().collect()
}

use foghorn::cmada::ClearDataset;
use foghorn::imaging::io::{write_disparity, write_labels, write_rgb};
use std::path::Path;

/// Writes `n` street scenes in the clear-dataset layout.
pub fn write_clear_dataset(root: &Path, n: usize, w: usize, h: usize) -> ClearDataset {
    let ds = ClearDataset::new(root);
    for k in 0..n {
        let id = format!("city{}/scene_{k:03}.png", k % 2);
        let s = street_scene(k as u64, w, h);
        write_rgb(ds.image(&id), &s.clear).unwrap();
        write_disparity(ds.disparity(&id), &s.disparity).unwrap();
        write_labels(ds.label(&id), &s.labels).unwrap();
    }
    ds
}

/// Foggy "real" images at assorted densities plus their true labels under
/// `<root>/images` and `<root>/labels`. Returns the densities by id.
pub fn write_real_dataset(root: &Path, n: usize, w: usize, h: usize) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for k in 0..n {
        let id = format!("real_{k:03}.png");
        let beta = SWEEP_BETAS[1 + k % 3];
        let s = street_scene(500 + k as u64, w, h);
        let fog = FogConfig { beta, ..Default::default() };
        let comp = CompletionParams { superpixels: 48, ..Default::default() };
        let img = simulate_scene(&s.clear, &s.disparity, &s.labels, &s.camera, &fog, &comp, &FilterParams::default()).unwrap();
        write_rgb(root.join("images").join(&id), &img).unwrap();
        write_labels(root.join("labels").join(&id), &s.labels).unwrap();
        out.push((id, beta));
    }
    out
}
