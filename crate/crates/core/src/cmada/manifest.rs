use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Source {
    SynthLight,
    SynthDense,
    RealLight,
}

impl Source {
    pub fn is_synthetic(self) -> bool {
        matches!(self, Source::SynthLight | Source::SynthDense)
    }
}

/// An image with its (ground-truth or noisy) label map.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledImage {
    pub image: String,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub image: String,
    pub label: String,
    pub source: Source,
    pub weight: f64,
}

/// `l` labeled synthetic images, `u` real images, mixing ratio `w` and
/// `lambda = (u / l) * w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestMetadata {
    pub l: usize,
    pub u: usize,
    pub w: f64,
    pub lambda: f64,
}

impl ManifestMetadata {
    pub fn new(l: usize, u: usize, w: f64) -> Self {
        let lambda = if l == 0 { 0.0 } else { u as f64 / l as f64 * w };
        Self { l, u, w, lambda }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub metadata: ManifestMetadata,
}

/// `foo.jsonl` -> `foo.meta.json`
pub fn metadata_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("meta.json")
}

impl DatasetManifest {
    /// Single-source manifest, one entry per image.
    pub fn single_source(images: &[LabeledImage], source: Source) -> Self {
        let entries = images
            .iter()
            .map(|p| ManifestEntry { image: p.image.clone(), label: p.label.clone(), source, weight: 1.0 })
            .collect();
        let (l, u) = if source.is_synthetic() { (images.len(), 0) } else { (0, images.len()) };
        Self { entries, metadata: ManifestMetadata::new(l, u, 0.0) }
    }

    pub fn count(&self, synthetic: bool) -> usize {
        self.entries.iter().filter(|e| e.source.is_synthetic() == synthetic).count()
    }

    /// Writes JSON lines to `path` and the metadata next to it.
    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut text = String::new();
        for e in &self.entries {
            text += &serde_json::to_string(e).map_err(|err| Error::json(path, err))?;
            text.push('\n');
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
        let meta_path = metadata_path(path);
        let meta = serde_json::to_string_pretty(&self.metadata).map_err(|e| Error::json(&meta_path, e))?;
        std::fs::write(&meta_path, meta + "\n").map_err(|e| Error::io(&meta_path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::json(path, e)))
            .collect::<Result<_>>()?;
        let meta_path = metadata_path(path);
        let meta = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let metadata = serde_json::from_str(&meta).map_err(|e| Error::json(&meta_path, e))?;
        Ok(Self { entries, metadata })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MixOptions {
    /// Length of the synthetic part of the stream; defaults to one pass over
    /// the synthetic list.
    pub synthetic_count: Option<usize>,
    /// Shuffles the order of items within each source. The interleaving
    /// pattern, and with it the ratio guarantee, is unchanged.
    pub shuffle_seed: Option<u64>,
}

/// Source pattern with `synthetic` synthetic slots and `real` real slots,
/// each step taking whichever keeps `#real - w * #synthetic` closer to zero
/// (ties go to synthetic).
fn interleave(synthetic: usize, real: usize, w: f64) -> Vec<bool> {
    let (mut s, mut r) = (0usize, 0usize);
    let mut out = Vec::with_capacity(synthetic + real);
    while s < synthetic || r < real {
        let take_real = if s == synthetic {
            true
        } else if r == real {
            false
        } else {
            let after_synth = (r as f64 - w * (s + 1) as f64).abs();
            let after_real = ((r + 1) as f64 - w * s as f64).abs();
            after_real < after_synth
        };
        if take_real {
            r += 1;
        } else {
            s += 1;
        }
        out.push(take_real);
    }
    out
}

/// `n` picks from `0..len`: cycling when `n >= len`, evenly spaced otherwise.
fn spread(n: usize, len: usize) -> impl Iterator<Item = usize> {
    (0..n).map(move |k| if n >= len { k % len } else { k * len / n })
}

/// Mixes dense synthetic and light real images in a `1 : w` stream.
///
/// The synthetic list is cycled to `synthetic_count` entries and
/// `round(w * synthetic_count)` real entries are drawn from the real list,
/// repeating or thinning it as needed. Every prefix satisfies
/// `|#real - w * #synthetic| <= max(1, w)`.
pub fn build_mixed_manifest(
    synth_dense: &[LabeledImage],
    real_light: &[LabeledImage],
    w: f64,
    opts: &MixOptions,
) -> Result<DatasetManifest> {
    if !(w >= 0.0 && w.is_finite()) {
        return Err(Error::InvalidParameter(format!("mixing ratio w = {w} must be >= 0")));
    }
    if synth_dense.is_empty() {
        return Err(Error::InvalidParameter("no synthetic images to mix".into()));
    }
    if real_light.is_empty() && w > 0.0 {
        return Err(Error::InvalidParameter("no real images to mix".into()));
    }
    let mut synth: Vec<&LabeledImage> = synth_dense.iter().collect();
    let mut real: Vec<&LabeledImage> = real_light.iter().collect();
    if let Some(seed) = opts.shuffle_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        synth.shuffle(&mut rng);
        real.shuffle(&mut rng);
    }
    let n_synth = opts.synthetic_count.unwrap_or(synth.len());
    let n_real = if real.is_empty() { 0 } else { (w * n_synth as f64).round() as usize };

    let mut synth_iter = spread(n_synth, synth.len()).map(|i| synth[i]);
    let mut real_iter = spread(n_real, real.len().max(1)).map(|i| real[i]);
    let entries = interleave(n_synth, n_real, w)
        .into_iter()
        .map(|is_real| {
            let (item, source) = if is_real {
                (real_iter.next().expect("pattern count"), Source::RealLight)
            } else {
                (synth_iter.next().expect("pattern count"), Source::SynthDense)
            };
            ManifestEntry { image: item.image.clone(), label: item.label.clone(), source, weight: 1.0 }
        })
        .collect();
    Ok(DatasetManifest { entries, metadata: ManifestMetadata::new(synth_dense.len(), real_light.len(), w) })
}
