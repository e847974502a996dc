use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::LabeledImage;
use crate::depth_completion::CompletionParams;
use crate::dual_bilateral::FilterParams;
use crate::error::{Error, Result};
use crate::fog_density::RankedDataset;
use crate::fog_synthesis::{simulate_scene, validate_beta, FogConfig};
use crate::imaging::io::{dimensions, list_pngs, read_disparity, read_labels, read_rgb, write_rgb};
use crate::imaging::CameraModel;

/// Clear dataset layout: `images/`, `disparity/`, `labels/` and optional
/// `instances/` subdirectories holding PNGs under identical relative paths.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClearDataset {
    pub root: PathBuf,
}

impl ClearDataset {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn images_dir(&self) -> PathBuf {
        self.root.join("images")
    }

    pub fn image(&self, id: &str) -> PathBuf {
        self.root.join("images").join(id)
    }

    pub fn disparity(&self, id: &str) -> PathBuf {
        self.root.join("disparity").join(id)
    }

    pub fn label(&self, id: &str) -> PathBuf {
        self.root.join("labels").join(id)
    }

    pub fn instances(&self, id: &str) -> PathBuf {
        self.root.join("instances").join(id)
    }

    /// Relative ids of all images, sorted.
    pub fn ids(&self) -> Result<Vec<String>> {
        list_pngs(self.images_dir())
    }
}

/// Everything besides `beta` that the per-scene simulation needs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSettings {
    pub camera: CameraModel,
    pub fog: FogConfig,
    pub completion: CompletionParams,
    pub filter: FilterParams,
}

/// Directory of the dataset simulated at `beta` under `out_root`.
pub fn sweep_dir(out_root: &Path, beta: f64) -> PathBuf {
    out_root.join(format!("beta_{beta}"))
}

fn require(kind: &'static str, id: &str, path: PathBuf) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::MissingInput { kind, image: id.to_string(), path })
    }
}

/// Simulates one foggy copy of the clear dataset per `beta`, written to
/// `<out_root>/beta_<beta>/images/<id>`. Inputs are checked for every image
/// before any simulation starts.
pub fn generate_sweep(
    clear: &ClearDataset,
    betas: &[f64],
    out_root: &Path,
    settings: &SimulationSettings,
) -> Result<Vec<PathBuf>> {
    for &b in betas {
        validate_beta(b, settings.fog.allow_haze)?;
    }
    let ids = clear.ids()?;
    if ids.is_empty() {
        return Err(Error::InvalidParameter(format!("no images under {}", clear.images_dir().display())));
    }
    for id in &ids {
        require("disparity", id, clear.disparity(id))?;
        require("labels", id, clear.label(id))?;
    }
    let mut dirs = Vec::new();
    for &beta in betas {
        let dir = sweep_dir(out_root, beta);
        let fog = FogConfig { beta, ..settings.fog.clone() };
        ids.par_iter().try_for_each(|id| {
            let img = read_rgb(clear.image(id))?;
            let d = read_disparity(clear.disparity(id))?;
            let inst = clear.instances(id);
            let labels = read_labels(clear.label(id), inst.is_file().then_some(inst.as_path()))?;
            let foggy = simulate_scene(&img, &d, &labels, &settings.camera, &fog, &settings.completion, &settings.filter)
                .map_err(|e| e.in_stage(format!("simulate {id}")))?;
            write_rgb(dir.join("images").join(id), &foggy)
        })?;
        dirs.push(dir);
    }
    Ok(dirs)
}

/// The `count` lowest-density images, in ranking order.
pub fn select_light_subset(ranked: &RankedDataset, count: usize) -> Result<Vec<String>> {
    if count > ranked.len() {
        return Err(Error::InvalidParameter(format!(
            "light subset of {count} requested from {} images",
            ranked.len()
        )));
    }
    Ok(ranked.entries[..count].iter().map(|e| e.image.clone()).collect())
}

/// Images with estimated density at most `beta_max`, in ranking order.
pub fn select_by_threshold(ranked: &RankedDataset, beta_max: f64) -> Vec<String> {
    ranked.entries.iter().filter(|e| e.beta_hat <= beta_max).map(|e| e.image.clone()).collect()
}

/// Pairs each image id with `<label_dir>/<id>` after checking that the label
/// exists, matches the image size and holds only ids in `0..num_classes`
/// or `void_id`.
pub fn ingest_noisy_labels(
    images: &[(String, PathBuf)],
    label_dir: &Path,
    num_classes: u32,
    void_id: u32,
) -> Result<Vec<LabeledImage>> {
    images
        .par_iter()
        .map(|(id, image_path)| {
            let label_path = label_dir.join(id);
            if !label_path.is_file() {
                return Err(Error::MissingLabel { image: id.clone(), path: label_path });
            }
            let labels = read_labels(&label_path, None)?;
            crate::error::check_dims("noisy label vs image", dimensions(image_path)?, labels.dims())?;
            if let Some(&bad) = labels.labels().iter().find(|&&l| l >= num_classes && l != void_id) {
                return Err(Error::LabelOutOfRange {
                    source_name: label_path.display().to_string(),
                    id: bad,
                    num_classes,
                    void_id,
                });
            }
            Ok(LabeledImage { image: image_path.display().to_string(), label: label_path.display().to_string() })
        })
        .collect()
}

/// Plain text, one image id per line; blank lines and `#` comments ignored.
pub fn read_exclusion_list(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::io::{write_disparity, write_labels};
    use crate::imaging::{ImageRgb, SemanticLabeling};
    use crate::synthetic::street_scene;

    pub(crate) fn write_dataset(root: &Path, ids: &[&str], w: usize, h: usize) -> ClearDataset {
        let ds = ClearDataset::new(root);
        for (k, id) in ids.iter().enumerate() {
            let s = street_scene(k as u64, w, h);
            write_rgb(ds.image(id), &s.clear).unwrap();
            write_disparity(ds.disparity(id), &s.disparity).unwrap();
            write_labels(ds.label(id), &s.labels).unwrap();
        }
        ds
    }

    fn settings() -> SimulationSettings {
        SimulationSettings {
            camera: crate::synthetic::camera_for_width(48),
            completion: CompletionParams { superpixels: 32, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn sweep_layout_and_zero_beta_copy() {
        let dir = tempfile::tempdir().unwrap();
        let ds = write_dataset(&dir.path().join("clear"), &["c1/a.png", "b.png"], 48, 32);
        let out = dir.path().join("sweep");
        let dirs = generate_sweep(&ds, &[0.0, 0.01], &out, &settings()).unwrap();
        assert_eq!(dirs, vec![out.join("beta_0"), out.join("beta_0.01")]);
        for id in ["c1/a.png", "b.png"] {
            let orig = std::fs::read(ds.image(id)).unwrap();
            let copy = std::fs::read(out.join("beta_0/images").join(id)).unwrap();
            assert_eq!(read_rgb(ds.image(id)).unwrap(), read_rgb(out.join("beta_0/images").join(id)).unwrap());
            assert!(!orig.is_empty() && !copy.is_empty());
            assert_ne!(read_rgb(out.join("beta_0.01/images").join(id)).unwrap(), read_rgb(ds.image(id)).unwrap());
        }
    }

    #[test]
    fn sweep_requires_disparity_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let ds = write_dataset(&dir.path().join("clear"), &["a.png"], 16, 8);
        std::fs::remove_file(ds.disparity("a.png")).unwrap();
        let err = generate_sweep(&ds, &[0.01], &dir.path().join("o"), &settings()).unwrap_err();
        assert!(matches!(err, Error::MissingInput { kind: "disparity", .. }));
        assert!(generate_sweep(&ds, &[0.001], &dir.path().join("o"), &settings()).is_err());
    }

    #[test]
    fn subset_selection() {
        let r = RankedDataset::from_estimates(vec![("c".into(), 0.02), ("a".into(), 0.001), ("b".into(), 0.006)]).unwrap();
        assert_eq!(select_light_subset(&r, 2).unwrap(), vec!["a", "b"]);
        assert_eq!(select_light_subset(&r, 3).unwrap().len(), 3);
        assert!(select_light_subset(&r, 0).unwrap().is_empty());
        assert!(select_light_subset(&r, 4).is_err());
        assert_eq!(select_by_threshold(&r, 0.01), vec!["a", "b"]);
    }

    #[test]
    fn noisy_label_checks() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("real/x.png");
        write_rgb(&img, &ImageRgb::filled(4, 3, [0.5; 3])).unwrap();
        let labels = dir.path().join("noisy");
        let images = vec![("x.png".to_string(), img.clone())];

        let missing = ingest_noisy_labels(&images, &labels, 19, 255).unwrap_err();
        assert!(missing.to_string().contains("x.png"));

        write_labels(labels.join("x.png"), &SemanticLabeling::filled(4, 3, 24)).unwrap();
        assert!(matches!(ingest_noisy_labels(&images, &labels, 19, 255), Err(Error::LabelOutOfRange { id: 24, .. })));

        write_labels(labels.join("x.png"), &SemanticLabeling::filled(4, 2, 3)).unwrap();
        assert!(matches!(ingest_noisy_labels(&images, &labels, 19, 255), Err(Error::DimensionMismatch { .. })));

        let ok = SemanticLabeling::from_fn(4, 3, |x, _| if x == 0 { 255 } else { x as u32 });
        write_labels(labels.join("x.png"), &ok).unwrap();
        let pairs = ingest_noisy_labels(&images, &labels, 19, 255).unwrap();
        assert_eq!(pairs[0].label, labels.join("x.png").display().to_string());
    }

    #[test]
    fn exclusion_list_format() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ex.txt");
        std::fs::write(&p, "a.png\n\n# comment\n  b/c.png  \n").unwrap();
        let set = read_exclusion_list(&p).unwrap();
        assert_eq!(set.into_iter().collect::<Vec<_>>(), vec!["a.png", "b/c.png"]);
    }
}
