use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::{
    generate_sweep, ingest_noisy_labels, read_exclusion_list, select_by_threshold, select_light_subset, sweep_dir,
    ClearDataset, SimulationSettings,
};
use super::manifest::{build_mixed_manifest, DatasetManifest, LabeledImage, MixOptions, Source};
use crate::error::{Error, Result, StageContext};
use crate::fog_density::{extract_features, fit_density_regressor, DensityModel, RankedDataset};
use crate::fog_synthesis::{validate_beta, FogConfig};
use crate::imaging::io::{list_pngs, read_rgb};

fn default_density_betas() -> Vec<f64> {
    vec![0.0, 0.005, 0.01, 0.02]
}

/// Steps of the adaptation curriculum as one JSON document. Relative paths
/// are resolved against the plan file's directory by [`CurriculumPlan::load`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumPlan {
    /// Clear synthetic dataset (see [`ClearDataset`]).
    pub clear_dataset: PathBuf,
    /// Directory of real foggy PNGs.
    pub real_dataset: PathBuf,
    /// Trained density model; trained on a sweep of `density_betas` when unset.
    #[serde(default)]
    pub density_model: Option<PathBuf>,
    #[serde(default = "default_density_betas")]
    pub density_betas: Vec<f64>,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    /// Fog for the first adaptation step.
    pub light_beta: f64,
    /// Fog for the synthetic half of the final step.
    pub dense_beta: f64,
    /// Size of the light real subset. Exactly one of this and
    /// `light_beta_max` must be set.
    #[serde(default)]
    pub light_count: Option<usize>,
    #[serde(default)]
    pub light_beta_max: Option<f64>,
    /// Labels predicted for the light real subset by the step-4 model.
    pub noisy_label_dir: PathBuf,
    /// Real images per synthetic image in the mixed stream.
    pub w: f64,
    #[serde(default)]
    pub exclusion_list: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default = "default_num_classes")]
    pub num_classes: u32,
    #[serde(default = "default_void")]
    pub void_id: u32,
    #[serde(default)]
    pub shuffle_seed: Option<u64>,
}

fn default_ridge() -> f64 {
    1e-3
}

fn default_num_classes() -> u32 {
    19
}

fn default_void() -> u32 {
    255
}

impl CurriculumPlan {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut plan: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut plan.clear_dataset);
        fix(&mut plan.real_dataset);
        fix(&mut plan.noisy_label_dir);
        fix(&mut plan.output_dir);
        plan.density_model.as_mut().map(fix);
        plan.exclusion_list.as_mut().map(fix);
        Ok(plan)
    }

    pub fn validate(&self, allow_haze: bool) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPlan(m));
        for b in [self.light_beta, self.dense_beta] {
            validate_beta(b, allow_haze)?;
        }
        if self.light_beta <= 0.0 {
            return bad(format!("light_beta {} must be positive", self.light_beta));
        }
        if self.light_beta >= self.dense_beta {
            return bad(format!(
                "light_beta {} must be below dense_beta {}: the curriculum goes from light to dense fog",
                self.light_beta, self.dense_beta
            ));
        }
        if !(self.w >= 0.0 && self.w.is_finite()) {
            return bad(format!("w = {} must be >= 0", self.w));
        }
        match (self.light_count, self.light_beta_max) {
            (Some(_), None) => {}
            (None, Some(b)) if b >= 0.0 => {}
            _ => return bad("set exactly one of light_count and light_beta_max (>= 0)".into()),
        }
        if self.density_model.is_none() {
            for &b in &self.density_betas {
                validate_beta(b, allow_haze)?;
            }
            let distinct: BTreeSet<u64> = self.density_betas.iter().map(|b| b.to_bits()).collect();
            if distinct.len() < 2 {
                return bad("density_betas needs at least two distinct values".into());
            }
            if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
                return bad(format!("ridge {} must be >= 0", self.ridge));
            }
        }
        if self.void_id < self.num_classes {
            return bad(format!("void_id {} collides with class ids", self.void_id));
        }
        Ok(())
    }

    pub fn stage4_manifest(&self) -> PathBuf {
        self.output_dir.join("cmada4.jsonl")
    }

    pub fn stage7_manifest(&self) -> PathBuf {
        self.output_dir.join("cmada7.jsonl")
    }

    pub fn ranking_path(&self) -> PathBuf {
        self.output_dir.join("ranking.jsonl")
    }

    pub fn light_subset_path(&self) -> PathBuf {
        self.output_dir.join("real_light.txt")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurriculumOutcome {
    /// Manifests written, in curriculum order.
    pub manifests: Vec<PathBuf>,
    pub ranking: PathBuf,
    pub light_subset: PathBuf,
    /// Set when the noisy-label directory does not exist yet; the final
    /// manifest is then not written.
    pub awaiting_labels: Option<PathBuf>,
}

const CACHE_FILE: &str = "cache_key";

/// Hash of every input file of the clear dataset, in id order.
fn dataset_hash(clear: &ClearDataset, ids: &[String]) -> Result<Vec<u8>> {
    let mut h = Sha256::new();
    for id in ids {
        h.update(id.as_bytes());
        for p in [clear.image(id), clear.disparity(id), clear.label(id), clear.instances(id)] {
            if p.is_file() {
                h.update(std::fs::read(&p).map_err(|e| Error::io(&p, e))?);
            } else {
                h.update(b"-");
            }
        }
    }
    Ok(h.finalize().to_vec())
}

/// Simulates `beta` unless a previous run with identical inputs left its key.
fn cached_sweep(
    clear: &ClearDataset,
    content: &[u8],
    beta: f64,
    out_root: &Path,
    settings: &SimulationSettings,
) -> Result<PathBuf> {
    let dir = sweep_dir(out_root, beta);
    let fog = FogConfig { beta, ..settings.fog.clone() };
    let keyed = SimulationSettings { fog, ..settings.clone() };
    let mut h = Sha256::new();
    h.update(content);
    h.update(serde_json::to_vec(&keyed).expect("settings serialize"));
    let key = hex::encode(h.finalize());
    let key_path = dir.join(CACHE_FILE);
    if std::fs::read_to_string(&key_path).is_ok_and(|k| k.trim() == key) {
        return Ok(dir);
    }
    generate_sweep(clear, &[beta], out_root, settings)?;
    std::fs::write(&key_path, key + "\n").map_err(|e| Error::io(&key_path, e))?;
    Ok(dir)
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs the curriculum: sweeps, density model, ranking of the real set,
/// the light-synthetic manifest, the light real subset, noisy-label
/// ingestion and the mixed manifest. Every error names its stage.
pub fn build_curriculum(plan: &CurriculumPlan, settings: &SimulationSettings) -> Result<CurriculumOutcome> {
    plan.validate(settings.fog.allow_haze).stage("validation")?;
    let out = &plan.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e)).stage("validation")?;
    let excluded = match &plan.exclusion_list {
        Some(p) => read_exclusion_list(p).stage("validation")?,
        None => BTreeSet::new(),
    };

    let clear = ClearDataset::new(&plan.clear_dataset);
    let clear_ids = clear.ids().stage("sweep")?;
    let content = dataset_hash(&clear, &clear_ids).stage("sweep")?;
    let sweep = |beta: f64| cached_sweep(&clear, &content, beta, out, settings).stage("sweep");

    let model = match &plan.density_model {
        Some(p) => DensityModel::load(p).stage("density model")?,
        None => {
            let mut samples = Vec::new();
            for &beta in &plan.density_betas {
                let dir = sweep(beta)?;
                let feats = clear_ids
                    .par_iter()
                    .map(|id| extract_features(&read_rgb(dir.join("images").join(id))?))
                    .collect::<Result<Vec<_>>>()
                    .stage("density model")?;
                samples.extend(feats.into_iter().map(|f| (f, beta)));
            }
            let model = fit_density_regressor(&samples, plan.ridge).stage("density model")?;
            model.save(out.join("density_model.json")).stage("density model")?;
            model
        }
    };

    let real_ids: Vec<String> = list_pngs(&plan.real_dataset)
        .stage("ranking")?
        .into_iter()
        .filter(|id| !excluded.contains(id))
        .collect();
    let estimates = real_ids
        .par_iter()
        .map(|id| Ok((id.clone(), model.predict(&extract_features(&read_rgb(plan.real_dataset.join(id))?)?))))
        .collect::<Result<Vec<_>>>()
        .stage("ranking")?;
    let ranked = RankedDataset::from_estimates(estimates).stage("ranking")?;
    let ranking = plan.ranking_path();
    std::fs::write(&ranking, ranked.to_json_lines()).map_err(|e| Error::io(&ranking, e)).stage("ranking")?;

    let synth_ids: Vec<&String> = clear_ids.iter().filter(|id| !excluded.contains(*id)).collect();
    let synthetic = |dir: &Path| -> Vec<LabeledImage> {
        synth_ids
            .iter()
            .map(|id| LabeledImage {
                image: dir.join("images").join(id).display().to_string(),
                label: clear.label(id).display().to_string(),
            })
            .collect()
    };
    let light_dir = sweep(plan.light_beta)?;
    let stage4 = plan.stage4_manifest();
    DatasetManifest::single_source(&synthetic(&light_dir), Source::SynthLight)
        .write(&stage4)
        .stage("stage-4 manifest")?;

    let light = match (plan.light_count, plan.light_beta_max) {
        (Some(n), _) => select_light_subset(&ranked, n).stage("light subset")?,
        (None, Some(b)) => select_by_threshold(&ranked, b),
        (None, None) => unreachable!("validated"),
    };
    let light_subset = plan.light_subset_path();
    write_lines(&light_subset, &light).stage("light subset")?;

    let mut outcome = CurriculumOutcome { manifests: vec![stage4], ranking, light_subset, awaiting_labels: None };
    if !plan.noisy_label_dir.is_dir() {
        outcome.awaiting_labels = Some(plan.noisy_label_dir.clone());
        return Ok(outcome);
    }
    let images: Vec<(String, PathBuf)> = light.iter().map(|id| (id.clone(), plan.real_dataset.join(id))).collect();
    let real = ingest_noisy_labels(&images, &plan.noisy_label_dir, plan.num_classes, plan.void_id).stage("noisy labels")?;

    let dense_dir = sweep(plan.dense_beta)?;
    let opts = MixOptions { synthetic_count: None, shuffle_seed: plan.shuffle_seed };
    let stage7 = plan.stage7_manifest();
    build_mixed_manifest(&synthetic(&dense_dir), &real, plan.w, &opts)
        .and_then(|m| m.write(&stage7))
        .stage("stage-7 manifest")?;
    outcome.manifests.push(stage7);
    Ok(outcome)
}
