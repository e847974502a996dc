mod common;

use std::path::Path;

use common::{write_clear_dataset, write_real_dataset};
use foghorn::cmada::{build_curriculum, CurriculumPlan, DatasetManifest, SimulationSettings, Source};
use foghorn::depth_completion::CompletionParams;
use foghorn::synthetic::camera_for_width;
use foghorn::Error;

const W: usize = 48;
const H: usize = 32;

fn settings() -> SimulationSettings {
    SimulationSettings {
        camera: camera_for_width(W),
        completion: CompletionParams { superpixels: 32, ..Default::default() },
        ..Default::default()
    }
}

fn plan(root: &Path) -> CurriculumPlan {
    CurriculumPlan {
        clear_dataset: root.join("clear"),
        real_dataset: root.join("real/images"),
        density_model: None,
        density_betas: vec![0.0, 0.005, 0.01, 0.02],
        ridge: 1e-3,
        light_beta: 0.005,
        dense_beta: 0.01,
        light_count: Some(4),
        light_beta_max: None,
        noisy_label_dir: root.join("noisy"),
        w: 1.0 / 3.0,
        exclusion_list: None,
        output_dir: root.join("out"),
        num_classes: 19,
        void_id: 255,
        shuffle_seed: None,
    }
}

fn fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_clear_dataset(&dir.path().join("clear"), 8, W, H);
    write_real_dataset(&dir.path().join("real"), 9, W, H);
    dir
}

fn read_all(paths: &[std::path::PathBuf]) -> Vec<Vec<u8>> {
    paths.iter().map(|p| std::fs::read(p).unwrap()).collect()
}

#[test]
fn two_step_curriculum_with_label_handoff() {
    let dir = fixture();
    let p = plan(dir.path());

    let first = build_curriculum(&p, &settings()).unwrap();
    assert_eq!(first.manifests, vec![p.stage4_manifest()]);
    assert_eq!(first.awaiting_labels.as_deref(), Some(p.noisy_label_dir.as_path()));
    let stage4 = DatasetManifest::read(&p.stage4_manifest()).unwrap();
    assert_eq!(stage4.entries.len(), 8);
    assert!(stage4.entries.iter().all(|e| e.source == Source::SynthLight && e.image.contains("beta_0.005")));

    // the external model labels the light subset; true labels stand in for it
    let light = std::fs::read_to_string(p.light_subset_path()).unwrap();
    let light: Vec<&str> = light.lines().collect();
    assert_eq!(light.len(), 4);
    for id in &light {
        let dst = p.noisy_label_dir.join(id);
        std::fs::create_dir_all(dst.parent().unwrap()).unwrap();
        std::fs::copy(dir.path().join("real/labels").join(id), dst).unwrap();
    }

    let second = build_curriculum(&p, &settings()).unwrap();
    assert_eq!(second.manifests, vec![p.stage4_manifest(), p.stage7_manifest()]);
    assert!(second.awaiting_labels.is_none());
    let mixed = DatasetManifest::read(&p.stage7_manifest()).unwrap();
    assert_eq!(mixed.metadata.l, 8);
    assert_eq!(mixed.metadata.u, 4);
    assert!((mixed.metadata.lambda - 4.0 / 8.0 / 3.0).abs() < 1e-12);
    assert_eq!(mixed.count(true), 8);
    assert_eq!(mixed.count(false), 3);
    assert!(mixed.entries.iter().filter(|e| e.source == Source::SynthDense).all(|e| e.image.contains("beta_0.01")));

    // unchanged inputs: cached sweeps, identical bytes
    let key = p.output_dir.join("beta_0.01/cache_key");
    let stamp = std::fs::metadata(&key).unwrap().modified().unwrap();
    let before = read_all(&second.manifests);
    let third = build_curriculum(&p, &settings()).unwrap();
    assert_eq!(read_all(&third.manifests), before);
    assert_eq!(std::fs::metadata(&key).unwrap().modified().unwrap(), stamp);
}

#[test]
fn light_subset_is_least_foggy() {
    let dir = fixture();
    let p = plan(dir.path());
    build_curriculum(&p, &settings()).unwrap();
    let ranking = std::fs::read_to_string(p.ranking_path()).unwrap();
    let light = std::fs::read_to_string(p.light_subset_path()).unwrap();
    let first4: Vec<String> = ranking
        .lines()
        .take(4)
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["image"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(light.lines().collect::<Vec<_>>(), first4);
}

#[test]
fn plan_ordering_and_stage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = CurriculumPlan { light_beta: 0.01, dense_beta: 0.01, ..plan(dir.path()) };
    let err = build_curriculum(&bad, &settings()).unwrap_err();
    assert!(matches!(&err, Error::Stage { stage, source } if stage == "validation" && matches!(**source, Error::InvalidPlan(_))));

    let both = CurriculumPlan { light_beta_max: Some(0.004), ..plan(dir.path()) };
    assert!(build_curriculum(&both, &settings()).is_err());

    // no clear dataset on disk
    let err = build_curriculum(&plan(dir.path()), &settings()).unwrap_err();
    assert!(err.to_string().starts_with("stage sweep"), "{err}");
}

#[test]
fn exclusion_list_is_honored() {
    let dir = fixture();
    let ex = dir.path().join("exclude.txt");
    std::fs::write(&ex, "city0/scene_000.png\nreal_000.png\n").unwrap();
    let p = CurriculumPlan { exclusion_list: Some(ex), light_count: None, light_beta_max: Some(1.0), ..plan(dir.path()) };
    build_curriculum(&p, &settings()).unwrap();
    let stage4 = std::fs::read_to_string(p.stage4_manifest()).unwrap();
    assert!(!stage4.contains("city0/scene_000.png"));
    assert_eq!(stage4.lines().count(), 7);
    let light = std::fs::read_to_string(p.light_subset_path()).unwrap();
    assert!(!light.contains("real_000.png"));
    assert_eq!(light.lines().count(), 8);
}
