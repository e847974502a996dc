use std::path::Path;

use rayon::prelude::*;
use serde_json::json;

use super::{Cli, Command, CurriculumArgs, DensityRankArgs, DensityTrainArgs, EvaluateArgs, SimulateArgs, SweepArgs, ToolConfig};
use crate::cmada::{build_curriculum, generate_sweep, ClearDataset, CurriculumPlan};
use crate::error::{Error, Result, StageContext};
use crate::eval::{evaluate_dirs, format_table, ClassDefinition};
use crate::fog_density::{extract_features, fit_density_regressor, DensityModel, RankedDataset};
use crate::fog_synthesis::{mor_from_beta, simulate_scene_parts, FogConfig};
use crate::imaging::io::{list_pngs, read_disparity, read_labels, read_rgb, write_rgb, write_transmittance};

pub(super) fn dispatch(cli: &Cli, cfg: &ToolConfig) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a, cfg, cli.json),
        Command::Sweep(a) => sweep(a, cfg, cli.json),
        Command::DensityTrain(a) => density_train(a, cli.json),
        Command::DensityRank(a) => density_rank(a, cfg),
        Command::Curriculum(a) => curriculum(a, cfg, cli.json),
        Command::Evaluate(a) => evaluate(a, cli.json),
    }
}

fn emit(json_mode: bool, value: serde_json::Value, text: impl FnOnce() -> String) {
    if json_mode {
        println!("{value}");
    } else {
        print!("{}", text());
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn simulate(a: &SimulateArgs, cfg: &ToolConfig, json_mode: bool) -> Result<()> {
    let fog = FogConfig {
        beta: a.beta,
        allow_haze: a.allow_haze || cfg.fog.allow_haze,
        atmospheric_light: a.atmospheric_light.or(cfg.fog.atmospheric_light),
        ..cfg.fog.clone()
    };
    fog.validate().stage("validation")?;
    let clear = read_rgb(&a.input).stage("reading inputs")?;
    let d = read_disparity(&a.disparity).stage("reading inputs")?;
    let labels = read_labels(&a.labels, a.instances.as_deref()).stage("reading inputs")?;
    let s = cfg.simulation();
    let sim = simulate_scene_parts(&clear, &d, &labels, &s.camera, &fog, &s.completion, &s.filter)?;
    write_rgb(&a.out, &sim.foggy).stage("writing outputs")?;
    if let Some(p) = &a.transmittance_out {
        write_transmittance(p, &sim.transmittance).stage("writing outputs")?;
    }
    let mor = mor_from_beta(a.beta).ok();
    emit(
        json_mode,
        json!({
            "output": a.out.display().to_string(),
            "beta": a.beta,
            "mor": mor,
            "atmospheric_light": sim.atmospheric_light,
        }),
        || {
            let vis = mor.map_or_else(|| "no fog".to_string(), |m| format!("MOR {m:.1} m"));
            format!("wrote {} (beta {}, {vis})\n", a.out.display(), a.beta)
        },
    );
    Ok(())
}

fn sweep(a: &SweepArgs, cfg: &ToolConfig, json_mode: bool) -> Result<()> {
    let mut s = cfg.simulation();
    s.fog.allow_haze |= a.allow_haze;
    let dirs = generate_sweep(&ClearDataset::new(&a.dataset), &a.betas, &a.out, &s).stage("sweep")?;
    let names: Vec<String> = dirs.iter().map(|d| d.display().to_string()).collect();
    emit(json_mode, json!({ "datasets": names }), || names.iter().map(|n| format!("wrote {n}\n")).collect());
    Ok(())
}

/// `beta_<value>` subdirectories of a sweep root, sorted by value.
fn sweep_dirs(root: &Path) -> Result<Vec<(f64, std::path::PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(beta) = name.strip_prefix("beta_").and_then(|b| b.parse::<f64>().ok()) {
            if entry.path().join("images").is_dir() {
                out.push((beta, entry.path()));
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    if out.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "{} needs at least two beta_<value>/images directories",
            root.display()
        )));
    }
    Ok(out)
}

fn density_train(a: &DensityTrainArgs, json_mode: bool) -> Result<()> {
    let mut samples = Vec::new();
    for (beta, dir) in sweep_dirs(&a.sweep).stage("reading sweep")? {
        let images = dir.join("images");
        let ids = list_pngs(&images).stage("reading sweep")?;
        let feats = ids
            .par_iter()
            .map(|id| extract_features(&read_rgb(images.join(id))?))
            .collect::<Result<Vec<_>>>()
            .stage("features")?;
        samples.extend(feats.into_iter().map(|f| (f, beta)));
    }
    let model = fit_density_regressor(&samples, a.ridge).stage("fitting")?;
    model.save(&a.out).stage("writing outputs")?;
    emit(json_mode, serde_json::to_value(&model).expect("model serializes"), || {
        format!("fit on {} images, wrote {}\n", samples.len(), a.out.display())
    });
    Ok(())
}

fn density_rank(a: &DensityRankArgs, cfg: &ToolConfig) -> Result<()> {
    let model_path = a
        .model
        .as_ref()
        .or(cfg.density_model.as_ref())
        .ok_or_else(|| Error::InvalidParameter("no density model: pass --model or set density_model".into()))?;
    let model = DensityModel::load(model_path).stage("loading model")?;
    let ids = list_pngs(&a.images).stage("reading images")?;
    let estimates = ids
        .par_iter()
        .map(|id| {
            let path = a.images.join(id);
            let beta = model.predict(&extract_features(&read_rgb(&path)?)?);
            Ok((path.display().to_string(), beta))
        })
        .collect::<Result<Vec<_>>>()
        .stage("estimation")?;
    let lines = RankedDataset::from_estimates(estimates).stage("ranking")?.to_json_lines();
    match &a.out {
        Some(p) => write_text(p, &lines).stage("writing outputs")?,
        None => print!("{lines}"),
    }
    Ok(())
}

fn curriculum(a: &CurriculumArgs, cfg: &ToolConfig, json_mode: bool) -> Result<()> {
    let mut plan = CurriculumPlan::load(&a.plan).stage("validation")?;
    if plan.density_model.is_none() {
        plan.density_model = cfg.density_model.clone();
    }
    let out = build_curriculum(&plan, &cfg.simulation())?;
    let manifests: Vec<String> = out.manifests.iter().map(|m| m.display().to_string()).collect();
    if let Some(dir) = &out.awaiting_labels {
        eprintln!(
            "note: no noisy labels at {}; wrote the light-fog manifest only. \
             Label {} with the adapted model and rerun.",
            dir.display(),
            out.light_subset.display()
        );
    }
    emit(
        json_mode,
        json!({
            "manifests": manifests,
            "ranking": out.ranking.display().to_string(),
            "light_subset": out.light_subset.display().to_string(),
            "awaiting_labels": out.awaiting_labels.as_ref().map(|p| p.display().to_string()),
        }),
        || manifests.iter().map(|m| format!("wrote {m}\n")).collect(),
    );
    Ok(())
}

fn evaluate(a: &EvaluateArgs, json_mode: bool) -> Result<()> {
    let def = match &a.classes {
        Some(p) => ClassDefinition::load(p).stage("validation")?,
        None => ClassDefinition::default(),
    };
    let e = evaluate_dirs(&a.gt, &a.pred, &def).stage("evaluation")?;
    let value = serde_json::to_value(&e).expect("report serializes");
    if let Some(p) = &a.out {
        write_text(p, &(serde_json::to_string_pretty(&value).expect("report serializes") + "\n")).stage("writing outputs")?;
    }
    emit(json_mode, value, || format_table(&e));
    Ok(())
}
