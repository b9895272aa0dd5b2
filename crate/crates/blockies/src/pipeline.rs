//! Advisor training, evaluation, scripted schedules and study plans on disk.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use blockies_core::advisor::{
    decode_model, encode_model, scores, scripted_schedule, train, AdvisorPrediction, ArchConfig, EpochLog, ModelFile,
    Network, PredictionSource, PredictionTable, Provenance as TableProvenance, ScriptedConfidence, TrainingRecipe,
};
use blockies_core::dataset::Split;
use blockies_core::hash::sha256_hex;
use blockies_core::study::{build_plan, StudyDesign, StudyPlan};
use serde::{Deserialize, Serialize};

use crate::data::{load_split, RayonExecutor};
use crate::fsutil::{atomic_write, read_json, write_json};
use crate::manifest::{manifest_path, Manifest};
use crate::provenance::Provenance;

#[derive(Debug, Clone)]
pub struct TrainRequest {
    pub data_dir: PathBuf,
    pub train_split: Split,
    pub val_split: Split,
    pub recipe: TrainingRecipe,
    pub arch: ArchConfig,
    pub out: PathBuf,
}

/// Training log written next to the model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingLog {
    pub recipe: TrainingRecipe,
    pub arch: ArchConfig,
    pub train_samples: usize,
    pub val_samples: usize,
    pub best_epoch: u32,
    pub best_val_loss: f64,
    pub epochs: Vec<EpochLog>,
}

pub fn log_path(model: &Path) -> PathBuf {
    let mut name = model.file_name().unwrap_or_default().to_os_string();
    name.push(".log.json");
    model.with_file_name(name)
}

pub fn train_advisor(req: &TrainRequest, mut on_epoch: impl FnMut(&EpochLog)) -> Result<TrainingLog> {
    let size = req.arch.input_size as u32;
    let (train_m, train_set) = load_split(&req.data_dir, req.train_split, size)?;
    let (val_m, val_set) = load_split(&req.data_dir, req.val_split, size)?;
    let outcome = train(&train_set, &val_set, &req.recipe, &req.arch, &RayonExecutor, |e| on_epoch(e))?;
    let bytes = encode_model(&outcome.model, &req.recipe);
    atomic_write(&req.out, &bytes)?;
    let log = TrainingLog {
        recipe: req.recipe.clone(),
        arch: req.arch.clone(),
        train_samples: train_set.len(),
        val_samples: val_set.len(),
        best_epoch: outcome.best_epoch,
        best_val_loss: outcome.best_val_loss,
        epochs: outcome.log,
    };
    write_json(&log_path(&req.out), &log)?;
    Provenance::new("train", Some(req.recipe.seed), None)
        .input(&format!("{}.csv", req.train_split.name()), &train_m.to_bytes()?)
        .input(&format!("{}.csv", req.val_split.name()), &val_m.to_bytes()?)
        .setting("recipe", &req.recipe)
        .setting("arch", &req.arch)
        .output("model", &bytes)
        .write_beside(&req.out)?;
    Ok(log)
}

pub fn load_model(path: &Path) -> Result<(ModelFile, String)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading model {}", path.display()))?;
    let model = decode_model(&bytes).with_context(|| format!("decoding model {}", path.display()))?;
    Ok((model, sha256_hex(&bytes)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluation {
    pub split: Split,
    pub samples: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Runs the learned advisor over a split.
pub fn evaluate_split(model: &Network, model_hash: &str, data_dir: &Path, split: Split) -> Result<(PredictionTable, Evaluation)> {
    let (manifest, set) = load_split(data_dir, split, model.arch().input_size as u32)?;
    let exec = RayonExecutor;
    let scored = blockies_core::advisor::Executor::map(&exec, set.len(), |i| scores(model, set.image(i)));
    let mut table = PredictionTable {
        provenance: TableProvenance::Learned { model_hash: model_hash.into() },
        entries: Default::default(),
    };
    let mut correct = 0;
    for (rec, s) in manifest.records.iter().zip(scored) {
        let s = s?;
        correct += (s.label == rec.label) as usize;
        table.entries.insert(
            rec.sample_id.clone(),
            AdvisorPrediction {
                sample_id: rec.sample_id.clone(),
                label: s.label,
                confidence: s.confidence,
                source: PredictionSource::Learned,
                explanation: None,
            },
        );
    }
    let samples = manifest.records.len();
    Ok((table, Evaluation { split, samples, correct, accuracy: correct as f64 / samples as f64 }))
}

/// Scripted advisor with exactly `n_correct` right answers over a split.
pub fn scripted_predictions(
    data_dir: &Path,
    split: Split,
    n_correct: usize,
    seed: u64,
    confidence: &ScriptedConfidence,
) -> Result<PredictionTable> {
    let path = manifest_path(data_dir, split);
    let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    let manifest = Manifest::parse(&bytes)?;
    let truth: Vec<_> = manifest.records.iter().map(|r| (r.sample_id.clone(), r.label)).collect();
    Ok(scripted_schedule(&truth, n_correct, seed, &sha256_hex(&bytes), confidence)?)
}

pub fn write_predictions(path: &Path, table: &PredictionTable, prov: Provenance) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(table)?;
    atomic_write(path, &bytes)?;
    prov.output("predictions", &bytes).write_beside(path)?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<PredictionTable> {
    read_json(path)
}

pub fn make_plan(data_dir: &Path, split: Split, predictions: &PredictionTable, design: StudyDesign, seed: u64) -> Result<StudyPlan> {
    let manifest = Manifest::load(data_dir, split)?;
    for r in &manifest.records {
        if !data_dir.join(r.image_name()).is_file() {
            bail!("image {} listed in the manifest is missing", r.image_name());
        }
    }
    Ok(build_plan(&manifest.records, predictions, design, seed)?)
}

pub fn read_plan(path: &Path) -> Result<StudyPlan> {
    let plan: StudyPlan = read_json(path)?;
    plan.validate()?;
    Ok(plan)
}
