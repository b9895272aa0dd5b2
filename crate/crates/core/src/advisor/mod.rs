//! The AI advisor: a learned convolutional classifier and a scripted
//! recommendation schedule with an exact number of correct entries.

mod model_io;
pub mod network;
pub mod optim;
mod scripted;
pub mod train;

use alloc::collections::BTreeMap;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::blocky::DiagnosisLabel;
use crate::render::XrayImage;
use crate::{Error, Result};

pub use model_io::{decode_model, encode_model, ModelFile, MODEL_FORMAT_VERSION};
pub use network::{cross_entropy, gradient_check, softmax, ArchConfig, ConvBlock, Head, Network};
pub use scripted::{scripted_schedule, ScriptedConfidence};
pub use train::{evaluate, flip_into, train, EpochLog, Executor, LabeledImages, Sequential, TrainingOutcome, TrainingRecipe};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionSource {
    Learned,
    Scripted,
}

/// One recommendation shown to participants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvisorPrediction {
    pub sample_id: String,
    pub label: DiagnosisLabel,
    /// Probability assigned to `label`, in `[0, 1]`.
    pub confidence: f64,
    pub source: PredictionSource,
    /// Reserved for explanation payloads.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Learned { model_hash: String },
    Scripted { manifest_hash: String, seed: u64, n_correct: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTable {
    pub provenance: Provenance,
    pub entries: BTreeMap<String, AdvisorPrediction>,
}

impl PredictionTable {
    pub fn get(&self, sample_id: &str) -> Result<&AdvisorPrediction> {
        self.entries
            .get(sample_id)
            .ok_or_else(|| Error::Schedule(alloc::format!("no prediction for sample {sample_id}")))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Class probabilities and the implied prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    pub probabilities: alloc::vec::Vec<f64>,
    pub label: DiagnosisLabel,
    pub confidence: f64,
}

pub fn scores(model: &Network, input: &[f64]) -> Result<ClassScores> {
    let logits = model.logits(input)?;
    let probabilities = network::softmax(&logits);
    let best = network::argmax(&logits);
    Ok(ClassScores { label: DiagnosisLabel::from_class_index(best), confidence: probabilities[best], probabilities })
}

/// Recommendation for one image at the model's input resolution.
pub fn predict(model: &Network, sample_id: &str, image: &XrayImage) -> Result<AdvisorPrediction> {
    let size = model.arch().input_size as u32;
    if image.width != size || image.height != size {
        return Err(Error::Shape {
            expected: model.arch().input_len(),
            actual: (image.width * image.height) as usize,
        });
    }
    let input: alloc::vec::Vec<f64> = image.pixels.iter().map(|&v| v as f64).collect();
    let s = scores(model, &input)?;
    Ok(AdvisorPrediction {
        sample_id: sample_id.into(),
        label: s.label,
        confidence: s.confidence,
        source: PredictionSource::Learned,
        explanation: None,
    })
}
