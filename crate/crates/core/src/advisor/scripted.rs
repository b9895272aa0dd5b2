use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_distr::{Beta, Distribution as _};
use serde::{Deserialize, Serialize};

use super::{AdvisorPrediction, PredictionSource, PredictionTable, Provenance};
use crate::blocky::DiagnosisLabel;
use crate::rng::tagged_stream;
use crate::{Error, Result};

/// Beta shapes for scripted confidences. Draws are mapped to `[0.5, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedConfidence {
    pub correct: (f64, f64),
    pub incorrect: (f64, f64),
}

impl Default for ScriptedConfidence {
    fn default() -> Self {
        Self { correct: (6.0, 2.0), incorrect: (4.0, 2.0) }
    }
}

/// Builds a table in which exactly `n_correct` of `truth` are predicted
/// correctly; the rest carry the flipped label. Which entries are wrong is a
/// uniform draw from `seed`.
pub fn scripted_schedule(
    truth: &[(String, DiagnosisLabel)],
    n_correct: usize,
    seed: u64,
    manifest_hash: &str,
    confidence: &ScriptedConfidence,
) -> Result<PredictionTable> {
    if n_correct > truth.len() {
        return Err(Error::Schedule(format!("n_correct {n_correct} exceeds {} samples", truth.len())));
    }
    let beta = |(a, b): (f64, f64)| Beta::new(a, b).map_err(|e| Error::Schedule(format!("confidence beta: {e}")));
    let correct_dist = beta(confidence.correct)?;
    let incorrect_dist = beta(confidence.incorrect)?;

    let mut rng = tagged_stream(seed, "scripted-schedule");
    let mut wrong = alloc::vec![false; truth.len()];
    for i in rand::seq::index::sample(&mut rng, truth.len(), truth.len() - n_correct).iter() {
        wrong[i] = true;
    }
    let mut entries = BTreeMap::new();
    let mut seen: Vec<&str> = Vec::with_capacity(truth.len());
    for ((id, label), is_wrong) in truth.iter().zip(wrong) {
        seen.push(id);
        let draw: f64 = if is_wrong { incorrect_dist.sample(&mut rng) } else { correct_dist.sample(&mut rng) };
        let prediction = AdvisorPrediction {
            sample_id: id.clone(),
            label: if is_wrong { label.flipped() } else { *label },
            confidence: 0.5 + 0.5 * draw.clamp(0.0, 1.0),
            source: PredictionSource::Scripted,
            explanation: None,
        };
        if entries.insert(id.clone(), prediction).is_some() {
            return Err(Error::Schedule(format!("duplicate sample id {id}")));
        }
    }
    Ok(PredictionTable {
        provenance: Provenance::Scripted { manifest_hash: manifest_hash.into(), seed, n_correct },
        entries,
    })
}
