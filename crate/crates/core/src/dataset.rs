//! Per-sample generation and study subset selection.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blocky::{assign_symptoms, label_of, BlockyParams, DiagnosisLabel, SymptomAssignment};
use crate::generation::{sample_traits, GenerationConfig};
use crate::rng::{derive_seed, stream, tag, tagged_stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
    Experimental,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Validation, Split::Test, Split::Experimental];

    pub const fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
            Split::Experimental => "experimental",
        }
    }

    /// Only the experimental split is drawn with widened pose spread.
    pub const fn pose_shift(self) -> bool {
        matches!(self, Split::Experimental)
    }

    /// Sample counts of the full-scale datasets.
    pub const fn paper_scale_size(self) -> usize {
        match self {
            Split::Train => 40_000,
            Split::Validation => 1_000,
            Split::Test => 3_000,
            Split::Experimental => 3_000,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.name() == s || (s == "val" && *x == Split::Validation))
            .ok_or_else(|| Error::Config(format!("unknown split {s:?}")))
    }
}

/// One generated sample: everything needed to re-render it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub split: Split,
    pub seed: u64,
    pub label: DiagnosisLabel,
    pub symptoms: SymptomAssignment,
    pub params: BlockyParams,
}

impl SampleRecord {
    /// Image file name for this sample.
    pub fn image_name(&self) -> String {
        format!("{}_{}.png", self.split.name(), self.sample_id)
    }
}

pub fn sample_id(index: u64) -> String {
    format!("{index:06}")
}

/// Per-sample seed derived from the dataset seed, split and index.
pub fn sample_seed(dataset_seed: u64, split: Split, index: u64) -> u64 {
    derive_seed(derive_seed(dataset_seed, tag(split.name())), index)
}

/// Generates sample `index` of a split. Depends only on its arguments, so
/// samples can be produced in any order or in parallel.
pub fn generate_sample(cfg: &GenerationConfig, split: Split, dataset_seed: u64, index: u64) -> Result<SampleRecord> {
    regenerate(cfg, split, sample_id(index), sample_seed(dataset_seed, split, index))
}

/// Rebuilds a sample from its own seed.
pub fn regenerate(cfg: &GenerationConfig, split: Split, sample_id: String, seed: u64) -> Result<SampleRecord> {
    let mut rng = stream(seed);
    let label = if rng.random_bool(cfg.p_sick) { DiagnosisLabel::Sick } else { DiagnosisLabel::Healthy };
    let symptoms = assign_symptoms(label, &cfg.symptom_counts, cfg.severity_levels, &mut rng)?;
    let mut params = sample_traits(&symptoms, &cfg.traits, split.pose_shift(), &mut rng)?;
    params.seed = seed;
    debug_assert_eq!(label_of(&symptoms), label);
    Ok(SampleRecord { sample_id, split, seed, label, symptoms, params })
}

/// Input row for subset selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionCandidate {
    pub sample_id: String,
    pub pose_deviation: f64,
    pub advisor_correct: bool,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Draws `n_correct` advisor-correct and `n_total - n_correct` advisor-incorrect
/// samples uniformly from rows whose pose deviation exceeds the median of all
/// rows, skipping ids in `exclude`. The result is shuffled.
pub fn select_study_subset(
    rows: &[SelectionCandidate],
    n_total: usize,
    n_correct: usize,
    seed: u64,
    exclude: &BTreeSet<String>,
) -> Result<Vec<String>> {
    if n_correct > n_total {
        return Err(Error::Selection(format!("n_correct {n_correct} exceeds n_total {n_total}")));
    }
    if rows.is_empty() {
        return Err(Error::Selection("manifest is empty".into()));
    }
    let mut devs: Vec<f64> = rows.iter().map(|r| r.pose_deviation).collect();
    let cut = median(&mut devs);

    let mut correct: Vec<&str> = Vec::new();
    let mut incorrect: Vec<&str> = Vec::new();
    for r in rows.iter().filter(|r| r.pose_deviation > cut && !exclude.contains(&r.sample_id)) {
        if r.advisor_correct {
            correct.push(&r.sample_id);
        } else {
            incorrect.push(&r.sample_id);
        }
    }
    let n_incorrect = n_total - n_correct;
    for (name, pool, need) in [("advisor-correct", &correct, n_correct), ("advisor-incorrect", &incorrect, n_incorrect)] {
        if pool.len() < need {
            return Err(Error::Selection(format!(
                "{name} stratum has {} high-pose candidates, need {need}",
                pool.len()
            )));
        }
    }

    let mut rng = tagged_stream(seed, "study-subset");
    let mut out: Vec<String> = Vec::with_capacity(n_total);
    for (pool, need) in [(&correct, n_correct), (&incorrect, n_incorrect)] {
        let picks = rand::seq::index::sample(&mut rng, pool.len(), need);
        let mut picks: Vec<usize> = picks.into_iter().collect();
        picks.sort_unstable();
        out.extend(picks.into_iter().map(|i| String::from(pool[i])));
    }
    out.shuffle(&mut rng);
    Ok(out)
}
