//! The parametric creature model with its symptoms and diagnosis rule.

use core::fmt;
use core::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of symptom kinds in the catalog.
pub const SYMPTOM_COUNT: usize = 4;

/// The diagnostic symptoms. Each is realised through one continuous trait.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymptomKind {
    StrongSpineBend,
    MainBoneMutation,
    StrongShapeVariation,
    StretchedArms,
}

impl SymptomKind {
    pub const ALL: [SymptomKind; SYMPTOM_COUNT] = [
        SymptomKind::StrongSpineBend,
        SymptomKind::MainBoneMutation,
        SymptomKind::StrongShapeVariation,
        SymptomKind::StretchedArms,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn name(self) -> &'static str {
        match self {
            SymptomKind::StrongSpineBend => "strong_spine_bend",
            SymptomKind::MainBoneMutation => "main_bone_mutation",
            SymptomKind::StrongShapeVariation => "strong_shape_variation",
            SymptomKind::StretchedArms => "stretched_arms",
        }
    }
}

/// Diagnosis of a Blocky. Only ever produced by [`label_of`] (or parsed back
/// from a record that was produced by it).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosisLabel {
    Healthy,
    Sick,
}

impl DiagnosisLabel {
    pub const fn flipped(self) -> Self {
        match self {
            DiagnosisLabel::Healthy => DiagnosisLabel::Sick,
            DiagnosisLabel::Sick => DiagnosisLabel::Healthy,
        }
    }

    /// Class index used by the classifier head.
    pub const fn class_index(self) -> usize {
        match self {
            DiagnosisLabel::Healthy => 0,
            DiagnosisLabel::Sick => 1,
        }
    }

    pub const fn from_class_index(i: usize) -> Self {
        if i == 0 {
            DiagnosisLabel::Healthy
        } else {
            DiagnosisLabel::Sick
        }
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            DiagnosisLabel::Healthy => "healthy",
            DiagnosisLabel::Sick => "sick",
        }
    }
}

impl fmt::Display for DiagnosisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DiagnosisLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "healthy" => Ok(DiagnosisLabel::Healthy),
            "sick" => Ok(DiagnosisLabel::Sick),
            other => Err(Error::Config(alloc::format!("unknown label {other:?}"))),
        }
    }
}

/// Severity of every symptom kind; 0 means absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SymptomAssignment {
    severities: [u8; SYMPTOM_COUNT],
}

impl SymptomAssignment {
    pub const fn none() -> Self {
        Self { severities: [0; SYMPTOM_COUNT] }
    }

    /// Builds an assignment, checking every severity against `levels`.
    pub fn new(severities: [u8; SYMPTOM_COUNT], levels: u8) -> Result<Self> {
        if let Some(s) = severities.iter().find(|&&s| s > levels) {
            return Err(Error::Config(alloc::format!(
                "severity {s} exceeds configured level count {levels}"
            )));
        }
        Ok(Self { severities })
    }

    pub fn from_active(active: &[SymptomKind]) -> Self {
        let mut out = Self::none();
        for kind in active {
            out.severities[kind.index()] = 1;
        }
        out
    }

    pub const fn severity(&self, kind: SymptomKind) -> u8 {
        self.severities[kind.index()]
    }

    pub const fn severities(&self) -> [u8; SYMPTOM_COUNT] {
        self.severities
    }

    pub fn is_active(&self, kind: SymptomKind) -> bool {
        self.severity(kind) >= 1
    }

    pub fn active_count(&self) -> usize {
        self.severities.iter().filter(|&&s| s >= 1).count()
    }

    pub fn active(&self) -> impl Iterator<Item = SymptomKind> + '_ {
        SymptomKind::ALL.into_iter().filter(|k| self.is_active(*k))
    }
}

/// Sick iff at least two symptoms are present.
pub fn label_of(assignment: &SymptomAssignment) -> DiagnosisLabel {
    if assignment.active_count() >= 2 {
        DiagnosisLabel::Sick
    } else {
        DiagnosisLabel::Healthy
    }
}

/// Relative weights of the number of active symptoms per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymptomCountWeights {
    /// Weights for 0 and 1 active symptoms.
    pub healthy: [f64; 2],
    /// Weights for 2, 3 and 4 active symptoms.
    pub sick: [f64; 3],
}

impl Default for SymptomCountWeights {
    fn default() -> Self {
        Self { healthy: [0.4, 0.6], sick: [0.6, 0.3, 0.1] }
    }
}

impl SymptomCountWeights {
    pub fn validate(&self) -> Result<()> {
        fn check(name: &str, w: &[f64]) -> Result<()> {
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::Config(alloc::format!(
                    "{name} symptom-count weights must be finite and nonnegative"
                )));
            }
            if w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::Config(alloc::format!(
                    "{name} symptom-count weights need at least one positive entry"
                )));
            }
            Ok(())
        }
        check("healthy", &self.healthy)?;
        check("sick", &self.sick)
    }
}

/// Draws a symptom subset consistent with `target`: the count comes from the
/// class's weighted count distribution, the subset is uniform among subsets of
/// that size, and each active severity is uniform on `1..=levels`.
pub fn assign_symptoms<R: Rng + ?Sized>(
    target: DiagnosisLabel,
    weights: &SymptomCountWeights,
    levels: u8,
    rng: &mut R,
) -> Result<SymptomAssignment> {
    weights.validate()?;
    if levels == 0 {
        return Err(Error::Config("severity level count must be at least 1".into()));
    }
    let (offset, table): (usize, &[f64]) = match target {
        DiagnosisLabel::Healthy => (0, &weights.healthy),
        DiagnosisLabel::Sick => (2, &weights.sick),
    };
    let pick = WeightedIndex::new(table.iter().copied())
        .map_err(|e| Error::Config(alloc::format!("symptom-count weights: {e}")))?;
    let count = offset + pick.sample(rng);

    let chosen = rand::seq::index::sample(rng, SYMPTOM_COUNT, count);
    let mut severities = [0u8; SYMPTOM_COUNT];
    for i in chosen.iter() {
        severities[i] = rng.random_range(1..=levels);
    }
    let out = SymptomAssignment { severities };
    debug_assert_eq!(label_of(&out), target);
    Ok(out)
}

/// Complete parametric description of one creature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockyParams {
    /// Total turning angle of the spine arc (radians, signed).
    pub spine_bend: f64,
    /// Main-bone shape: 0 sphere, 1 near-cuboid, above 1 pointed.
    pub bone_shape: f64,
    /// Shape delta between main and secondary bones.
    pub sphere_diff: f64,
    /// Limb extension in [0, 1]; below 0.5 the limbs are retracted.
    pub arm_pos: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub roll: f64,
    pub offset_x: f64,
    pub offset_y: f64,
    pub block_scale: f64,
    pub seed: u64,
}

impl BlockyParams {
    /// A plain healthy creature in the canonical pose.
    pub const fn neutral() -> Self {
        Self {
            spine_bend: 0.1,
            bone_shape: 0.5,
            sphere_diff: 0.15,
            arm_pos: 0.2,
            pitch: 0.0,
            yaw: 0.0,
            roll: 0.0,
            offset_x: 0.0,
            offset_y: 0.0,
            block_scale: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.spine_bend,
            self.bone_shape,
            self.sphere_diff,
            self.arm_pos,
            self.pitch,
            self.yaw,
            self.roll,
            self.offset_x,
            self.offset_y,
            self.block_scale,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("blocky parameters must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.arm_pos) {
            return Err(Error::Config(alloc::format!("arm_pos {} outside [0, 1]", self.arm_pos)));
        }
        if self.block_scale <= 0.0 {
            return Err(Error::Config("block_scale must be positive".into()));
        }
        if self.sphere_diff < 0.0 {
            return Err(Error::Config("sphere_diff must be nonnegative".into()));
        }
        Ok(())
    }

    /// Euclidean norm of the pose angles.
    pub fn pose_deviation(&self) -> f64 {
        libm::sqrt(self.pitch * self.pitch + self.yaw * self.yaw + self.roll * self.roll)
    }
}
