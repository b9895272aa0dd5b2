//! Severity-conditioned trait distributions and the generation config.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Beta, Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::blocky::{BlockyParams, SymptomAssignment, SymptomCountWeights, SymptomKind};
use crate::{Error, Result};

const MAX_REJECTIONS: usize = 10_000;

/// Distribution family of a trait descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Family {
    /// Uniform on the open interval (low, high).
    Uniform,
    /// Normal(mean, std) conditioned on [low, high].
    TruncatedNormal { mean: f64, std: f64 },
    /// low + (high - low) * Beta(alpha, beta), endpoints excluded.
    BetaScaled { alpha: f64, beta: f64 },
}

/// One trait distribution with finite, ordered support bounds.
///
/// A `mirrored` descriptor draws a magnitude from the family and then a fair
/// random sign, so its support is `[-high, -low] ∪ [low, high]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub family: Family,
    pub low: f64,
    pub high: f64,
    #[serde(default)]
    pub mirrored: bool,
}

impl Distribution {
    pub const fn uniform(low: f64, high: f64) -> Self {
        Self { family: Family::Uniform, low, high, mirrored: false }
    }

    pub const fn truncated_normal(mean: f64, std: f64, low: f64, high: f64) -> Self {
        Self { family: Family::TruncatedNormal { mean, std }, low, high, mirrored: false }
    }

    pub const fn beta_scaled(alpha: f64, beta: f64, low: f64, high: f64) -> Self {
        Self { family: Family::BetaScaled { alpha, beta }, low, high, mirrored: false }
    }

    pub const fn mirrored(mut self) -> Self {
        self.mirrored = true;
        self
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        if !(self.low.is_finite() && self.high.is_finite() && self.low < self.high) {
            return Err(Error::Config(format!("{what}: support bounds must be finite and ordered")));
        }
        if self.mirrored && self.low < 0.0 {
            return Err(Error::Config(format!("{what}: mirrored support must be nonnegative")));
        }
        match self.family {
            Family::Uniform => {}
            Family::TruncatedNormal { mean, std } => {
                if !(mean.is_finite() && std.is_finite() && std > 0.0) {
                    return Err(Error::Config(format!("{what}: truncated normal needs finite mean and std > 0")));
                }
                let mass = normal_cdf((self.high - mean) / std) - normal_cdf((self.low - mean) / std);
                if mass < 1e-3 {
                    return Err(Error::Config(format!("{what}: truncated normal support has negligible mass")));
                }
            }
            Family::BetaScaled { alpha, beta } => {
                if !(alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0) {
                    return Err(Error::Config(format!("{what}: beta shape parameters must be positive")));
                }
            }
        }
        Ok(())
    }

    /// Whether `v` lies in the declared support.
    pub fn contains(&self, v: f64) -> bool {
        let m = if self.mirrored { v.abs() } else { v };
        m >= self.low && m <= self.high
    }

    /// Centre used when widening the spread.
    fn centre(&self) -> f64 {
        match self.family {
            Family::TruncatedNormal { mean, .. } => mean,
            _ => 0.5 * (self.low + self.high),
        }
    }

    /// Spread multiplied by `factor` about the distribution centre.
    pub fn widened(&self, factor: f64) -> Self {
        let c = self.centre();
        let mut out = *self;
        out.low = c - (c - self.low) * factor;
        out.high = c + (self.high - c) * factor;
        if let Family::TruncatedNormal { mean, std } = self.family {
            out.family = Family::TruncatedNormal { mean, std: std * factor };
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let magnitude = match self.family {
            Family::Uniform => {
                let mut v = self.low;
                for _ in 0..MAX_REJECTIONS {
                    let u: f64 = rng.random();
                    v = self.low + (self.high - self.low) * u;
                    if v > self.low && v < self.high {
                        break;
                    }
                }
                v
            }
            Family::TruncatedNormal { mean, std } => {
                let mut found = None;
                for _ in 0..MAX_REJECTIONS {
                    let z: f64 = StandardNormal.sample(rng);
                    let v = mean + std * z;
                    if v >= self.low && v <= self.high {
                        found = Some(v);
                        break;
                    }
                }
                found.ok_or_else(|| Error::Config("truncated normal rejection sampling exhausted".into()))?
            }
            Family::BetaScaled { alpha, beta } => {
                let dist = Beta::new(alpha, beta).map_err(|e| Error::Config(format!("beta: {e}")))?;
                let mut found = None;
                for _ in 0..MAX_REJECTIONS {
                    let b: f64 = dist.sample(rng);
                    let v = self.low + (self.high - self.low) * b;
                    if v > self.low && v < self.high {
                        found = Some(v);
                        break;
                    }
                }
                found.ok_or_else(|| Error::Config("beta sampling exhausted".into()))?
            }
        };
        if self.mirrored && rng.random_bool(0.5) {
            Ok(-magnitude)
        } else {
            Ok(magnitude)
        }
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / core::f64::consts::SQRT_2)
}

/// Per-trait descriptors (indexed by severity, 0 = symptom absent) plus pose
/// and placement distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitDistributionConfig {
    pub spine_bend: Vec<Distribution>,
    pub bone_shape: Vec<Distribution>,
    pub sphere_diff: Vec<Distribution>,
    pub arm_pos: Vec<Distribution>,
    pub pitch: Distribution,
    pub yaw: Distribution,
    pub roll: Distribution,
    pub offset_x: Distribution,
    pub offset_y: Distribution,
    pub block_scale: Distribution,
    /// Multiplier (≥ 1) applied to the pose spread for pose-shifted splits.
    pub pose_shift_factor: f64,
}

/// Default pose spread (radians).
pub const POSE_SIGMA: f64 = 0.12;

impl Default for TraitDistributionConfig {
    fn default() -> Self {
        let pose = Distribution::truncated_normal(0.0, POSE_SIGMA, -3.0 * POSE_SIGMA, 3.0 * POSE_SIGMA);
        Self {
            spine_bend: vec![
                Distribution::truncated_normal(0.0, 0.15, -0.35, 0.35),
                Distribution::truncated_normal(0.55, 0.15, 0.35, 0.9).mirrored(),
            ],
            bone_shape: vec![Distribution::uniform(0.0, 1.0), Distribution::uniform(1.0, 1.6)],
            sphere_diff: vec![Distribution::uniform(0.0, 0.3), Distribution::uniform(0.5, 1.0)],
            arm_pos: vec![
                Distribution::beta_scaled(2.0, 5.0, 0.0, 0.5),
                Distribution::beta_scaled(2.0, 5.0, 0.5, 1.0),
            ],
            pitch: pose,
            yaw: pose,
            roll: pose,
            offset_x: Distribution::uniform(-0.1, 0.1),
            offset_y: Distribution::uniform(-0.1, 0.1),
            block_scale: Distribution::uniform(0.95, 1.05),
            pose_shift_factor: 2.5,
        }
    }
}

impl TraitDistributionConfig {
    pub fn trait_levels(&self, kind: SymptomKind) -> &[Distribution] {
        match kind {
            SymptomKind::StrongSpineBend => &self.spine_bend,
            SymptomKind::MainBoneMutation => &self.bone_shape,
            SymptomKind::StrongShapeVariation => &self.sphere_diff,
            SymptomKind::StretchedArms => &self.arm_pos,
        }
    }

    pub fn descriptor(&self, kind: SymptomKind, severity: u8) -> Result<&Distribution> {
        self.trait_levels(kind).get(severity as usize).ok_or_else(|| {
            Error::Config(format!("no descriptor for {} at severity {severity}", kind.name()))
        })
    }

    pub fn validate(&self, levels: u8) -> Result<()> {
        for kind in SymptomKind::ALL {
            let table = self.trait_levels(kind);
            if table.len() != levels as usize + 1 {
                return Err(Error::Config(format!(
                    "{} needs exactly {} descriptors (severity 0..={levels}), found {}",
                    kind.name(),
                    levels as usize + 1,
                    table.len()
                )));
            }
            for (s, d) in table.iter().enumerate() {
                d.validate(&format!("{}[{s}]", kind.name()))?;
            }
        }
        for (name, d) in [
            ("pitch", &self.pitch),
            ("yaw", &self.yaw),
            ("roll", &self.roll),
            ("offset_x", &self.offset_x),
            ("offset_y", &self.offset_y),
            ("block_scale", &self.block_scale),
        ] {
            d.validate(name)?;
        }
        if self.block_scale.mirrored || self.block_scale.low <= 0.0 {
            return Err(Error::Config("block_scale support must be strictly positive".into()));
        }
        if !(self.pose_shift_factor.is_finite() && self.pose_shift_factor >= 1.0) {
            return Err(Error::Config("pose_shift_factor must be finite and >= 1".into()));
        }
        Ok(())
    }

    /// Pose descriptors, widened when `pose_shift` is set.
    pub fn pose(&self, pose_shift: bool) -> [Distribution; 3] {
        let f = if pose_shift { self.pose_shift_factor } else { 1.0 };
        [self.pitch.widened(f), self.yaw.widened(f), self.roll.widened(f)]
    }
}

/// Keys reserved for appearance biases; not supported yet and rejected when set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReservedBiases {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<String>,
}

/// Everything that controls sampling of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub severity_levels: u8,
    pub p_sick: f64,
    pub symptom_counts: SymptomCountWeights,
    pub traits: TraitDistributionConfig,
    #[serde(default)]
    pub biases: ReservedBiases,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            severity_levels: 1,
            p_sick: 0.5,
            symptom_counts: SymptomCountWeights::default(),
            traits: TraitDistributionConfig::default(),
            biases: ReservedBiases::default(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.severity_levels == 0 {
            return Err(Error::Config("severity_levels must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p_sick) {
            return Err(Error::Config("p_sick must lie in [0, 1]".into()));
        }
        if self.biases.color.is_some() || self.biases.background.is_some() {
            return Err(Error::Config("color/background biases are reserved and not supported".into()));
        }
        self.symptom_counts.validate()?;
        self.traits.validate(self.severity_levels)
    }

    pub fn hash(&self) -> String {
        crate::hash::json_hash(self)
    }
}

/// Samples every trait given the symptom assignment. Symptomatic traits use
/// their severity-level descriptor, the rest use severity 0; pose spread is
/// widened by `pose_shift_factor` when `pose_shift` is set. The returned
/// `seed` field is 0; dataset generation fills it in.
pub fn sample_traits<R: Rng + ?Sized>(
    assignment: &SymptomAssignment,
    cfg: &TraitDistributionConfig,
    pose_shift: bool,
    rng: &mut R,
) -> Result<BlockyParams> {
    let mut draw = |kind: SymptomKind| -> Result<f64> {
        cfg.descriptor(kind, assignment.severity(kind))?.sample(rng)
    };
    let spine_bend = draw(SymptomKind::StrongSpineBend)?;
    let bone_shape = draw(SymptomKind::MainBoneMutation)?;
    let sphere_diff = draw(SymptomKind::StrongShapeVariation)?;
    let arm_pos = draw(SymptomKind::StretchedArms)?;
    let [pitch_d, yaw_d, roll_d] = cfg.pose(pose_shift);
    Ok(BlockyParams {
        spine_bend,
        bone_shape,
        sphere_diff,
        arm_pos,
        pitch: pitch_d.sample(rng)?,
        yaw: yaw_d.sample(rng)?,
        roll: roll_d.sample(rng)?,
        offset_x: cfg.offset_x.sample(rng)?,
        offset_y: cfg.offset_y.sample(rng)?,
        block_scale: cfg.block_scale.sample(rng)?,
        seed: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocky::{assign_symptoms, DiagnosisLabel};
    use crate::rng::stream;

    fn with(kind: SymptomKind) -> SymptomAssignment {
        SymptomAssignment::from_active(&[kind])
    }

    #[test]
    fn default_config_is_valid() {
        GenerationConfig::default().validate().unwrap();
    }

    #[test]
    fn bone_mutation_is_above_one() {
        let cfg = TraitDistributionConfig::default();
        let mut rng = stream(1);
        for _ in 0..2000 {
            let p = sample_traits(&with(SymptomKind::MainBoneMutation), &cfg, false, &mut rng).unwrap();
            assert!(p.bone_shape > 1.0 && p.bone_shape <= 1.6, "{}", p.bone_shape);
        }
    }

    #[test]
    fn retracted_arms_when_absent() {
        let cfg = TraitDistributionConfig::default();
        let mut rng = stream(2);
        for _ in 0..2000 {
            let p = sample_traits(&SymptomAssignment::none(), &cfg, false, &mut rng).unwrap();
            assert!(p.arm_pos >= 0.0 && p.arm_pos < 0.5);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = TraitDistributionConfig::default();
        let a = sample_traits(&with(SymptomKind::StretchedArms), &cfg, true, &mut stream(9)).unwrap();
        let b = sample_traits(&with(SymptomKind::StretchedArms), &cfg, true, &mut stream(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_descriptor_is_config_error() {
        let mut cfg = TraitDistributionConfig::default();
        cfg.arm_pos.truncate(1);
        let err = sample_traits(&with(SymptomKind::StretchedArms), &cfg, false, &mut stream(0));
        assert!(matches!(err, Err(Error::Config(_))));
        assert!(cfg.validate(1).is_err());
    }

    #[test]
    fn reserved_bias_keys_rejected() {
        let mut cfg = GenerationConfig::default();
        cfg.biases.color = Some("red".into());
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn bad_bounds_rejected() {
        assert!(Distribution::uniform(1.0, 1.0).validate("x").is_err());
        assert!(Distribution::uniform(0.0, f64::INFINITY).validate("x").is_err());
        assert!(Distribution::truncated_normal(0.0, 0.1, 5.0, 6.0).validate("x").is_err());
        assert!(Distribution::beta_scaled(0.0, 1.0, 0.0, 1.0).validate("x").is_err());
    }

    /// Every draw stays in its support; symptomatic means move in the
    /// configured direction relative to severity 0.
    #[test]
    fn ten_thousand_samples_within_support() {
        let gen = GenerationConfig::default();
        let cfg = &gen.traits;
        let mut rng = stream(2024);
        let mut sums = [[0.0f64; 2]; 4];
        let mut counts = [[0usize; 2]; 4];
        for i in 0..10_000u32 {
            let label = if i % 2 == 0 { DiagnosisLabel::Healthy } else { DiagnosisLabel::Sick };
            let shift = i % 3 == 0;
            let a = assign_symptoms(label, &gen.symptom_counts, 1, &mut rng).unwrap();
            let p = sample_traits(&a, cfg, shift, &mut rng).unwrap();
            let values = [p.spine_bend, p.bone_shape, p.sphere_diff, p.arm_pos];
            for kind in SymptomKind::ALL {
                let sev = a.severity(kind);
                let d = cfg.descriptor(kind, sev).unwrap();
                let v = values[kind.index()];
                assert!(d.contains(v), "{:?} {v}", kind);
                let v = if kind == SymptomKind::StrongSpineBend { v.abs() } else { v };
                sums[kind.index()][sev as usize] += v;
                counts[kind.index()][sev as usize] += 1;
            }
            for (d, v) in cfg.pose(shift).iter().zip([p.pitch, p.yaw, p.roll]) {
                assert!(d.contains(v));
            }
            assert!(cfg.block_scale.contains(p.block_scale));
            p.validate().unwrap();
        }
        for k in 0..4 {
            let m0 = sums[k][0] / counts[k][0] as f64;
            let m1 = sums[k][1] / counts[k][1] as f64;
            assert!(m1 > m0, "trait {k}: {m1} <= {m0}");
        }
    }

    #[test]
    fn widened_pose_scales_spread() {
        let cfg = TraitDistributionConfig::default();
        let [p, _, _] = cfg.pose(true);
        assert!((p.high - 2.5 * 3.0 * POSE_SIGMA).abs() < 1e-12);
        match p.family {
            Family::TruncatedNormal { std, .. } => assert!((std - 0.3).abs() < 1e-12),
            _ => unreachable!(),
        }
    }
}
