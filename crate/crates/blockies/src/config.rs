//! TOML configuration files: generation config and study definition.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use blockies_core::generation::GenerationConfig;
use blockies_core::study::StudyDesign;
use serde::{Deserialize, Serialize};

pub fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Loads a generation config, or the defaults when no path is given.
pub fn load_generation_config(path: Option<&Path>) -> Result<GenerationConfig> {
    let cfg = match path {
        Some(p) => read_toml(p)?,
        None => GenerationConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_design(path: Option<&Path>) -> Result<StudyDesign> {
    let design = match path {
        Some(p) => read_toml(p)?,
        None => StudyDesign::default(),
    };
    design.validate()?;
    Ok(design)
}

/// Everything the server needs to run one study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyDefinition {
    pub study_id: String,
    /// Plan JSON produced by `blockies plan`.
    pub plan: PathBuf,
    /// Directory holding the stimulus images.
    pub media: PathBuf,
    /// Seed of the per-stratum condition alternation.
    pub assignment_seed: u64,
    /// Accepted stratum values. Empty means any.
    #[serde(default)]
    pub strata: Vec<String>,
    #[serde(default)]
    pub closed: bool,
}

impl StudyDefinition {
    /// Reads a definition and resolves its relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut def: StudyDefinition = read_toml(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if def.plan.is_relative() {
            def.plan = base.join(&def.plan);
        }
        if def.media.is_relative() {
            def.media = base.join(&def.media);
        }
        Ok(def)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_config_toml_round_trip() {
        let cfg = GenerationConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: GenerationConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn design_toml_round_trip() {
        let d = StudyDesign::default();
        let back: StudyDesign = toml::from_str(&toml::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn study_definition_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("study.toml");
        std::fs::write(&p, "study_id = \"pilot\"\nplan = \"plan.json\"\nmedia = \"data\"\nassignment_seed = 3\n").unwrap();
        let def = StudyDefinition::load(&p).unwrap();
        assert_eq!(def.plan, dir.path().join("plan.json"));
        assert!(def.strata.is_empty());
        std::fs::write(&p, "study_id = \"x\"\nplan = \"p\"\nmedia = \"m\"\nassignment_seed = 1\ntypo = 2\n").unwrap();
        assert!(StudyDefinition::load(&p).is_err());
    }
}
