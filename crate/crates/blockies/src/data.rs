//! Dataset generation on disk and image loading for the advisor.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use blockies_core::advisor::train::CHUNK;
use blockies_core::advisor::{Executor, LabeledImages};
use blockies_core::dataset::{generate_sample, SampleRecord, Split};
use blockies_core::generation::GenerationConfig;
use blockies_core::render::{render, RenderSettings, XrayImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fsutil::{atomic_write, encode_png, read_png, write_json};
use crate::manifest::{Manifest, ManifestHeader};
use crate::provenance::Provenance;

/// Runs executor work on the rayon pool. Chunks are reduced in index order,
/// so results match [`blockies_core::advisor::Sequential`] exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct RayonExecutor;

impl Executor for RayonExecutor {
    fn map<T: Send, F: Fn(usize) -> T + Sync + Send>(&self, n: usize, f: F) -> Vec<T> {
        (0..n).into_par_iter().with_min_len(1).map(f).collect()
    }
}

#[derive(Debug, Clone)]
pub struct GenerateRequest {
    pub config: GenerationConfig,
    pub split: Split,
    pub n: u64,
    pub seed: u64,
    pub render: RenderSettings,
    pub out_dir: PathBuf,
}

/// Summary of a generated split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateReport {
    pub manifest: PathBuf,
    pub samples: usize,
    pub sick: usize,
    pub manifest_sha256: String,
}

/// Generates, renders and writes `n` samples plus the split manifest.
pub fn generate_dataset(req: &GenerateRequest) -> Result<GenerateReport> {
    req.config.validate()?;
    std::fs::create_dir_all(&req.out_dir).with_context(|| format!("creating {}", req.out_dir.display()))?;
    let records: Vec<SampleRecord> = (0..req.n)
        .into_par_iter()
        .map(|i| -> Result<SampleRecord> {
            let rec = generate_sample(&req.config, req.split, req.seed, i)?;
            let img = render(&rec.params, &req.render)?;
            atomic_write(&req.out_dir.join(rec.image_name()), &encode_png(&img)?)?;
            Ok(rec)
        })
        .collect::<Result<_>>()?;

    let manifest = Manifest {
        header: ManifestHeader {
            split: req.split,
            dataset_seed: req.seed,
            config_hash: req.config.hash(),
            resolution: req.render.resolution,
        },
        records,
    };
    let bytes = manifest.to_bytes()?;
    let path = manifest.write(&req.out_dir)?;
    write_json(&req.out_dir.join("generation.json"), &req.config)?;
    Provenance::new("generate", Some(req.seed), Some(req.config.hash()))
        .setting("split", &req.split)
        .setting("n", &req.n)
        .setting("render", &req.render)
        .output(&format!("{}.csv", req.split.name()), &bytes)
        .write_beside(&path)?;
    Ok(GenerateReport {
        manifest: path,
        samples: manifest.records.len(),
        sick: manifest.records.iter().filter(|r| r.label.class_index() == 1).count(),
        manifest_sha256: blockies_core::hash::sha256_hex(&bytes),
    })
}

/// Converts a rendered or decoded image to network input at `size` pixels.
pub fn model_input(img: &XrayImage, size: u32) -> Result<Vec<f64>> {
    if img.width != img.height {
        bail!("image is {}x{}, expected square", img.width, img.height);
    }
    let img = if img.width == size {
        img.clone()
    } else if img.width > size && img.width.is_multiple_of(size) {
        img.downsample(img.width / size)?
    } else {
        bail!("cannot resample {}px images to {size}px", img.width);
    };
    Ok(img.pixels.iter().map(|&v| v as f64).collect())
}

/// Loads every image of a split manifest as network input.
pub fn load_split(dir: &Path, split: Split, input_size: u32) -> Result<(Manifest, LabeledImages)> {
    let manifest = Manifest::load(dir, split)?;
    let inputs: Vec<Vec<f64>> = manifest
        .records
        .par_iter()
        .with_min_len(CHUNK)
        .map(|r| model_input(&read_png(&dir.join(r.image_name()))?, input_size))
        .collect::<Result<_>>()?;
    let mut set = LabeledImages::new((input_size * input_size) as usize);
    for (r, x) in manifest.records.iter().zip(&inputs) {
        set.push(x, r.label)?;
    }
    Ok((manifest, set))
}

#[cfg(test)]
mod tests {
    use super::*;
    use blockies_core::advisor::Sequential;

    #[test]
    fn rayon_executor_matches_sequential() {
        let f = |i: usize| (i as f64).sqrt() * 3.0;
        assert_eq!(RayonExecutor.map(100, f), Sequential.map(100, f));
    }

    #[test]
    fn model_input_downsamples() {
        let img = XrayImage::from_gray8(4, 4, &[255; 16]).unwrap();
        assert_eq!(model_input(&img, 2).unwrap(), vec![1.0; 4]);
        assert!(model_input(&img, 3).is_err());
    }
}
