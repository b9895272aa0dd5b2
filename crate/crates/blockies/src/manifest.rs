//! Per-split CSV manifests.
//!
//! The first line is a comment carrying the split, dataset seed and config
//! hash. Each row holds everything needed to regenerate and re-render one
//! sample.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use blockies_core::blocky::{BlockyParams, DiagnosisLabel, SymptomAssignment, SymptomKind, SYMPTOM_COUNT};
use blockies_core::dataset::{SampleRecord, Split};
use serde::{Deserialize, Serialize};

use crate::fsutil::atomic_write;

pub const MANIFEST_TAG: &str = "blockies-manifest v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub split: Split,
    pub dataset_seed: u64,
    pub config_hash: String,
    pub resolution: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub records: Vec<SampleRecord>,
}

pub fn manifest_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{}.csv", split.name()))
}

const PARAM_COLUMNS: [&str; 10] =
    ["spine_bend", "bone_shape", "sphere_diff", "arm_pos", "pitch", "yaw", "roll", "offset_x", "offset_y", "block_scale"];

fn header_row() -> Vec<String> {
    let mut h = vec!["sample_id".to_string(), "split".into(), "seed".into(), "label".into()];
    h.extend(SymptomKind::ALL.iter().map(|k| format!("severity_{}", k.name())));
    h.extend(PARAM_COLUMNS.iter().map(|c| c.to_string()));
    h.push("pose_deviation".into());
    h.push("image".into());
    h
}

fn params_row(p: &BlockyParams) -> [f64; 10] {
    [p.spine_bend, p.bone_shape, p.sphere_diff, p.arm_pos, p.pitch, p.yaw, p.roll, p.offset_x, p.offset_y, p.block_scale]
}

impl Manifest {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let h = &self.header;
        let mut out = format!(
            "# {MANIFEST_TAG} split={} dataset_seed={} config_hash={} resolution={}\n",
            h.split.name(),
            h.dataset_seed,
            h.config_hash,
            h.resolution
        )
        .into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(header_row())?;
            for r in &self.records {
                let mut row = vec![r.sample_id.clone(), r.split.name().into(), r.seed.to_string(), r.label.as_str().into()];
                row.extend(r.symptoms.severities().iter().map(|s| s.to_string()));
                row.extend(params_row(&r.params).iter().map(|v| v.to_string()));
                row.push(r.params.pose_deviation().to_string());
                row.push(r.image_name());
                w.write_record(&row)?;
            }
            w.flush()?;
        }
        Ok(out)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = manifest_path(dir, self.header.split);
        atomic_write(&path, &self.to_bytes()?)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        let bytes = std::fs::read(path).with_context(|| format!("reading manifest {}", path.display()))?;
        Self::parse(&bytes).with_context(|| format!("parsing manifest {}", path.display()))
    }

    pub fn load(dir: &Path, split: Split) -> Result<Manifest> {
        Self::read(&manifest_path(dir, split))
    }

    pub fn parse(bytes: &[u8]) -> Result<Manifest> {
        let text = std::str::from_utf8(bytes)?;
        let first = text.lines().next().unwrap_or_default();
        let header = parse_header(first)?;
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes);
        let expected = header_row();
        let got: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
        if got != expected {
            bail!("unexpected columns {got:?}");
        }
        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            records.push(parse_row(&row).with_context(|| format!("row {}", i + 1))?);
        }
        for r in &records {
            if r.split != header.split {
                bail!("sample {} belongs to split {}, manifest is {}", r.sample_id, r.split, header.split);
            }
        }
        Ok(Manifest { header, records })
    }

    pub fn get(&self, sample_id: &str) -> Option<&SampleRecord> {
        self.records.iter().find(|r| r.sample_id == sample_id)
    }
}

fn parse_header(line: &str) -> Result<ManifestHeader> {
    let rest = line
        .strip_prefix("# ")
        .and_then(|l| l.strip_prefix(MANIFEST_TAG))
        .ok_or_else(|| anyhow!("missing '# {MANIFEST_TAG}' header line"))?;
    let mut split = None;
    let mut seed = None;
    let mut hash = None;
    let mut resolution = None;
    for kv in rest.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| anyhow!("bad header field {kv:?}"))?;
        match k {
            "split" => split = Some(v.parse::<Split>()?),
            "dataset_seed" => seed = Some(v.parse()?),
            "config_hash" => hash = Some(v.to_string()),
            "resolution" => resolution = Some(v.parse()?),
            _ => {}
        }
    }
    Ok(ManifestHeader {
        split: split.context("header lacks split")?,
        dataset_seed: seed.context("header lacks dataset_seed")?,
        config_hash: hash.context("header lacks config_hash")?,
        resolution: resolution.context("header lacks resolution")?,
    })
}

fn parse_row(row: &csv::StringRecord) -> Result<SampleRecord> {
    let f = |i: usize| row.get(i).ok_or_else(|| anyhow!("missing column {i}"));
    let num = |i: usize| -> Result<f64> { Ok(f(i)?.parse::<f64>()?) };
    let split: Split = f(1)?.parse()?;
    let label: DiagnosisLabel = f(3)?.parse()?;
    let mut sev = [0u8; SYMPTOM_COUNT];
    for (k, s) in sev.iter_mut().enumerate() {
        *s = f(4 + k)?.parse()?;
    }
    let levels = sev.iter().copied().max().unwrap_or(0).max(1);
    let symptoms = SymptomAssignment::new(sev, levels)?;
    let b = 4 + SYMPTOM_COUNT;
    let seed: u64 = f(2)?.parse()?;
    let params = BlockyParams {
        spine_bend: num(b)?,
        bone_shape: num(b + 1)?,
        sphere_diff: num(b + 2)?,
        arm_pos: num(b + 3)?,
        pitch: num(b + 4)?,
        yaw: num(b + 5)?,
        roll: num(b + 6)?,
        offset_x: num(b + 7)?,
        offset_y: num(b + 8)?,
        block_scale: num(b + 9)?,
        seed,
    };
    params.validate()?;
    let record = SampleRecord { sample_id: f(0)?.to_string(), split, seed, label, symptoms, params };
    if blockies_core::blocky::label_of(&record.symptoms) != label {
        bail!("label of {} contradicts its symptoms", record.sample_id);
    }
    if f(b + 11)? != record.image_name() {
        bail!("image column of {} does not match its id", record.sample_id);
    }
    Ok(record)
}
