// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dataset files: `calibration.jsonl`, `evaluation.jsonl` (one JSON record
//! per line) and `manifest.json` carrying the config, seed and content hash.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DatagenError, DatasetSplit, GenConfig, LogicSample};

pub const DATASET_VERSION: u32 = 1;
const FORMAT: &str = "qkprobe-dataset";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub config: GenConfig,
    pub seed: u64,
    pub n_calibration: usize,
    pub n_evaluation: usize,
    /// SHA-256 over the calibration then evaluation file bytes.
    pub sha256: String,
}

impl DatasetManifest {
    pub fn new(config: &GenConfig, calibration: &[LogicSample], evaluation: &[LogicSample]) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(jsonl(calibration));
        hasher.update(jsonl(evaluation));
        DatasetManifest {
            format: FORMAT.into(),
            version: DATASET_VERSION,
            config: config.clone(),
            seed: config.seed,
            n_calibration: calibration.len(),
            n_evaluation: evaluation.len(),
            sha256: hex::encode(hasher.finalize()),
        }
    }
}

fn jsonl(samples: &[LogicSample]) -> Vec<u8> {
    let mut out = Vec::new();
    for s in samples {
        serde_json::to_writer(&mut out, s).expect("sample serializes");
        out.push(b'\n');
    }
    out
}

pub fn write_samples(path: &Path, samples: &[LogicSample]) -> Result<(), DatagenError> {
    let mut file = fs::File::create(path)?;
    file.write_all(&jsonl(samples))?;
    Ok(())
}

pub fn read_samples(path: &Path) -> Result<Vec<LogicSample>, DatagenError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample = serde_json::from_str(&line)
            .map_err(|e| DatagenError::Format(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(sample);
    }
    Ok(out)
}

pub fn write_dataset(dir: &Path, split: &DatasetSplit) -> Result<(), DatagenError> {
    fs::create_dir_all(dir)?;
    write_samples(&dir.join("calibration.jsonl"), &split.calibration)?;
    write_samples(&dir.join("evaluation.jsonl"), &split.evaluation)?;
    let manifest = serde_json::to_vec_pretty(&split.manifest).expect("manifest serializes");
    fs::write(dir.join("manifest.json"), manifest)?;
    Ok(())
}

/// Reads a dataset directory and verifies its content hash.
pub fn read_dataset(dir: &Path) -> Result<DatasetSplit, DatagenError> {
    let manifest: DatasetManifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)
        .map_err(|e| DatagenError::Format(format!("manifest: {e}")))?;
    if manifest.format != FORMAT || manifest.version != DATASET_VERSION {
        return Err(DatagenError::Format(format!(
            "unsupported dataset {} v{}",
            manifest.format, manifest.version
        )));
    }
    let calibration = read_samples(&dir.join("calibration.jsonl"))?;
    let evaluation = read_samples(&dir.join("evaluation.jsonl"))?;
    let check = DatasetManifest::new(&manifest.config, &calibration, &evaluation);
    if check.sha256 != manifest.sha256 {
        return Err(DatagenError::Format("dataset content hash mismatch".into()));
    }
    Ok(DatasetSplit { calibration, evaluation, manifest })
}
