//! On-disk RIR dataset: a directory with `samples.jsonl` (one JSON object
//! per line: poses, wav filename, onset) plus the referenced WAV files.

use super::{read_waveform, write_rir};
use crate::error::{Error, Result};
use crate::estimate::TrainSample;
use crate::geometry::Pose;
use crate::signals::Rir;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub pose_tx: Pose,
    pub pose_rx: Pose,
    /// WAV filename relative to the dataset directory.
    pub rir: String,
    /// Absolute propagation delay of tap 0, seconds.
    pub onset: f64,
}

/// Writes samples as `samples.jsonl` + one WAV per RIR.
pub fn write_dataset(dir: impl AsRef<Path>, samples: &[TrainSample]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut index = String::new();
    for (i, s) in samples.iter().enumerate() {
        let name = format!("rir_{i:05}.wav");
        write_rir(dir.join(&name), &s.measured)?;
        let rec = SampleRecord {
            pose_tx: s.pose_tx,
            pose_rx: s.pose_rx,
            rir: name,
            onset: s.measured.onset,
        };
        index.push_str(&serde_json::to_string(&rec)?);
        index.push('\n');
    }
    std::fs::write(dir.join("samples.jsonl"), index)?;
    Ok(())
}

/// Reads a dataset directory back into training samples.
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Vec<TrainSample>> {
    let dir = dir.as_ref();
    let index_path = dir.join("samples.jsonl");
    let text = std::fs::read_to_string(&index_path).map_err(|e| Error::Format {
        path: index_path.display().to_string(),
        detail: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord = serde_json::from_str(line).map_err(|e| Error::Format {
            path: index_path.display().to_string(),
            detail: format!("line {}: {e}", ln + 1),
        })?;
        let w = read_waveform(dir.join(&rec.rir))?;
        out.push(TrainSample {
            pose_tx: rec.pose_tx,
            pose_rx: rec.pose_rx,
            measured: Rir::new(w.samples, w.sample_rate, rec.onset)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let samples = vec![TrainSample {
            pose_tx: Pose::at(1.0, 2.0, 1.0),
            pose_rx: Pose::at(3.0, 1.0, 1.5),
            measured: Rir::new(vec![0.5, -0.25, 0.1], 48_000.0, 0.01).unwrap(),
        }];
        write_dataset(dir.path(), &samples).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].pose_tx, samples[0].pose_tx);
        assert!((back[0].measured.onset - 0.01).abs() < 1e-12);
        assert!((back[0].measured.taps[1] - -0.25).abs() < 1e-6);
    }
}
