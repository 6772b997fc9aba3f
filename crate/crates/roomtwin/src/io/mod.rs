//! File I/O: 32-bit float mono WAV, RIR datasets, and the shared
//! blob-with-JSON-header container used by field models and RIR databases.

pub mod dataset;

use crate::error::{Error, Result};
use crate::signals::{Rir, Waveform};
use std::io::{Read, Write};
use std::path::Path;

/// Writes samples as 32-bit float mono WAV.
pub fn write_wav(path: impl AsRef<Path>, samples: &[f64], sample_rate: f64) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: sample_rate.round() as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in samples {
        w.write_sample(s as f32)?;
    }
    w.finalize()?;
    Ok(())
}

pub fn write_waveform(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    write_wav(path, &w.samples, w.sample_rate)
}

pub fn write_rir(path: impl AsRef<Path>, r: &Rir) -> Result<()> {
    write_wav(path, &r.taps, r.sample_rate)
}

/// Reads a mono float or integer WAV into a waveform with `t0 = 0`.
pub fn read_waveform(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    if spec.channels != 1 {
        return Err(Error::Format {
            path: path.display().to_string(),
            detail: format!("expected mono WAV, got {} channels", spec.channels),
        });
    }
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => r
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1i64 << (spec.bits_per_sample - 1)) as f64;
            r.samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    Waveform::new(samples, spec.sample_rate as f64, 0.0)
}

/// Writes `[u64 header_len][header JSON][payload bytes]`.
pub fn write_blob(path: impl AsRef<Path>, header: &serde_json::Value, payload: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    let h = serde_json::to_vec(header)?;
    f.write_all(&(h.len() as u64).to_le_bytes())?;
    f.write_all(&h)?;
    f.write_all(payload)?;
    Ok(())
}

/// Reads a blob written by [`write_blob`].
pub fn read_blob(path: impl AsRef<Path>) -> Result<(serde_json::Value, Vec<u8>)> {
    let path = path.as_ref();
    let mut f = std::fs::File::open(path)?;
    let mut len = [0u8; 8];
    f.read_exact(&mut len)?;
    let hlen = u64::from_le_bytes(len) as usize;
    let mut hbuf = vec![0u8; hlen];
    f.read_exact(&mut hbuf)?;
    let header: serde_json::Value = serde_json::from_slice(&hbuf).map_err(|e| Error::Format {
        path: path.display().to_string(),
        detail: format!("bad blob header: {e}"),
    })?;
    let mut payload = Vec::new();
    f.read_to_end(&mut payload)?;
    Ok((header, payload))
}

/// f64 slice -> little-endian bytes.
pub fn f64s_to_bytes(vals: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(vals.len() * 8);
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Little-endian bytes -> f64 vec.
pub fn bytes_to_f64s(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::config("payload length is not a multiple of 8"));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let samples: Vec<f64> = (0..100).map(|i| (i as f64 / 25.0).sin() * 0.5).collect();
        write_wav(&path, &samples, 48_000.0).unwrap();
        let w = read_waveform(&path).unwrap();
        assert_eq!(w.len(), 100);
        assert_eq!(w.sample_rate, 48_000.0);
        for (a, b) in w.samples.iter().zip(samples.iter()) {
            assert!((a - b).abs() < 1e-6); // f32 quantization
        }
    }

    #[test]
    fn blob_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let header = serde_json::json!({"version": 1, "kind": "test"});
        let payload = f64s_to_bytes(&[1.0, -2.5, 3.25]);
        write_blob(&path, &header, &payload).unwrap();
        let (h, p) = read_blob(&path).unwrap();
        assert_eq!(h["version"], 1);
        assert_eq!(bytes_to_f64s(&p).unwrap(), vec![1.0, -2.5, 3.25]);
    }
}
