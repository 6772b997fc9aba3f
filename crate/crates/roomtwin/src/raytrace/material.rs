//! Frequency-dependent surface reflectivity.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Octave band centers, Hz.
pub const BAND_CENTERS_HZ: [f64; 7] = [125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0];

/// Amplitude reflection ratio per octave band, each in [0, 1]. Between band
/// centers the ratio is linearly interpolated on a log-frequency axis and
/// held constant outside [125 Hz, 8 kHz].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpectrum {
    pub bands: [f64; 7],
}

impl MaterialSpectrum {
    pub fn new(bands: [f64; 7]) -> Result<Self> {
        if bands.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Render(format!(
                "reflection ratios must lie in [0, 1], got {bands:?}"
            )));
        }
        Ok(MaterialSpectrum { bands })
    }

    /// Flat spectrum: the same ratio in every band.
    pub fn flat(r: f64) -> Result<Self> {
        MaterialSpectrum::new([r; 7])
    }

    /// Interpolation stencil at `freq`: two (band, weight) pairs whose
    /// weights sum to 1. Shared with the estimator so gradients see exactly
    /// the rendering interpolation.
    pub fn band_weights(freq: f64) -> [(usize, f64); 2] {
        let n = BAND_CENTERS_HZ.len();
        if freq <= BAND_CENTERS_HZ[0] {
            return [(0, 1.0), (1, 0.0)];
        }
        if freq >= BAND_CENTERS_HZ[n - 1] {
            return [(n - 2, 0.0), (n - 1, 1.0)];
        }
        let lf = freq.ln();
        let mut i = 0;
        while freq >= BAND_CENTERS_HZ[i + 1] {
            i += 1;
        }
        let lo = BAND_CENTERS_HZ[i].ln();
        let hi = BAND_CENTERS_HZ[i + 1].ln();
        let w = (lf - lo) / (hi - lo);
        [(i, 1.0 - w), (i + 1, w)]
    }

    /// Reflectivity at an arbitrary frequency.
    pub fn sample(&self, freq: f64) -> f64 {
        let [(i, wi), (j, wj)] = Self::band_weights(freq);
        wi * self.bands[i] + wj * self.bands[j]
    }

    /// Reflectivity at each bin of a frequency grid.
    pub fn sample_table(&self, grid: &super::FrequencyGrid) -> Vec<f64> {
        (0..grid.bins()).map(|j| self.sample(grid.freq(j))).collect()
    }

    /// Mean over the seven bands.
    pub fn mean(&self) -> f64 {
        self.bands.iter().sum::<f64>() / 7.0
    }
}
