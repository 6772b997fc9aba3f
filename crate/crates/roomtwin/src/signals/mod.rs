//! Chirp probes, matched filtering, streaming detection, direct-path
//! arrival picking, and RIR extraction.
//!
//! Conventions: all waveforms are uniformly sampled mono audio in the owning
//! device's local clock; `t0` is the absolute local time of sample 0. The
//! matched-filter time axis is the template-start time in the input's clock,
//! so a pure delay shows up as a peak at exactly that delay.

mod detector;

pub use detector::{detect_chirp_stream, DetectorConfig, StreamDetector};

use crate::error::{Error, Result};
use crate::fft;
use serde::{Deserialize, Serialize};

/// 5 ms raised-cosine fade applied to both ends of every generated chirp;
/// bounds spectral leakage into the other probe's band.
pub const CHIRP_FADE: f64 = 0.005;

/// Default trailing RIR length, seconds.
pub const DEFAULT_RIR_DURATION: f64 = 0.3;

/// Uniformly sampled audio in a device-local clock.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    /// Hz, > 0.
    pub sample_rate: f64,
    /// Local time of sample 0, seconds.
    pub t0: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: f64, t0: f64) -> Result<Self> {
        if !(sample_rate > 0.0) {
            return Err(Error::signal("sample_rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::signal("waveform contains non-finite samples"));
        }
        Ok(Waveform { samples, sample_rate, t0 })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Local time of sample `idx`.
    pub fn time_of(&self, idx: usize) -> f64 {
        self.t0 + idx as f64 / self.sample_rate
    }

    /// Nearest sample index for local time `t` (may be out of range).
    pub fn index_of(&self, t: f64) -> isize {
        ((t - self.t0) * self.sample_rate).round() as isize
    }

    /// Copy of the sample range covering local times `[from, to)`, clamped to
    /// the waveform's span. Returned waveform keeps the absolute clock.
    pub fn slice_time(&self, from: f64, to: f64) -> Waveform {
        let a = (((from - self.t0) * self.sample_rate).floor() as isize).clamp(0, self.len() as isize) as usize;
        let b = (((to - self.t0) * self.sample_rate).ceil() as isize).clamp(0, self.len() as isize) as usize;
        Waveform {
            samples: self.samples[a..b].to_vec(),
            sample_rate: self.sample_rate,
            t0: self.time_of(a),
        }
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }
}

/// Linear frequency-modulated probe description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChirpSpec {
    pub f_start: f64,
    pub f_end: f64,
    /// Seconds, > 0.
    pub duration: f64,
    pub amplitude: f64,
}

impl ChirpSpec {
    pub fn new(f_start: f64, f_end: f64, duration: f64, amplitude: f64) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(Error::signal("chirp duration must be positive"));
        }
        if f_start < 0.0 || f_end < 0.0 {
            return Err(Error::signal("chirp frequencies must be non-negative"));
        }
        Ok(ChirpSpec { f_start, f_end, duration, amplitude })
    }

    /// The 11-19 kHz, 0.2 s synchronization probe (c1).
    pub fn sync_probe() -> Self {
        ChirpSpec { f_start: 11_000.0, f_end: 19_000.0, duration: 0.2, amplitude: 1.0 }
    }

    /// The 50 Hz - 9 kHz, 0.2 s RIR probe (c2), covering speech and
    /// everyday acoustic content.
    pub fn rir_probe() -> Self {
        ChirpSpec { f_start: 50.0, f_end: 9_000.0, duration: 0.2, amplitude: 1.0 }
    }

    pub fn band_center(&self) -> f64 {
        0.5 * (self.f_start + self.f_end)
    }

    pub fn bandwidth(&self) -> f64 {
        (self.f_end - self.f_start).abs()
    }
}

/// Impulse-response taps with absolute onset (ToF) semantics: tap 0 sits at
/// `onset` seconds of propagation delay.
#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub taps: Vec<f64>,
    pub sample_rate: f64,
    /// Absolute propagation delay of tap 0, seconds, >= 0.
    pub onset: f64,
}

impl Rir {
    pub fn new(taps: Vec<f64>, sample_rate: f64, onset: f64) -> Result<Self> {
        if !(sample_rate > 0.0) {
            return Err(Error::signal("sample_rate must be positive"));
        }
        if onset < 0.0 {
            return Err(Error::signal("onset must be non-negative"));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::signal("RIR contains non-finite taps"));
        }
        Ok(Rir { taps, sample_rate, onset })
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.taps.len() as f64 / self.sample_rate
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum()
    }

    /// Taps re-anchored onto the absolute time axis (t = 0 at emission):
    /// `out[round(onset * fs) + i] = taps[i]`, length `len` samples.
    pub fn to_absolute(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        let shift = (self.onset * self.sample_rate).round() as usize;
        for (i, &t) in self.taps.iter().enumerate() {
            if let Some(o) = out.get_mut(shift + i) {
                *o = t;
            }
        }
        out
    }
}

/// One streaming-detector match.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    /// Template-start time of the match, in the stream's local clock.
    pub time: f64,
    /// Normalized correlation coefficient at the match, |.| <= 1.
    pub corr_coeff: f64,
}

/// Synthesizes a linear FM chirp at `sample_rate`.
///
/// Instantaneous frequency sweeps linearly from `f_start` to `f_end` over the
/// duration; both ends carry a raised-cosine fade of [`CHIRP_FADE`] seconds
/// (half the duration for very short chirps).
pub fn gen_chirp(spec: &ChirpSpec, sample_rate: f64) -> Result<Waveform> {
    let nyquist = sample_rate / 2.0;
    if spec.f_start > nyquist || spec.f_end > nyquist {
        return Err(Error::signal(format!(
            "chirp band {:.0}-{:.0} Hz exceeds Nyquist {:.0} Hz",
            spec.f_start, spec.f_end, nyquist
        )));
    }
    if !(spec.duration > 0.0) {
        return Err(Error::signal("chirp duration must be positive"));
    }
    let n = (spec.duration * sample_rate).round() as usize;
    let rate = (spec.f_end - spec.f_start) / spec.duration;
    let fade = CHIRP_FADE.min(spec.duration / 2.0);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / sample_rate;
        // phase(t) = 2*pi * (f0 t + rate t^2 / 2)
        let phase = std::f64::consts::TAU * (spec.f_start * t + 0.5 * rate * t * t);
        let mut w = 1.0;
        if t < fade {
            w = 0.5 - 0.5 * (std::f64::consts::PI * t / fade).cos();
        }
        let t_from_end = spec.duration - t;
        if t_from_end < fade {
            w = w.min(0.5 - 0.5 * (std::f64::consts::PI * t_from_end / fade).cos());
        }
        samples.push(spec.amplitude * w * phase.sin());
    }
    Waveform::new(samples, sample_rate, 0.0)
}

/// Cross-correlates `x` with the probe `c`, normalized so that
/// `matched_filter(c, c)` peaks at exactly 1.0.
///
/// The output time axis is the template-start time in `x`'s clock: sample `m`
/// of the output corresponds to the template beginning at
/// `x.t0 + (m - (len_c - 1)) / fs`.
pub fn matched_filter(x: &Waveform, c: &Waveform) -> Result<Waveform> {
    if (x.sample_rate - c.sample_rate).abs() > 1e-9 {
        return Err(Error::signal(format!(
            "sample-rate mismatch: {} vs {}",
            x.sample_rate, c.sample_rate
        )));
    }
    if c.is_empty() {
        return Err(Error::signal("empty matched-filter template"));
    }
    let norm = c.energy();
    if norm <= 0.0 {
        return Err(Error::signal("matched-filter template has zero energy"));
    }
    let mut out = fft::xcorr_full(&x.samples, &c.samples);
    let inv = 1.0 / norm;
    for v in &mut out {
        *v *= inv;
    }
    Waveform::new(
        out,
        x.sample_rate,
        x.t0 - (c.len() as f64 - 1.0) / x.sample_rate,
    )
}

/// Default candidate threshold for [`pick_direct_path`]: five times the
/// median absolute correlation.
pub fn default_h_min(corr: &Waveform) -> f64 {
    if corr.is_empty() {
        return 0.0;
    }
    let mut mags: Vec<f64> = corr.samples.iter().map(|s| s.abs()).collect();
    let mid = mags.len() / 2;
    mags.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap());
    5.0 * mags[mid]
}

/// Picks the direct-path arrival from a matched-filter trace.
///
/// Scans candidate peaks (local maxima of |corr| above `h_min`) in ascending
/// time. A candidate `p` is accepted if a later candidate within `delta_t`
/// rises to at least `growth_a` times its height (a weak pre-spike followed
/// by the sharp direct-path rise), or if no later candidate anywhere rises
/// that much above it (an isolated strong peak). The returned arrival is the
/// time of the maximum of |corr| within `[p, p + delta_t]`.
pub fn pick_direct_path(corr: &Waveform, h_min: f64, delta_t: f64, growth_a: f64) -> Result<f64> {
    if corr.is_empty() {
        return Err(Error::signal("empty correlation trace"));
    }
    let mags: Vec<f64> = corr.samples.iter().map(|s| s.abs()).collect();
    let mut peaks: Vec<usize> = Vec::new();
    for i in 0..mags.len() {
        let prev = if i == 0 { f64::NEG_INFINITY } else { mags[i - 1] };
        let next = if i + 1 == mags.len() { f64::NEG_INFINITY } else { mags[i + 1] };
        if mags[i] > h_min && mags[i] > prev && mags[i] >= next {
            peaks.push(i);
        }
    }
    if peaks.is_empty() {
        return Err(Error::NoArrival);
    }
    let win = (delta_t * corr.sample_rate).round() as usize;
    let mut accepted = None;
    for (pi, &p) in peaks.iter().enumerate() {
        let h_p = mags[p];
        let sharp_rise = peaks[pi + 1..]
            .iter()
            .take_while(|&&q| q <= p + win)
            .any(|&q| mags[q] >= growth_a * h_p);
        let overtaken_later = peaks[pi + 1..].iter().any(|&q| mags[q] >= growth_a * h_p);
        if sharp_rise || !overtaken_later {
            accepted = Some(p);
            break;
        }
    }
    let p = accepted.ok_or(Error::NoArrival)?;
    let end = (p + win + 1).min(mags.len());
    let best = (p..end)
        .max_by(|&a, &b| mags[a].partial_cmp(&mags[b]).unwrap())
        .unwrap();
    Ok(corr.time_of(best))
}

/// Extracts an RIR from a recording: the matched-filter output cropped so
/// tap 0 sits at `arrival` on the lag axis, with `duration` seconds of tail.
///
/// The stored onset equals `arrival`; callers that recover the true ToF
/// separately (the handshake protocol) overwrite it.
pub fn extract_rir(received: &Waveform, chirp: &Waveform, arrival: f64, duration: f64) -> Result<Rir> {
    if arrival < received.t0 - 1e-9 || arrival > received.t0 + received.duration() + 1e-9 {
        return Err(Error::signal(format!(
            "arrival {:.6} s outside recording span [{:.6}, {:.6}]",
            arrival,
            received.t0,
            received.t0 + received.duration()
        )));
    }
    let corr = matched_filter(received, chirp)?;
    let start = corr.index_of(arrival);
    if start < 0 || start as usize >= corr.len() {
        return Err(Error::signal("arrival outside correlation span"));
    }
    let start = start as usize;
    let n = (duration * received.sample_rate).round() as usize;
    let mut taps = vec![0.0; n];
    let avail = (corr.len() - start).min(n);
    taps[..avail].copy_from_slice(&corr.samples[start..start + avail]);
    Rir::new(taps, received.sample_rate, arrival.max(0.0))
}

/// Writes detection events as CSV (`time_s,corr`).
pub fn events_to_csv(events: &[DetectionEvent]) -> String {
    let mut out = String::from("time_s,corr\n");
    for e in events {
        out.push_str(&format!("{:.9},{:.6}\n", e.time, e.corr_coeff));
    }
    out
}
