//! Streaming chirp detection.
//!
//! The stream is mixed to baseband at the template's band center, low-pass
//! filtered, and decimated; a normalized correlation coefficient against the
//! identically processed template is evaluated at every decimated lag by
//! overlap-save FFT blocks. All state is indexed by absolute sample count,
//! so chunk boundaries cannot shift results: streaming equals offline
//! exactly.

use super::{gen_chirp, ChirpSpec, DetectionEvent, Waveform};
use crate::error::{Error, Result};
use crate::fft;
use num_complex::Complex64;

/// Streaming-detector tuning.
#[derive(Debug, Clone, Copy)]
pub struct DetectorConfig {
    /// Normalized correlation threshold for an event.
    pub threshold: f64,
    /// Input-to-baseband decimation factor.
    pub decimation: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig { threshold: 0.3, decimation: 8 }
    }
}

const FIR_LEN: usize = 129;
const ENERGY_FLOOR: f64 = 1e-30;

/// Windowed-sinc low-pass, cutoff `fc_norm` cycles/sample, Hamming window.
fn lowpass_fir(fc_norm: f64, len: usize) -> Vec<f64> {
    let mid = (len - 1) as f64 / 2.0;
    (0..len)
        .map(|i| {
            let x = i as f64 - mid;
            let sinc = if x.abs() < 1e-12 {
                2.0 * fc_norm
            } else {
                (std::f64::consts::TAU * fc_norm * x).sin() / (std::f64::consts::PI * x)
            };
            let w = 0.54 - 0.46 * (std::f64::consts::TAU * i as f64 / (len - 1) as f64).cos();
            sinc * w
        })
        .collect()
}

/// Holds per-stream state; confine to one consumer per stream.
pub struct StreamDetector {
    sample_rate: f64,
    decim: usize,
    threshold: f64,
    min_sep: u64,
    // input-side pipeline
    mixer_freq: f64,
    fir: Vec<f64>,
    hist: Vec<Complex64>,
    in_count: u64,
    t0: Option<f64>,
    // decimated correlation
    template: Vec<Complex64>,
    template_norm: f64,
    fft_size: usize,
    template_fft: Vec<Complex64>,
    block: Vec<Complex64>,
    block_fill: usize,
    block_base: u64,
    pending: Option<(u64, f64)>,
    finished: bool,
}

impl StreamDetector {
    pub fn new(template: &ChirpSpec, sample_rate: f64, config: DetectorConfig) -> Result<Self> {
        if config.decimation == 0 {
            return Err(Error::signal("decimation factor must be >= 1"));
        }
        let chirp = gen_chirp(template, sample_rate)?;
        let decim = config.decimation;
        let mixer_freq = template.band_center();
        let fir = lowpass_fir(0.4 / decim as f64, FIR_LEN);

        // run the chirp through the same mix/filter/decimate pipeline
        let mut tpl = Vec::new();
        let mut hist = vec![Complex64::default(); FIR_LEN];
        for n in 0..chirp.len() + FIR_LEN {
            let x = chirp.samples.get(n).copied().unwrap_or(0.0);
            let ph = -std::f64::consts::TAU * mixer_freq * n as f64 / sample_rate;
            hist[n % FIR_LEN] = Complex64::from_polar(x, ph);
            if n % decim == 0 {
                tpl.push(fir_dot(&fir, &hist, n));
            }
        }
        let template_norm = tpl.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if template_norm <= 0.0 {
            return Err(Error::signal("detector template has zero energy"));
        }
        let m = tpl.len();
        let fft_size = fft::next_pow2(2 * m);
        let mut template_fft = vec![Complex64::default(); fft_size];
        template_fft[..m].copy_from_slice(&tpl);
        fft::fft_inplace(&mut template_fft);

        let min_sep = ((template.duration * sample_rate / decim as f64).ceil() as u64).max(1);
        Ok(StreamDetector {
            sample_rate,
            decim,
            threshold: config.threshold,
            min_sep,
            mixer_freq,
            fir,
            hist: vec![Complex64::default(); FIR_LEN],
            in_count: 0,
            t0: None,
            template: tpl,
            template_norm,
            fft_size,
            template_fft,
            block: vec![Complex64::default(); fft_size],
            block_fill: 0,
            block_base: 0,
            pending: None,
            finished: false,
        })
    }

    /// Decimated template length.
    pub fn template_len(&self) -> usize {
        self.template.len()
    }

    /// Feeds the next chunk; chunks must arrive in stream order. Returns the
    /// events finalized so far by this chunk.
    pub fn push(&mut self, chunk: &Waveform) -> Result<Vec<DetectionEvent>> {
        if self.finished {
            return Err(Error::signal("detector already finished"));
        }
        if (chunk.sample_rate - self.sample_rate).abs() > 1e-9 {
            return Err(Error::signal("chunk sample rate differs from detector"));
        }
        match self.t0 {
            None => self.t0 = Some(chunk.t0),
            Some(t0) => {
                let expect = t0 + self.in_count as f64 / self.sample_rate;
                if (chunk.t0 - expect).abs() > 0.5 / self.sample_rate {
                    return Err(Error::signal("chunk t0 is not contiguous with the stream"));
                }
            }
        }
        let mut events = Vec::new();
        for &x in &chunk.samples {
            self.push_sample(x, &mut events);
        }
        Ok(events)
    }

    /// Flushes pipeline tails and returns any remaining events.
    pub fn finish(&mut self) -> Vec<DetectionEvent> {
        if self.finished {
            return Vec::new();
        }
        self.finished = true;
        let mut events = Vec::new();
        // flush: enough zeros for the FIR tail plus one full template window
        let pad = FIR_LEN + self.template.len() * self.decim;
        for _ in 0..pad {
            self.push_sample(0.0, &mut events);
        }
        if self.block_fill > self.template.len() - 1 {
            self.run_block(&mut events, self.block_fill);
        }
        if let Some((k, rho)) = self.pending.take() {
            events.push(self.event_at(k, rho));
        }
        events
    }

    fn push_sample(&mut self, x: f64, events: &mut Vec<DetectionEvent>) {
        let n = self.in_count;
        let ph = -std::f64::consts::TAU * self.mixer_freq * n as f64 / self.sample_rate;
        self.hist[(n % FIR_LEN as u64) as usize] = Complex64::from_polar(x, ph);
        if n % self.decim as u64 == 0 {
            let z = fir_dot_u64(&self.fir, &self.hist, n);
            self.accept_decimated(z, events);
        }
        self.in_count += 1;
    }

    fn accept_decimated(&mut self, z: Complex64, events: &mut Vec<DetectionEvent>) {
        self.block[self.block_fill] = z;
        self.block_fill += 1;
        if self.block_fill == self.fft_size {
            self.run_block(events, self.fft_size);
        }
    }

    /// Correlates the current block; lags `block_base .. block_base + fill - m + 1`
    /// become final. Keeps the last m-1 samples for overlap-save continuity.
    fn run_block(&mut self, events: &mut Vec<DetectionEvent>, fill: usize) {
        let m = self.template.len();
        let valid = fill + 1 - m;

        // window energies from a local prefix sum
        let mut prefix = vec![0.0; fill + 1];
        for i in 0..fill {
            prefix[i + 1] = prefix[i] + self.block[i].norm_sqr();
        }

        let mut buf = self.block.clone();
        for v in buf[fill..].iter_mut() {
            *v = Complex64::default();
        }
        fft::fft_inplace(&mut buf);
        for (a, b) in buf.iter_mut().zip(self.template_fft.iter()) {
            *a *= b.conj();
        }
        fft::ifft_inplace(&mut buf);

        for i in 0..valid {
            let energy = prefix[i + m] - prefix[i];
            let rho = if energy > ENERGY_FLOOR {
                buf[i].norm() / (energy.sqrt() * self.template_norm)
            } else {
                0.0
            };
            self.step_state(self.block_base + i as u64, rho, events);
        }

        // carry the overlap
        let keep = m - 1;
        let start = fill - keep;
        self.block.copy_within(start..fill, 0);
        for v in self.block[keep..].iter_mut() {
            *v = Complex64::default();
        }
        self.block_base += start as u64;
        self.block_fill = keep;
    }

    fn step_state(&mut self, k: u64, rho: f64, events: &mut Vec<DetectionEvent>) {
        if let Some((kp, rp)) = self.pending {
            if k - kp > self.min_sep {
                events.push(self.event_at(kp, rp));
                self.pending = None;
            }
        }
        if rho >= self.threshold {
            match self.pending {
                None => self.pending = Some((k, rho)),
                Some((_, rp)) if rho > rp => self.pending = Some((k, rho)),
                _ => {}
            }
        }
    }

    fn event_at(&self, k: u64, rho: f64) -> DetectionEvent {
        DetectionEvent {
            time: self.t0.unwrap_or(0.0) + (k * self.decim as u64) as f64 / self.sample_rate,
            corr_coeff: rho.min(1.0 + 1e-9),
        }
    }
}

fn fir_dot(fir: &[f64], hist: &[Complex64], n: usize) -> Complex64 {
    let len = fir.len();
    let mut acc = Complex64::default();
    for (l, &h) in fir.iter().enumerate() {
        if l > n {
            break;
        }
        acc += h * hist[(n - l) % len];
    }
    acc
}

fn fir_dot_u64(fir: &[f64], hist: &[Complex64], n: u64) -> Complex64 {
    let len = fir.len() as u64;
    let mut acc = Complex64::default();
    for (l, &h) in fir.iter().enumerate() {
        let l = l as u64;
        if l > n {
            break;
        }
        acc += h * hist[((n - l) % len) as usize];
    }
    acc
}

/// Offline wrapper: runs the streaming detector over a whole recording.
pub fn detect_chirp_stream(
    stream: &Waveform,
    template: &ChirpSpec,
    threshold: f64,
) -> Result<Vec<DetectionEvent>> {
    let mut det = StreamDetector::new(
        template,
        stream.sample_rate,
        DetectorConfig { threshold, ..DetectorConfig::default() },
    )?;
    let mut events = det.push(stream)?;
    events.extend(det.finish());
    Ok(events)
}
