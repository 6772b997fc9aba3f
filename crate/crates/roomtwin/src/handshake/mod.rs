//! Two-way acoustic handshake between unsynchronized devices.
//!
//! The Rx device emits chirp c1 at t1 (its own clock); Tx detects the
//! arrival at t2, responds with chirp c2 at t3 (both in Tx's clock); Rx
//! detects the response at t4. `((t4 - t1) - (t3 - t2)) / 2` cancels the
//! unknown clock offset and recovers the one-way time of flight, while the
//! c2 matched filter simultaneously yields the RIR.
//!
//! The session simulator replaces real capture: it synthesizes both
//! devices' recordings by convolving each emitted chirp with the ray-traced
//! channel at the emission-time poses (devices are frozen within one chirp),
//! maps all timestamps through per-device clock models, and adds white noise
//! at a configured SNR. Devices do not record their own emissions; near-field
//! self-paths are out of scope.

mod protocol;

pub use protocol::{
    run_protocol, DetectionReport, ProtocolConfig, ProtocolExchange, ProtocolOutput,
};

use crate::error::{Error, Result};
use crate::fft;
use crate::geometry::{Pose, Scene};
use crate::raytrace::{render_rir, DeviceGains, FrequencyGrid};
use crate::signals::{gen_chirp, ChirpSpec, Rir, Waveform};
use nalgebra::Point3;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Affine device clock: `local = global * (1 + drift_ppm * 1e-6) + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockModel {
    /// Seconds (local minus global).
    pub offset: f64,
    /// Parts per million, |drift| < 1000.
    pub drift_ppm: f64,
}

impl ClockModel {
    pub fn new(offset: f64, drift_ppm: f64) -> Result<Self> {
        if drift_ppm.abs() >= 1000.0 {
            return Err(Error::Protocol(format!("|drift| must be < 1000 ppm, got {drift_ppm}")));
        }
        Ok(ClockModel { offset, drift_ppm })
    }

    pub fn identity() -> Self {
        ClockModel { offset: 0.0, drift_ppm: 0.0 }
    }

    fn scale(&self) -> f64 {
        1.0 + self.drift_ppm * 1e-6
    }

    pub fn local_from_global(&self, t: f64) -> f64 {
        t * self.scale() + self.offset
    }

    pub fn global_from_local(&self, t: f64) -> f64 {
        (t - self.offset) / self.scale()
    }
}

/// The four protocol timestamps of one exchange. t1/t4 live in the Rx
/// clock, t2/t3 in the Tx clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandshakeRecord {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
}

impl HandshakeRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.t4 > self.t1) {
            return Err(Error::Protocol(format!("t4 ({}) must exceed t1 ({})", self.t4, self.t1)));
        }
        if self.t3 < self.t2 {
            return Err(Error::Protocol(format!("t3 ({}) must be >= t2 ({})", self.t3, self.t2)));
        }
        Ok(())
    }
}

/// Clock-offset-free one-way time of flight:
/// `((t4 - t1) - (t3 - t2)) / 2`. A negative result flags an invalid
/// exchange (mispaired or corrupted detections).
pub fn tof_from_record(rec: &HandshakeRecord) -> Result<f64> {
    let tof = ((rec.t4 - rec.t1) - (rec.t3 - rec.t2)) / 2.0;
    if tof < 0.0 {
        return Err(Error::InvalidExchange(tof));
    }
    Ok(tof)
}

/// Time-stamped pose track with linear position interpolation and
/// quaternion slerp, clamped at the ends.
#[derive(Debug, Clone)]
pub struct Trajectory {
    keys: Vec<(f64, Pose)>,
}

impl Trajectory {
    pub fn static_pose(pose: Pose) -> Self {
        Trajectory { keys: vec![(0.0, pose)] }
    }

    pub fn waypoints(keys: Vec<(f64, Pose)>) -> Result<Self> {
        if keys.is_empty() {
            return Err(Error::Protocol("trajectory needs at least one waypoint".into()));
        }
        if keys.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Protocol("trajectory timestamps must be increasing".into()));
        }
        Ok(Trajectory { keys })
    }

    /// Straight-line walk from `a` to `b` over `[0, duration]`.
    pub fn line(a: Point3<f64>, b: Point3<f64>, duration: f64) -> Result<Self> {
        Trajectory::waypoints(vec![
            (0.0, Pose::new(a, nalgebra::UnitQuaternion::identity())),
            (duration, Pose::new(b, nalgebra::UnitQuaternion::identity())),
        ])
    }

    pub fn pose_at(&self, t: f64) -> Pose {
        let keys = &self.keys;
        if t <= keys[0].0 {
            return keys[0].1;
        }
        if t >= keys[keys.len() - 1].0 {
            return keys[keys.len() - 1].1;
        }
        let i = keys.partition_point(|k| k.0 <= t) - 1;
        let (t0, p0) = keys[i];
        let (t1, p1) = keys[i + 1];
        let a = (t - t0) / (t1 - t0);
        Pose {
            position: Point3::from(p0.position.coords * (1.0 - a) + p1.position.coords * a),
            orientation: p0.orientation.slerp(&p1.orientation, a),
        }
    }
}

/// Session parameters for the simulated capture.
#[derive(Debug, Clone)]
pub struct SessionConfig {
    /// Total session length, seconds.
    pub duration: f64,
    /// Seconds between c1 emissions (>= 2x chirp duration).
    pub chirp_interval: f64,
    /// Uniform response-latency range for t3 - t2, seconds.
    pub latency_range: (f64, f64),
    /// Additive white noise level relative to mean direct-path chirp power;
    /// `None` disables noise.
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub c1: ChirpSpec,
    pub c2: ChirpSpec,
    pub sample_rate: f64,
    pub tx_trajectory: Trajectory,
    pub rx_trajectory: Trajectory,
    /// Device directivities used by the channel renderer.
    pub gains: DeviceGains,
    /// Reflection order of the channel renderer.
    pub max_bounces: usize,
    /// Channel RIR length, seconds.
    pub channel_rir_duration: f64,
}

impl SessionConfig {
    /// Static two-device session with the standard probes at 48 kHz.
    pub fn static_pair(tx: Pose, rx: Pose, duration: f64) -> Self {
        SessionConfig {
            duration,
            chirp_interval: 2.0,
            latency_range: (0.05, 0.15),
            snr_db: None,
            seed: 0,
            c1: ChirpSpec::sync_probe(),
            c2: ChirpSpec::rir_probe(),
            sample_rate: crate::SAMPLE_RATE,
            tx_trajectory: Trajectory::static_pose(tx),
            rx_trajectory: Trajectory::static_pose(rx),
            gains: DeviceGains::default(),
            max_bounces: 3,
            channel_rir_duration: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let max_chirp = self.c1.duration.max(self.c2.duration);
        if self.chirp_interval < 2.0 * max_chirp {
            return Err(Error::Protocol(format!(
                "chirp interval {} must be >= twice the chirp duration {}",
                self.chirp_interval, max_chirp
            )));
        }
        if self.latency_range.0 < 0.0 || self.latency_range.1 < self.latency_range.0 {
            return Err(Error::Protocol("bad latency range".into()));
        }
        Ok(())
    }
}

/// Global emission times of all exchanges in a session.
pub fn exchange_times(config: &SessionConfig) -> Vec<f64> {
    let n = (config.duration / config.chirp_interval).floor() as usize;
    (0..n).map(|i| i as f64 * config.chirp_interval).collect()
}

/// Per-exchange ground truth kept by the simulator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExchangeTruth {
    pub index: usize,
    /// Global time of the c1 emission.
    pub emit_global: f64,
    /// True one-way time of flight at this exchange's poses.
    pub tof: f64,
    pub pose_tx: Pose,
    pub pose_rx: Pose,
}

/// What one device ends a session with: its recording and its own emission
/// log (local clock, sample-aligned).
#[derive(Debug, Clone)]
pub struct DeviceRecording {
    pub waveform: Waveform,
    pub emissions: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SessionSim {
    pub rx: DeviceRecording,
    pub tx: DeviceRecording,
    pub truth: Vec<ExchangeTruth>,
}

/// Pre-roll before the first exchange and tail after the last, seconds.
const SESSION_PREROLL: f64 = 0.25;
const SESSION_TAIL: f64 = 1.0;

/// Simulates a full two-device session over the scene's acoustic channel.
/// Deterministic given the seed.
pub fn simulate_session(
    scene: &Scene,
    config: &SessionConfig,
    clock_tx: &ClockModel,
    clock_rx: &ClockModel,
) -> Result<SessionSim> {
    config.validate()?;
    let fs = config.sample_rate;
    let c1w = gen_chirp(&config.c1, fs)?;
    let c2w = gen_chirp(&config.c2, fs)?;
    let grid = FrequencyGrid::for_duration(config.channel_rir_duration, fs)?;
    let times = exchange_times(config);

    let t_start = -SESSION_PREROLL;
    let t_end = config.duration + SESSION_TAIL;
    let span = t_end - t_start;
    let n = (span * fs * 1.001).ceil() as usize;
    let tx_t0 = clock_tx.local_from_global(t_start);
    let rx_t0 = clock_rx.local_from_global(t_start);
    let mut tx_buf = vec![0.0f64; n];
    let mut rx_buf = vec![0.0f64; n];
    let mut tx_emissions = Vec::new();
    let mut rx_emissions = Vec::new();
    let mut truth = Vec::with_capacity(times.len());

    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let latencies: Vec<f64> = times
        .iter()
        .map(|_| rng.random_range(config.latency_range.0..=config.latency_range.1))
        .collect();

    let mut sum_inv_d2 = 0.0;
    for (i, &t_i) in times.iter().enumerate() {
        let pose_rx = config.rx_trajectory.pose_at(t_i);
        let pose_tx = config.tx_trajectory.pose_at(t_i);
        for (name, pose) in [("rx", &pose_rx), ("tx", &pose_tx)] {
            if !scene.contains(&pose.position) {
                return Err(Error::Protocol(format!(
                    "{name} trajectory leaves the scene at t = {t_i:.3} s"
                )));
            }
        }
        let d = (pose_tx.position - pose_rx.position).norm();
        sum_inv_d2 += 1.0 / (d * d);

        // c1: Rx -> Tx. Emission snapped to the Rx sample grid and logged.
        let (t1_local, g1) = snap_emission(t_i, clock_rx, rx_t0, fs);
        rx_emissions.push(t1_local);
        let rir_fwd = render_rir(
            scene,
            &pose_rx,
            &pose_tx,
            &config.gains,
            &grid,
            config.max_bounces,
            config.channel_rir_duration,
        )?;
        let tof = rir_fwd.onset;
        place_arrival(
            &mut tx_buf,
            tx_t0,
            fs,
            clock_tx.local_from_global(g1 + tof),
            &c1w.samples,
            &rir_fwd.taps,
        );

        // c2 response: Tx -> Rx after the drawn detection latency.
        let g3_target = g1 + tof + latencies[i];
        let (t3_local, g3) = snap_emission(g3_target, clock_tx, tx_t0, fs);
        tx_emissions.push(t3_local);
        let rir_rev = render_rir(
            scene,
            &pose_tx,
            &pose_rx,
            &config.gains,
            &grid,
            config.max_bounces,
            config.channel_rir_duration,
        )?;
        place_arrival(
            &mut rx_buf,
            rx_t0,
            fs,
            clock_rx.local_from_global(g3 + rir_rev.onset),
            &c2w.samples,
            &rir_rev.taps,
        );

        truth.push(ExchangeTruth { index: i, emit_global: g1, tof, pose_tx, pose_rx });
    }

    if let Some(snr_db) = config.snr_db {
        if !times.is_empty() {
            let mean_inv_d2 = sum_inv_d2 / times.len() as f64;
            let p1 = c1w.energy() / c1w.len() as f64 * mean_inv_d2;
            let p2 = c2w.energy() / c2w.len() as f64 * mean_inv_d2;
            let factor = 10f64.powf(snr_db / 10.0);
            let sigma_tx = (p1 / factor).sqrt();
            let sigma_rx = (p2 / factor).sqrt();
            for v in &mut tx_buf {
                *v += sigma_tx * rng.sample::<f64, _>(StandardNormal);
            }
            for v in &mut rx_buf {
                *v += sigma_rx * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }

    Ok(SessionSim {
        tx: DeviceRecording {
            waveform: Waveform::new(tx_buf, fs, tx_t0)?,
            emissions: tx_emissions,
        },
        rx: DeviceRecording {
            waveform: Waveform::new(rx_buf, fs, rx_t0)?,
            emissions: rx_emissions,
        },
        truth,
    })
}

/// Rounds a desired global emission instant onto the device's own sample
/// grid; returns (logged local time, actual global time).
fn snap_emission(global: f64, clock: &ClockModel, t0: f64, fs: f64) -> (f64, f64) {
    let local = clock.local_from_global(global);
    let idx = ((local - t0) * fs).round();
    let local_snapped = t0 + idx / fs;
    (local_snapped, clock.global_from_local(local_snapped))
}

/// Adds `chirp (*) rir` into the buffer with an exact sub-sample arrival:
/// the fractional part of the target position becomes a spectral phase ramp.
fn place_arrival(
    buffer: &mut [f64],
    t0: f64,
    fs: f64,
    arrival_local: f64,
    chirp: &[f64],
    rir: &[f64],
) {
    let pos = (arrival_local - t0) * fs;
    let idx = pos.floor() as isize;
    let frac = pos - pos.floor();
    let out_len = chirp.len() + rir.len() - 1;
    let pad = 2048;
    let nfft = fft::next_pow2(out_len + pad);
    let mut fa = vec![Complex64::default(); nfft];
    for (b, &v) in fa.iter_mut().zip(chirp.iter()) {
        b.re = v;
    }
    let mut fb = vec![Complex64::default(); nfft];
    for (b, &v) in fb.iter_mut().zip(rir.iter()) {
        b.re = v;
    }
    fft::fft_inplace(&mut fa);
    fft::fft_inplace(&mut fb);
    // multiply and apply the fractional delay in one pass
    let theta = -std::f64::consts::TAU * frac / nfft as f64;
    for (j, v) in fa.iter_mut().enumerate() {
        let k = if j <= nfft / 2 { j as f64 } else { j as f64 - nfft as f64 };
        *v = *v * fb[j] * Complex64::from_polar(1.0, theta * k);
    }
    fft::ifft_inplace(&mut fa);
    for (k, v) in fa.iter().take(out_len + 1).enumerate() {
        let target = idx + k as isize;
        if target >= 0 && (target as usize) < buffer.len() {
            buffer[target as usize] += v.re;
        }
    }
}

/// HandshakeRecords + per-exchange ground truth as JSON lines.
pub fn truth_to_jsonl(truth: &[ExchangeTruth]) -> Result<String> {
    let mut out = String::new();
    for t in truth {
        out.push_str(&serde_json::to_string(t)?);
        out.push('\n');
    }
    Ok(out)
}

/// Converts a global time to a device index for a recording buffer.
pub fn local_time_to_index(w: &Waveform, t_local: f64) -> isize {
    ((t_local - w.t0) * w.sample_rate).round() as isize
}


/// Convolves a probe through a channel RIR; the output clock is anchored at
/// the emission time plus the RIR onset.
pub fn apply_channel(chirp: &Waveform, rir: &Rir) -> Waveform {
    let conv = fft::convolve(&chirp.samples, &rir.taps);
    Waveform::new(conv, chirp.sample_rate, chirp.t0 + rir.onset).unwrap()
}
