//! Protocol execution over a pair of recorded sessions: streaming chirp
//! detection, direct-path refinement, cross-device exchange pairing, ToF
//! recovery, and RIR extraction.

use super::{tof_from_record, DeviceRecording, HandshakeRecord};
use crate::error::Result;
use crate::signals::{
    default_h_min, detect_chirp_stream, extract_rir, gen_chirp, matched_filter, ChirpSpec, Rir,
    Waveform,
};
use serde::{Deserialize, Serialize};

/// Detector and pairing parameters. Defaults are the documented operating
/// point; `chirp_interval` must match the session schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    /// Streaming-detector normalized correlation threshold.
    pub threshold: f64,
    /// Direct-path picker window, seconds.
    pub delta_t: f64,
    /// Direct-path picker growth ratio.
    pub growth: f64,
    /// Extracted RIR length, seconds.
    pub rir_duration: f64,
    /// Largest plausible response latency t3 - t2, seconds.
    pub max_latency: f64,
    /// Largest plausible one-way ToF, seconds.
    pub max_tof: f64,
    /// Exchange schedule spacing, seconds.
    pub chirp_interval: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            threshold: 0.3,
            delta_t: 0.002,
            growth: 2.0,
            rir_duration: 0.3,
            max_latency: 0.5,
            max_tof: 0.15,
            chirp_interval: 2.0,
        }
    }
}

/// One successfully paired exchange.
#[derive(Debug, Clone)]
pub struct ProtocolExchange {
    pub record: HandshakeRecord,
    /// Clock-offset-free one-way ToF, seconds.
    pub tof: f64,
    /// RIR extracted from the c2 matched filter, onset = `tof`.
    pub rir: Rir,
}

/// Session-level detection accounting.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DetectionReport {
    pub c1_emitted: usize,
    pub c1_detected: usize,
    pub c2_emitted: usize,
    pub c2_detected: usize,
    pub exchanges_paired: usize,
    pub exchanges_dropped: usize,
    /// c1 detections over c1 emissions.
    pub detection_rate: f64,
}

#[derive(Debug)]
pub struct ProtocolOutput {
    pub exchanges: Vec<ProtocolExchange>,
    pub report: DetectionReport,
}

/// Detects every chirp coarsely with the streaming detector, then refines
/// each arrival to the direct path on the full-rate matched filter.
fn detect_and_refine(
    recording: &Waveform,
    spec: &ChirpSpec,
    chirp: &Waveform,
    cfg: &ProtocolConfig,
) -> Result<Vec<f64>> {
    let events = detect_chirp_stream(recording, spec, cfg.threshold)?;
    let mut out = Vec::with_capacity(events.len());
    for ev in events {
        if let Some(t) = refine_arrival(recording, chirp, ev.time, cfg) {
            out.push(t);
        }
    }
    Ok(out)
}

/// Full-rate matched filter around a coarse detection; picks the direct
/// path. `None` when the window has no pickable arrival.
fn refine_arrival(
    recording: &Waveform,
    chirp: &Waveform,
    coarse: f64,
    cfg: &ProtocolConfig,
) -> Option<f64> {
    let win = recording.slice_time(coarse - 0.01, coarse + chirp.duration() + 0.04);
    if win.len() < chirp.len() / 2 {
        return None;
    }
    let corr = matched_filter(&win, chirp).ok()?;
    let zone = corr.slice_time(coarse - 0.005, coarse + 0.035);
    if zone.is_empty() {
        return None;
    }
    // floor the candidate threshold at the compressed chirp's far-sidelobe
    // level; in clean recordings the median alone is numerically tiny and
    // would admit every ripple as a candidate
    let peak = zone.samples.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let h_min = default_h_min(&zone).max(0.05 * peak);
    crate::signals::pick_direct_path(&zone, h_min, cfg.delta_t, cfg.growth).ok()
}

/// Snaps an ascending event sequence onto the exchange grid by cumulative
/// gap rounding; returns a relative exchange index per event.
fn grid_indices(times: &[f64], interval: f64) -> Vec<i64> {
    let mut idx = Vec::with_capacity(times.len());
    let mut acc = 0i64;
    for (i, &t) in times.iter().enumerate() {
        if i > 0 {
            let gap = ((t - times[i - 1]) / interval).round() as i64;
            acc += gap.max(1);
        }
        idx.push(acc);
    }
    idx
}

/// Executes the protocol over both recordings.
///
/// Detection yields t2 (c1 at Tx) and t4 (c2 at Rx); emissions t1 and t3 come
/// from each device's own log. Pairs are formed per device, snapped onto the
/// exchange grid, and the cross-device alignment shift is chosen to maximize
/// protocol-plausible exchanges (0 <= ToF <= max_tof, 0 <= t3-t2 <= max
/// latency). Unpaired or implausible detections are dropped and counted.
pub fn run_protocol(
    rx: &DeviceRecording,
    tx: &DeviceRecording,
    c1: &ChirpSpec,
    c2: &ChirpSpec,
    cfg: &ProtocolConfig,
) -> Result<ProtocolOutput> {
    let fs = rx.waveform.sample_rate;
    let c1w = gen_chirp(c1, fs)?;
    let c2w = gen_chirp(c2, fs)?;

    let t2_events = detect_and_refine(&tx.waveform, c1, &c1w, cfg)?;
    let t4_events = detect_and_refine(&rx.waveform, c2, &c2w, cfg)?;

    // Tx side: pair each detected c1 with the first logged response after it.
    let mut tx_pairs: Vec<(f64, f64)> = Vec::new(); // (t2, t3)
    let mut emit_cursor = 0usize;
    for &t2 in &t2_events {
        while emit_cursor < tx.emissions.len() && tx.emissions[emit_cursor] < t2 {
            emit_cursor += 1;
        }
        if emit_cursor < tx.emissions.len() {
            let t3 = tx.emissions[emit_cursor];
            if t3 - t2 <= cfg.max_latency {
                tx_pairs.push((t2, t3));
                emit_cursor += 1;
            }
        }
    }

    // Rx side: pair each logged emission with the first response arrival in
    // its exchange window. Emission index = exchange index. The window stays
    // inside one chirp interval so a missed response cannot steal the next
    // exchange's arrival.
    let window = (cfg.max_latency + 2.0 * cfg.max_tof).min(0.95 * cfg.chirp_interval);
    let mut rx_pairs: Vec<(usize, f64, f64)> = Vec::new(); // (exchange, t1, t4)
    let mut t4_cursor = 0usize;
    for (k, &t1) in rx.emissions.iter().enumerate() {
        while t4_cursor < t4_events.len() && t4_events[t4_cursor] <= t1 {
            t4_cursor += 1;
        }
        if t4_cursor < t4_events.len() && t4_events[t4_cursor] - t1 <= window {
            rx_pairs.push((k, t1, t4_events[t4_cursor]));
            t4_cursor += 1;
        }
    }

    // Cross-device alignment: tx pair j sits at relative grid index g[j];
    // the shift delta mapping it onto rx exchange indices is found by
    // plausibility voting.
    let tx_grid = grid_indices(&tx_pairs.iter().map(|p| p.0).collect::<Vec<_>>(), cfg.chirp_interval);
    let plausible = |rec: &HandshakeRecord| -> bool {
        rec.validate().is_ok()
            && matches!(tof_from_record(rec), Ok(t) if t <= cfg.max_tof)
    };
    let mut best_shift = 0i64;
    let mut best_count = -1i64;
    for shift in -3..=3i64 {
        let mut count = 0i64;
        for (j, &(t2, t3)) in tx_pairs.iter().enumerate() {
            let k = tx_grid[j] + shift;
            if k < 0 {
                continue;
            }
            if let Some(&(_, t1, t4)) = rx_pairs.iter().find(|p| p.0 == k as usize) {
                if plausible(&HandshakeRecord { t1, t2, t3, t4 }) {
                    count += 1;
                }
            }
        }
        if count > best_count
            || (count == best_count
                && (shift.abs(), shift) < (best_shift.abs(), best_shift))
        {
            best_count = count;
            best_shift = shift;
        }
    }

    let mut exchanges = Vec::new();
    let mut dropped = 0usize;
    for (j, &(t2, t3)) in tx_pairs.iter().enumerate() {
        let k = tx_grid[j] + best_shift;
        let Some(&(_, t1, t4)) = (k >= 0)
            .then(|| rx_pairs.iter().find(|p| p.0 == k as usize))
            .flatten()
        else {
            dropped += 1;
            continue;
        };
        let record = HandshakeRecord { t1, t2, t3, t4 };
        if record.validate().is_err() {
            dropped += 1;
            continue;
        }
        let tof = match tof_from_record(&record) {
            Ok(t) if t <= cfg.max_tof => t,
            _ => {
                dropped += 1;
                continue;
            }
        };
        // RIR from the c2 matched filter around t4, onset re-anchored to the
        // handshake ToF (the absolute delay the local crop cannot know).
        let win = rx
            .waveform
            .slice_time(t4 - 0.01, t4 + c2.duration + cfg.rir_duration + 0.05);
        let mut rir = extract_rir(&win, &c2w, t4, cfg.rir_duration)?;
        rir.onset = tof;
        exchanges.push(ProtocolExchange { record, tof, rir });
    }

    let c1_emitted = rx.emissions.len();
    let report = DetectionReport {
        c1_emitted,
        c1_detected: t2_events.len(),
        c2_emitted: tx.emissions.len(),
        c2_detected: t4_events.len(),
        exchanges_paired: exchanges.len(),
        exchanges_dropped: dropped,
        detection_rate: if c1_emitted == 0 {
            0.0
        } else {
            t2_events.len().min(c1_emitted) as f64 / c1_emitted as f64
        },
    };
    Ok(ProtocolOutput { exchanges, report })
}
