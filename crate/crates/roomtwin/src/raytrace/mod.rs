//! Forward acoustic model: image-source specular paths plus frequency-domain
//! RIR synthesis from per-segment reflectivities and device gain patterns.
//!
//! A path contributes `G_tx * G_rx * (1/d) * e^{-i 2 pi nu d / c} * prod_s R_s(nu)`;
//! the RIR is the inverse real FFT of the path sum, with fractional delays
//! carried exactly by the phase. Summation runs in fixed path order so
//! results are independent of thread count.

mod gain;
mod image_source;
mod material;

pub use gain::{sh_basis, softplus, softplus_inv, softplus_prime, GainPattern, SH_COUNT};
pub use image_source::{build_reflectors, enumerate_paths, Reflector, SpecularPath, PLANARITY_TOL};
pub use material::{MaterialSpectrum, BAND_CENTERS_HZ};

use crate::error::{Error, Result};
use crate::fft;
use crate::geometry::{Pose, Scene};
use crate::signals::Rir;
use num_complex::Complex64;
use std::collections::BTreeMap;

/// Default reflection order, matching the estimator's operating point.
pub const DEFAULT_MAX_BOUNCES: usize = 8;

/// Paths whose delay would land within this many samples of the FFT wrap
/// boundary are dropped instead of aliasing into the head of the RIR.
const WRAP_GUARD: usize = 512;

/// FFT layout for spectral synthesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    /// Power of two, >= the RIR length in samples.
    pub fft_size: usize,
    pub sample_rate: f64,
}

impl FrequencyGrid {
    pub fn new(fft_size: usize, sample_rate: f64) -> Result<Self> {
        if !fft_size.is_power_of_two() {
            return Err(Error::Render(format!("fft_size {fft_size} is not a power of two")));
        }
        if !(sample_rate > 0.0) {
            return Err(Error::Render("sample rate must be positive".into()));
        }
        Ok(FrequencyGrid { fft_size, sample_rate })
    }

    /// Grid able to hold `duration` seconds plus wrap guard.
    pub fn for_duration(duration: f64, sample_rate: f64) -> Result<Self> {
        let n = (duration * sample_rate).round() as usize;
        FrequencyGrid::new(fft::next_pow2(n + WRAP_GUARD), sample_rate)
    }

    /// Number of non-redundant real-FFT bins.
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frequency of bin `j`, Hz.
    pub fn freq(&self, j: usize) -> f64 {
        j as f64 * self.sample_rate / self.fft_size as f64
    }

    pub fn samples_for(&self, duration: f64) -> usize {
        ((duration * self.sample_rate).round() as usize).min(self.fft_size)
    }
}

/// Tx/Rx directivity pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceGains {
    pub tx: GainPattern,
    pub rx: GainPattern,
}

impl Default for DeviceGains {
    fn default() -> Self {
        DeviceGains { tx: GainPattern::isotropic_unit(), rx: GainPattern::isotropic_unit() }
    }
}

/// Occurrence count per segment along a path, in deterministic order.
pub(crate) fn segment_counts(path: &SpecularPath) -> BTreeMap<usize, u32> {
    let mut counts = BTreeMap::new();
    for &s in &path.segments {
        *counts.entry(s).or_insert(0) += 1;
    }
    counts
}

/// Directional gain product for a path, in the devices' local frames.
pub(crate) fn path_gain(
    path: &SpecularPath,
    gains: &DeviceGains,
    pose_tx: &Pose,
    pose_rx: &Pose,
) -> f64 {
    let g_tx = gains.tx.gain(&pose_tx.world_to_local(&path.departure));
    let g_rx = gains.rx.gain(&pose_rx.world_to_local(&path.arrival));
    g_tx * g_rx
}

/// Adds one path's spectrum into `out`: `scale * e^{-i 2 pi nu delay} * prod R`.
fn accumulate_path(
    out: &mut [Complex64],
    ramp: &mut [Complex64],
    scale: f64,
    delay: f64,
    counts: &BTreeMap<usize, u32>,
    tables: &BTreeMap<usize, Vec<f64>>,
    grid: &FrequencyGrid,
) {
    let theta = -std::f64::consts::TAU * delay * grid.sample_rate / grid.fft_size as f64;
    fft::phase_ramp(theta, ramp);
    // resolve tables once per path; the bin loop must stay lookup-free
    let factors: Vec<(&[f64], i32)> = counts
        .iter()
        .map(|(&seg, &m)| (tables[&seg].as_slice(), m as i32))
        .collect();
    match factors.as_slice() {
        [] => {
            for (o, r) in out.iter_mut().zip(ramp.iter()) {
                *o += r * scale;
            }
        }
        [(t, 1)] => {
            for ((o, r), &tv) in out.iter_mut().zip(ramp.iter()).zip(t.iter()) {
                *o += r * (scale * tv);
            }
        }
        _ => {
            for (j, (o, r)) in out.iter_mut().zip(ramp.iter()).enumerate() {
                let mut v = scale;
                for &(t, m) in &factors {
                    v *= t[j].powi(m);
                }
                *o += r * v;
            }
        }
    }
}

/// Complex transfer spectrum of a single path over the grid's bins:
/// `G_tx(departure) * G_rx(arrival) * (1/d) * e^{-i 2 pi nu d / c} * prod_s R_s(nu)`.
pub fn path_transfer(
    path: &SpecularPath,
    scene: &Scene,
    gains: &DeviceGains,
    pose_tx: &Pose,
    pose_rx: &Pose,
    grid: &FrequencyGrid,
) -> Result<Vec<Complex64>> {
    if path.length < 1e-9 {
        return Err(Error::Render("zero-length path (coincident devices)".into()));
    }
    for &s in &path.segments {
        if s >= scene.materials.len() {
            return Err(Error::Render(format!("path references unbound segment {s}")));
        }
    }
    let counts = segment_counts(path);
    let tables: BTreeMap<usize, Vec<f64>> = counts
        .keys()
        .map(|&s| (s, scene.materials[s].sample_table(grid)))
        .collect();
    let scale = path_gain(path, gains, pose_tx, pose_rx) / path.length;
    let mut out = vec![Complex64::default(); grid.bins()];
    let mut ramp = vec![Complex64::default(); grid.bins()];
    accumulate_path(
        &mut out,
        &mut ramp,
        scale,
        path.length / scene.speed_of_sound,
        &counts,
        &tables,
        grid,
    );
    Ok(out)
}

/// Renders the RIR between two poses: sums all specular path spectra and
/// inverse-transforms. Tap 0 corresponds to the straight-line (direct-path)
/// delay, which is also the stored onset; later paths land at their exact
/// fractional relative delays.
pub fn render_rir(
    scene: &Scene,
    pose_tx: &Pose,
    pose_rx: &Pose,
    gains: &DeviceGains,
    grid: &FrequencyGrid,
    max_bounces: usize,
    duration: f64,
) -> Result<Rir> {
    let paths = enumerate_paths(scene, &pose_tx.position, &pose_rx.position, max_bounces)?;
    render_rir_from_paths(scene, &paths, pose_tx, pose_rx, gains, grid, duration)
}

/// Same as [`render_rir`] with a precomputed path list (geometry fixed).
pub fn render_rir_from_paths(
    scene: &Scene,
    paths: &[SpecularPath],
    pose_tx: &Pose,
    pose_rx: &Pose,
    gains: &DeviceGains,
    grid: &FrequencyGrid,
    duration: f64,
) -> Result<Rir> {
    let c = scene.speed_of_sound;
    let d0 = (pose_rx.position - pose_tx.position).norm();
    let onset = d0 / c;
    let n = grid.samples_for(duration);

    let mut tables: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for p in paths {
        for &s in &p.segments {
            tables
                .entry(s)
                .or_insert_with(|| scene.materials[s].sample_table(grid));
        }
    }

    if paths.iter().any(|p| p.length < 1e-9) {
        return Err(Error::Render("zero-length path (coincident devices)".into()));
    }
    let max_delay = (grid.fft_size - WRAP_GUARD) as f64 / grid.sample_rate;

    // paths sharing a material product (same tables, same powers) share one
    // spectral envelope: accumulate their phasors together and multiply by
    // the product once per group. In a uniform room this collapses every
    // n-bounce path into the n-th group.
    let mut unique_tables: Vec<usize> = Vec::new(); // representative segment
    let mut table_id = BTreeMap::new();
    for (&seg, _) in &tables {
        let id = unique_tables
            .iter()
            .position(|&rep| scene.materials[rep] == scene.materials[seg])
            .unwrap_or_else(|| {
                unique_tables.push(seg);
                unique_tables.len() - 1
            });
        table_id.insert(seg, id);
    }
    let group_of = |path: &SpecularPath| -> Vec<(usize, u32)> {
        let mut g: BTreeMap<usize, u32> = BTreeMap::new();
        for (&seg, &m) in &segment_counts(path) {
            *g.entry(table_id[&seg]).or_insert(0) += m;
        }
        g.into_iter().collect()
    };

    // parallel over fixed path chunks; per-chunk group maps merge in chunk
    // order, so results are independent of thread count
    use rayon::prelude::*;
    type GroupMap = BTreeMap<Vec<(usize, u32)>, Vec<Complex64>>;
    let partials: Vec<GroupMap> = paths
        .par_chunks(2048)
        .map(|chunk| {
            let mut groups: GroupMap = BTreeMap::new();
            let mut ramp = vec![Complex64::default(); grid.bins()];
            for path in chunk {
                let rel = (path.length - d0) / c;
                if rel > max_delay {
                    continue;
                }
                let scale = path_gain(path, gains, pose_tx, pose_rx) / path.length;
                let theta =
                    -std::f64::consts::TAU * rel * grid.sample_rate / grid.fft_size as f64;
                fft::phase_ramp(theta, &mut ramp);
                let buf = groups
                    .entry(group_of(path))
                    .or_insert_with(|| vec![Complex64::default(); grid.bins()]);
                for (o, r) in buf.iter_mut().zip(ramp.iter()) {
                    *o += r * scale;
                }
            }
            groups
        })
        .collect();
    let mut groups: GroupMap = BTreeMap::new();
    for part in partials {
        for (key, buf) in part {
            match groups.entry(key) {
                std::collections::btree_map::Entry::Vacant(v) => {
                    v.insert(buf);
                }
                std::collections::btree_map::Entry::Occupied(mut o) => {
                    for (a, b) in o.get_mut().iter_mut().zip(buf.iter()) {
                        *a += b;
                    }
                }
            }
        }
    }

    let mut spec = vec![Complex64::default(); grid.bins()];
    for (key, buf) in &groups {
        let factors: Vec<(&[f64], i32)> = key
            .iter()
            .map(|&(tid, m)| (tables[&unique_tables[tid]].as_slice(), m as i32))
            .collect();
        for (j, (o, b)) in spec.iter_mut().zip(buf.iter()).enumerate() {
            let mut v = 1.0;
            for &(t, m) in &factors {
                v *= t[j].powi(m);
            }
            *o += b * v;
        }
    }
    let taps = fft::irfft(&spec, grid.fft_size);
    Rir::new(taps[..n].to_vec(), grid.sample_rate, onset)
}
