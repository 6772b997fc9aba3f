//! Surface-emitter acoustic field: mesh faces are clustered into patches,
//! each patch carries a trainable emission waveform, and rendering casts K
//! deterministic directions from the microphone, evaluating exactly one
//! emitter at each first surface hit. Contributions aggregate with the
//! physical time delay `t - d_k/c` and `1/(t c)` spherical spreading, where
//! `t` is the output tap's absolute time. Rays average with weight 1/K so
//! output level is stable under ray-count refinement.
//!
//! The model is conditioned on one fixed Tx pose; scene edits invalidate it.

use crate::error::{Error, Result};
use crate::fft;
use crate::geometry::{sphere_directions, Pose, Scene};
use crate::raytrace::{sh_basis, softplus, softplus_prime, GainPattern, SH_COUNT};
use crate::signals::Rir;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// Default patch count.
pub const DEFAULT_PATCHES: usize = 256;

/// Counters proving the surface-only sampling contract: one emitter
/// evaluation per ray that hits.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldRenderStats {
    pub rays: usize,
    pub hits: usize,
    pub emitter_evals: usize,
}

/// Trainable surface-emitter field for one Tx pose.
#[derive(Debug, Clone)]
pub struct FieldModel {
    /// Patch id per mesh face.
    pub patch_of_face: Vec<u32>,
    pub num_patches: usize,
    /// Row-major `num_patches x bins` emission waveforms.
    pub emissions: Vec<f64>,
    /// Delay bins per patch (= output RIR length in samples).
    pub bins: usize,
    pub sample_rate: f64,
    /// The Tx pose this field is conditioned on.
    pub tx_pose: Pose,
    /// Rays cast per render.
    pub ray_count: usize,
    pub rx_gain: GainPattern,
}

/// Area-balanced BFS clustering of faces into at most `target_patches`
/// patches per connected run (fragmented meshes may yield more).
fn cluster_patches(scene: &Scene, target_patches: usize) -> (Vec<u32>, usize) {
    let mesh = &scene.mesh;
    let n = mesh.num_faces();
    if n == 0 {
        return (Vec::new(), 0);
    }
    let adjacency = crate::geometry::face_adjacency(mesh);
    let total_area = mesh.total_area();
    let target_area = total_area / target_patches.max(1) as f64;
    let mut patch = vec![u32::MAX; n];
    let mut next = 0u32;
    for seed in 0..n {
        if patch[seed] != u32::MAX {
            continue;
        }
        let id = next;
        next += 1;
        let mut area = 0.0;
        let mut queue = std::collections::VecDeque::from([seed as u32]);
        patch[seed] = id;
        while let Some(f) = queue.pop_front() {
            area += mesh.face_area(f as usize);
            if area >= target_area {
                break;
            }
            for &nb in &adjacency[f as usize] {
                if patch[nb as usize] == u32::MAX {
                    patch[nb as usize] = id;
                    queue.push_back(nb);
                }
            }
        }
    }
    (patch, next as usize)
}

impl FieldModel {
    /// Builds an untouched (all-zero emission) model over the scene.
    pub fn new(
        scene: &Scene,
        tx_pose: Pose,
        target_patches: usize,
        bins: usize,
        ray_count: usize,
        sample_rate: f64,
    ) -> Result<Self> {
        if bins == 0 || ray_count == 0 {
            return Err(Error::Field("bins and ray_count must be positive".into()));
        }
        let (patch_of_face, num_patches) = cluster_patches(scene, target_patches);
        if num_patches == 0 {
            return Err(Error::Field("field model needs a non-empty mesh".into()));
        }
        Ok(FieldModel {
            patch_of_face,
            num_patches,
            emissions: vec![0.0; num_patches * bins],
            bins,
            sample_rate,
            tx_pose,
            ray_count,
            rx_gain: GainPattern::isotropic_unit(),
        })
    }

    pub fn emission(&self, patch: usize) -> &[f64] {
        &self.emissions[patch * self.bins..(patch + 1) * self.bins]
    }

    pub fn emission_mut(&mut self, patch: usize) -> &mut [f64] {
        &mut self.emissions[patch * self.bins..(patch + 1) * self.bins]
    }

    /// Per-sample ray geometry; fixed across training iterations.
    fn trace(&self, scene: &Scene, pose_rx: &Pose) -> Result<(Vec<RayContrib>, FieldRenderStats)> {
        if !scene.contains(&pose_rx.position) {
            return Err(Error::Field("rx position outside the scene bounds".into()));
        }
        let dirs = sphere_directions(self.ray_count)?;
        let mut stats = FieldRenderStats { rays: self.ray_count, ..Default::default() };
        let mut contribs = Vec::new();
        let inv_k = 1.0 / self.ray_count as f64;
        for dir in dirs {
            let Some(hit) = scene.cast_ray(&pose_rx.position, &dir) else {
                continue;
            };
            stats.hits += 1;
            let delay = hit.distance / scene.speed_of_sound * self.sample_rate;
            contribs.push(RayContrib {
                patch: self.patch_of_face[hit.face as usize],
                i0: delay.floor() as usize,
                frac: delay - delay.floor(),
                weight: inv_k,
                sh: sh_basis(&pose_rx.world_to_local(&dir)),
            });
        }
        Ok((contribs, stats))
    }

    fn render_contribs(&self, contribs: &[RayContrib], stats: &mut FieldRenderStats, c: f64) -> Vec<f64> {
        let n = self.bins;
        let mut out = vec![0.0; n];
        let fs = self.sample_rate;
        for rc in contribs {
            let u: f64 = self.rx_gain.coeffs.iter().zip(rc.sh.iter()).map(|(a, b)| a * b).sum();
            let g = softplus(u) * rc.weight;
            let s = self.emission(rc.patch as usize);
            stats.emitter_evals += 1;
            for (tau, &e) in s.iter().enumerate() {
                let idx = rc.i0 + tau;
                if idx < n {
                    out[idx] += g * (1.0 - rc.frac) * e / ((idx.max(1) as f64 / fs) * c);
                }
                if idx + 1 < n {
                    out[idx + 1] += g * rc.frac * e / (((idx + 1) as f64 / fs) * c);
                }
            }
        }
        out
    }

    /// Renders the field RIR at a receiver pose. Taps live on the absolute
    /// time axis (tap 0 = emission instant), so the stored onset is 0.
    pub fn render(&self, scene: &Scene, pose_rx: &Pose) -> Result<Rir> {
        Ok(self.render_with_stats(scene, pose_rx)?.0)
    }

    /// Same, exposing the surface-only sampling counters.
    pub fn render_with_stats(
        &self,
        scene: &Scene,
        pose_rx: &Pose,
    ) -> Result<(Rir, FieldRenderStats)> {
        let (contribs, mut stats) = self.trace(scene, pose_rx)?;
        let taps = self.render_contribs(&contribs, &mut stats, scene.speed_of_sound);
        Ok((Rir::new(taps, self.sample_rate, 0.0)?, stats))
    }

    /// Serializes as a binary blob with a JSON header (format version 1).
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let header = serde_json::json!({
            "format": "roomtwin-field",
            "version": 1,
            "num_patches": self.num_patches,
            "bins": self.bins,
            "num_faces": self.patch_of_face.len(),
            "sample_rate": self.sample_rate,
            "ray_count": self.ray_count,
            "tx_pose": self.tx_pose,
            "rx_gain": self.rx_gain.coeffs,
        });
        let mut payload = Vec::with_capacity(self.patch_of_face.len() * 4 + self.emissions.len() * 8);
        for &p in &self.patch_of_face {
            payload.extend_from_slice(&p.to_le_bytes());
        }
        payload.extend_from_slice(&crate::io::f64s_to_bytes(&self.emissions));
        crate::io::write_blob(path, &header, &payload)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let (header, payload) = crate::io::read_blob(path)?;
        let bad = |d: &str| Error::Format { path: path.display().to_string(), detail: d.into() };
        if header["version"] != 1 || header["format"] != "roomtwin-field" {
            return Err(bad("unsupported field blob version"));
        }
        let num_patches = header["num_patches"].as_u64().ok_or_else(|| bad("num_patches"))? as usize;
        let bins = header["bins"].as_u64().ok_or_else(|| bad("bins"))? as usize;
        let num_faces = header["num_faces"].as_u64().ok_or_else(|| bad("num_faces"))? as usize;
        let sample_rate = header["sample_rate"].as_f64().ok_or_else(|| bad("sample_rate"))?;
        let ray_count = header["ray_count"].as_u64().ok_or_else(|| bad("ray_count"))? as usize;
        let tx_pose: Pose = serde_json::from_value(header["tx_pose"].clone())?;
        let coeffs: Vec<f64> = serde_json::from_value(header["rx_gain"].clone())?;
        if payload.len() != num_faces * 4 + num_patches * bins * 8 {
            return Err(bad("payload size mismatch"));
        }
        let patch_of_face = payload[..num_faces * 4]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let emissions = crate::io::bytes_to_f64s(&payload[num_faces * 4..])?;
        Ok(FieldModel {
            patch_of_face,
            num_patches,
            emissions,
            bins,
            sample_rate,
            tx_pose,
            ray_count,
            rx_gain: GainPattern::new(coeffs)?,
        })
    }
}

struct RayContrib {
    patch: u32,
    i0: usize,
    frac: f64,
    weight: f64,
    sh: [f64; SH_COUNT],
}

/// Training settings for [`fit_field`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldFitConfig {
    pub patches: usize,
    pub ray_count: usize,
    pub iters: usize,
    pub batch: usize,
    pub step: f64,
    /// Per-iteration multiplicative step decay.
    pub step_decay: f64,
    pub seed: u64,
    pub fit_rx_gain: bool,
    pub stft_weight: f64,
    pub env_weight: f64,
    /// Emission init scale (small nonzero so magnitude losses have slope).
    pub init_scale: f64,
    /// Per-iteration multiplicative emission shrinkage. The render map has a
    /// null space (shifted contributions can cancel in the output), which no
    /// output-domain loss can see; a small decay keeps it from accumulating
    /// energy. Off by default; use ~1e-2 for silent or noise-dominated data.
    pub weight_decay: f64,
}

impl Default for FieldFitConfig {
    fn default() -> Self {
        FieldFitConfig {
            patches: DEFAULT_PATCHES,
            ray_count: 512,
            iters: 300,
            batch: 16,
            step: 0.25,
            step_decay: 0.99,
            seed: 0,
            fit_rx_gain: true,
            stft_weight: 1.0,
            env_weight: 0.5,
            init_scale: 1e-2,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FieldFit {
    pub model: FieldModel,
    pub loss_trace: Vec<f64>,
    /// Emission energy right after initialization (reachable bins only).
    pub init_emission_energy: f64,
}

/// Adjoint of the rendering map: scatters a time-domain output gradient
/// back onto emissions (and the Rx gain coefficients when `fit_rx_gain`).
/// `grad` is laid out as emissions followed by SH coefficients.
fn render_adjoint(
    model: &FieldModel,
    contribs: &[RayContrib],
    gy: &[f64],
    c: f64,
    scale: f64,
    fit_rx_gain: bool,
    grad: &mut [f64],
) {
    let fs = model.sample_rate;
    let bins = gy.len();
    for rc in contribs {
        let u: f64 = model.rx_gain.coeffs.iter().zip(rc.sh.iter()).map(|(a, b)| a * b).sum();
        let g_gain = softplus(u);
        let base = rc.patch as usize * model.bins;
        let mut dgain_acc = 0.0;
        for tau in 0..model.bins {
            let idx = rc.i0 + tau;
            let mut back = 0.0;
            if idx < bins {
                back += (1.0 - rc.frac) * gy[idx] / ((idx.max(1) as f64 / fs) * c);
            }
            if idx + 1 < bins {
                back += rc.frac * gy[idx + 1] / (((idx + 1) as f64 / fs) * c);
            }
            if back != 0.0 {
                grad[base + tau] += scale * back * g_gain * rc.weight;
                dgain_acc += back * model.emissions[base + tau];
            }
        }
        if fit_rx_gain {
            let d_u = scale * dgain_acc * rc.weight * softplus_prime(u);
            for k in 0..SH_COUNT {
                grad[model.emissions.len() + k] += d_u * rc.sh[k];
            }
        }
    }
}

/// Multi-scale STFT magnitude L1 plus envelope L1 between `y` and `target`,
/// with the time-domain gradient d(loss)/dy.
fn field_loss_and_grad(
    y: &[f64],
    target_mags: &[Vec<Vec<f64>>],
    target_env: &[f64],
    w_stft: f64,
    w_env: f64,
) -> (f64, Vec<f64>) {
    let n = y.len();
    let mut loss = 0.0;
    let mut grad = vec![0.0; n];

    for (si, &win) in crate::metrics::STFT_WINDOWS.iter().enumerate() {
        let hop = win / 4;
        let window = fft::hann(win);
        let frames = n.div_ceil(hop);
        let bins = win / 2 + 1;
        let count = (frames * bins) as f64;
        let mut buf = vec![Complex64::default(); win];
        for f in 0..frames {
            let start = f * hop;
            for (i, b) in buf.iter_mut().enumerate() {
                let v = y.get(start + i).copied().unwrap_or(0.0);
                *b = Complex64::new(v * window[i], 0.0);
            }
            fft::fft_inplace(&mut buf);
            // z[k] = sign(m - m_hat) * X/|X| on the non-redundant bins
            let mut z = vec![Complex64::default(); win];
            for k in 0..bins {
                let m = buf[k].norm();
                let mh = target_mags[si][f][k];
                loss += w_stft * (m - mh).abs() / count;
                if m > 1e-300 {
                    let s = w_stft * (m - mh).signum() / count;
                    z[k] = (buf[k] * (s / m)).conj();
                }
            }
            fft::fft_inplace(&mut z);
            for (t, zv) in z.iter().enumerate() {
                if start + t < n {
                    grad[start + t] += window[t] * zv.re;
                }
            }
        }
    }

    if w_env > 0.0 {
        let a = fft::analytic(y);
        let mut q = vec![Complex64::default(); n];
        for t in 0..n {
            let e = a[t].norm();
            let diff = e - target_env[t];
            loss += w_env * diff.abs() / n as f64;
            if e > 1e-300 {
                q[t] = a[t] * (w_env * diff.signum() / (n as f64 * e));
            }
        }
        // analytic transform is self-adjoint
        fft::fft_inplace(&mut q);
        fft::apply_analytic_mask(&mut q);
        fft::ifft_inplace(&mut q);
        for (g, qv) in grad.iter_mut().zip(q.iter()) {
            *g += qv.re;
        }
    }
    (loss, grad)
}

/// Fits emissions (and optionally the Rx gain) to measured RIRs sharing one
/// Tx pose, by Adam on the multi-scale STFT + envelope loss. Deterministic
/// given the seed.
pub fn fit_field(
    scene: &Scene,
    samples: &[crate::estimate::TrainSample],
    config: &FieldFitConfig,
) -> Result<FieldFit> {
    if samples.is_empty() {
        return Err(Error::Field("need at least one training sample".into()));
    }
    let tx = samples[0].pose_tx;
    for s in samples {
        if (s.pose_tx.position - tx.position).norm() > 1e-9 {
            return Err(Error::Field("all samples must share one Tx pose".into()));
        }
    }
    let fs = samples[0].measured.sample_rate;
    let bins = samples[0].measured.len()
        + (samples
            .iter()
            .map(|s| (s.measured.onset * fs) as usize)
            .max()
            .unwrap_or(0));
    let mut model = FieldModel::new(scene, tx, config.patches, bins, config.ray_count, fs)?;

    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    for e in &mut model.emissions {
        *e = config.init_scale * rng.random_range(-1.0..1.0);
    }

    // fixed per-sample data: ray geometry, STFT target magnitudes, envelope
    let mut traces = Vec::with_capacity(samples.len());
    let mut target_mags = Vec::with_capacity(samples.len());
    let mut target_envs = Vec::with_capacity(samples.len());
    for s in samples {
        if (s.measured.sample_rate - fs).abs() > 1e-9 {
            return Err(Error::Field("sample-rate mismatch across samples".into()));
        }
        let (contribs, _) = model.trace(scene, &s.pose_rx)?;
        traces.push(contribs);
        let abs = s.measured.to_absolute(bins);
        target_mags.push(
            crate::metrics::STFT_WINDOWS
                .iter()
                .map(|&w| fft::stft_mags(&abs, w, w / 4))
                .collect::<Vec<_>>(),
        );
        target_envs.push(fft::envelope(&abs));
    }

    // bins the loss can never see (patch unhit, or delay pushes the bin past
    // the output window for every hitting ray) are zeroed and frozen
    let mut reachable = vec![false; model.emissions.len()];
    for contribs in &traces {
        for rc in contribs {
            let horizon = bins.saturating_sub(rc.i0).min(model.bins);
            let base = rc.patch as usize * model.bins;
            for flag in &mut reachable[base..base + horizon] {
                *flag = true;
            }
        }
    }
    for (e, &r) in model.emissions.iter_mut().zip(reachable.iter()) {
        if !r {
            *e = 0.0;
        }
    }
    let init_emission_energy: f64 = model.emissions.iter().map(|e| e * e).sum();

    let dim = model.emissions.len() + SH_COUNT;
    let mut m1 = vec![0.0; dim];
    let mut m2 = vec![0.0; dim];
    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut trace = Vec::with_capacity(config.iters);
    let c = scene.speed_of_sound;

    for it in 0..config.iters {
        // deterministic minibatch
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);
        let batch: Vec<usize> = order.into_iter().take(config.batch.max(1)).collect();

        // per-sample work is independent; fixed chunking plus in-order
        // reduction keeps the result thread-count independent
        use rayon::prelude::*;
        let scale = 1.0 / batch.len() as f64;
        let partials: Vec<(f64, Vec<f64>)> = batch
            .par_chunks(8)
            .map(|chunk| {
                let mut grad = vec![0.0; dim];
                let mut loss = 0.0;
                for &si in chunk {
                    let contribs = &traces[si];
                    let mut stats = FieldRenderStats::default();
                    let y = model.render_contribs(contribs, &mut stats, c);
                    let (l, gy) = field_loss_and_grad(
                        &y,
                        &target_mags[si],
                        &target_envs[si],
                        config.stft_weight,
                        config.env_weight,
                    );
                    loss += l * scale;
                    render_adjoint(&model, contribs, &gy, c, scale, config.fit_rx_gain, &mut grad);
                }
                (loss, grad)
            })
            .collect();
        let mut grad = vec![0.0; dim];
        let mut loss = 0.0;
        for (l, g) in partials {
            loss += l;
            for (a, b) in grad.iter_mut().zip(g.iter()) {
                *a += b;
            }
        }
        trace.push(loss);

        let step = config.step * config.step_decay.powi(it as i32);
        let t = (it + 1) as f64;
        let bc1 = 1.0 - b1.powf(t);
        let bc2 = 1.0 - b2.powf(t);
        for i in 0..dim {
            if !config.fit_rx_gain && i >= model.emissions.len() {
                break;
            }
            if i < model.emissions.len() && !reachable[i] {
                continue;
            }
            m1[i] = b1 * m1[i] + (1.0 - b1) * grad[i];
            m2[i] = b2 * m2[i] + (1.0 - b2) * grad[i] * grad[i];
            let delta = step * (m1[i] / bc1) / ((m2[i] / bc2).sqrt() + eps);
            if i < model.emissions.len() {
                model.emissions[i] = model.emissions[i] * (1.0 - config.weight_decay) - delta;
            } else {
                model.rx_gain.coeffs[i - model.emissions.len()] -= delta;
            }
        }
    }

    Ok(FieldFit { model, loss_trace: trace, init_emission_energy })
}
