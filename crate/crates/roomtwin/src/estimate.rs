//! Differentiable inverse rendering: recovers per-segment reflection spectra
//! and Tx/Rx gain patterns from measured RIRs by gradient descent on the
//! specular renderer.
//!
//! Geometry is fixed, so path sets are enumerated once and cached; each
//! path's spectrum is `gamma * e^{-i w d} * prod_s R_s(nu)^m` with
//! `gamma = G_tx G_rx / d`, which makes the loss gradient a short chain rule
//! through real band tables and broadband gains. Raw reflectivity parameters
//! map to (0, 1) through a logistic; gains go through softplus.

use crate::error::{Error, Result};
use crate::fft;
use crate::geometry::{Pose, Scene};
use crate::raytrace::{
    enumerate_paths, segment_counts, sh_basis, softplus, softplus_prime, DeviceGains,
    FrequencyGrid, GainPattern, MaterialSpectrum, SH_COUNT,
};
use crate::signals::Rir;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// All learnable quantities: raw per-segment band reflectivities (logistic
/// squashing keeps them in (0,1)) and raw SH coefficients for both devices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateParams {
    pub raw_reflectivity: Vec<[f64; 7]>,
    pub raw_tx: Vec<f64>,
    pub raw_rx: Vec<f64>,
}

impl EstimateParams {
    /// Documented initialization: all R = 0.5 (raw 0), isotropic unit gains.
    pub fn init(num_segments: usize) -> Self {
        EstimateParams {
            raw_reflectivity: vec![[0.0; 7]; num_segments],
            raw_tx: GainPattern::isotropic_unit().coeffs,
            raw_rx: GainPattern::isotropic_unit().coeffs,
        }
    }

    /// Fully absorbing start: every band squashed toward 0.
    pub fn init_absorbing(num_segments: usize) -> Self {
        EstimateParams {
            raw_reflectivity: vec![[-8.0; 7]; num_segments],
            ..EstimateParams::init(num_segments)
        }
    }

    pub fn num_segments(&self) -> usize {
        self.raw_reflectivity.len()
    }

    pub fn reflectivity(&self, segment: usize, band: usize) -> f64 {
        sigmoid(self.raw_reflectivity[segment][band])
    }

    /// Squashed materials for rendering.
    pub fn materials(&self) -> Vec<MaterialSpectrum> {
        self.raw_reflectivity
            .iter()
            .map(|raw| MaterialSpectrum {
                bands: std::array::from_fn(|b| sigmoid(raw[b])),
            })
            .collect()
    }

    pub fn gains(&self) -> DeviceGains {
        DeviceGains {
            tx: GainPattern { coeffs: self.raw_tx.clone() },
            rx: GainPattern { coeffs: self.raw_rx.clone() },
        }
    }

    pub fn dim(&self) -> usize {
        self.raw_reflectivity.len() * 7 + self.raw_tx.len() + self.raw_rx.len()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for raw in &self.raw_reflectivity {
            out.extend_from_slice(raw);
        }
        out.extend_from_slice(&self.raw_tx);
        out.extend_from_slice(&self.raw_rx);
        out
    }

    pub fn from_flat(flat: &[f64], num_segments: usize) -> Result<Self> {
        let expect = num_segments * 7 + 2 * SH_COUNT;
        if flat.len() != expect {
            return Err(Error::Estimate(format!(
                "flat parameter vector has {} entries, expected {expect}",
                flat.len()
            )));
        }
        let mut raw_reflectivity = Vec::with_capacity(num_segments);
        for s in 0..num_segments {
            raw_reflectivity.push(std::array::from_fn(|b| flat[s * 7 + b]));
        }
        let gains = &flat[num_segments * 7..];
        Ok(EstimateParams {
            raw_reflectivity,
            raw_tx: gains[..SH_COUNT].to_vec(),
            raw_rx: gains[SH_COUNT..].to_vec(),
        })
    }

    /// JSON form: segment id -> 7 band values, plus both SH coefficient sets.
    pub fn to_json(&self) -> serde_json::Value {
        let bands: std::collections::BTreeMap<String, [f64; 7]> = (0..self.num_segments())
            .map(|s| {
                (
                    s.to_string(),
                    std::array::from_fn(|b| self.reflectivity(s, b)),
                )
            })
            .collect();
        serde_json::json!({
            "reflectivity": bands,
            "raw_reflectivity": self.raw_reflectivity,
            "tx_sh": self.raw_tx,
            "rx_sh": self.raw_rx,
        })
    }
}

/// One observation: a measured RIR and the device poses it was captured at.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub pose_tx: Pose,
    pub pose_rx: Pose,
    pub measured: Rir,
}

/// Mean squared error over taps.
pub fn loss(rendered: &Rir, measured: &Rir) -> Result<f64> {
    if rendered.len() != measured.len() {
        return Err(Error::Estimate(format!(
            "length mismatch: {} vs {} taps",
            rendered.len(),
            measured.len()
        )));
    }
    if (rendered.sample_rate - measured.sample_rate).abs() > 1e-9 {
        return Err(Error::Estimate("sample-rate mismatch".into()));
    }
    let n = rendered.len().max(1);
    Ok(rendered
        .taps
        .iter()
        .zip(measured.taps.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n as f64)
}

/// Optimizer settings. The defaults are the documented operating point.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub step: f64,
    pub max_iters: usize,
    pub patience: usize,
    pub seed: u64,
    pub max_bounces: usize,
    /// Loss band limit, Hz; matches the RIR probe band.
    pub band_limit: Option<(f64, f64)>,
    pub fit_gains: bool,
    /// Optional loss time gate, seconds from tap 0 (None = full length).
    pub time_gate: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            step: 0.02,
            max_iters: 2000,
            patience: 200,
            seed: 0,
            max_bounces: 8,
            band_limit: Some((50.0, 9000.0)),
            fit_gains: true,
            time_gate: None,
        }
    }
}

struct CachedPath {
    delay_rel: f64,
    inv_d: f64,
    sh_dep: [f64; SH_COUNT],
    sh_arr: [f64; SH_COUNT],
    /// (segment, occurrence count), deterministic order.
    counts: Vec<(usize, u32)>,
}

struct SampleCache {
    paths: Vec<CachedPath>,
    measured: Vec<f64>,
}

/// The fixed-geometry inverse problem: cached paths, masked measurements,
/// and the loss/gradient evaluation shared by `grad` and `fit_materials`.
pub struct InverseProblem {
    grid: FrequencyGrid,
    rir_len: usize,
    num_segments: usize,
    samples: Vec<SampleCache>,
    mask: Vec<f64>,
    /// Per-bin band interpolation stencil.
    stencil: Vec<[(usize, f64); 2]>,
    gate_len: usize,
}

impl InverseProblem {
    pub fn new(scene: &Scene, samples: &[TrainSample], config: &FitConfig) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Estimate("need at least one training sample".into()));
        }
        let fs = samples[0].measured.sample_rate;
        let rir_len = samples[0].measured.len();
        for s in samples {
            if s.measured.len() != rir_len || (s.measured.sample_rate - fs).abs() > 1e-9 {
                return Err(Error::Estimate(
                    "all measured RIRs must share length and sample rate".into(),
                ));
            }
        }
        let grid = FrequencyGrid::for_duration(rir_len as f64 / fs, fs)?;
        let mask: Vec<f64> = (0..grid.bins())
            .map(|j| match config.band_limit {
                None => 1.0,
                Some((lo, hi)) => {
                    let f = grid.freq(j);
                    if f >= lo && f <= hi {
                        1.0
                    } else {
                        0.0
                    }
                }
            })
            .collect();
        let stencil = (0..grid.bins())
            .map(|j| MaterialSpectrum::band_weights(grid.freq(j)))
            .collect();
        let gate_len = config
            .time_gate
            .map_or(rir_len, |g| ((g * fs).round() as usize).min(rir_len));

        let caches: Vec<SampleCache> = samples
            .par_iter()
            .map(|s| -> Result<SampleCache> {
                let paths = enumerate_paths(
                    scene,
                    &s.pose_tx.position,
                    &s.pose_rx.position,
                    config.max_bounces,
                )?;
                let d0 = (s.pose_rx.position - s.pose_tx.position).norm();
                let cached = paths
                    .iter()
                    .map(|p| CachedPath {
                        delay_rel: (p.length - d0) / scene.speed_of_sound,
                        inv_d: 1.0 / p.length,
                        sh_dep: sh_basis(&s.pose_tx.world_to_local(&p.departure)),
                        sh_arr: sh_basis(&s.pose_rx.world_to_local(&p.arrival)),
                        counts: segment_counts(p).into_iter().collect(),
                    })
                    .collect();
                // band-limit the measurement exactly like the render path
                let mut spec = fft::rfft(&s.measured.taps, grid.fft_size);
                for (v, &m) in spec.iter_mut().zip(mask.iter()) {
                    *v *= m;
                }
                let measured = fft::irfft(&spec, grid.fft_size)[..rir_len].to_vec();
                Ok(SampleCache { paths: cached, measured })
            })
            .collect::<Result<_>>()?;

        Ok(InverseProblem {
            grid,
            rir_len,
            num_segments: scene.segments.len(),
            samples: caches,
            mask,
            stencil,
            gate_len,
        })
    }

    /// Per-segment per-bin reflectivity tables for the current parameters.
    fn tables(&self, params: &EstimateParams) -> Vec<Vec<f64>> {
        (0..self.num_segments)
            .map(|s| {
                self.stencil
                    .iter()
                    .map(|st| {
                        st.iter()
                            .map(|&(b, w)| w * params.reflectivity(s, b))
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }

    /// Renders the cached sample `m` under `params`.
    pub fn render(&self, m: usize, params: &EstimateParams) -> Vec<f64> {
        let tables = self.tables(params);
        let (h, _, _) = self.forward_sample(&self.samples[m], params, &tables);
        h
    }

    /// Forward pass; returns (taps, per-path ramps, per-path band products).
    fn forward_sample(
        &self,
        sample: &SampleCache,
        params: &EstimateParams,
        tables: &[Vec<f64>],
    ) -> (Vec<f64>, Vec<Vec<Complex64>>, Vec<Vec<f64>>) {
        let bins = self.grid.bins();
        let mut spec = vec![Complex64::default(); bins];
        let mut ramps = Vec::with_capacity(sample.paths.len());
        let mut prods = Vec::with_capacity(sample.paths.len());
        for path in &sample.paths {
            let gamma = self.path_gamma(path, params);
            let mut ramp = vec![Complex64::default(); bins];
            let theta =
                -std::f64::consts::TAU * path.delay_rel * self.grid.sample_rate / self.grid.fft_size as f64;
            fft::phase_ramp(theta, &mut ramp);
            let mut prod = vec![1.0f64; bins];
            for &(s, m) in &path.counts {
                let table = &tables[s];
                for (p, &t) in prod.iter_mut().zip(table.iter()) {
                    *p *= t.powi(m as i32);
                }
            }
            for j in 0..bins {
                spec[j] += ramp[j] * (gamma * prod[j]);
            }
            ramps.push(ramp);
            prods.push(prod);
        }
        for (v, &m) in spec.iter_mut().zip(self.mask.iter()) {
            *v *= m;
        }
        let h = fft::irfft(&spec, self.grid.fft_size)[..self.rir_len].to_vec();
        (h, ramps, prods)
    }

    fn path_gamma(&self, path: &CachedPath, params: &EstimateParams) -> f64 {
        let u_tx: f64 = params.raw_tx.iter().zip(path.sh_dep.iter()).map(|(c, b)| c * b).sum();
        let u_rx: f64 = params.raw_rx.iter().zip(path.sh_arr.iter()).map(|(c, b)| c * b).sum();
        softplus(u_tx) * softplus(u_rx) * path.inv_d
    }

    /// Loss and its analytic gradient (flat layout matching
    /// [`EstimateParams::to_flat`]). The gradient is exact; no gauge fixing
    /// is applied here.
    pub fn value_and_grad(&self, params: &EstimateParams) -> (f64, Vec<f64>) {
        let tables = self.tables(params);
        let m_count = self.samples.len();
        let bins = self.grid.bins();
        let fft_size = self.grid.fft_size;

        let partials: Vec<(f64, Vec<f64>, Vec<Vec<f64>>)> = self
            .samples
            .par_iter()
            .map(|sample| {
                let (h, ramps, prods) = self.forward_sample(sample, params, &tables);
                // residual scaled for d(mean over samples of mean-sq)/dh
                let mut r = vec![0.0; fft_size];
                let mut loss_m = 0.0;
                for t in 0..self.rir_len {
                    let d = h[t] - sample.measured[t];
                    loss_m += d * d;
                    if t < self.gate_len {
                        r[t] = 2.0 * d / (m_count * self.rir_len) as f64;
                    }
                }
                loss_m /= self.rir_len as f64;

                let mut ghat = fft::rfft(&r, fft_size);
                for (j, v) in ghat.iter_mut().enumerate() {
                    let c = if j == 0 || j == fft_size / 2 { 1.0 } else { 2.0 };
                    *v *= c / fft_size as f64 * self.mask[j];
                }

                let mut grad = vec![0.0; self.num_segments * 7 + 2 * SH_COUNT];
                let mut gtab = vec![vec![0.0; bins]; self.num_segments];
                for (pi, path) in sample.paths.iter().enumerate() {
                    let u_tx: f64 =
                        params.raw_tx.iter().zip(path.sh_dep.iter()).map(|(c, b)| c * b).sum();
                    let u_rx: f64 =
                        params.raw_rx.iter().zip(path.sh_arr.iter()).map(|(c, b)| c * b).sum();
                    let g_tx = softplus(u_tx);
                    let g_rx = softplus(u_rx);
                    let gamma = g_tx * g_rx * path.inv_d;
                    let ramp = &ramps[pi];
                    let prod = &prods[pi];

                    let mut dgamma = 0.0;
                    for j in 0..bins {
                        let e = (ghat[j].conj() * ramp[j]).re;
                        if e == 0.0 {
                            continue;
                        }
                        dgamma += e * prod[j];
                        // band-table gradient: product excluding the segment
                        for &(s, m) in &path.counts {
                            let t = tables[s][j];
                            let mut excl = gamma * m as f64;
                            for &(s2, m2) in &path.counts {
                                if s2 == s {
                                    if m > 1 {
                                        excl *= t.powi(m as i32 - 1);
                                    }
                                } else {
                                    excl *= tables[s2][j].powi(m2 as i32);
                                }
                            }
                            gtab[s][j] += e * excl;
                        }
                    }
                    let base = self.num_segments * 7;
                    let d_utx = dgamma * g_rx * path.inv_d * softplus_prime(u_tx);
                    let d_urx = dgamma * g_tx * path.inv_d * softplus_prime(u_rx);
                    for k in 0..SH_COUNT {
                        grad[base + k] += d_utx * path.sh_dep[k];
                        grad[base + SH_COUNT + k] += d_urx * path.sh_arr[k];
                    }
                }
                (loss_m, grad, gtab)
            })
            .collect();

        // fixed-order reduction keeps results independent of thread count
        let mut total_loss = 0.0;
        let mut grad = vec![0.0; self.num_segments * 7 + 2 * SH_COUNT];
        let mut gtab = vec![vec![0.0; bins]; self.num_segments];
        for (l, g, gt) in partials {
            total_loss += l / m_count as f64;
            for (a, b) in grad.iter_mut().zip(g.iter()) {
                *a += b;
            }
            for (ta, tb) in gtab.iter_mut().zip(gt.iter()) {
                for (a, b) in ta.iter_mut().zip(tb.iter()) {
                    *a += b;
                }
            }
        }

        // chain band tables back to raw band parameters
        for s in 0..self.num_segments {
            for (j, st) in self.stencil.iter().enumerate() {
                let g = gtab[s][j];
                if g == 0.0 {
                    continue;
                }
                for &(b, w) in st {
                    let r = params.reflectivity(s, b);
                    grad[s * 7 + b] += g * w * r * (1.0 - r);
                }
            }
        }
        (total_loss, grad)
    }
}

/// Analytic gradient of the batch loss at `params`. Returns (loss, flat
/// gradient). Matches central finite differences to first order.
pub fn grad(
    params: &EstimateParams,
    samples: &[TrainSample],
    scene: &Scene,
    config: &FitConfig,
) -> Result<(f64, Vec<f64>)> {
    let problem = InverseProblem::new(scene, samples, config)?;
    Ok(problem.value_and_grad(params))
}

/// Fit outcome: best parameters, their loss, and the per-iteration trace.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: EstimateParams,
    pub best_loss: f64,
    pub loss_trace: Vec<f64>,
}

/// Adaptive-moment gradient descent from the documented initialization until
/// `max_iters` or a `patience`-length plateau. The Tx degree-0 coefficient
/// is frozen to fix the Tx/Rx gain scale gauge.
pub fn fit_materials(
    scene: &Scene,
    samples: &[TrainSample],
    config: &FitConfig,
) -> Result<FitResult> {
    let problem = InverseProblem::new(scene, samples, config)?;
    fit_with_problem(&problem, EstimateParams::init(scene.segments.len()), config)
}

/// Same optimizer from an explicit starting point.
pub fn fit_materials_from(
    scene: &Scene,
    samples: &[TrainSample],
    config: &FitConfig,
    init: EstimateParams,
) -> Result<FitResult> {
    let problem = InverseProblem::new(scene, samples, config)?;
    fit_with_problem(&problem, init, config)
}

fn fit_with_problem(
    problem: &InverseProblem,
    init: EstimateParams,
    config: &FitConfig,
) -> Result<FitResult> {
    let num_segments = init.num_segments();
    let mut x = init.to_flat();
    let dim = x.len();
    let gain_base = num_segments * 7;
    let frozen = |i: usize| -> bool {
        if config.fit_gains {
            i == gain_base // Tx degree-0: gauge
        } else {
            i >= gain_base
        }
    };

    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let mut best = x.clone();
    let mut best_loss = f64::INFINITY;
    let mut since_best = 0usize;
    let mut trace = Vec::with_capacity(config.max_iters);

    for it in 0..config.max_iters {
        let params = EstimateParams::from_flat(&x, num_segments)?;
        let (l, g) = problem.value_and_grad(&params);
        if !l.is_finite() {
            return Err(Error::Diverged(format!("non-finite loss at iteration {it}")));
        }
        trace.push(l);
        if l < best_loss - 1e-15 {
            best_loss = l;
            best = x.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
        let t = (it + 1) as f64;
        let bc1 = 1.0 - b1.powf(t);
        let bc2 = 1.0 - b2.powf(t);
        for i in 0..dim {
            if frozen(i) {
                continue;
            }
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            x[i] -= config.step * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
        }
    }

    Ok(FitResult {
        params: EstimateParams::from_flat(&best, num_segments)?,
        best_loss,
        loss_trace: trace,
    })
}

/// Renders an RIR from explicit estimate parameters (materials + gains)
/// against the scene's geometry.
pub fn render_with_params(
    scene: &Scene,
    pose_tx: &Pose,
    pose_rx: &Pose,
    params: &EstimateParams,
    grid: &FrequencyGrid,
    max_bounces: usize,
    duration: f64,
) -> Result<Rir> {
    if params.num_segments() != scene.segments.len() {
        return Err(Error::Estimate(format!(
            "params cover {} segments, scene has {}",
            params.num_segments(),
            scene.segments.len()
        )));
    }
    let swapped = Scene::new(
        scene.mesh.clone(),
        scene.segments.clone(),
        params.materials(),
        scene.speed_of_sound,
    )?;
    crate::raytrace::render_rir(
        &swapped,
        pose_tx,
        pose_rx,
        &params.gains(),
        grid,
        max_bounces,
        duration,
    )
}

/// Loss trace as CSV (`iter,loss`).
pub fn trace_to_csv(trace: &[f64]) -> String {
    let mut out = String::from("iter,loss\n");
    for (i, l) in trace.iter().enumerate() {
        out.push_str(&format!("{i},{l:.12e}\n"));
    }
    out
}
