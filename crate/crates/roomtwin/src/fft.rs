//! Shared FFT plumbing: real transforms, analytic signals, phase ramps,
//! and FFT-based correlation. Wraps `rustfft` behind a thread-local planner
//! so hot loops never re-plan.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::cell::RefCell;
use std::sync::Arc;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn rustfft::Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// In-place forward FFT.
pub fn fft_inplace(buf: &mut [Complex64]) {
    plan(buf.len(), false).process(buf);
}

/// In-place inverse FFT, scaled by 1/N so a forward/inverse round trip is identity.
pub fn ifft_inplace(buf: &mut [Complex64]) {
    let n = buf.len();
    plan(n, true).process(buf);
    let s = 1.0 / n as f64;
    for v in buf.iter_mut() {
        *v *= s;
    }
}

/// Smallest power of two >= n (and >= 1).
pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// Forward real FFT: `n`-point transform of `x` zero-padded to `n`,
/// returning the n/2+1 non-redundant bins.
pub fn rfft(x: &[f64], n: usize) -> Vec<Complex64> {
    assert!(n >= x.len(), "rfft length must cover the input");
    let mut buf = vec![Complex64::default(); n];
    for (b, &v) in buf.iter_mut().zip(x.iter()) {
        b.re = v;
    }
    fft_inplace(&mut buf);
    buf.truncate(n / 2 + 1);
    buf
}

/// Inverse of [`rfft`]: Hermitian-extends `bins` (n/2+1 entries) and returns
/// the real n-point signal.
pub fn irfft(bins: &[Complex64], n: usize) -> Vec<f64> {
    assert_eq!(bins.len(), n / 2 + 1, "bin count must be n/2+1");
    let mut buf = vec![Complex64::default(); n];
    buf[..bins.len()].copy_from_slice(bins);
    buf[0].im = 0.0;
    buf[n / 2].im = 0.0;
    for j in 1..n / 2 {
        buf[n - j] = buf[j].conj();
    }
    ifft_inplace(&mut buf);
    buf.into_iter().map(|v| v.re).collect()
}

/// Analytic signal of `x` (positive-frequency doubling); `|analytic|` is the
/// signal envelope.
pub fn analytic(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_inplace(&mut buf);
    apply_analytic_mask(&mut buf);
    ifft_inplace(&mut buf);
    buf
}

/// The 2/1/0 spectral mask of the analytic transform. Exposed for adjoint
/// computations (the operator is self-adjoint).
pub fn apply_analytic_mask(buf: &mut [Complex64]) {
    let n = buf.len();
    let half = n / 2;
    for (j, v) in buf.iter_mut().enumerate() {
        if j == 0 || (n % 2 == 0 && j == half) {
            // keep
        } else if j < half || (n % 2 == 1 && j == half) {
            *v *= 2.0;
        } else {
            *v = Complex64::default();
        }
    }
}

/// Signal envelope `|analytic(x)|`.
pub fn envelope(x: &[f64]) -> Vec<f64> {
    analytic(x).into_iter().map(|v| v.norm()).collect()
}

/// Writes `out[j] = e^{i * theta_step * j}` for `j = 0..out.len()`.
///
/// Incremental rotation with an exact re-sync every 256 bins; error stays at
/// the 1e-13 level over arbitrarily long ramps.
pub fn phase_ramp(theta_step: f64, out: &mut [Complex64]) {
    const SYNC: usize = 256;
    let w = Complex64::from_polar(1.0, theta_step);
    let mut z = Complex64::new(1.0, 0.0);
    for (j, o) in out.iter_mut().enumerate() {
        if j % SYNC == 0 {
            z = Complex64::from_polar(1.0, theta_step * j as f64);
        }
        *o = z;
        z *= w;
    }
}

/// Full linear cross-correlation `r[k] = sum_j x[k + j] * c[j]` over all lags
/// `k in [-(len_c - 1), len_x - 1]`, computed by FFT. Output index `m`
/// corresponds to lag `m - (len_c - 1)`.
pub fn xcorr_full(x: &[f64], c: &[f64]) -> Vec<f64> {
    if x.is_empty() || c.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + c.len() - 1;
    let n = next_pow2(out_len);
    let mut fx = vec![Complex64::default(); n];
    for (b, &v) in fx.iter_mut().zip(x.iter()) {
        b.re = v;
    }
    let mut fc = vec![Complex64::default(); n];
    for (b, &v) in fc.iter_mut().zip(c.iter()) {
        b.re = v;
    }
    fft_inplace(&mut fx);
    fft_inplace(&mut fc);
    for (a, b) in fx.iter_mut().zip(fc.iter()) {
        // correlation: X * conj(C)
        *a *= b.conj();
    }
    ifft_inplace(&mut fx);
    // lag k lives at index (k mod n); collect k = -(len_c-1) .. len_x-1
    let mut out = Vec::with_capacity(out_len);
    let lc = c.len() as isize;
    for k in -(lc - 1)..x.len() as isize {
        let idx = k.rem_euclid(n as isize) as usize;
        out.push(fx[idx].re);
    }
    out
}

/// Linear convolution by FFT.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let n = next_pow2(out_len);
    let mut fa = vec![Complex64::default(); n];
    for (x, &v) in fa.iter_mut().zip(a.iter()) {
        x.re = v;
    }
    let mut fb = vec![Complex64::default(); n];
    for (x, &v) in fb.iter_mut().zip(b.iter()) {
        x.re = v;
    }
    fft_inplace(&mut fa);
    fft_inplace(&mut fb);
    for (x, y) in fa.iter_mut().zip(fb.iter()) {
        *x *= y;
    }
    ifft_inplace(&mut fa);
    fa.truncate(out_len);
    fa.into_iter().map(|v| v.re).collect()
}

/// Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect()
}

/// STFT magnitude frames: Hann window of size `win`, hop `hop`, signal
/// zero-padded at the tail so every sample is covered.
pub fn stft_mags(x: &[f64], win: usize, hop: usize) -> Vec<Vec<f64>> {
    let w = hann(win);
    let frames = if x.is_empty() { 0 } else { x.len().div_ceil(hop) };
    let mut out = Vec::with_capacity(frames);
    let mut buf = vec![Complex64::default(); win];
    for f in 0..frames {
        let start = f * hop;
        for (i, b) in buf.iter_mut().enumerate() {
            let v = x.get(start + i).copied().unwrap_or(0.0);
            *b = Complex64::new(v * w[i], 0.0);
        }
        fft_inplace(&mut buf);
        out.push(buf[..win / 2 + 1].iter().map(|v| v.norm()).collect());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rfft_irfft_round_trip() {
        let x: Vec<f64> = (0..37).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
        let n = 64;
        let bins = rfft(&x, n);
        let y = irfft(&bins, n);
        for (i, &v) in x.iter().enumerate() {
            assert_abs_diff_eq!(y[i], v, epsilon = 1e-12);
        }
        for &v in &y[x.len()..] {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn xcorr_matches_direct() {
        let x = [1.0, -2.0, 0.5, 3.0, 0.0, 1.0];
        let c = [0.5, 1.0, -1.0];
        let fast = xcorr_full(&x, &c);
        let lc = c.len() as isize;
        let mut slow = Vec::new();
        for k in -(lc - 1)..x.len() as isize {
            let mut acc = 0.0;
            for (j, &cv) in c.iter().enumerate() {
                let xi = k + j as isize;
                if xi >= 0 && (xi as usize) < x.len() {
                    acc += x[xi as usize] * cv;
                }
            }
            slow.push(acc);
        }
        assert_eq!(fast.len(), slow.len());
        for (a, b) in fast.iter().zip(slow.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn phase_ramp_stays_exact() {
        let mut out = vec![Complex64::default(); 5000];
        let step = -0.01234;
        phase_ramp(step, &mut out);
        for j in [0usize, 1, 255, 256, 1024, 4999] {
            let exact = Complex64::from_polar(1.0, step * j as f64);
            assert!((out[j] - exact).norm() < 1e-12);
        }
    }

    #[test]
    fn envelope_of_tone_is_flat() {
        let n = 4096;
        let x: Vec<f64> = (0..n)
            .map(|i| (std::f64::consts::TAU * 0.05 * i as f64).sin())
            .collect();
        let env = envelope(&x);
        // ignore edges where the analytic transform rings
        for &e in &env[200..n - 200] {
            assert_abs_diff_eq!(e, 1.0, epsilon = 1e-2);
        }
    }
}
