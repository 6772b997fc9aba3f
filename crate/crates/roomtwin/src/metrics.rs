//! RIR similarity and room-acoustics metrics: Schroeder decay, T60, C50,
//! EDT, and the envelope / FFT-amplitude / multi-scale-STFT error family.

use crate::error::{Error, Result};
use crate::fft;
use crate::signals::Rir;

/// C50 sentinel when the late window carries no energy, dB.
pub const C50_MAX_DB: f64 = 80.0;

/// Multi-scale STFT window sizes (hop = window / 4).
pub const STFT_WINDOWS: [usize; 3] = [64, 256, 1024];

/// Backward-integrated energy decay in dB relative to total energy.
/// Non-increasing, starts at 0 dB.
#[derive(Debug, Clone)]
pub struct DecayCurve {
    /// Seconds from the RIR's first tap.
    pub times: Vec<f64>,
    /// dB, `10 log10(tail energy / total energy)`.
    pub levels: Vec<f64>,
}

impl DecayCurve {
    /// First time the curve reaches `level` dB (linear interpolation between
    /// samples), or `None` if it never does.
    pub fn time_to_level(&self, level: f64) -> Option<f64> {
        let idx = self.levels.iter().position(|&l| l <= level)?;
        if idx == 0 {
            return Some(self.times[0]);
        }
        let (l0, l1) = (self.levels[idx - 1], self.levels[idx]);
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        if !l1.is_finite() || (l1 - l0).abs() < 1e-12 {
            return Some(t1);
        }
        Some(t0 + (t1 - t0) * (level - l0) / (l1 - l0))
    }
}

/// Schroeder backward integration: `L(t) = 10 log10(int_t^inf h^2 / int_0^inf h^2)`.
pub fn schroeder(rir: &Rir) -> Result<DecayCurve> {
    let total: f64 = rir.taps.iter().map(|t| t * t).sum();
    if total <= 0.0 {
        return Err(Error::Metrics("zero-energy RIR".into()));
    }
    let mut tail = total;
    let mut times = Vec::with_capacity(rir.len());
    let mut levels = Vec::with_capacity(rir.len());
    for (i, &t) in rir.taps.iter().enumerate() {
        times.push(i as f64 / rir.sample_rate);
        levels.push(10.0 * (tail / total).log10());
        tail -= t * t;
    }
    Ok(DecayCurve { times, levels })
}

/// Least-squares line over the curve samples with level in `[lo, hi]` dB;
/// returns (intercept, slope dB/s).
fn fit_line(curve: &DecayCurve, hi: f64, lo: f64) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = curve
        .times
        .iter()
        .zip(curve.levels.iter())
        .filter(|(_, &l)| l.is_finite() && l <= hi && l >= lo)
        .map(|(&t, &l)| (t, l))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientDecay);
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let lm = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - lm)).sum();
    let var: f64 = pts.iter().map(|p| (p.0 - tm) * (p.0 - tm)).sum();
    if var <= 0.0 || cov >= 0.0 {
        return Err(Error::InsufficientDecay);
    }
    let slope = cov / var;
    Ok((lm - slope * tm, slope))
}

/// Reverberation time from a -5..-35 dB line fit (T30-style extrapolation):
/// twice the time the fitted line takes to fall those 30 dB.
pub fn t60(rir: &Rir) -> Result<f64> {
    let curve = schroeder(rir)?;
    if curve.time_to_level(-35.0).is_none() {
        return Err(Error::InsufficientDecay);
    }
    let (_, slope) = fit_line(&curve, -5.0, -35.0)?;
    Ok(2.0 * 30.0 / (-slope))
}

/// Early decay time: six times the time to reach -10 dB.
pub fn edt(rir: &Rir) -> Result<f64> {
    let curve = schroeder(rir)?;
    let t10 = curve.time_to_level(-10.0).ok_or(Error::InsufficientDecay)?;
    Ok(6.0 * t10)
}

/// Clarity: early-to-late energy ratio at 50 ms from the RIR onset (tap 0),
/// in dB. Clamped to +-[`C50_MAX_DB`] when one side has no energy.
pub fn c50(rir: &Rir) -> Result<f64> {
    if rir.is_empty() {
        return Err(Error::Metrics("empty RIR".into()));
    }
    let split = ((0.05 * rir.sample_rate).round() as usize).min(rir.len());
    let early: f64 = rir.taps[..split].iter().map(|t| t * t).sum();
    let late: f64 = rir.taps[split..].iter().map(|t| t * t).sum();
    if early <= 0.0 && late <= 0.0 {
        return Err(Error::Metrics("zero-energy RIR".into()));
    }
    if late <= 0.0 {
        return Ok(C50_MAX_DB);
    }
    if early <= 0.0 {
        return Ok(-C50_MAX_DB);
    }
    Ok(10.0 * (early / late).log10())
}

fn padded_pair(a: &Rir, b: &Rir) -> Result<(Vec<f64>, Vec<f64>)> {
    if (a.sample_rate - b.sample_rate).abs() > 1e-9 {
        return Err(Error::Metrics("sample-rate mismatch".into()));
    }
    let n = a.len().max(b.len());
    let mut x = a.taps.clone();
    x.resize(n, 0.0);
    let mut y = b.taps.clone();
    y.resize(n, 0.0);
    Ok((x, y))
}

/// Mean absolute difference of analytic-signal envelopes (sign-blind).
pub fn env_err(a: &Rir, b: &Rir) -> Result<f64> {
    let (x, y) = padded_pair(a, b)?;
    let ea = fft::envelope(&x);
    let eb = fft::envelope(&y);
    Ok(ea
        .iter()
        .zip(eb.iter())
        .map(|(p, q)| (p - q).abs())
        .sum::<f64>()
        / ea.len() as f64)
}

/// Mean absolute difference of FFT magnitude spectra.
pub fn amp_err(a: &Rir, b: &Rir) -> Result<f64> {
    let (x, y) = padded_pair(a, b)?;
    let n = fft::next_pow2(x.len());
    let fa = fft::rfft(&x, n);
    let fb = fft::rfft(&y, n);
    Ok(fa
        .iter()
        .zip(fb.iter())
        .map(|(p, q)| (p.norm() - q.norm()).abs())
        .sum::<f64>()
        / fa.len() as f64)
}

/// Multi-scale STFT error: sum over window scales of the mean absolute
/// spectrogram-magnitude difference.
pub fn ms_stft_err(a: &Rir, b: &Rir) -> Result<f64> {
    let (x, y) = padded_pair(a, b)?;
    Ok(ms_stft_err_samples(&x, &y))
}

/// Same metric over raw tap arrays of equal length.
pub fn ms_stft_err_samples(x: &[f64], y: &[f64]) -> f64 {
    let mut total = 0.0;
    for win in STFT_WINDOWS {
        let hop = win / 4;
        let ma = fft::stft_mags(x, win, hop);
        let mb = fft::stft_mags(y, win, hop);
        let mut acc = 0.0;
        let mut count = 0usize;
        for (fa, fb) in ma.iter().zip(mb.iter()) {
            for (p, q) in fa.iter().zip(fb.iter()) {
                acc += (p - q).abs();
                count += 1;
            }
        }
        if count > 0 {
            total += acc / count as f64;
        }
    }
    total
}

/// One row of a batch metric report.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub name: String,
    pub t60_a: Option<f64>,
    pub t60_b: Option<f64>,
    pub c50_a: f64,
    pub c50_b: f64,
    pub edt_a: Option<f64>,
    pub edt_b: Option<f64>,
    pub env: f64,
    pub amp: f64,
    pub ms_stft: f64,
}

/// Computes the full metric set for a pair.
pub fn compare(name: &str, a: &Rir, b: &Rir) -> Result<MetricReport> {
    Ok(MetricReport {
        name: name.to_string(),
        t60_a: t60(a).ok(),
        t60_b: t60(b).ok(),
        c50_a: c50(a)?,
        c50_b: c50(b)?,
        edt_a: edt(a).ok(),
        edt_b: edt(b).ok(),
        env: env_err(a, b)?,
        amp: amp_err(a, b)?,
        ms_stft: ms_stft_err(a, b)?,
    })
}

/// CSV report: one row per pair, one column per metric.
pub fn reports_to_csv(reports: &[MetricReport]) -> String {
    let mut out =
        String::from("name,t60_a_s,t60_b_s,c50_a_db,c50_b_db,edt_a_s,edt_b_s,env_err,amp_err,ms_stft_err\n");
    let fmt = |v: Option<f64>| v.map_or(String::from("nan"), |x| format!("{x:.6}"));
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{},{},{:.9},{:.9},{:.9}\n",
            r.name,
            fmt(r.t60_a),
            fmt(r.t60_b),
            r.c50_a,
            r.c50_b,
            fmt(r.edt_a),
            fmt(r.edt_b),
            r.env,
            r.amp,
            r.ms_stft
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    const FS: f64 = crate::SAMPLE_RATE;

    /// Deterministic exponential-envelope noise RIR, tau in seconds.
    fn exp_decay_rir(tau: f64, duration: f64, seed: u64) -> Rir {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = (duration * FS) as usize;
        let taps = (0..n)
            .map(|i| {
                let t = i as f64 / FS;
                (-t / tau).exp() * rng.random_range(-1.0..1.0f64)
            })
            .collect();
        Rir::new(taps, FS, 0.0).unwrap()
    }

    fn impulse_rir(at: usize, len: usize) -> Rir {
        let mut taps = vec![0.0; len];
        taps[at] = 1.0;
        Rir::new(taps, FS, 0.0).unwrap()
    }

    #[test]
    fn schroeder_of_impulse_drops_immediately() {
        let rir = impulse_rir(0, 100);
        let c = schroeder(&rir).unwrap();
        assert_abs_diff_eq!(c.levels[0], 0.0, epsilon = 1e-12);
        assert!(c.levels[1] == f64::NEG_INFINITY);
    }

    #[test]
    fn schroeder_slope_matches_exponential_envelope() {
        // L(t) = -(20/ln 10) * t / tau dB for e^{-t/tau} envelopes
        let tau = 0.1;
        let rir = exp_decay_rir(tau, 1.0, 5);
        let c = schroeder(&rir).unwrap();
        let expect = -20.0 / 10f64.ln() / tau;
        let (_, slope) = fit_line(&c, -5.0, -35.0).unwrap();
        assert!(
            (slope - expect).abs() / expect.abs() < 0.05,
            "slope {slope} vs {expect}"
        );
    }

    #[test]
    fn schroeder_ignores_trailing_zeros() {
        let rir = exp_decay_rir(0.05, 0.4, 9);
        let mut padded_taps = rir.taps.clone();
        padded_taps.extend(std::iter::repeat(0.0).take(1000));
        let padded = Rir::new(padded_taps, FS, 0.0).unwrap();
        let a = schroeder(&rir).unwrap();
        let b = schroeder(&padded).unwrap();
        for i in 0..rir.len() {
            if a.levels[i].is_finite() {
                assert_abs_diff_eq!(a.levels[i], b.levels[i], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn schroeder_zero_energy_is_error() {
        let rir = Rir::new(vec![0.0; 64], FS, 0.0).unwrap();
        assert!(schroeder(&rir).is_err());
    }

    #[test]
    fn t60_of_exponential_decay() {
        // T60 = 6.91 * tau
        let tau = 0.1;
        let rir = exp_decay_rir(tau, 1.2, 17);
        let t = t60(&rir).unwrap();
        let expect = 6.907 * tau;
        assert!((t - expect).abs() / expect < 0.05, "t60 {t} vs {expect}");
    }

    #[test]
    fn t60_amplitude_invariant() {
        let rir = exp_decay_rir(0.08, 1.0, 23);
        let scaled = Rir::new(rir.taps.iter().map(|t| t * 37.5).collect(), FS, 0.0).unwrap();
        assert_abs_diff_eq!(t60(&rir).unwrap(), t60(&scaled).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn t60_insufficient_decay() {
        // constant-envelope noise never decays 35 dB
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let taps: Vec<f64> = (0..4800).map(|_| rng.random_range(-1.0..1.0f64)).collect();
        let rir = Rir::new(taps, FS, 0.0).unwrap();
        // levels pass through -35 dB only in the last few samples of the
        // backward integral; the fit range check still needs the crossing
        // to exist, so use a hard-truncated constant envelope
        match t60(&rir) {
            Ok(v) => assert!(v < 0.3, "constant envelope gave t60 {v}"),
            Err(Error::InsufficientDecay) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn edt_of_exponential_decay() {
        let tau = 0.1;
        let rir = exp_decay_rir(tau, 1.2, 31);
        let e = edt(&rir).unwrap();
        let expect = 6.0 * 10.0 * tau / (20.0 / 10f64.ln());
        assert!((e - expect).abs() / expect < 0.08, "edt {e} vs {expect}");
    }

    #[test]
    fn c50_sentinel_for_no_late_energy() {
        let rir = impulse_rir(0, 100);
        assert_eq!(c50(&rir).unwrap(), C50_MAX_DB);
    }

    #[test]
    fn c50_increases_when_late_energy_attenuated() {
        let mut taps = vec![0.0; (0.2 * FS) as usize];
        taps[0] = 1.0;
        let late_at = (0.08 * FS) as usize;
        taps[late_at] = 0.5;
        let a = Rir::new(taps.clone(), FS, 0.0).unwrap();
        taps[late_at] = 0.25;
        let b = Rir::new(taps, FS, 0.0).unwrap();
        assert!(c50(&b).unwrap() > c50(&a).unwrap());
    }

    #[test]
    fn identical_rirs_have_zero_errors() {
        let rir = exp_decay_rir(0.05, 0.3, 40);
        assert_abs_diff_eq!(env_err(&rir, &rir).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(amp_err(&rir, &rir).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ms_stft_err(&rir, &rir).unwrap(), 0.0, epsilon = 1e-12);
        let r = compare("self", &rir, &rir).unwrap();
        assert_abs_diff_eq!(r.t60_a.unwrap(), r.t60_b.unwrap(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.c50_a, r.c50_b, epsilon = 1e-12);
    }

    #[test]
    fn polarity_blindness() {
        let rir = exp_decay_rir(0.05, 0.3, 41);
        let neg = Rir::new(rir.taps.iter().map(|t| -t).collect(), FS, 0.0).unwrap();
        assert_abs_diff_eq!(env_err(&rir, &neg).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(amp_err(&rir, &neg).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn delayed_impulse_envelope_error_matches_direct_computation() {
        // independent oracle: envelopes via an O(n^2) DFT analytic signal
        let n = 2048usize;
        let a = impulse_rir(100, n);
        let b = impulse_rir(100 + 480, n);
        let oracle = |x: &[f64]| -> Vec<f64> {
            let mut env = vec![0.0; n];
            // full DFT, positive-frequency doubling, inverse DFT
            let mut spec = vec![(0.0f64, 0.0f64); n];
            for (k, s) in spec.iter_mut().enumerate() {
                for (t, &v) in x.iter().enumerate() {
                    let ph = -std::f64::consts::TAU * k as f64 * t as f64 / n as f64;
                    s.0 += v * ph.cos();
                    s.1 += v * ph.sin();
                }
            }
            for (k, s) in spec.iter_mut().enumerate() {
                let m = if k == 0 || k == n / 2 {
                    1.0
                } else if k < n / 2 {
                    2.0
                } else {
                    0.0
                };
                s.0 *= m;
                s.1 *= m;
            }
            for (t, e) in env.iter_mut().enumerate() {
                let mut re = 0.0;
                let mut im = 0.0;
                for (k, s) in spec.iter().enumerate() {
                    let ph = std::f64::consts::TAU * k as f64 * t as f64 / n as f64;
                    re += s.0 * ph.cos() - s.1 * ph.sin();
                    im += s.0 * ph.sin() + s.1 * ph.cos();
                }
                *e = (re * re + im * im).sqrt() / n as f64;
            }
            env
        };
        let ea = oracle(&a.taps);
        let eb = oracle(&b.taps);
        let expect: f64 =
            ea.iter().zip(eb.iter()).map(|(p, q)| (p - q).abs()).sum::<f64>() / n as f64;
        let got = env_err(&a, &b).unwrap();
        assert_abs_diff_eq!(got, expect, epsilon = 1e-9);
    }

    #[test]
    fn error_metrics_symmetric_and_nonnegative() {
        let a = exp_decay_rir(0.05, 0.25, 50);
        let b = exp_decay_rir(0.08, 0.25, 51);
        for f in [env_err, amp_err, ms_stft_err] {
            let ab = f(&a, &b).unwrap();
            let ba = f(&b, &a).unwrap();
            assert!(ab >= 0.0);
            assert_abs_diff_eq!(ab, ba, epsilon = 1e-12);
        }
    }

    #[test]
    fn csv_report_shape() {
        let rir = exp_decay_rir(0.05, 0.25, 60);
        let r = compare("pair0", &rir, &rir).unwrap();
        let csv = reports_to_csv(&[r]);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "name,t60_a_s,t60_b_s,c50_a_db,c50_b_db,edt_a_s,edt_b_s,env_err,amp_err,ms_stft_err"
        );
        assert!(lines.next().unwrap().starts_with("pair0,"));
    }
}
