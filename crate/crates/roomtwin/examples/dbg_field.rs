// scratch: field fit diagnostics, per-scale breakdown
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use roomtwin::estimate::TrainSample;
use roomtwin::field::{fit_field, FieldFitConfig};
use roomtwin::fft::stft_mags;
use roomtwin::geometry::{Pose, Scene};
use roomtwin::metrics::ms_stft_err_samples;
use roomtwin::raytrace::{render_rir, DeviceGains, FrequencyGrid, MaterialSpectrum};

fn scale_err(a: &[f64], b: &[f64], win: usize) -> f64 {
    let ma = stft_mags(a, win, win / 4);
    let mb = stft_mags(b, win, win / 4);
    let mut acc = 0.0;
    let mut n = 0usize;
    for (fa, fb) in ma.iter().zip(mb.iter()) {
        for (x, y) in fa.iter().zip(fb.iter()) {
            acc += (x - y).abs();
            n += 1;
        }
    }
    acc / n as f64
}

fn main() {
    let dims = [4.0, 5.0, 3.0];
    let scene = Scene::shoebox_uniform(dims, MaterialSpectrum::flat(0.9).unwrap(), 343.0).unwrap();
    let tx = Pose::at(1.0, 1.4, 1.5);
    let duration = 0.15;
    let fs = 48000.0;
    let grid = FrequencyGrid::for_duration(duration, fs).unwrap();
    let bounces = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(6006);
    let t0 = std::time::Instant::now();
    let all: Vec<TrainSample> = (0..200)
        .map(|_| {
            let pose_rx = Pose::at(
                rng.random_range(0.4..dims[0] - 0.4),
                rng.random_range(0.4..dims[1] - 0.4),
                rng.random_range(0.4..dims[2] - 0.4),
            );
            let measured =
                render_rir(&scene, &tx, &pose_rx, &DeviceGains::default(), &grid, bounces, duration).unwrap();
            TrainSample { pose_tx: tx, pose_rx, measured }
        })
        .collect();
    println!("dataset ({} bounces): {:.0} s", bounces, t0.elapsed().as_secs_f64());
    let (train, held) = all.split_at(160);

    let cfg = FieldFitConfig {
        patches: 384,
        ray_count: 512,
        iters: 400,
        batch: 16,
        step: 2.5,
        step_decay: 0.995,
        seed: 3,
        env_weight: 0.0,
        ..FieldFitConfig::default()
    };
    let t0 = std::time::Instant::now();
    let fit = fit_field(&scene, train, &cfg).unwrap();
    println!("fit: {:.0} s", t0.elapsed().as_secs_f64());

    let bins = fit.model.bins;
    let mut me = 0.0;
    let mut ze = 0.0;
    let mut per_scale = [[0.0f64; 2]; 3];
    for s in held {
        let r = fit.model.render(&scene, &s.pose_rx).unwrap();
        let target = s.measured.to_absolute(bins);
        me += ms_stft_err_samples(&r.taps, &target);
        ze += ms_stft_err_samples(&vec![0.0; bins], &target);
        for (k, &w) in [64usize, 256, 1024].iter().enumerate() {
            per_scale[k][0] += scale_err(&r.taps, &target, w);
            per_scale[k][1] += scale_err(&vec![0.0; bins], &target, w);
        }
    }
    println!("held-out ratio: {:.3}", me / ze);
    for (k, &w) in [64usize, 256, 1024].iter().enumerate() {
        println!("  window {w}: ratio {:.3} (zero baseline {:.4})", per_scale[k][0] / per_scale[k][1], per_scale[k][1]);
    }
}
