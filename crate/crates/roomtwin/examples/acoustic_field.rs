//! Surface acoustic field: fit per-patch emitters to fixed-Tx RIRs, then
//! synthesize held-out receivers by first-hit ray casting. The render
//! evaluates exactly one emitter per ray that hits a surface.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use roomtwin::estimate::TrainSample;
use roomtwin::field::{fit_field, FieldFitConfig};
use roomtwin::geometry::{Pose, Scene};
use roomtwin::metrics;
use roomtwin::raytrace::{render_rir, DeviceGains, FrequencyGrid, MaterialSpectrum};

fn main() -> roomtwin::Result<()> {
    let dims = [4.0, 5.0, 3.0];
    let scene = Scene::shoebox_uniform(dims, MaterialSpectrum::flat(0.85)?, roomtwin::SPEED_OF_SOUND)?;
    let tx = Pose::at(1.0, 1.4, 1.5);
    let duration = 0.1;
    let grid = FrequencyGrid::for_duration(duration, roomtwin::SAMPLE_RATE)?;

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let all: Vec<TrainSample> = (0..120)
        .map(|_| {
            let rx = Pose::at(
                rng.random_range(0.4..dims[0] - 0.4),
                rng.random_range(0.4..dims[1] - 0.4),
                rng.random_range(0.4..dims[2] - 0.4),
            );
            let measured =
                render_rir(&scene, &tx, &rx, &DeviceGains::default(), &grid, 2, duration).unwrap();
            TrainSample { pose_tx: tx, pose_rx: rx, measured }
        })
        .collect();
    let (train, held_out) = all.split_at(100);
    println!("training on {} RIRs, holding out {}", train.len(), held_out.len());

    let cfg = FieldFitConfig {
        patches: 128,
        ray_count: 512,
        iters: 200,
        batch: 16,
        step: 1.0,
        step_decay: 0.99,
        seed: 4,
        ..FieldFitConfig::default()
    };
    let started = std::time::Instant::now();
    let fit = fit_field(&scene, train, &cfg)?;
    println!(
        "fit {} patches x {} bins in {:.1} s (loss {:.4} -> {:.4})",
        fit.model.num_patches,
        fit.model.bins,
        started.elapsed().as_secs_f64(),
        fit.loss_trace.first().unwrap(),
        fit.loss_trace.last().unwrap()
    );

    let mut model_err = 0.0;
    let mut zero_err = 0.0;
    let mut hits = 0usize;
    for s in held_out {
        let (rendered, stats) = fit.model.render_with_stats(&scene, &s.pose_rx)?;
        assert_eq!(stats.emitter_evals, stats.hits);
        hits = stats.hits;
        let target = s.measured.to_absolute(fit.model.bins);
        model_err += metrics::ms_stft_err_samples(&rendered.taps, &target);
        zero_err += metrics::ms_stft_err_samples(&vec![0.0; fit.model.bins], &target);
    }
    println!(
        "held-out multi-scale STFT error: {:.4} vs zero-predictor {:.4} (ratio {:.3})",
        model_err,
        zero_err,
        model_err / zero_err
    );
    println!(
        "per render: {} rays cast, {hits} hit, {hits} emitter evaluations (one per hit)",
        fit.model.ray_count
    );
    Ok(())
}
