//! Inverse rendering: recover per-wall reflectivities (and device gains)
//! from a handful of RIRs rendered with hidden materials.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use roomtwin::estimate::{fit_materials, FitConfig, TrainSample};
use roomtwin::geometry::{Pose, Scene};
use roomtwin::raytrace::{render_rir, DeviceGains, FrequencyGrid, MaterialSpectrum};

fn main() -> roomtwin::Result<()> {
    let dims = [4.0, 5.0, 3.0];
    let truths = [0.9, 0.3, 0.75, 0.5, 0.2, 0.85];
    let names = ["x-lo wall", "x-hi wall", "y-lo wall", "y-hi wall", "floor", "ceiling"];
    let mats: [MaterialSpectrum; 6] =
        std::array::from_fn(|i| MaterialSpectrum::flat(truths[i]).unwrap());
    let hidden = Scene::shoebox(dims, mats, roomtwin::SPEED_OF_SOUND)?;

    let duration = 0.08;
    let grid = FrequencyGrid::for_duration(duration, roomtwin::SAMPLE_RATE)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut pose = |rng: &mut ChaCha8Rng| {
        Pose::at(
            rng.random_range(0.4..dims[0] - 0.4),
            rng.random_range(0.4..dims[1] - 0.4),
            rng.random_range(0.4..dims[2] - 0.4),
        )
    };
    let samples: Vec<TrainSample> = (0..30)
        .map(|_| {
            let tx = pose(&mut rng);
            let rx = pose(&mut rng);
            let measured =
                render_rir(&hidden, &tx, &rx, &DeviceGains::default(), &grid, 3, duration).unwrap();
            TrainSample { pose_tx: tx, pose_rx: rx, measured }
        })
        .collect();
    println!("dataset: {} RIRs at random pose pairs", samples.len());

    // the estimator sees the geometry but starts from R = 0.5 everywhere
    let blind = Scene::shoebox_uniform(dims, MaterialSpectrum::flat(0.5)?, roomtwin::SPEED_OF_SOUND)?;
    let cfg = FitConfig { max_bounces: 3, max_iters: 800, patience: 200, ..FitConfig::default() };
    let started = std::time::Instant::now();
    let result = fit_materials(&blind, &samples, &cfg)?;
    println!(
        "optimized {} iterations in {:.1} s, best loss {:.3e}\n",
        result.loss_trace.len(),
        started.elapsed().as_secs_f64(),
        result.best_loss
    );

    println!("  segment    | truth | recovered (mean over bands)");
    for s in 0..6 {
        let mean: f64 = (0..7).map(|b| result.params.reflectivity(s, b)).sum::<f64>() / 7.0;
        println!("  {:<10} | {:.2}  | {:.3}", names[s], truths[s], mean);
    }
    Ok(())
}
