//! Acoustic localization from a single Tx/Rx pair: nearest-neighbor matching
//! on RIR envelope fingerprints, with the database densified by synthesized
//! RIRs on a grid.

use nalgebra::Point3;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use roomtwin::geometry::{Pose, Scene};
use roomtwin::raytrace::{render_rir, DeviceGains, FrequencyGrid, MaterialSpectrum};
use roomtwin::signals::Rir;
use roomtwin::twin::{position_grid, RaytraceSynth, RirDatabase};

fn main() -> roomtwin::Result<()> {
    let dims = [4.0, 5.0, 3.0];
    let scene = Scene::shoebox_uniform(dims, MaterialSpectrum::flat(0.8)?, roomtwin::SPEED_OF_SOUND)?;
    let tx = Pose::at(0.8, 0.9, 1.4);
    let duration = 0.12;
    let grid = FrequencyGrid::for_duration(duration, roomtwin::SAMPLE_RATE)?;
    let render_at = |p: Point3<f64>| -> roomtwin::Result<Rir> {
        render_rir(
            &scene,
            &tx,
            &Pose::new(p, nalgebra::UnitQuaternion::identity()),
            &DeviceGains::default(),
            &grid,
            2,
            duration,
        )
    };

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let random_point = |rng: &mut ChaCha8Rng| {
        Point3::new(
            rng.random_range(0.5..dims[0] - 0.5),
            rng.random_range(0.5..dims[1] - 0.5),
            rng.random_range(0.6..dims[2] - 0.6),
        )
    };
    let mut measured = Vec::new();
    for _ in 0..60 {
        let p = random_point(&mut rng);
        measured.push((p, render_at(p)?));
    }
    let queries: Vec<Point3<f64>> = (0..50).map(|_| random_point(&mut rng)).collect();

    let db = RirDatabase::build(tx, &measured, duration)?;
    let median = |db: &RirDatabase| -> roomtwin::Result<f64> {
        let mut errs = Vec::new();
        for &q in &queries {
            errs.push((db.localize(&render_at(q)?, 5)? - q).norm());
        }
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(errs[errs.len() / 2])
    };
    println!("measured-only database: {} entries", db.entries.len());
    println!("  median localization error: {:.3} m", median(&db)?);

    let synth = RaytraceSynth {
        scene: &scene,
        tx_pose: tx,
        gains: DeviceGains::default(),
        grid,
        max_bounces: 2,
        duration,
    };
    let pts = position_grid(
        Point3::new(0.4, 0.4, 1.4),
        Point3::new(dims[0] - 0.4, dims[1] - 0.4, 1.4),
        [20, 20, 1],
    );
    let augmented = db.augment(&synth, &pts)?;
    println!(
        "\naugmented with {} synthesized entries ({} total):",
        pts.len(),
        augmented.entries.len()
    );
    println!("  median localization error: {:.3} m", median(&augmented)?);
    Ok(())
}
