//! Specular RIR rendering: enumerate image-source paths in a shoebox, render
//! the impulse response, and report the standard room-acoustics metrics.

use roomtwin::geometry::{Pose, Scene};
use roomtwin::metrics;
use roomtwin::raytrace::{
    enumerate_paths, render_rir, DeviceGains, FrequencyGrid, MaterialSpectrum,
};

fn main() -> roomtwin::Result<()> {
    let dims = [4.0, 5.0, 3.0];
    let mats = [
        MaterialSpectrum::new([0.95, 0.92, 0.9, 0.88, 0.85, 0.8, 0.75])?, // drywall-ish
        MaterialSpectrum::flat(0.9)?,
        MaterialSpectrum::flat(0.9)?,
        MaterialSpectrum::flat(0.9)?,
        MaterialSpectrum::new([0.8, 0.72, 0.6, 0.5, 0.45, 0.4, 0.38])?, // carpeted floor
        MaterialSpectrum::flat(0.92)?,                                  // ceiling
    ];
    let scene = Scene::shoebox(dims, mats, roomtwin::SPEED_OF_SOUND)?;
    let tx = Pose::at(1.0, 1.5, 1.3);
    let rx = Pose::at(3.0, 3.8, 1.6);

    for bounces in [1usize, 3, 8] {
        let paths = enumerate_paths(&scene, &tx.position, &rx.position, bounces)?;
        println!("order <= {bounces}: {} validated specular paths", paths.len());
    }

    let duration = 0.3;
    let grid = FrequencyGrid::for_duration(duration, roomtwin::SAMPLE_RATE)?;
    let started = std::time::Instant::now();
    let rir = render_rir(&scene, &tx, &rx, &DeviceGains::default(), &grid, 8, duration)?;
    let ms = started.elapsed().as_secs_f64() * 1e3;
    println!(
        "\nrendered {} taps in {:.1} ms; direct-path onset {:.3} ms",
        rir.len(),
        ms,
        rir.onset * 1e3
    );
    println!("  energy:  {:.6}", rir.energy());
    println!("  C50:     {:+.2} dB", metrics::c50(&rir)?);
    match metrics::t60(&rir) {
        Ok(t) => println!("  T60:     {:.3} s", t),
        Err(e) => println!("  T60:     {e} (expected at low reflection orders)"),
    }
    match metrics::edt(&rir) {
        Ok(t) => println!("  EDT:     {:.3} s", t),
        Err(e) => println!("  EDT:     {e}"),
    }

    let out = std::path::Path::new("target/example_out");
    std::fs::create_dir_all(out)?;
    roomtwin::io::write_rir(out.join("room_rir.wav"), &rir)?;
    println!("\nwrote target/example_out/room_rir.wav");
    Ok(())
}
