//! Two-way handshake over a simulated room channel: two devices with wildly
//! different clocks exchange probes; the four timestamps cancel the offset
//! and recover the one-way time of flight, while the response chirp's
//! matched filter yields the RIR.

use roomtwin::geometry::{Pose, Scene};
use roomtwin::handshake::{
    run_protocol, simulate_session, ClockModel, ProtocolConfig, SessionConfig,
};
use roomtwin::raytrace::MaterialSpectrum;

fn main() -> roomtwin::Result<()> {
    let scene = Scene::shoebox_uniform(
        [5.0, 4.0, 3.0],
        MaterialSpectrum::flat(0.7)?,
        roomtwin::SPEED_OF_SOUND,
    )?;
    let mut cfg = SessionConfig::static_pair(
        Pose::at(1.0, 1.0, 1.5), // Tx
        Pose::at(4.0, 3.0, 1.2), // Rx
        6.0,
    );
    cfg.chirp_interval = 0.6;
    cfg.snr_db = Some(15.0);
    cfg.max_bounces = 2;
    cfg.channel_rir_duration = 0.15;

    // the devices disagree by seconds; the handshake doesn't care
    let clock_tx = ClockModel::new(4.2, 0.0)?;
    let clock_rx = ClockModel::new(-7.9, 0.0)?;
    let sim = simulate_session(&scene, &cfg, &clock_tx, &clock_rx)?;
    println!(
        "simulated {} exchanges; clock offset between devices: {:.1} s",
        sim.truth.len(),
        clock_tx.offset - clock_rx.offset
    );

    let out = run_protocol(
        &sim.rx,
        &sim.tx,
        &cfg.c1,
        &cfg.c2,
        &ProtocolConfig { chirp_interval: cfg.chirp_interval, rir_duration: 0.15, ..Default::default() },
    )?;
    println!(
        "protocol paired {} exchanges ({} dropped), c1 detection rate {:.1}%",
        out.report.exchanges_paired,
        out.report.exchanges_dropped,
        out.report.detection_rate * 100.0
    );
    println!("\n  exchange |  est ToF (ms) | true ToF (ms) | error (us) | RIR taps");
    for (ex, truth) in out.exchanges.iter().zip(sim.truth.iter()) {
        println!(
            "      {:>4} | {:>12.4} | {:>12.4} | {:>9.2} | {}",
            truth.index,
            ex.tof * 1e3,
            truth.tof * 1e3,
            (ex.tof - truth.tof).abs() * 1e6,
            ex.rir.len()
        );
    }
    Ok(())
}
