//! File-based pipelines behind the `roomtwin` binary. Every run echoes its
//! fully resolved configuration as JSON on stdout and is byte-deterministic
//! given the same inputs and seed.

use clap::{Args, Parser, Subcommand};
use nalgebra::Point3;
use roomtwin::error::{Error, Result};
use roomtwin::estimate::{fit_materials, trace_to_csv, FitConfig};
use roomtwin::field::{fit_field, FieldFitConfig, FieldModel};
use roomtwin::geometry::{Pose, Scene};
use roomtwin::handshake::{
    exchange_times, run_protocol, simulate_session, ClockModel, DeviceRecording, ProtocolConfig,
    SessionConfig, Trajectory,
};
use roomtwin::io::dataset::read_dataset;
use roomtwin::raytrace::{
    enumerate_paths, render_rir, DeviceGains, FrequencyGrid, MaterialSpectrum,
};
use roomtwin::signals::{extract_rir, gen_chirp, ChirpSpec, Rir};
use roomtwin::twin::{
    apply_edit, load_edit_script, position_grid, FieldSynth, RaytraceSynth, RirDatabase,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "roomtwin",
    about = "Room-acoustics digital twin pipelines: chirp probing, handshake ToF, RIR rendering, material estimation, acoustic fields, scene edits, localization",
    version
)]
pub struct Cli {
    /// Worker threads (default: all cores). Results are thread-count
    /// independent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a linear FM probe chirp into a WAV file
    Chirp(ChirpArgs),
    /// Simulate a two-device handshake session over a scene
    Simulate(SimulateArgs),
    /// Run the handshake protocol over a simulated session directory
    Handshake(HandshakeArgs),
    /// Extract an RIR from a recording by matched filtering
    Extract(ExtractArgs),
    /// Render an RIR between two poses with the specular ray tracer
    Render(RenderArgs),
    /// Fit per-segment reflectivities and device gains to a dataset
    FitMaterials(FitMaterialsArgs),
    /// Fit a surface-emitter acoustic field to a fixed-Tx dataset
    FitField(FitFieldArgs),
    /// Compare RIR files or directories with the full metric set
    Metrics(MetricsArgs),
    /// Apply a JSON edit script to a scene
    Edit(EditArgs),
    /// Build, augment, or query an RIR localization database
    Localize(LocalizeArgs),
    /// Report renderer throughput on a reference fixture
    Bench(BenchArgs),
}

#[derive(Args, Serialize)]
struct ChirpArgs {
    /// Start frequency, Hz
    #[arg(long, default_value_t = 11_000.0)]
    f0: f64,
    /// End frequency, Hz
    #[arg(long, default_value_t = 19_000.0)]
    f1: f64,
    /// Duration, seconds
    #[arg(long, default_value_t = 0.2)]
    dur: f64,
    /// Amplitude
    #[arg(long, default_value_t = 1.0)]
    amp: f64,
    /// Sample rate, Hz
    #[arg(long, default_value_t = roomtwin::SAMPLE_RATE)]
    fs: f64,
    /// Output WAV path
    #[arg(short, long)]
    output: PathBuf,
}

/// Session description file; flags override individual fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SessionFile {
    duration: f64,
    chirp_interval: f64,
    latency_range: (f64, f64),
    snr_db: Option<f64>,
    seed: u64,
    sample_rate: f64,
    c1: ChirpSpec,
    c2: ChirpSpec,
    tx_waypoints: Vec<Waypoint>,
    rx_waypoints: Vec<Waypoint>,
    clock_tx: ClockModel,
    clock_rx: ClockModel,
    max_bounces: usize,
    channel_rir_duration: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Waypoint {
    t: f64,
    pose: Pose,
}

impl Default for SessionFile {
    fn default() -> Self {
        SessionFile {
            duration: 10.0,
            chirp_interval: 2.0,
            latency_range: (0.05, 0.15),
            snr_db: Some(20.0),
            seed: 0,
            sample_rate: roomtwin::SAMPLE_RATE,
            c1: ChirpSpec::sync_probe(),
            c2: ChirpSpec::rir_probe(),
            tx_waypoints: vec![Waypoint { t: 0.0, pose: Pose::at(1.0, 1.0, 1.5) }],
            rx_waypoints: vec![Waypoint { t: 0.0, pose: Pose::at(3.0, 3.0, 1.5) }],
            clock_tx: ClockModel::identity(),
            clock_rx: ClockModel::identity(),
            max_bounces: 3,
            channel_rir_duration: 0.3,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Scene description JSON
    #[arg(long)]
    scene: PathBuf,
    /// Session description JSON (defaults used when omitted)
    #[arg(long)]
    session: Option<PathBuf>,
    /// Override the session seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the session duration, seconds
    #[arg(long)]
    duration: Option<f64>,
    /// Override the noise level, dB SNR
    #[arg(long)]
    snr: Option<f64>,
    /// Output directory
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct HandshakeArgs {
    /// Session directory produced by `simulate`
    input: PathBuf,
    /// Protocol config JSON (defaults used when omitted)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct ExtractArgs {
    /// Recording WAV
    #[arg(long)]
    recording: PathBuf,
    /// Probe start frequency, Hz
    #[arg(long, default_value_t = 50.0)]
    f0: f64,
    /// Probe end frequency, Hz
    #[arg(long, default_value_t = 9_000.0)]
    f1: f64,
    /// Probe duration, seconds
    #[arg(long, default_value_t = 0.2)]
    dur: f64,
    /// Direct-path arrival on the recording's time axis, seconds
    #[arg(long)]
    arrival: f64,
    /// RIR length, seconds
    #[arg(long, default_value_t = 0.3)]
    duration: f64,
    /// Output WAV path
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct RenderArgs {
    /// Scene description JSON
    #[arg(long)]
    scene: PathBuf,
    /// Tx position "x,y,z"
    #[arg(long)]
    tx: String,
    /// Rx position "x,y,z"
    #[arg(long)]
    rx: String,
    /// Estimated parameters JSON (from fit-materials) to render with
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<PathBuf>,
    /// Reflection order
    #[arg(long, default_value_t = 8)]
    bounces: usize,
    /// RIR length, seconds
    #[arg(long, default_value_t = 0.3)]
    duration: f64,
    /// Output WAV path
    #[arg(short, long)]
    output: PathBuf,
    /// Also write the tap list as JSON
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    taps_json: Option<PathBuf>,
    /// Also write the specular path list as JSON
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    paths_json: Option<PathBuf>,
}

#[derive(Args)]
struct FitMaterialsArgs {
    /// Scene description JSON
    #[arg(long)]
    scene: PathBuf,
    /// Dataset directory (samples.jsonl + WAVs)
    #[arg(long)]
    dataset: PathBuf,
    /// Fit config JSON (defaults used when omitted)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override optimizer iterations
    #[arg(long)]
    iters: Option<usize>,
    /// Override reflection order
    #[arg(long)]
    bounces: Option<usize>,
    /// Output parameters JSON
    #[arg(short, long)]
    output: PathBuf,
    /// Loss trace CSV
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct FitFieldArgs {
    /// Scene description JSON
    #[arg(long)]
    scene: PathBuf,
    /// Dataset directory (fixed-Tx samples)
    #[arg(long)]
    dataset: PathBuf,
    /// Field fit config JSON (defaults used when omitted)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override training iterations
    #[arg(long)]
    iters: Option<usize>,
    /// Output field blob
    #[arg(short, long)]
    output: PathBuf,
    /// Loss trace CSV
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct MetricsArgs {
    /// First RIR WAV or directory
    #[arg(long)]
    a: PathBuf,
    /// Second RIR WAV or directory
    #[arg(long)]
    b: PathBuf,
    /// Output CSV
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct EditArgs {
    /// Scene description JSON
    #[arg(long)]
    scene: PathBuf,
    /// Edit script JSON (array of ops, applied in order)
    #[arg(long)]
    script: PathBuf,
    /// Output directory
    #[arg(short, long)]
    output: PathBuf,
    /// Output scene name
    #[arg(long, default_value = "edited")]
    name: String,
}

#[derive(Args)]
struct LocalizeArgs {
    #[command(subcommand)]
    action: LocalizeAction,
}

#[derive(Subcommand)]
enum LocalizeAction {
    /// Build a database from a dataset directory
    Build {
        #[arg(long)]
        dataset: PathBuf,
        /// Feature horizon, seconds
        #[arg(long, default_value_t = 0.3)]
        duration: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Append renderer-synthesized entries on a position grid
    Augment {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        /// Grid corner "x,y,z"
        #[arg(long)]
        lo: String,
        /// Grid corner "x,y,z"
        #[arg(long)]
        hi: String,
        /// Grid counts "nx,ny,nz"
        #[arg(long)]
        counts: String,
        /// Synthesize through a fitted field blob instead of the ray tracer
        #[arg(long)]
        field: Option<PathBuf>,
        /// Ray-trace reflection order
        #[arg(long, default_value_t = 3)]
        bounces: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Estimate the position of a query RIR
    Query {
        #[arg(long)]
        db: PathBuf,
        /// Query RIR WAV
        #[arg(long)]
        query: PathBuf,
        /// Onset (ToF) of the query RIR, seconds
        #[arg(long, default_value_t = 0.0)]
        onset: f64,
        /// Neighbor count
        #[arg(short, default_value_t = 5)]
        k: usize,
    },
}

#[derive(Args, Serialize)]
struct BenchArgs {
    /// Scene description JSON (reference shoebox when omitted)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    scene: Option<PathBuf>,
}

fn parse_point(s: &str) -> Result<Point3<f64>> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("expected \"x,y,z\", got {s:?}")))?;
    if parts.len() != 3 {
        return Err(Error::Config(format!("expected 3 coordinates, got {}", parts.len())));
    }
    Ok(Point3::new(parts[0], parts[1], parts[2]))
}

fn parse_counts(s: &str) -> Result<[usize; 3]> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("expected \"nx,ny,nz\", got {s:?}")))?;
    if parts.len() != 3 {
        return Err(Error::Config("expected 3 counts".into()));
    }
    Ok([parts[0], parts[1], parts[2]])
}

fn load_json_config<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| Error::Format {
                path: p.display().to_string(),
                detail: e.to_string(),
            })
        }
    }
}

fn echo_config(name: &str, value: &impl Serialize) -> Result<()> {
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({ "command": name, "config": value }))?
    );
    Ok(())
}

pub fn run() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Chirp(args) => cmd_chirp(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Handshake(args) => cmd_handshake(args),
        Command::Extract(args) => cmd_extract(args),
        Command::Render(args) => cmd_render(args),
        Command::FitMaterials(args) => cmd_fit_materials(args),
        Command::FitField(args) => cmd_fit_field(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Edit(args) => cmd_edit(args),
        Command::Localize(args) => cmd_localize(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn cmd_chirp(args: ChirpArgs) -> Result<()> {
    echo_config("chirp", &args)?;
    let spec = ChirpSpec::new(args.f0, args.f1, args.dur, args.amp)?;
    let w = gen_chirp(&spec, args.fs)?;
    roomtwin::io::write_waveform(&args.output, &w)?;
    println!("wrote {} samples to {}", w.len(), args.output.display());
    Ok(())
}

/// Sidecar metadata for a simulated session directory.
#[derive(Debug, Serialize, Deserialize)]
struct SessionMeta {
    rx_t0: f64,
    tx_t0: f64,
    rx_emissions: Vec<f64>,
    tx_emissions: Vec<f64>,
    chirp_interval: f64,
    c1: ChirpSpec,
    c2: ChirpSpec,
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let mut file: SessionFile = load_json_config(&args.session)?;
    if let Some(seed) = args.seed {
        file.seed = seed;
    }
    if let Some(d) = args.duration {
        file.duration = d;
    }
    if let Some(snr) = args.snr {
        file.snr_db = Some(snr);
    }
    echo_config("simulate", &file)?;

    let scene = Scene::load(&args.scene)?;
    let to_traj = |w: &[Waypoint]| -> Result<Trajectory> {
        if w.len() == 1 {
            Ok(Trajectory::static_pose(w[0].pose))
        } else {
            Trajectory::waypoints(w.iter().map(|p| (p.t, p.pose)).collect())
        }
    };
    let config = SessionConfig {
        duration: file.duration,
        chirp_interval: file.chirp_interval,
        latency_range: file.latency_range,
        snr_db: file.snr_db,
        seed: file.seed,
        c1: file.c1,
        c2: file.c2,
        sample_rate: file.sample_rate,
        tx_trajectory: to_traj(&file.tx_waypoints)?,
        rx_trajectory: to_traj(&file.rx_waypoints)?,
        gains: DeviceGains::default(),
        max_bounces: file.max_bounces,
        channel_rir_duration: file.channel_rir_duration,
    };
    let sim = simulate_session(&scene, &config, &file.clock_tx, &file.clock_rx)?;

    std::fs::create_dir_all(&args.output)?;
    roomtwin::io::write_waveform(args.output.join("rx.wav"), &sim.rx.waveform)?;
    roomtwin::io::write_waveform(args.output.join("tx.wav"), &sim.tx.waveform)?;
    let meta = SessionMeta {
        rx_t0: sim.rx.waveform.t0,
        tx_t0: sim.tx.waveform.t0,
        rx_emissions: sim.rx.emissions.clone(),
        tx_emissions: sim.tx.emissions.clone(),
        chirp_interval: file.chirp_interval,
        c1: file.c1,
        c2: file.c2,
    };
    std::fs::write(
        args.output.join("session.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;
    std::fs::write(
        args.output.join("truth.jsonl"),
        roomtwin::handshake::truth_to_jsonl(&sim.truth)?,
    )?;
    println!(
        "simulated {} exchanges into {}",
        exchange_times(&config).len(),
        args.output.display()
    );
    Ok(())
}

fn cmd_handshake(args: HandshakeArgs) -> Result<()> {
    let meta_path = args.input.join("session.json");
    let meta: SessionMeta =
        serde_json::from_str(&std::fs::read_to_string(&meta_path).map_err(|e| Error::Format {
            path: meta_path.display().to_string(),
            detail: e.to_string(),
        })?)?;
    let mut cfg: ProtocolConfig = load_json_config(&args.config)?;
    cfg.chirp_interval = meta.chirp_interval;
    echo_config("handshake", &cfg)?;

    let mut rx_wave = roomtwin::io::read_waveform(args.input.join("rx.wav"))?;
    rx_wave.t0 = meta.rx_t0;
    let mut tx_wave = roomtwin::io::read_waveform(args.input.join("tx.wav"))?;
    tx_wave.t0 = meta.tx_t0;
    let rx = DeviceRecording { waveform: rx_wave, emissions: meta.rx_emissions };
    let tx = DeviceRecording { waveform: tx_wave, emissions: meta.tx_emissions };

    let out = run_protocol(&rx, &tx, &meta.c1, &meta.c2, &cfg)?;
    std::fs::create_dir_all(&args.output)?;
    let mut records = String::new();
    for (i, ex) in out.exchanges.iter().enumerate() {
        let name = format!("rir_{i:05}.wav");
        roomtwin::io::write_rir(args.output.join(&name), &ex.rir)?;
        records.push_str(&serde_json::to_string(&serde_json::json!({
            "record": ex.record,
            "tof": ex.tof,
            "rir": name,
            "onset": ex.rir.onset,
        }))?);
        records.push('\n');
    }
    std::fs::write(args.output.join("records.jsonl"), records)?;
    std::fs::write(
        args.output.join("report.json"),
        serde_json::to_string_pretty(&out.report)?,
    )?;
    println!(
        "paired {} exchanges (detection rate {:.4})",
        out.report.exchanges_paired, out.report.detection_rate
    );
    Ok(())
}

fn cmd_extract(args: ExtractArgs) -> Result<()> {
    echo_config("extract", &args)?;
    let recording = roomtwin::io::read_waveform(&args.recording)?;
    let chirp = gen_chirp(&ChirpSpec::new(args.f0, args.f1, args.dur, 1.0)?, recording.sample_rate)?;
    let rir = extract_rir(&recording, &chirp, args.arrival, args.duration)?;
    roomtwin::io::write_rir(&args.output, &rir)?;
    println!("wrote {} taps, onset {:.6} s", rir.len(), rir.onset);
    Ok(())
}

fn load_params(path: &Path, scene: &Scene) -> Result<roomtwin::estimate::EstimateParams> {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let raw: Vec<[f64; 7]> = serde_json::from_value(v["raw_reflectivity"].clone())?;
    if raw.len() != scene.segments.len() {
        return Err(Error::Config(format!(
            "params cover {} segments, scene has {}",
            raw.len(),
            scene.segments.len()
        )));
    }
    Ok(roomtwin::estimate::EstimateParams {
        raw_reflectivity: raw,
        raw_tx: serde_json::from_value(v["tx_sh"].clone())?,
        raw_rx: serde_json::from_value(v["rx_sh"].clone())?,
    })
}

fn cmd_render(args: RenderArgs) -> Result<()> {
    echo_config("render", &args)?;
    let scene = Scene::load(&args.scene)?;
    let tx = Pose::new(parse_point(&args.tx)?, nalgebra::UnitQuaternion::identity());
    let rx = Pose::new(parse_point(&args.rx)?, nalgebra::UnitQuaternion::identity());
    let grid = FrequencyGrid::for_duration(args.duration, roomtwin::SAMPLE_RATE)?;
    let rir = match &args.params {
        None => render_rir(&scene, &tx, &rx, &DeviceGains::default(), &grid, args.bounces, args.duration)?,
        Some(p) => {
            let params = load_params(p, &scene)?;
            roomtwin::estimate::render_with_params(
                &scene, &tx, &rx, &params, &grid, args.bounces, args.duration,
            )?
        }
    };
    roomtwin::io::write_rir(&args.output, &rir)?;
    if let Some(path) = &args.taps_json {
        std::fs::write(
            path,
            serde_json::to_string(&serde_json::json!({
                "onset": rir.onset,
                "sample_rate": rir.sample_rate,
                "taps": rir.taps,
            }))?,
        )?;
    }
    if let Some(path) = &args.paths_json {
        let paths = enumerate_paths(&scene, &tx.position, &rx.position, args.bounces)?;
        let list: Vec<serde_json::Value> = paths
            .iter()
            .map(|p| {
                serde_json::json!({
                    "length": p.length,
                    "segments": p.segments,
                    "points": p.points.iter().map(|q| [q.x, q.y, q.z]).collect::<Vec<_>>(),
                })
            })
            .collect();
        std::fs::write(path, serde_json::to_string(&list)?)?;
    }
    println!("rendered {} taps, onset {:.6} s", rir.len(), rir.onset);
    Ok(())
}

fn cmd_fit_materials(args: FitMaterialsArgs) -> Result<()> {
    let mut cfg: FitConfig = load_json_config(&args.config)?;
    if let Some(it) = args.iters {
        cfg.max_iters = it;
    }
    if let Some(b) = args.bounces {
        cfg.max_bounces = b;
    }
    echo_config("fit-materials", &cfg)?;
    let scene = Scene::load(&args.scene)?;
    let samples = read_dataset(&args.dataset)?;
    let result = fit_materials(&scene, &samples, &cfg)?;
    std::fs::write(
        &args.output,
        serde_json::to_string_pretty(&result.params.to_json())?,
    )?;
    if let Some(path) = &args.trace {
        std::fs::write(path, trace_to_csv(&result.loss_trace))?;
    }
    println!(
        "fit {} segments over {} samples, best loss {:.6e}",
        scene.segments.len(),
        samples.len(),
        result.best_loss
    );
    Ok(())
}

fn cmd_fit_field(args: FitFieldArgs) -> Result<()> {
    let mut cfg: FieldFitConfig = load_json_config(&args.config)?;
    if let Some(it) = args.iters {
        cfg.iters = it;
    }
    echo_config("fit-field", &cfg)?;
    let scene = Scene::load(&args.scene)?;
    let samples = read_dataset(&args.dataset)?;
    let fit = fit_field(&scene, &samples, &cfg)?;
    fit.model.save(&args.output)?;
    if let Some(path) = &args.trace {
        std::fs::write(path, trace_to_csv(&fit.loss_trace))?;
    }
    println!(
        "fit field: {} patches x {} bins, final loss {:.6e}",
        fit.model.num_patches,
        fit.model.bins,
        fit.loss_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn rir_sources(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    if path.is_dir() {
        let mut names: Vec<String> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".wav"))
            .collect();
        names.sort();
        Ok(names.into_iter().map(|n| (n.clone(), path.join(n))).collect())
    } else {
        Ok(vec![(
            path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            path.to_path_buf(),
        )])
    }
}

fn cmd_metrics(args: MetricsArgs) -> Result<()> {
    echo_config("metrics", &args)?;
    let a_list = rir_sources(&args.a)?;
    let b_list = rir_sources(&args.b)?;
    if a_list.len() != b_list.len() {
        return Err(Error::Config(format!(
            "{} RIRs in --a but {} in --b",
            a_list.len(),
            b_list.len()
        )));
    }
    let mut reports = Vec::new();
    for ((name, pa), (_, pb)) in a_list.iter().zip(b_list.iter()) {
        let wa = roomtwin::io::read_waveform(pa)?;
        let wb = roomtwin::io::read_waveform(pb)?;
        let ra = Rir::new(wa.samples, wa.sample_rate, 0.0)?;
        let rb = Rir::new(wb.samples, wb.sample_rate, 0.0)?;
        reports.push(roomtwin::metrics::compare(name, &ra, &rb)?);
    }
    std::fs::write(&args.output, roomtwin::metrics::reports_to_csv(&reports))?;
    println!("compared {} pairs into {}", reports.len(), args.output.display());
    Ok(())
}

fn cmd_edit(args: EditArgs) -> Result<()> {
    echo_config("edit", &args)?;
    let mut scene = Scene::load(&args.scene)?;
    let ops = load_edit_script(&args.script)?;
    let count = ops.len();
    for op in &ops {
        scene = apply_edit(&scene, op)?;
    }
    scene.save(&args.output, &args.name)?;
    println!(
        "applied {count} edits -> {}/{}.json ({} segments)",
        args.output.display(),
        args.name,
        scene.segments.len()
    );
    Ok(())
}

fn cmd_localize(args: LocalizeArgs) -> Result<()> {
    match args.action {
        LocalizeAction::Build { dataset, duration, output } => {
            echo_config(
                "localize-build",
                &serde_json::json!({"dataset": dataset, "duration": duration}),
            )?;
            let samples = read_dataset(&dataset)?;
            if samples.is_empty() {
                return Err(Error::Config("dataset is empty".into()));
            }
            let tx = samples[0].pose_tx;
            let entries: Vec<(Point3<f64>, Rir)> = samples
                .iter()
                .map(|s| (s.pose_rx.position, s.measured.clone()))
                .collect();
            let db = RirDatabase::build(tx, &entries, duration)?;
            db.save(&output)?;
            println!("built database with {} entries", db.entries.len());
        }
        LocalizeAction::Augment { db, scene, lo, hi, counts, field, bounces, output } => {
            echo_config(
                "localize-augment",
                &serde_json::json!({"db": db, "scene": scene, "lo": lo, "hi": hi, "counts": counts, "field": field, "bounces": bounces}),
            )?;
            let base = RirDatabase::load(&db)?;
            let scene = Scene::load(&scene)?;
            let grid_pts = position_grid(parse_point(&lo)?, parse_point(&hi)?, parse_counts(&counts)?);
            let augmented = match &field {
                Some(fp) => {
                    let model = FieldModel::load(fp)?;
                    base.augment(&FieldSynth { scene: &scene, model: &model }, &grid_pts)?
                }
                None => {
                    let grid = FrequencyGrid::for_duration(base.duration, base.sample_rate)?;
                    base.augment(
                        &RaytraceSynth {
                            scene: &scene,
                            tx_pose: base.tx_pose,
                            gains: DeviceGains::default(),
                            grid,
                            max_bounces: bounces,
                            duration: base.duration,
                        },
                        &grid_pts,
                    )?
                }
            };
            augmented.save(&output)?;
            println!(
                "augmented {} -> {} entries",
                base.entries.len(),
                augmented.entries.len()
            );
        }
        LocalizeAction::Query { db, query, onset, k } => {
            echo_config(
                "localize-query",
                &serde_json::json!({"db": db, "query": query, "onset": onset, "k": k}),
            )?;
            let base = RirDatabase::load(&db)?;
            let w = roomtwin::io::read_waveform(&query)?;
            let rir = Rir::new(w.samples, w.sample_rate, onset)?;
            let p = base.localize(&rir, k)?;
            println!(
                "{}",
                serde_json::json!({"position": [p.x, p.y, p.z], "k": k})
            );
        }
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    echo_config("bench", &args)?;
    let scene = match &args.scene {
        Some(p) => Scene::load(p)?,
        None => Scene::shoebox_uniform(
            [4.0, 5.0, 3.0],
            MaterialSpectrum::flat(0.8).unwrap(),
            roomtwin::SPEED_OF_SOUND,
        )?,
    };
    let tx = Pose::at(1.0, 2.0, 1.2);
    let rx = Pose::at(3.0, 3.5, 1.8);
    let grid = FrequencyGrid::for_duration(0.3, roomtwin::SAMPLE_RATE)?;

    let start = std::time::Instant::now();
    let rir = render_rir(&scene, &tx, &rx, &DeviceGains::default(), &grid, 8, 0.3)?;
    let raytrace_ms = start.elapsed().as_secs_f64() * 1e3;

    let model = FieldModel::new(&scene, tx, 256, rir.len(), 1024, roomtwin::SAMPLE_RATE)?;
    let start = std::time::Instant::now();
    let _ = model.render(&scene, &rx)?;
    let field_ms = start.elapsed().as_secs_f64() * 1e3;

    println!("raytrace render (0.3 s, 8 bounces): {raytrace_ms:.2} ms");
    println!("field render (0.3 s, K = 1024):     {field_ms:.2} ms");
    println!("field/raytrace ratio:               {:.2}x", field_ms / raytrace_ms.max(1e-9));
    Ok(())
}

/// Maps library errors to exit code 1 with a diagnostic on stderr; clap
/// handles usage errors with exit code 2.
pub fn main_with_exit() -> ! {
    match run() {
        Ok(()) => std::process::exit(0),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
