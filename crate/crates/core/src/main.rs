//! `srploc` command line: `locate`, `simulate`, `eval`.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use srploc::eval::{read_trajectory_csv, report, write_trajectory_csv, TrajectoryRecord};
use srploc::pipeline::{self, RunConfig};
use srploc::sim::{render, SceneSpec, SourceSignal, DEFAULT_TRUTH_INTERVAL_S};
use srploc::srp::PoolingSpec;
use srploc::wav::{read_wav, write_wav_f32, Audio};

#[derive(Parser)]
#[command(name = "srploc", version, about = "Multichannel sound source localization (SRP-PHAT)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Localize a multichannel WAV file over a spherical DOA grid.
    Locate(LocateArgs),
    /// Render a far-field scene with known DOA into a WAV plus ground truth.
    Simulate(SimulateArgs),
    /// Score an estimate CSV against a reference trajectory.
    Eval(EvalArgs),
}

#[derive(Args)]
struct LocateArgs {
    /// Geometry config file (TOML).
    #[arg(long)]
    geometry: PathBuf,
    /// Multichannel input WAV.
    #[arg(long)]
    input: PathBuf,
    /// Output estimate CSV.
    #[arg(long)]
    out: PathBuf,
    /// Analysis block length in milliseconds.
    #[arg(long, default_value_t = 512)]
    block_ms: u32,
    /// Block hop in milliseconds.
    #[arg(long, default_value_t = 256)]
    hop_ms: u32,
    /// STFT frame length in samples (50% overlap).
    #[arg(long = "fft", default_value_t = 1024)]
    n_fft: usize,
    /// Processing sample rate; the input must decimate to it by an integer factor.
    #[arg(long = "fs", default_value_t = 16000)]
    target_fs: u32,
    /// DOA grid resolution in degrees (azimuth and elevation).
    #[arg(long, default_value_t = 1.0)]
    grid_res: f64,
    /// Per-pair AOA axis resolution in degrees.
    #[arg(long, default_value_t = 5.0)]
    aoa_res: f64,
    /// Pooling: 'sum,sum,max' (pairs,freq,time) or labeled 'time:max,pairs:sum,freq:sum'.
    #[arg(long, default_value = "sum,sum,max")]
    pooling: String,
    /// Drop pairs whose central angle from the array center is below this.
    #[arg(long, default_value_t = 0.0)]
    min_pair_angle: f64,
    /// Speed of sound in m/s.
    #[arg(long, default_value_t = 343.0)]
    speed_of_sound: f64,
    /// Frequency band LOW:HIGH in Hz, e.g. 300:4000.
    #[arg(long)]
    band: Option<String>,
    /// CSV of query timestamps; estimates are interpolated onto them.
    #[arg(long)]
    timestamps: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Geometry config file (TOML).
    #[arg(long)]
    geometry: PathBuf,
    /// Source azimuth in degrees (static scene).
    #[arg(long, required_unless_present = "traj", allow_negative_numbers = true)]
    az: Option<f64>,
    /// Source elevation in degrees (static scene).
    #[arg(long, required_unless_present = "traj", allow_negative_numbers = true)]
    el: Option<f64>,
    /// Trajectory CSV (time_s,azimuth_deg,elevation_deg); overrides --az/--el.
    #[arg(long)]
    traj: Option<PathBuf>,
    /// Scene length in seconds.
    #[arg(long)]
    duration: f64,
    /// Render sample rate.
    #[arg(long = "fs", default_value_t = 16000)]
    fs: u32,
    /// Per-channel sensor-noise SNR in dB; omit for a noiseless render.
    /// Requires an explicit --seed.
    #[arg(long)]
    snr: Option<f64>,
    /// RNG seed for the white-noise source and sensor noise. Defaults to 0,
    /// but must be given explicitly together with --snr.
    #[arg(long)]
    seed: Option<u64>,
    /// Mono WAV to emit instead of white noise (must match --fs).
    #[arg(long)]
    source_wav: Option<PathBuf>,
    /// Output multichannel WAV (32-bit float).
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth CSV output.
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Estimate CSV.
    #[arg(long)]
    est: PathBuf,
    /// Reference trajectory CSV.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Success thresholds in degrees.
    #[arg(long, default_value = "10,20", value_delimiter = ',')]
    thresholds: Vec<f64>,
    /// Emit the report as JSON instead of a text table.
    #[arg(long)]
    json: bool,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Locate(args) => run_locate(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Eval(args) => run_eval(args),
    };
    if let Err(err) = outcome {
        // Single machine-parsable line: "error: <cause>[: <cause>...]"
        let mut line = String::from("error: ");
        line.push_str(&err.chain().map(|c| c.to_string()).collect::<Vec<_>>().join(": "));
        eprintln!("{}", line.replace('\n', " "));
        std::process::exit(1);
    }
}

fn run_locate(args: LocateArgs) -> Result<()> {
    let pooling: PoolingSpec = args.pooling.parse()?;
    let band_hz = match &args.band {
        None => None,
        Some(raw) => {
            let (lo, hi) = raw
                .split_once(':')
                .with_context(|| format!("--band expects LOW:HIGH, got '{raw}'"))?;
            Some((
                lo.trim().parse::<f64>().with_context(|| format!("bad band low '{lo}'"))?,
                hi.trim().parse::<f64>().with_context(|| format!("bad band high '{hi}'"))?,
            ))
        }
    };
    let config = RunConfig {
        geometry_path: args.geometry,
        input_path: args.input,
        output_path: args.out.clone(),
        timestamps_path: args.timestamps,
        block_ms: args.block_ms,
        hop_ms: args.hop_ms,
        n_fft: args.n_fft,
        target_fs: args.target_fs,
        grid_res_deg: args.grid_res,
        aoa_res_deg: args.aoa_res,
        pooling,
        min_pair_angle_deg: args.min_pair_angle,
        speed_of_sound: args.speed_of_sound,
        band_hz,
    };
    let summary = pipeline::locate(&config)?;
    log::info!(
        "wrote {} estimates from {} blocks to {}",
        summary.n_estimates,
        summary.n_blocks,
        args.out.display()
    );
    Ok(())
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    if args.snr.is_some_and(f64::is_finite) && args.seed.is_none() {
        bail!("--snr requires an explicit --seed");
    }
    let seed = args.seed.unwrap_or(0);
    let named = pipeline::read_geometry(&args.geometry)?;
    let trajectory = match &args.traj {
        Some(path) => {
            let file = std::fs::File::open(path)
                .with_context(|| format!("cannot open trajectory '{}'", path.display()))?;
            read_trajectory_csv(std::io::BufReader::new(file))?
        }
        None => vec![TrajectoryRecord::new(
            0.0,
            args.az.expect("clap enforces az without traj"),
            args.el.expect("clap enforces el without traj"),
        )?],
    };
    let source = match &args.source_wav {
        None => SourceSignal::WhiteNoise,
        Some(path) => {
            let audio = read_wav(path)?;
            if audio.n_channels() != 1 {
                bail!("source '{}' must be mono, has {} channels", path.display(), audio.n_channels());
            }
            if audio.fs != args.fs {
                bail!("source '{}' is at {} Hz, scene wants {} Hz", path.display(), audio.fs, args.fs);
            }
            SourceSignal::Samples(audio.channels.into_iter().next().unwrap())
        }
    };
    let scene = SceneSpec {
        geometry: named.geometry,
        trajectory,
        source,
        snr_db: args.snr,
        fs: args.fs,
        duration_s: args.duration,
        speed_of_sound: srploc::geometry::DEFAULT_SPEED_OF_SOUND,
        seed: Some(seed),
        truth_interval_s: DEFAULT_TRUTH_INTERVAL_S,
    };
    let rendered = render(&scene)?;
    write_wav_f32(&args.out, &Audio { channels: rendered.channels, fs: rendered.fs })?;
    let truth_file = std::fs::File::create(&args.truth)
        .with_context(|| format!("cannot create '{}'", args.truth.display()))?;
    write_trajectory_csv(std::io::BufWriter::new(truth_file), &rendered.truth)?;
    log::info!(
        "rendered {:.2} s for '{}' to {} (truth: {})",
        args.duration,
        named.name,
        args.out.display(),
        args.truth.display()
    );
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let open = |path: &PathBuf| -> Result<Vec<TrajectoryRecord>> {
        let file = std::fs::File::open(path)
            .with_context(|| format!("cannot open '{}'", path.display()))?;
        read_trajectory_csv(std::io::BufReader::new(file))
            .with_context(|| format!("'{}'", path.display()))
    };
    let estimates = open(&args.est)?;
    let reference = open(&args.reference)?;
    let rep = report(&estimates, &reference, &args.thresholds)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&rep)?);
    } else {
        print!("{}", rep.render_table());
    }
    Ok(())
}
