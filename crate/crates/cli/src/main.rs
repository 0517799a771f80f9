use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use kinetrack::eval::{run_ideal, run_named, PipelineConfig, EXPERIMENTS};
use kinetrack::io::{self, RunConfig};
use kinetrack::synth::{integrate_truth, synthesize_imu};

mod serve;

#[derive(Parser)]
#[command(name = "kinetrack", version, about = "Drift-corrected orientation tracking for IMU limb chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TraceFormat {
    Csv,
    Bin,
}

#[derive(Subcommand)]
enum Command {
    /// Generate ground truth and IMU traces from a run config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: TraceFormat,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the estimator over previously simulated IMU traces.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        /// Directory holding the traces; defaults to `output.dir`.
        #[arg(long)]
        traces: Option<PathBuf>,
        /// Pose log path; defaults to `output.dir/output.pose_log`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named experiment and write its report.
    Evaluate {
        #[arg(long)]
        experiment: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Run config whose noise, filter, chain and rates override the
        /// experiment defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Simulate a bus in real time and serve the hub's pose snapshot.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Simulated seconds per wall-clock second; 0 runs unpaced.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Stop serving this many seconds after the data runs out.
        #[arg(long)]
        linger: Option<f64>,
    },
    /// Convert an IMU trace between CSV and binary.
    Export {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum)]
        format: TraceFormat,
    },
}

fn load_config(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path).with_context(|| format!("loading config {}", path.display()))
}

fn trace_path(dir: &Path, prefix: &str, sensor: usize, format: TraceFormat) -> PathBuf {
    let ext = match format {
        TraceFormat::Csv => "csv",
        TraceFormat::Bin => "bin",
    };
    dir.join(format!("{prefix}{sensor}.{ext}"))
}

fn simulate(config: &Path, out: Option<PathBuf>, format: TraceFormat, seed: Option<u64>) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(dir) = out {
        cfg.output.dir = dir;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let truth = integrate_truth(&cfg.chain, &cfg.trajectory)?;
    let streams = synthesize_imu(&truth, &cfg.chain, &cfg.noise.clone().with_seed(cfg.seed))?;
    io::save_truth_csv(&cfg.output.truth_path(), &truth)?;
    for s in &streams {
        let path = trace_path(&cfg.output.dir, &cfg.output.imu_prefix, s.sensor_id, format);
        match format {
            TraceFormat::Csv => io::save_imu_csv(&path, s)?,
            TraceFormat::Bin => io::save_imu_binary(&path, s)?,
        }
    }
    cfg.save(&cfg.output.dir.join("run.toml"))?;
    println!(
        "wrote {} samples for {} sensors to {}",
        truth.len(),
        streams.len(),
        cfg.output.dir.display()
    );
    Ok(())
}

fn estimate(config: &Path, traces: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(config)?;
    let dir = traces.unwrap_or_else(|| cfg.output.dir.clone());
    let mut streams = Vec::with_capacity(cfg.chain.len());
    for id in 0..cfg.chain.len() {
        let csv = trace_path(&dir, &cfg.output.imu_prefix, id, TraceFormat::Csv);
        let bin = trace_path(&dir, &cfg.output.imu_prefix, id, TraceFormat::Bin);
        let path = if csv.exists() { csv } else { bin };
        let s = io::load_imu(&path).with_context(|| format!("reading trace for sensor {id}"))?;
        if s.sensor_id != id {
            bail!("{} holds sensor {}, expected {id}", path.display(), s.sensor_id);
        }
        streams.push(s);
    }
    let initial: Vec<_> = cfg.trajectory.limbs.iter().map(|l| l.initial).collect();
    let pipe = PipelineConfig {
        params: cfg.filter,
        mode: cfg.prediction,
        correction_hz: cfg.correction_hz,
    };
    let run = run_ideal(&cfg.chain, &streams, &initial, &pipe)?;
    let times: Vec<f64> = streams[0].samples.iter().map(|s| s.t).collect();
    let path = out.unwrap_or_else(|| cfg.output.pose_log_path());
    io::save_pose_log(&path, &times, &run)?;
    println!(
        "estimated {} samples, {} corrections; poses in {}",
        times.len(),
        run.corrections.len(),
        path.display()
    );
    Ok(())
}

fn evaluate(experiment: &str, seed: Option<u64>, config: Option<PathBuf>, out: &Path) -> Result<()> {
    if !EXPERIMENTS.contains(&experiment) {
        bail!(
            "unknown experiment `{experiment}`; expected one of {}",
            EXPERIMENTS.join(", ")
        );
    }
    let mut overrides = match &config {
        Some(p) => load_config(p)?.overrides(),
        None => Default::default(),
    };
    if seed.is_some() {
        overrides.seed = seed;
    }
    let outcome = run_named(experiment, &overrides)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let stem = out.join(experiment);
    let write = |ext: &str, body: &str| -> Result<()> {
        let p = stem.with_extension(ext);
        std::fs::write(&p, body).with_context(|| format!("writing {}", p.display()))
    };
    write("csv", &outcome.report.to_csv())?;
    write("json", &outcome.report.to_json())?;
    if let Some(plot) = &outcome.plot {
        write("dat", plot)?;
    }
    print!("{}", outcome.report.to_csv());
    Ok(())
}

fn export(input: &Path, output: &Path, format: TraceFormat) -> Result<()> {
    let stream = io::load_imu(input).with_context(|| format!("reading {}", input.display()))?;
    match format {
        TraceFormat::Csv => io::save_imu_csv(output, &stream)?,
        TraceFormat::Bin => io::save_imu_binary(output, &stream)?,
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate {
            config,
            out,
            format,
            seed,
        } => simulate(&config, out, format, seed),
        Command::Estimate {
            config,
            traces,
            out,
        } => estimate(&config, traces, out),
        Command::Evaluate {
            experiment,
            seed,
            config,
            out,
        } => evaluate(&experiment, seed, config, &out),
        Command::Serve {
            config,
            port,
            host,
            speed,
            linger,
        } => {
            let cfg = load_config(&config)?;
            serve::run(cfg, &host, port, speed, linger)
        }
        Command::Export {
            input,
            output,
            format,
        } => export(&input, &output, format),
    }
}
