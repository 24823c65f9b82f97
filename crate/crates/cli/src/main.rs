use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::Parser;
use rain_client::RainClient;
use rain_core::batch::{JobConfig, DEFAULT_RATES};
use rain_core::wire::JobState;

/// Add physically based rain to a directory of images at several rainfall rates.
#[derive(Parser, Debug)]
#[command(name = "rain-augment", version)]
struct Args {
    /// Directory of input images (PNG or JPEG).
    #[arg(long)]
    images: PathBuf,
    /// Directory of depth maps named after the image stems (.png or .f32).
    #[arg(long)]
    depth: PathBuf,
    /// Calibration JSON file.
    #[arg(long)]
    calib: PathBuf,
    /// Rainfall rates in mm/hr.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_RATES)]
    rates: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; images go to <out>/<rate>mm/<name>.png.
    #[arg(long)]
    out: PathBuf,
    /// Streak library directory, or "procedural".
    #[arg(long, default_value = "procedural")]
    streaks: String,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Write only the fog layer.
    #[arg(long)]
    fog_only: bool,
    /// Report file (JSON lines); defaults to <out>/report.jsonl.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Also write drop tables and environment maps under <out>/debug.
    #[arg(long)]
    debug_dumps: bool,
    /// Hide streak pixels behind scene geometry.
    #[arg(long)]
    depth_occlusion: bool,
    /// Multiplier from stored depth values to meters.
    #[arg(long, default_value_t = 1.0 / 256.0)]
    depth_scale: f64,
    /// Resample depth maps whose size differs from the image.
    #[arg(long)]
    resample_depth: bool,
    /// Write 16-bit PNGs.
    #[arg(long)]
    bits16: bool,
    /// Use a running service instead of an embedded one, e.g. http://127.0.0.1:8080.
    #[arg(long)]
    server: Option<String>,
}

fn absolute(path: &Path) -> anyhow::Result<PathBuf> {
    if path.exists() {
        path.canonicalize()
            .with_context(|| format!("resolving {}", path.display()))
    } else {
        Ok(std::env::current_dir()?.join(path))
    }
}

fn job_from_args(args: &Args) -> anyhow::Result<JobConfig> {
    for (flag, path) in [("--images", &args.images), ("--depth", &args.depth)] {
        if !path.is_dir() {
            bail!("{flag} {} is not a directory", path.display());
        }
    }
    if !args.calib.is_file() {
        bail!("--calib {} is not a file", args.calib.display());
    }
    let mut job = JobConfig::new(
        absolute(&args.images)?,
        absolute(&args.depth)?,
        absolute(&args.calib)?,
        absolute(&args.out)?,
    );
    job.rates = args.rates.clone();
    job.seed = args.seed;
    job.streaks = if args.streaks == "procedural" {
        args.streaks.clone()
    } else {
        absolute(Path::new(&args.streaks))?.to_string_lossy().into_owned()
    };
    job.workers = args.workers;
    job.fog_only = args.fog_only;
    job.debug_dumps = args.debug_dumps;
    job.depth_occlusion = args.depth_occlusion;
    job.depth_scale = args.depth_scale;
    job.resample_depth = args.resample_depth;
    job.bits16 = args.bits16;
    job.report = args.report.as_deref().map(absolute).transpose()?;
    job.validate()?;
    Ok(job)
}

async fn run(args: Args) -> anyhow::Result<bool> {
    let job = job_from_args(&args)?;
    let (client, _server) = match &args.server {
        Some(url) => (RainClient::new(url.clone()), None),
        None => {
            let (addr, handle) = rain_service::spawn(SocketAddr::from(([127, 0, 0, 1], 0)))
                .await
                .context("starting embedded service")?;
            tracing::debug!(%addr, "embedded service");
            (RainClient::new(format!("http://{addr}")), Some(handle))
        }
    };
    client
        .health()
        .await
        .with_context(|| format!("service at {} is not reachable", client.base_url()))?;

    let id = client.submit_job(&job).await?;
    let status = client
        .wait_for_job(id, Duration::from_millis(100), |s| {
            if s.total > 0 {
                eprintln!("[{}/{}] rendered", s.done, s.total);
            }
        })
        .await?;

    if status.state == JobState::Failed {
        bail!("job failed: {}", status.error.unwrap_or_default());
    }
    let summary = status.summary.context("finished job has no summary")?;
    for r in summary.records.iter().filter(|r| !r.ok) {
        eprintln!(
            "failed: {} at {} mm/hr: {}",
            r.image,
            r.rate_mm_hr,
            r.error.as_deref().unwrap_or("unknown error")
        );
    }
    println!(
        "{} outputs, {} failures, report: {}",
        summary.outputs,
        summary.failures,
        summary.report_path.display()
    );
    Ok(summary.success())
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Args::parse()).await {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
