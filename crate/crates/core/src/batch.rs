//! Dataset-level driver: every image of a directory at every rainfall rate.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{RainError, Result};
use crate::pipeline::{render_rain_detailed, RenderOptions, RenderReport, StreakSource};
use crate::scene::{
    load_calibration, load_depth, load_image, CalibrationDoc, ColorSpace, DepthEncoding,
    OutputBits, RainfallConfig,
};
use crate::streak::{load_streak_library, StreakLibrary};

pub const DEFAULT_RATES: [f64; 6] = [0.0, 5.0, 25.0, 50.0, 100.0, 200.0];

fn default_rates() -> Vec<f64> {
    DEFAULT_RATES.to_vec()
}

fn default_streaks() -> String {
    "procedural".into()
}

fn default_depth_scale() -> f64 {
    1.0 / 256.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobConfig {
    pub images: PathBuf,
    pub depth: PathBuf,
    pub calib: PathBuf,
    #[serde(default = "default_rates")]
    pub rates: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    pub out: PathBuf,
    /// `"procedural"` or a streak library directory.
    #[serde(default = "default_streaks")]
    pub streaks: String,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub fog_only: bool,
    #[serde(default)]
    pub debug_dumps: bool,
    #[serde(default)]
    pub depth_occlusion: bool,
    /// Multiplier turning stored depth values into meters.
    #[serde(default = "default_depth_scale")]
    pub depth_scale: f64,
    /// Resample depth maps whose size differs from the image.
    #[serde(default)]
    pub resample_depth: bool,
    #[serde(default)]
    pub bits16: bool,
    /// Report path; defaults to `<out>/report.jsonl`.
    #[serde(default)]
    pub report: Option<PathBuf>,
    /// Physical settings other than rate and seed.
    #[serde(default)]
    pub rainfall: RainfallConfig,
    #[serde(default)]
    pub render: RenderOptions,
}

impl JobConfig {
    pub fn new(images: PathBuf, depth: PathBuf, calib: PathBuf, out: PathBuf) -> Self {
        Self {
            images,
            depth,
            calib,
            rates: default_rates(),
            seed: 0,
            out,
            streaks: default_streaks(),
            workers: 0,
            fog_only: false,
            debug_dumps: false,
            depth_occlusion: false,
            depth_scale: default_depth_scale(),
            resample_depth: false,
            bits16: false,
            report: None,
            rainfall: RainfallConfig::default(),
            render: RenderOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() {
            return Err(RainError::invalid("no rainfall rates given"));
        }
        if let Some(r) = self.rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(RainError::invalid(format!("rainfall rate {r} must be >= 0")));
        }
        if !(self.depth_scale.is_finite() && self.depth_scale > 0.0) {
            return Err(RainError::invalid("depth scale must be positive"));
        }
        Ok(())
    }

    pub fn report_path(&self) -> PathBuf {
        self.report.clone().unwrap_or_else(|| self.out.join("report.jsonl"))
    }
}

/// One line of the batch report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub image: String,
    pub rate_mm_hr: f64,
    pub seed: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<RenderReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub records: Vec<ReportRecord>,
    pub outputs: usize,
    pub failures: usize,
    pub report_path: PathBuf,
}

impl BatchSummary {
    pub fn success(&self) -> bool {
        self.failures == 0
    }
}

/// Progress notification, sent once per finished (image, rate) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchProgress {
    pub done: usize,
    pub total: usize,
    pub image: String,
    pub rate_mm_hr: f64,
    pub ok: bool,
}

/// Seed for one (image, rate) pair, independent of processing order.
pub fn derive_seed(job_seed: u64, image_name: &str, rate_mm_hr: f64) -> u64 {
    let mut h = Sha256::new();
    h.update(job_seed.to_le_bytes());
    h.update(image_name.as_bytes());
    h.update(rate_mm_hr.to_bits().to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

/// Output directory name for a rate, e.g. `50mm` or `2.5mm`.
pub fn rate_dir_name(rate_mm_hr: f64) -> String {
    format!("{rate_mm_hr}mm")
}

/// Image files of `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| RainError::io(dir, e))?;
    let mut images = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| RainError::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
            images.push(path);
        }
    }
    images.sort();
    Ok(images)
}

/// Depth file matching an image stem: `<stem>.png`, then `<stem>.f32`, `.bin`, `.raw`.
pub fn find_depth(dir: &Path, stem: &str) -> Option<PathBuf> {
    ["png", "f32", "bin", "raw"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

struct Task {
    image: PathBuf,
    name: String,
    rate: f64,
}

struct Shared<'a> {
    job: &'a JobConfig,
    calib: &'a CalibrationDoc,
    library: Option<&'a StreakLibrary>,
}

/// Run the whole job. Per-image failures are recorded and do not stop the
/// batch; setup errors (calibration, streak library, output directory) do.
pub fn run_batch(job: &JobConfig, progress: &(dyn Fn(&BatchProgress) + Sync)) -> Result<BatchSummary> {
    job.validate()?;
    let calib = load_calibration(&job.calib)?;
    let library = match job.streaks.as_str() {
        "procedural" => None,
        dir => Some(load_streak_library(Path::new(dir))?),
    };
    fs::create_dir_all(&job.out).map_err(|e| RainError::io(&job.out, e))?;
    for rate in &job.rates {
        let dir = job.out.join(rate_dir_name(*rate));
        fs::create_dir_all(&dir).map_err(|e| RainError::io(&dir, e))?;
    }

    let images = list_images(&job.images)?;
    let tasks: Vec<Task> = images
        .iter()
        .flat_map(|image| {
            let name = image
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            job.rates.iter().map(move |&rate| Task {
                image: image.clone(),
                name: name.clone(),
                rate,
            })
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(job.workers)
        .build()
        .map_err(|e| RainError::invalid(format!("worker pool: {e}")))?;
    let shared = Shared {
        job,
        calib: &calib,
        library: library.as_ref(),
    };
    let done = std::sync::atomic::AtomicUsize::new(0);
    let total = tasks.len();
    let mut records: Vec<ReportRecord> = pool.install(|| {
        tasks
            .par_iter()
            .map(|task| {
                let record = run_task(&shared, task);
                let n = done.fetch_add(1, std::sync::atomic::Ordering::SeqCst) + 1;
                progress(&BatchProgress {
                    done: n,
                    total,
                    image: task.name.clone(),
                    rate_mm_hr: task.rate,
                    ok: record.ok,
                });
                record
            })
            .collect()
    });
    records.sort_by(|a, b| a.rate_mm_hr.total_cmp(&b.rate_mm_hr).then_with(|| a.image.cmp(&b.image)));

    let report_path = job.report_path();
    if let Some(parent) = report_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| RainError::io(parent, e))?;
    }
    let mut file = fs::File::create(&report_path).map_err(|e| RainError::io(&report_path, e))?;
    for r in &records {
        let line = serde_json::to_string(r).map_err(|e| RainError::Encode(e.to_string()))?;
        writeln!(file, "{line}").map_err(|e| RainError::io(&report_path, e))?;
    }

    let failures = records.iter().filter(|r| !r.ok).count();
    Ok(BatchSummary {
        outputs: records.len() - failures,
        failures,
        records,
        report_path,
    })
}

fn run_task(shared: &Shared<'_>, task: &Task) -> ReportRecord {
    let seed = derive_seed(shared.job.seed, &task.name, task.rate);
    let mut record = ReportRecord {
        image: task.name.clone(),
        rate_mm_hr: task.rate,
        seed,
        ok: false,
        output: None,
        error: None,
        report: None,
    };
    match render_task(shared, task, seed) {
        Ok((output, report)) => {
            record.ok = true;
            record.output = Some(output);
            record.report = Some(report);
        }
        Err(e) => record.error = Some(e.for_image(&task.name).to_string()),
    }
    record
}

fn render_task(shared: &Shared<'_>, task: &Task, seed: u64) -> Result<(PathBuf, RenderReport)> {
    let job = shared.job;
    let stem = task
        .image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let camera = shared.calib.camera_for_frame(&stem)?;
    let image = load_image(&task.image, ColorSpace::Srgb)?;
    let depth_path = find_depth(&job.depth, &stem).ok_or_else(|| {
        RainError::io(
            job.depth.join(format!("{stem}.png")),
            std::io::Error::new(std::io::ErrorKind::NotFound, "no depth map for image"),
        )
    })?;
    let encoding = DepthEncoding::from_path(&depth_path).unwrap_or(DepthEncoding::Png16Scaled);
    let depth = load_depth(&depth_path, encoding, job.depth_scale)?
        .matched_to(image.width(), image.height(), job.resample_depth)?;

    let config = RainfallConfig {
        rate_mm_hr: task.rate,
        seed,
        ..job.rainfall.clone()
    };
    let options = RenderOptions {
        fog_only: job.fog_only || job.render.fog_only,
        depth_occlusion: job.depth_occlusion || job.render.depth_occlusion,
        ..job.render.clone()
    };
    let source = match shared.library {
        Some(lib) => StreakSource::Library(lib),
        None => StreakSource::Procedural,
    };
    let out = render_rain_detailed(&image, &depth, &camera, &config, &options, source)?;

    let rate_dir = job.out.join(rate_dir_name(task.rate));
    let output = rate_dir.join(format!("{stem}.png"));
    let bits = if job.bits16 {
        OutputBits::Sixteen
    } else {
        OutputBits::Eight
    };
    out.image.save_png(&output, bits, ColorSpace::Srgb)?;

    if job.debug_dumps {
        let debug = job.out.join("debug").join(rate_dir_name(task.rate));
        fs::create_dir_all(&debug).map_err(|e| RainError::io(&debug, e))?;
        let table = debug.join(format!("{stem}_drops.txt"));
        fs::write(&table, out.population.dump_table()).map_err(|e| RainError::io(&table, e))?;
        if let Some(env) = &out.environment {
            env.to_image()?
                .save_png(&debug.join(format!("{stem}_envmap.png")), OutputBits::Eight, ColorSpace::Srgb)?;
        }
    }
    Ok((output, out.report))
}
