//! Acceptance criteria. Run with
//! `cargo test -p rain-core --test acceptance -- --nocapture --test-threads=1`
//! to see one PASS/FAIL line per criterion.

use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use rain_core::batch::{run_batch, JobConfig};
use rain_core::fog::hg_phase;
use rain_core::illumination::sphere_intersect;
use rain_core::physics::{marshall_palmer_lambda, sample_diameters, simulate_seeded, DropClass};
use rain_core::scene::{encode_float_raster, load_image, ColorSpace, OutputBits};
use rain_core::streak::{procedural_streak, sprite_quad, streak_quad, Homography};
use rain_core::{render_rain, CameraModel, DepthMap, ImageBuffer, RainfallConfig, RenderOptions, StreakSource};

fn verdict(id: &str, name: &str, pass: bool, detail: String) {
    println!(
        "ACCEPTANCE {id} {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id} failed: {detail}");
}

fn kitti_camera() -> CameraModel {
    CameraModel {
        fx: 721.5377,
        fy: 721.5377,
        cx: 609.5593,
        cy: 172.854,
        width: 1242,
        height: 375,
        focal_m: 0.006,
        f_number: 2.0,
        focus_plane_m: 6.0,
        exposure_s: 0.002,
        ego_velocity: Vector3::zeros(),
    }
}

fn kitti_calibration_json() -> &'static str {
    r#"{"fx": 721.5377, "fy": 721.5377, "cx": 609.5593, "cy": 172.854,
        "width": 1242, "height": 375, "focal_m": 0.006, "f_number": 2.0,
        "exposure_s": "0.002"}"#
}

/// Street-like synthetic scene: bright sky over darker ground with texture.
fn synthetic_scene(width: usize, height: usize, variant: u64) -> (ImageBuffer, DepthMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(variant);
    let sky = [0.5 + 0.3 * rng.random::<f32>(), 0.55 + 0.3 * rng.random::<f32>(), 0.7 + 0.25 * rng.random::<f32>()];
    let ground = [0.1 + 0.2 * rng.random::<f32>(), 0.1 + 0.2 * rng.random::<f32>(), 0.1 + 0.15 * rng.random::<f32>()];
    let horizon = 0.35 + 0.2 * rng.random::<f32>();
    let image = ImageBuffer::from_fn(width, height, |x, y| {
        let t = y as f32 / height as f32;
        let texture = 0.05 * (((x / 9 + y / 7) % 5) as f32 / 4.0);
        let base = if t < horizon { sky } else { ground };
        base.map(|c| c + texture)
    })
    .unwrap();
    let depth = (0..width * height)
        .map(|i| {
            let t = (i / width) as f32 / height as f32;
            if t < horizon {
                1000.0
            } else {
                (4.0 / (t - horizon + 0.05)).min(80.0)
            }
        })
        .collect();
    (image, DepthMap::from_raw(width, height, depth).unwrap())
}

fn write_scene_dataset(root: &Path, count: u64, width: usize, height: usize) {
    let (images, depth) = (root.join("images"), root.join("depth"));
    fs::create_dir_all(&images).unwrap();
    fs::create_dir_all(&depth).unwrap();
    for i in 0..count {
        let (img, d) = synthetic_scene(width, height, i);
        img.save_png(&images.join(format!("{i:06}.png")), OutputBits::Eight, ColorSpace::Srgb)
            .unwrap();
        fs::write(depth.join(format!("{i:06}.f32")), encode_float_raster(&d)).unwrap();
    }
    fs::write(root.join("calib.json"), kitti_calibration_json()).unwrap();
}

fn job(root: &Path, out: &str, rates: Vec<f64>, workers: usize) -> JobConfig {
    let mut job = JobConfig::new(
        root.join("images"),
        root.join("depth"),
        root.join("calib.json"),
        root.join(out),
    );
    job.rates = rates;
    job.seed = 2024;
    job.workers = workers;
    job.depth_scale = 1.0;
    job
}

#[test]
fn criterion_1_2_streak_fraction_and_proximity() {
    let started = Instant::now();
    let camera = kitti_camera();
    let seeds = 20;
    let (mut frac5, mut frac50) = (0.0, 0.0);
    let (mut near, mut streaks) = (0usize, 0usize);
    for seed in 0..seeds {
        let p5 = simulate_seeded(&RainfallConfig::with_rate(5.0, seed), &camera).unwrap();
        let p50 = simulate_seeded(&RainfallConfig::with_rate(50.0, 1000 + seed), &camera).unwrap();
        frac5 += p5.streak_fraction() / seeds as f64;
        frac50 += p50.streak_fraction() / seeds as f64;
        for d in p50.drops.iter().filter(|d| d.class == DropClass::Streak) {
            streaks += 1;
            if d.x.norm() <= 4.0 {
                near += 1;
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = (0.005..=0.03).contains(&frac50)
        && (0.002..=0.02).contains(&frac5)
        && frac5 < frac50
        && elapsed < 120.0;
    verdict(
        "1",
        "streak fraction",
        pass,
        format!(
            "R=5: {:.3}%, R=50: {:.3}%, {seeds} seeds, {elapsed:.1} s",
            frac5 * 100.0,
            frac50 * 100.0
        ),
    );
    let share = near as f64 / streaks as f64;
    verdict(
        "2",
        "streak drops within 4 m",
        share >= 0.95,
        format!("{:.2}% of {streaks} streak drops at R=50", share * 100.0),
    );
}

#[test]
fn criterion_3_diameter_sampler_ks() {
    let lambda = marshall_palmer_lambda(50.0).unwrap();
    let (lo, hi) = (1.0, 6.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut xs = sample_diameters(100_000, lambda, lo, hi, &mut rng).unwrap();
    xs.sort_by(f64::total_cmp);
    let norm = 1.0 - (-lambda * (hi - lo)).exp();
    let cdf = |x: f64| (1.0 - (-lambda * (x - lo)).exp()) / norm;
    let n = xs.len() as f64;
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    verdict("3", "diameter sampler KS", ks < 0.01, format!("D = {ks:.5}, n = 100000"));
}

/// Exit point found by marching out of the sphere and bisecting.
fn bisection_exit(origin: &Vector3<f64>, dir: &Vector3<f64>, radius: f64) -> Vector3<f64> {
    let d = dir.normalize();
    let (mut lo, mut hi) = (0.0, 1.0);
    while (origin + d * hi).norm() < radius {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (origin + d * mid).norm() < radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    origin + d * (0.5 * (lo + hi))
}

#[test]
fn criterion_4_geometry_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let radius = 10.0;
    let mut worst_sphere: f64 = 0.0;
    for _ in 0..1000 {
        let origin = loop {
            let p = Vector3::new(
                rng.random_range(-radius..radius),
                rng.random_range(-radius..radius),
                rng.random_range(-radius..radius),
            );
            if p.norm() < radius * 0.999 {
                break p;
            }
        };
        let dir = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if dir.norm() < 1e-3 {
            continue;
        }
        let hit = sphere_intersect(&origin, &dir, radius).unwrap();
        worst_sphere = worst_sphere.max((hit - bisection_exit(&origin, &dir, radius)).norm());
    }

    let mut worst_corner: f64 = 0.0;
    for i in 0..1000u64 {
        let length = rng.random_range(1.0..300.0);
        let width = rng.random_range(1.0..40.0);
        let sprite = procedural_streak(rng.random_range(1.0..6.0), length, width, i).unwrap();
        let p0 = Vector2::new(rng.random_range(-50.0..1300.0), rng.random_range(-50.0..400.0));
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let p1 = p0 + Vector2::new(angle.cos(), angle.sin()) * length;
        let (src, dst) = (sprite_quad(&sprite), streak_quad(&sprite, p0, p1, width));
        let h = Homography::from_correspondences(&src, &dst).unwrap();
        for (s, d) in src.iter().zip(&dst) {
            worst_corner = worst_corner.max((h.apply(s) - d).norm());
        }
    }
    verdict(
        "4",
        "geometry oracles",
        worst_sphere <= 1e-6 && worst_corner <= 1e-3,
        format!("sphere max err {worst_sphere:.2e} m, homography max corner err {worst_corner:.2e} px"),
    );
}

#[test]
fn criterion_5_radiometric_invariants() {
    // (a) zero rain is bit-identical, in memory and through the file boundary
    let (img, depth) = synthetic_scene(310, 94, 77);
    let (out, _) = render_rain(
        &img,
        &depth,
        &kitti_camera(),
        &RainfallConfig::with_rate(0.0, 5),
        &RenderOptions::default(),
        StreakSource::Procedural,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_scene_dataset(dir.path(), 20, 310, 94);
    let summary = run_batch(&job(dir.path(), "out", vec![0.0, 50.0], 0), &|_| {}).unwrap();
    let mut files_identical = true;
    for r in summary.records.iter().filter(|r| r.rate_mm_hr == 0.0) {
        let input = load_image(&dir.path().join("images").join(&r.image), ColorSpace::Srgb).unwrap();
        let output = load_image(r.output.as_ref().unwrap(), ColorSpace::Srgb).unwrap();
        files_identical &= input == output;
    }
    verdict(
        "5a",
        "zero rain is identity",
        out == img && files_identical,
        "render_rain and 20 batch outputs at R=0".into(),
    );

    // (b) mean luminosity restored on every rendered image
    let deltas: Vec<f64> = summary
        .records
        .iter()
        .filter(|r| r.rate_mm_hr == 50.0)
        .map(|r| r.report.as_ref().unwrap().mean_luminosity_delta)
        .collect();
    let worst = deltas.iter().cloned().fold(0.0, f64::max);
    verdict(
        "5b",
        "mean luminosity preserved",
        summary.success() && deltas.len() == 20 && worst <= 1e-3,
        format!("{} images at R=50, worst |delta| = {worst:.2e}", deltas.len()),
    );

    // (c) phase function normalization, Simpson in cos(theta)
    let n = 200_000;
    let mut worst_hg: f64 = 0.0;
    for g in [0.0, 0.5, 0.9] {
        let h = 2.0 / n as f64;
        let mut sum = 0.0;
        for i in 0..=n {
            let mu = -1.0 + i as f64 * h;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            sum += w * hg_phase(mu.clamp(-1.0, 1.0).acos(), g);
        }
        let integral = 2.0 * std::f64::consts::PI * sum * h / 3.0;
        worst_hg = worst_hg.max((integral - 1.0).abs());
    }
    verdict(
        "5c",
        "phase function integrates to 1",
        worst_hg <= 1e-3,
        format!("max |integral - 1| = {worst_hg:.2e} for g in {{0, 0.5, 0.9}}"),
    );
}

fn hash_outputs(root: &Path) -> String {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "png") {
                files.push(p);
            }
        }
    }
    files.sort();
    let mut h = Sha256::new();
    for f in &files {
        h.update(f.strip_prefix(root).unwrap().to_string_lossy().as_bytes());
        h.update(fs::read(f).unwrap());
    }
    let hex: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    format!("{hex} ({} files)", files.len())
}

#[test]
fn criterion_6_serial_parallel_determinism() {
    let dir = tempfile::tempdir().unwrap();
    write_scene_dataset(dir.path(), 6, 414, 125);
    let rates = vec![0.0, 5.0, 50.0, 200.0];
    let serial = run_batch(&job(dir.path(), "serial", rates.clone(), 1), &|_| {}).unwrap();
    let parallel = run_batch(&job(dir.path(), "parallel", rates, 4), &|_| {}).unwrap();
    let (a, b) = (
        hash_outputs(&dir.path().join("serial")),
        hash_outputs(&dir.path().join("parallel")),
    );
    verdict(
        "6",
        "serial vs parallel batch",
        serial.success() && parallel.success() && serial.outputs == 24 && a == b,
        format!("serial {a}, parallel {b}"),
    );
}

#[test]
fn criterion_7_performance() {
    let (img, depth) = synthetic_scene(2048, 1024, 7);
    let camera = CameraModel {
        fx: 1190.0,
        fy: 1190.0,
        cx: 1024.0,
        cy: 512.0,
        width: 2048,
        height: 1024,
        ..kitti_camera()
    };
    let config = RainfallConfig::with_rate(50.0, 7);
    let render = || {
        let started = Instant::now();
        let (_, report) = render_rain(
            &img,
            &depth,
            &camera,
            &config,
            &RenderOptions::default(),
            StreakSource::Procedural,
        )
        .unwrap();
        (started.elapsed().as_secs_f64(), report)
    };
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let (one_core, report) = single.install(render);
    let (all_cores, _) = render();
    let threads = rayon::current_num_threads();
    println!(
        "ACCEPTANCE 7 multi-core timing: {all_cores:.2} s on {threads} thread(s) (documented target <= 10 s: {})",
        if all_cores <= 10.0 { "met" } else { "not met on this machine" }
    );
    verdict(
        "7",
        "2048x1024 at 50 mm/hr on one core",
        one_core <= 79.0,
        format!(
            "{one_core:.2} s (simulation {:.2} s, rendering {:.2} s), {} drops, {} streaks rendered",
            report.simulation_s, report.rendering_s, report.drop_count, report.rendered_streaks
        ),
    );
}

#[test]
fn criterion_8_out_of_scope() {
    println!(
        "ACCEPTANCE 8 downstream task metrics: OUT OF SCOPE (detection, segmentation and depth \
         benchmarks, user studies and finetuning need trained networks and human raters; \
         covered instead by criteria 1-7 and the property suites)"
    );
}
