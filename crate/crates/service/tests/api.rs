use std::net::SocketAddr;
use std::path::Path;
use std::time::Duration;

use rain_client::{ClientError, RainClient};
use rain_core::batch::JobConfig;
use rain_core::scene::{decode_image, encode_float_raster, parse_calibration, ColorSpace, OutputBits};
use rain_core::wire::{encode_b64, DepthFormat, DepthPayload, JobState, RenderRequest, SimulateRequest};
use rain_core::{DepthMap, ImageBuffer, RainfallConfig, RenderOptions};

const CALIB: &str = r#"{"fx": 300, "fy": 300, "cx": 80, "cy": 45, "width": 160, "height": 90,
    "focal_m": 0.006, "f_number": 2.0, "exposure_s": "0.002"}"#;

async fn start() -> RainClient {
    let (addr, _) = rain_service::spawn(SocketAddr::from(([127, 0, 0, 1], 0)))
        .await
        .unwrap();
    RainClient::new(format!("http://{addr}"))
}

fn scene() -> ImageBuffer {
    ImageBuffer::from_fn(160, 90, |x, y| {
        let t = y as f32 / 90.0;
        [0.7 - 0.5 * t, 0.6 - 0.4 * t, 0.4 + 0.2 * (x % 3) as f32]
    })
    .unwrap()
}

fn render_request(rate: f64) -> RenderRequest {
    RenderRequest {
        image_b64: encode_b64(&scene().to_png_bytes(OutputBits::Eight, ColorSpace::Srgb).unwrap()),
        depth: DepthPayload::Uniform { meters: 25.0 },
        calibration: parse_calibration(CALIB).unwrap(),
        frame: None,
        rainfall: RainfallConfig::with_rate(rate, 9),
        options: RenderOptions::default(),
        bits16: false,
        resample_depth: false,
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn health_and_simulate() {
    let client = start().await;
    client.health().await.unwrap();
    let req = SimulateRequest {
        calibration: parse_calibration(CALIB).unwrap(),
        frame: None,
        rainfall: RainfallConfig::with_rate(50.0, 1),
        include_drops: true,
    };
    let a = client.simulate(&req).await.unwrap();
    let b = client.simulate(&req).await.unwrap();
    assert_eq!(a, b);
    assert!(a.drop_count > 0);
    assert_eq!(a.drops.as_ref().unwrap().len(), a.drop_count);
    assert_eq!(
        a.drops.unwrap().iter().filter(|d| d.streak).count(),
        a.streak_count
    );
}

#[tokio::test(flavor = "multi_thread")]
async fn render_zero_rate_round_trips_and_rain_changes_image() {
    let client = start().await;
    let dry = client.render(&render_request(0.0)).await.unwrap();
    let png = rain_core::wire::decode_b64("image", &dry.image_b64).unwrap();
    let input = decode_image(
        &scene().to_png_bytes(OutputBits::Eight, ColorSpace::Srgb).unwrap(),
        ColorSpace::Srgb,
    )
    .unwrap();
    assert_eq!(decode_image(&png, ColorSpace::Srgb).unwrap(), input);
    assert_eq!(dry.report.drop_count, 0);

    let wet = client.render(&render_request(100.0)).await.unwrap();
    assert_ne!(wet.image_b64, dry.image_b64);
    assert!(wet.report.mean_luminosity_delta <= 1e-3);
    let again = client.render(&render_request(100.0)).await.unwrap();
    assert_eq!(wet.image_b64, again.image_b64);
    assert_eq!(wet.report.drop_count, again.report.drop_count);
}

#[tokio::test(flavor = "multi_thread")]
async fn float_depth_payload_accepted() {
    let client = start().await;
    let mut req = render_request(25.0);
    let depth = DepthMap::from_raw(160, 90, vec![12.0; 160 * 90]).unwrap();
    req.depth = DepthPayload::Raster {
        format: DepthFormat::Float,
        data_b64: encode_b64(&encode_float_raster(&depth)),
        scale: 1.0,
    };
    client.render(&req).await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn bad_requests_are_json_errors() {
    let client = start().await;
    let mut req = render_request(5.0);
    req.image_b64 = "not base64!".into();
    match client.render(&req).await {
        Err(ClientError::Server { status, message }) => {
            assert_eq!(status, 400);
            assert!(message.contains("base64"), "{message}");
        }
        other => panic!("expected a 400, got {other:?}"),
    }
    let mut req = render_request(5.0);
    req.rainfall.rate_mm_hr = -1.0;
    assert!(matches!(
        client.render(&req).await,
        Err(ClientError::Server { status: 400, .. })
    ));
    assert!(matches!(
        client.job_status(999).await,
        Err(ClientError::Server { status: 404, .. })
    ));
}

fn write_dataset(root: &Path) {
    std::fs::create_dir_all(root.join("images")).unwrap();
    std::fs::create_dir_all(root.join("depth")).unwrap();
    for name in ["a", "b"] {
        scene()
            .save_png(&root.join(format!("images/{name}.png")), OutputBits::Eight, ColorSpace::Srgb)
            .unwrap();
        let depth = DepthMap::uniform(160, 90, 20.0).unwrap();
        std::fs::write(root.join(format!("depth/{name}.f32")), encode_float_raster(&depth)).unwrap();
    }
    std::fs::write(root.join("calib.json"), CALIB).unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn batch_job_runs_to_completion() {
    let client = start().await;
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let mut job = JobConfig::new(
        dir.path().join("images"),
        dir.path().join("depth"),
        dir.path().join("calib.json"),
        dir.path().join("out"),
    );
    job.rates = vec![0.0, 50.0];
    job.depth_scale = 1.0;
    let id = client.submit_job(&job).await.unwrap();
    let mut updates = 0;
    let status = client
        .wait_for_job(id, Duration::from_millis(20), |_| updates += 1)
        .await
        .unwrap();
    assert!(updates >= 1);
    assert_eq!(status.state, JobState::Finished);
    let summary = status.summary.unwrap();
    assert_eq!((summary.outputs, summary.failures), (4, 0));
    assert!(dir.path().join("out/50mm/b.png").is_file());
    assert_eq!(client.list_jobs().await.unwrap().len(), 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn job_with_missing_calibration_fails() {
    let client = start().await;
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let job = JobConfig::new(
        dir.path().join("images"),
        dir.path().join("depth"),
        dir.path().join("missing.json"),
        dir.path().join("out"),
    );
    let id = client.submit_job(&job).await.unwrap();
    let status = client
        .wait_for_job(id, Duration::from_millis(20), |_| {})
        .await
        .unwrap();
    assert_eq!(status.state, JobState::Failed);
    assert!(status.error.unwrap().contains("missing.json"));
}
