//! HTTP/JSON front end over the rendering library.
//!
//! | route | body | reply |
//! |---|---|---|
//! | `GET /health` | | `ok` |
//! | `POST /v1/render` | `RenderRequest` | `RenderResponse` |
//! | `POST /v1/simulate` | `SimulateRequest` | `SimulateResponse` |
//! | `POST /v1/jobs` | `JobConfig` | `202 JobAccepted` |
//! | `GET /v1/jobs` | | `[JobStatus]` |
//! | `GET /v1/jobs/{id}` | | `JobStatus` |
//!
//! Rendering is CPU bound and runs on the blocking pool.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rain_core::batch::{run_batch, JobConfig};
use rain_core::physics::simulate_seeded;
use rain_core::scene::{ColorSpace, OutputBits};
use rain_core::wire::{
    encode_b64, ErrorBody, JobAccepted, JobState, JobStatus, RenderRequest, RenderResponse,
    SimulateRequest, SimulateResponse,
};
use rain_core::{render_rain, RainError, StreakSource};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

const BODY_LIMIT: usize = 256 * 1024 * 1024;

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    NotFound(String),
    Internal(String),
}

impl From<RainError> for ApiError {
    fn from(e: RainError) -> Self {
        ApiError::BadRequest(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, error) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (status, Json(ErrorBody { error })).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Default)]
struct Jobs {
    next_id: u64,
    status: BTreeMap<u64, JobStatus>,
}

#[derive(Clone, Default)]
pub struct AppState {
    jobs: Arc<Mutex<Jobs>>,
}

impl AppState {
    fn update(&self, id: u64, f: impl FnOnce(&mut JobStatus)) {
        if let Some(s) = self.jobs.lock().expect("job table poisoned").status.get_mut(&id) {
            f(s);
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/v1/render", post(render))
        .route("/v1/simulate", post(simulate))
        .route("/v1/jobs", post(submit_job).get(list_jobs))
        .route("/v1/jobs/{id}", get(job_status))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(format!("worker panicked: {e}")))?
}

async fn render(Json(req): Json<RenderRequest>) -> ApiResult<Json<RenderResponse>> {
    blocking(move || {
        let image = req.decode_image()?;
        let depth = req
            .depth
            .decode(image.width(), image.height())?
            .matched_to(image.width(), image.height(), req.resample_depth)?;
        let camera = match &req.frame {
            Some(frame) => req.calibration.camera_for_frame(frame)?,
            None => req.calibration.camera()?,
        };
        let (out, report) = render_rain(
            &image,
            &depth,
            &camera,
            &req.rainfall,
            &req.options,
            StreakSource::Procedural,
        )?;
        let bits = if req.bits16 {
            OutputBits::Sixteen
        } else {
            OutputBits::Eight
        };
        Ok(Json(RenderResponse {
            image_b64: encode_b64(&out.to_png_bytes(bits, ColorSpace::Srgb)?),
            report,
        }))
    })
    .await
}

async fn simulate(Json(req): Json<SimulateRequest>) -> ApiResult<Json<SimulateResponse>> {
    blocking(move || {
        let camera = match &req.frame {
            Some(frame) => req.calibration.camera_for_frame(frame)?,
            None => req.calibration.camera()?,
        };
        let population = simulate_seeded(&req.rainfall, &camera)?;
        Ok(Json(SimulateResponse::from_population(&population, req.include_drops)))
    })
    .await
}

async fn submit_job(
    State(state): State<AppState>,
    Json(job): Json<JobConfig>,
) -> ApiResult<(StatusCode, Json<JobAccepted>)> {
    job.validate()?;
    let id = {
        let mut jobs = state.jobs.lock().expect("job table poisoned");
        jobs.next_id += 1;
        let id = jobs.next_id;
        jobs.status.insert(
            id,
            JobStatus {
                id,
                state: JobState::Queued,
                done: 0,
                total: 0,
                summary: None,
                error: None,
            },
        );
        id
    };
    tracing::info!(id, images = %job.images.display(), "job accepted");
    let worker = state.clone();
    tokio::task::spawn_blocking(move || {
        worker.update(id, |s| s.state = JobState::Running);
        let result = run_batch(&job, &|p| {
            worker.update(id, |s| {
                s.done = s.done.max(p.done);
                s.total = p.total;
            })
        });
        worker.update(id, |s| match result {
            Ok(summary) => {
                tracing::info!(id, outputs = summary.outputs, failures = summary.failures, "job finished");
                s.state = JobState::Finished;
                s.summary = Some(summary);
            }
            Err(e) => {
                tracing::warn!(id, error = %e, "job failed");
                s.state = JobState::Failed;
                s.error = Some(e.to_string());
            }
        });
    });
    Ok((StatusCode::ACCEPTED, Json(JobAccepted { id })))
}

async fn job_status(State(state): State<AppState>, Path(id): Path<u64>) -> ApiResult<Json<JobStatus>> {
    state
        .jobs
        .lock()
        .expect("job table poisoned")
        .status
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::NotFound(format!("no job {id}")))
}

async fn list_jobs(State(state): State<AppState>) -> Json<Vec<JobStatus>> {
    Json(
        state
            .jobs
            .lock()
            .expect("job table poisoned")
            .status
            .values()
            .cloned()
            .collect(),
    )
}

/// Serve on an already bound listener until the task is dropped.
pub async fn serve(listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(AppState::default())).await
}

/// Bind `addr` (port 0 picks a free one) and serve in the background.
pub async fn spawn(addr: SocketAddr) -> std::io::Result<(SocketAddr, JoinHandle<std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((local, tokio::spawn(serve(listener))))
}
