//! Async client for the rain rendering service.

use std::time::Duration;

use rain_core::batch::JobConfig;
use rain_core::wire::{
    ErrorBody, JobAccepted, JobState, JobStatus, RenderRequest, RenderResponse, SimulateRequest,
    SimulateResponse,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("server returned {status}: {message}")]
    Server { status: u16, message: String },
}

pub type Result<T, E = ClientError> = std::result::Result<T, E>;

#[derive(Debug, Clone)]
pub struct RainClient {
    base: String,
    http: reqwest::Client,
}

impl RainClient {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await.unwrap_or_default();
        let message = serde_json::from_str::<ErrorBody>(&text)
            .map(|b| b.error)
            .unwrap_or(text);
        Err(ClientError::Server {
            status: status.as_u16(),
            message,
        })
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        Self::decode(self.http.post(self.url(path)).json(body).send().await?).await
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        Self::decode(self.http.get(self.url(path)).send().await?).await
    }

    pub async fn health(&self) -> Result<()> {
        let resp = self.http.get(self.url("/health")).send().await?;
        if resp.status().is_success() {
            Ok(())
        } else {
            Err(ClientError::Server {
                status: resp.status().as_u16(),
                message: resp.text().await.unwrap_or_default(),
            })
        }
    }

    pub async fn render(&self, request: &RenderRequest) -> Result<RenderResponse> {
        self.post("/v1/render", request).await
    }

    pub async fn simulate(&self, request: &SimulateRequest) -> Result<SimulateResponse> {
        self.post("/v1/simulate", request).await
    }

    pub async fn submit_job(&self, job: &JobConfig) -> Result<u64> {
        let accepted: JobAccepted = self.post("/v1/jobs", job).await?;
        Ok(accepted.id)
    }

    pub async fn job_status(&self, id: u64) -> Result<JobStatus> {
        self.get(&format!("/v1/jobs/{id}")).await
    }

    pub async fn list_jobs(&self) -> Result<Vec<JobStatus>> {
        self.get("/v1/jobs").await
    }

    /// Poll until the job finishes or fails, calling `on_update` whenever
    /// its progress changes.
    pub async fn wait_for_job(
        &self,
        id: u64,
        poll: Duration,
        mut on_update: impl FnMut(&JobStatus),
    ) -> Result<JobStatus> {
        let mut last = None;
        loop {
            let status = self.job_status(id).await?;
            if last != Some((status.state, status.done)) {
                on_update(&status);
                last = Some((status.state, status.done));
            }
            if matches!(status.state, JobState::Finished | JobState::Failed) {
                return Ok(status);
            }
            tokio::time::sleep(poll).await;
        }
    }
}
