//! Local HTTP interface to the pipeline.
//!
//! Uploaded logs are stored under their SHA-256 digest in a bounded
//! workspace directory. Reports are addressed by the digest of their inputs
//! and config, written once, and kept on disk next to the logs.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::multipart::{Multipart, MultipartError};
use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::PipelineConfig;
use crate::ingest::{self, IngestError, LogFormat, RawLog};
use crate::pipeline::{self, PipelineError};
use crate::report::{IdentificationReport, PlotData, PlotKind, SCHEMA_VERSION};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub workspace: PathBuf,
    pub max_upload_bytes: usize,
    /// Oldest uploads are evicted beyond this count.
    pub max_logs: usize,
    /// Config used when an identify request carries none.
    pub defaults: PipelineConfig,
}

impl ServiceConfig {
    pub fn new(workspace: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            workspace: workspace.into(),
            max_upload_bytes: 64 << 20,
            max_logs: 32,
            defaults: PipelineConfig::default(),
        }
    }

    fn logs_dir(&self) -> PathBuf {
        self.workspace.join("logs")
    }

    fn reports_dir(&self) -> PathBuf {
        self.workspace.join("reports")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRun {
    pub report: IdentificationReport,
    pub plots: PlotData,
}

struct AppState {
    config: ServiceConfig,
    runs: Mutex<HashMap<String, Arc<StoredRun>>>,
    uploads: Mutex<()>,
}

/// JSON error response `{schema_version, error: {stage, message}}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    stage: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, stage: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            stage,
            message: message.into(),
        }
    }

    fn not_found(what: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "lookup", format!("unknown {what}"))
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "service", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "schema_version": SCHEMA_VERSION,
            "error": { "stage": self.stage, "message": self.message },
        });
        (self.status, Json(body)).into_response()
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let status = match e {
            PipelineError::Config(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.stage(), e.to_string())
    }
}

fn is_digest(id: &str) -> bool {
    id.len() == 64 && id.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelInfo {
    pub name: String,
    pub fields: Vec<String>,
    pub samples: usize,
    pub start_s: Option<f64>,
    pub end_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadResponse {
    pub schema_version: u32,
    pub log_id: String,
    pub bytes: usize,
    pub format: LogFormat,
    pub channels: Vec<ChannelInfo>,
    pub duration_s: f64,
}

/// Channel listing and overall time span of a parsed log.
pub fn inventory(log: &RawLog) -> (Vec<ChannelInfo>, f64) {
    let channels: Vec<ChannelInfo> = log
        .channels
        .iter()
        .map(|(name, ch)| ChannelInfo {
            name: name.clone(),
            fields: ch.fields.clone(),
            samples: ch.len(),
            start_s: ch.timestamps.first().copied(),
            end_s: ch.timestamps.last().copied(),
        })
        .collect();
    let start = channels.iter().filter_map(|c| c.start_s).fold(f64::INFINITY, f64::min);
    let end = channels.iter().filter_map(|c| c.end_s).fold(f64::NEG_INFINITY, f64::max);
    (channels, if end >= start { end - start } else { 0.0 })
}

fn parse_for_inventory(bytes: &[u8], defaults: &PipelineConfig) -> Result<(LogFormat, RawLog), IngestError> {
    let format = ingest::detect_format(bytes);
    let log = match format {
        LogFormat::Ulog => ingest::parse_ulog(bytes)?,
        LogFormat::Csv => ingest::parse_csv(std::str::from_utf8(bytes).expect("detected as text"), &defaults.mapping.csv)?,
    };
    Ok((format, log))
}

fn evict_oldest(dir: &Path, keep: usize) -> std::io::Result<()> {
    let mut entries: Vec<(std::time::SystemTime, String, PathBuf)> = std::fs::read_dir(dir)?
        .filter_map(Result::ok)
        .filter_map(|e| {
            let modified = e.metadata().ok()?.modified().ok()?;
            Some((modified, e.file_name().to_string_lossy().to_string(), e.path()))
        })
        .collect();
    if entries.len() <= keep {
        return Ok(());
    }
    entries.sort();
    let excess = entries.len() - keep;
    for (_, _, path) in entries.into_iter().take(excess) {
        log::info!("evicting {}", path.display());
        std::fs::remove_file(path)?;
    }
    Ok(())
}

fn multipart_error(e: MultipartError) -> ApiError {
    let status = e.status();
    if status == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::new(status, "upload", "upload exceeds the size limit")
    } else {
        ApiError::new(StatusCode::BAD_REQUEST, "upload", e.body_text())
    }
}

async fn upload_log(State(state): State<Arc<AppState>>, mut multipart: Multipart) -> Result<Json<UploadResponse>, ApiError> {
    let cap = state.config.max_upload_bytes;
    let field = multipart
        .next_field()
        .await
        .map_err(multipart_error)?
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "upload", "multipart body has no file field"))?;
    let bytes = field.bytes().await.map_err(multipart_error)?;
    if bytes.len() > cap {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "upload",
            format!("upload of {} bytes exceeds the {cap} byte limit", bytes.len()),
        ));
    }
    let st = state.clone();
    tokio::task::spawn_blocking(move || {
        let (format, log) = parse_for_inventory(&bytes, &st.config.defaults)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "ingestion", format!("{e:?}: {e}")))?;
        let log_id = pipeline::sha256_hex(&bytes);
        let dir = st.config.logs_dir();
        {
            let _guard = st.uploads.lock().expect("upload lock");
            std::fs::create_dir_all(&dir).map_err(ApiError::internal)?;
            let path = dir.join(&log_id);
            if !path.exists() {
                let tmp = dir.join(format!(".{log_id}.tmp"));
                std::fs::write(&tmp, &bytes).map_err(ApiError::internal)?;
                std::fs::rename(&tmp, &path).map_err(ApiError::internal)?;
            }
            evict_oldest(&dir, st.config.max_logs).map_err(ApiError::internal)?;
        }
        let (channels, duration_s) = inventory(&log);
        Ok(Json(UploadResponse {
            schema_version: SCHEMA_VERSION,
            log_id,
            bytes: bytes.len(),
            format,
            channels,
            duration_s,
        }))
    })
    .await
    .map_err(ApiError::internal)?
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentifyRequest {
    pub log_ids: Vec<String>,
    #[serde(default)]
    pub config: Option<PipelineConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportResponse {
    pub schema_version: u32,
    pub report_id: String,
    pub report: IdentificationReport,
}

fn load_run(config: &ServiceConfig, id: &str) -> Option<StoredRun> {
    let text = std::fs::read_to_string(config.reports_dir().join(format!("{id}.json"))).ok()?;
    serde_json::from_str(&text).ok()
}

fn find_run(state: &AppState, id: &str) -> Option<Arc<StoredRun>> {
    if !is_digest(id) {
        return None;
    }
    if let Some(run) = state.runs.lock().expect("run table").get(id) {
        return Some(run.clone());
    }
    let run = Arc::new(load_run(&state.config, id)?);
    Some(state.runs.lock().expect("run table").entry(id.to_string()).or_insert(run).clone())
}

async fn identify(
    State(state): State<Arc<AppState>>,
    body: Result<Json<IdentifyRequest>, JsonRejection>,
) -> Result<Json<ReportResponse>, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "config", e.body_text()))?;
    let config = req.config.unwrap_or_else(|| state.config.defaults.clone());
    config
        .validate()
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "config", e))?;
    if req.log_ids.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "config", "log_ids is empty"));
    }
    let mut paths = Vec::with_capacity(req.log_ids.len());
    for id in &req.log_ids {
        let path = state.config.logs_dir().join(id);
        if !is_digest(id) || !path.is_file() {
            return Err(ApiError::not_found(&format!("log id `{id}`")));
        }
        paths.push(path);
    }
    let report_id = pipeline::report_id(&req.log_ids, &config);
    if let Some(run) = find_run(&state, &report_id) {
        return Ok(Json(ReportResponse {
            schema_version: SCHEMA_VERSION,
            report_id,
            report: run.report.clone(),
        }));
    }

    let st = state.clone();
    let rid = report_id.clone();
    let run = tokio::task::spawn_blocking(move || -> Result<Arc<StoredRun>, ApiError> {
        let result = pipeline::run_pipeline_files(&config, &paths)?;
        let stored = StoredRun {
            report: result.report,
            plots: result.plots,
        };
        let mut runs = st.runs.lock().expect("run table");
        if let Some(existing) = runs.get(&rid) {
            return Ok(existing.clone());
        }
        let dir = st.config.reports_dir();
        std::fs::create_dir_all(&dir).map_err(ApiError::internal)?;
        let text = serde_json::to_string(&stored).map_err(ApiError::internal)?;
        std::fs::write(dir.join(format!("{rid}.json")), text).map_err(ApiError::internal)?;
        let stored = Arc::new(stored);
        runs.insert(rid, stored.clone());
        Ok(stored)
    })
    .await
    .map_err(ApiError::internal)??;
    Ok(Json(ReportResponse {
        schema_version: SCHEMA_VERSION,
        report_id,
        report: run.report.clone(),
    }))
}

async fn get_report(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<ReportResponse>, ApiError> {
    let run = find_run(&state, &id).ok_or_else(|| ApiError::not_found("report id"))?;
    Ok(Json(ReportResponse {
        schema_version: SCHEMA_VERSION,
        report_id: id,
        report: run.report.clone(),
    }))
}

async fn get_plot(State(state): State<Arc<AppState>>, UrlPath((id, which)): UrlPath<(String, String)>) -> Result<Response, ApiError> {
    let kind = PlotKind::parse(&which)
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "plot", format!("unknown plot kind `{which}`")))?;
    let run = find_run(&state, &id).ok_or_else(|| ApiError::not_found("report id"))?;
    let csv = run
        .plots
        .export(kind)
        .map_err(|e| ApiError::new(StatusCode::NOT_FOUND, "plot", e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}

/// Router with all endpoints mounted under `/api`.
pub fn router(config: ServiceConfig) -> Router {
    let limit = config.max_upload_bytes + (64 << 10);
    let state = Arc::new(AppState {
        config,
        runs: Mutex::new(HashMap::new()),
        uploads: Mutex::new(()),
    });
    Router::new()
        .route("/api/logs", post(upload_log))
        .route("/api/identify", post(identify))
        .route("/api/report/{id}", get(get_report))
        .route("/api/plot/{id}/{which}", get(get_plot))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Bind and serve until the process is stopped.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> std::io::Result<()> {
    std::fs::create_dir_all(config.logs_dir())?;
    std::fs::create_dir_all(config.reports_dir())?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(config)).await
}
