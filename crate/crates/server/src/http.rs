use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Request, State};
use axum::http::{header, HeaderName, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;
use uqnet::pipeline::{DocumentKind, ModelStore};
use uqnet::Error;

use crate::api::{self, FitDlmRequest, FitGpRequest, ForecastRequest, GraphRequest, ScenarioRequest};

pub const REQUEST_ID: HeaderName = HeaderName::from_static("x-request-id");
pub const DEFAULT_FIT_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub store_dir: PathBuf,
    pub bind: SocketAddr,
    pub fit_timeout: Duration,
    /// Browser origin allowed to call the API (e.g. the scenario explorer's dev server).
    pub cors_origin: Option<String>,
}

impl ServerConfig {
    /// Reads `UQNET_STORE_DIR`, `UQNET_BIND_ADDR`, `UQNET_FIT_TIMEOUT_SECS`
    /// and `UQNET_CORS_ORIGIN`.
    pub fn from_env() -> Result<Self, String> {
        let store_dir = std::env::var("UQNET_STORE_DIR").unwrap_or_else(|_| "uqnet-store".into());
        let bind = std::env::var("UQNET_BIND_ADDR").unwrap_or_else(|_| "127.0.0.1:8080".into());
        let bind = bind
            .parse()
            .map_err(|e| format!("UQNET_BIND_ADDR '{bind}': {e}"))?;
        let fit_timeout = match std::env::var("UQNET_FIT_TIMEOUT_SECS") {
            Ok(s) => Duration::from_secs(s.parse().map_err(|e| format!("UQNET_FIT_TIMEOUT_SECS '{s}': {e}"))?),
            Err(_) => DEFAULT_FIT_TIMEOUT,
        };
        Ok(Self {
            store_dir: store_dir.into(),
            bind,
            fit_timeout,
            cors_origin: std::env::var("UQNET_CORS_ORIGIN").ok(),
        })
    }
}

/// Shared handler state. The store lock is the only synchronisation point:
/// reads share it, saves take it exclusively. Fits run outside the lock.
#[derive(Clone)]
pub struct AppState {
    store: Arc<RwLock<ModelStore>>,
    fit_timeout: Duration,
}

impl AppState {
    pub fn new(store: ModelStore, fit_timeout: Duration) -> Self {
        Self {
            store: Arc::new(RwLock::new(store)),
            fit_timeout,
        }
    }

    async fn read<T, F>(&self, f: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&ModelStore) -> uqnet::Result<T> + Send + 'static,
    {
        let store = self.store.clone();
        tokio::task::spawn_blocking(move || {
            let guard = store.read().unwrap_or_else(|e| e.into_inner());
            f(&guard)
        })
        .await
        .map_err(ApiError::internal)?
        .map_err(ApiError::from)
    }

    /// Runs `fit` on the blocking pool under the fit timeout, then `save`
    /// under the write lock.
    async fn fit_and_save<M, T, F, S>(&self, fit: F, save: S) -> Result<T, ApiError>
    where
        M: Send + 'static,
        T: Send + 'static,
        F: FnOnce() -> uqnet::Result<M> + Send + 'static,
        S: FnOnce(&ModelStore, M) -> uqnet::Result<T> + Send + 'static,
    {
        let task = tokio::task::spawn_blocking(fit);
        let model = match tokio::time::timeout(self.fit_timeout, task).await {
            Ok(joined) => joined.map_err(ApiError::internal)??,
            Err(_) => {
                return Err(ApiError::new(
                    StatusCode::GATEWAY_TIMEOUT,
                    "fit_timeout",
                    format!("fit did not finish within {} s", self.fit_timeout.as_secs_f64()),
                ))
            }
        };
        let store = self.store.clone();
        tokio::task::spawn_blocking(move || {
            let guard = store.write().unwrap_or_else(|e| e.into_inner());
            save(&guard, model)
        })
        .await
        .map_err(ApiError::internal)?
        .map_err(ApiError::from)
    }
}

/// Error envelope: `{code, message, context}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
    context: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.into(),
            message: message.into(),
            context: json!({}),
        }
    }

    /// Logs `err` under a fresh id and returns only the id to the caller.
    fn internal(err: impl std::fmt::Display) -> Self {
        let error_id = uuid::Uuid::new_v4().to_string();
        tracing::error!(%error_id, error = %err, "internal error");
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal_error".into(),
            message: "internal error".into(),
            context: json!({ "error_id": error_id }),
        }
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        let context = match &err {
            Error::Context { context, .. } => json!({ "detail": context }),
            _ => json!({}),
        };
        let (status, code) = match err.root() {
            Error::NotFound(_) => (StatusCode::NOT_FOUND, "model_not_found"),
            Error::AlreadyExists(_) => (StatusCode::CONFLICT, "duplicate_id"),
            e if e.is_validation() => (StatusCode::BAD_REQUEST, e.code()),
            e @ (Error::FitFailure(_) | Error::NotPositiveDefinite(_) | Error::Numerical(_)) => {
                (StatusCode::UNPROCESSABLE_ENTITY, e.code())
            }
            _ => return Self::internal(&err),
        };
        Self {
            status,
            code: code.into(),
            message: err.to_string(),
            context,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "code": self.code, "message": self.message, "context": self.context });
        (self.status, Json(body)).into_response()
    }
}

/// JSON body extractor reporting rejections in the error envelope.
pub struct JsonBody<T>(pub T);

#[axum::async_trait]
impl<S, T> FromRequest<S> for JsonBody<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Self(v)),
            Err(JsonRejection::MissingJsonContentType(e)) => Err(ApiError::new(
                StatusCode::UNSUPPORTED_MEDIA_TYPE,
                "unsupported_media_type",
                e.body_text(),
            )),
            Err(e) => Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", e.body_text())),
        }
    }
}

type ApiResult<T> = Result<(StatusCode, Json<T>), ApiError>;

fn ok<T: Serialize>(status: StatusCode, body: T) -> ApiResult<T> {
    Ok((status, Json(body)))
}

fn assign_id(id: &Option<String>, prefix: &str) -> String {
    id.clone()
        .unwrap_or_else(|| format!("{prefix}-{}", &uuid::Uuid::new_v4().simple().to_string()[..12]))
}

async fn healthz() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn list_models(State(state): State<AppState>) -> ApiResult<Vec<api::ModelEntry>> {
    ok(StatusCode::OK, state.read(api::list).await?)
}

async fn fit_gp(State(state): State<AppState>, JsonBody(req): JsonBody<FitGpRequest>) -> ApiResult<api::GpSummary> {
    let id = assign_id(&req.id, "gp");
    let (check_id, overwrite) = (id.clone(), req.overwrite);
    state
        .read(move |s| api::check_free(s, &check_id, DocumentKind::Gp, overwrite))
        .await?;
    let summary = state
        .fit_and_save(
            move || api::fit_gp_model(&req),
            move |store, em| {
                store.save_gp(&id, &em, overwrite)?;
                Ok(api::GpSummary::new(&id, &em))
            },
        )
        .await?;
    ok(StatusCode::CREATED, summary)
}

async fn fit_dlm(State(state): State<AppState>, JsonBody(req): JsonBody<FitDlmRequest>) -> ApiResult<api::DlmSummary> {
    let id = assign_id(&req.id, "dlm");
    let (check_id, overwrite) = (id.clone(), req.overwrite);
    state
        .read(move |s| api::check_free(s, &check_id, DocumentKind::Dlm, overwrite))
        .await?;
    let summary = state
        .fit_and_save(
            move || api::fit_dlm_model(&req),
            move |store, fitted| {
                store.save_dlm(&id, &fitted.model, overwrite)?;
                Ok(api::DlmSummary::new(&id, &fitted))
            },
        )
        .await?;
    ok(StatusCode::CREATED, summary)
}

async fn get_model(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Value> {
    let (_, doc) = state.read(move |s| s.document(&id)).await?;
    ok(StatusCode::OK, doc)
}

async fn diagnostics(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<api::DiagnosticsResponse> {
    ok(StatusCode::OK, state.read(move |s| api::diagnostics(s, &id)).await?)
}

async fn create_graph(State(state): State<AppState>, JsonBody(req): JsonBody<GraphRequest>) -> ApiResult<api::GraphSummary> {
    let store = state.store.clone();
    let summary = tokio::task::spawn_blocking(move || {
        let guard = store.write().unwrap_or_else(|e| e.into_inner());
        api::check_free(&guard, &req.id, DocumentKind::Graph, req.overwrite)?;
        let (doc, summary) = api::check_graph(&guard, &req)?;
        guard.save_graph(&doc, req.overwrite)?;
        Ok::<_, Error>(summary)
    })
    .await
    .map_err(ApiError::internal)??;
    ok(StatusCode::CREATED, summary)
}

async fn forecast(
    State(state): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<ForecastRequest>,
) -> ApiResult<Vec<uqnet::pipeline::ForecastRow>> {
    ok(StatusCode::OK, state.read(move |s| api::forecast(s, &id, &req)).await?)
}

async fn scenario(
    State(state): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<ScenarioRequest>,
) -> ApiResult<Vec<uqnet::pipeline::ForecastRow>> {
    ok(StatusCode::OK, state.read(move |s| api::scenario(s, &id, &req)).await?)
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "route_not_found", "no such route")
}

/// Echoes the caller's `x-request-id` or assigns one, and logs each request.
async fn request_id(mut req: Request, next: Next) -> Response {
    let id = req
        .headers()
        .get(&REQUEST_ID)
        .cloned()
        .unwrap_or_else(|| HeaderValue::from_str(&uuid::Uuid::new_v4().to_string()).expect("uuid is ascii"));
    req.headers_mut().insert(REQUEST_ID, id.clone());
    let (method, path) = (req.method().clone(), req.uri().path().to_string());
    let mut res = next.run(req).await;
    tracing::info!(request_id = ?id, %method, %path, status = res.status().as_u16());
    res.headers_mut().insert(REQUEST_ID, id);
    res
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/models", get(list_models))
        .route("/models/gp", post(fit_gp))
        .route("/models/dlm", post(fit_dlm))
        .route("/models/:id", get(get_model))
        .route("/models/:id/diagnostics", get(diagnostics))
        .route("/graphs", post(create_graph))
        .route("/graphs/:id/forecast", post(forecast))
        .route("/graphs/:id/scenario", post(scenario))
        .fallback(not_found)
        .layer(middleware::from_fn(request_id))
        .with_state(state)
}

/// Lets `origin` call the API from a browser.
pub fn with_cors(app: Router, origin: &str) -> Result<Router, String> {
    let origin: HeaderValue = origin.parse().map_err(|_| format!("invalid CORS origin '{origin}'"))?;
    Ok(app.layer(
        CorsLayer::new()
            .allow_origin(origin)
            .allow_methods([Method::GET, Method::POST])
            .allow_headers([header::CONTENT_TYPE, REQUEST_ID])
            .expose_headers([REQUEST_ID]),
    ))
}

/// Serves until ctrl-c.
pub async fn serve(cfg: ServerConfig) -> std::io::Result<()> {
    let store = ModelStore::open(&cfg.store_dir).map_err(|e| std::io::Error::other(e.to_string()))?;
    let mut app = router(AppState::new(store, cfg.fit_timeout));
    if let Some(origin) = &cfg.cors_origin {
        app = with_cors(app, origin).map_err(std::io::Error::other)?;
    }
    let listener = tokio::net::TcpListener::bind(cfg.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, store = %cfg.store_dir.display(), "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
