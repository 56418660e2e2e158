//! HTTP service backing interactive positioning.
//!
//! | route              | body / query                                   | response |
//! |--------------------|------------------------------------------------|----------|
//! | `GET /api/robot`   |                                                | [`RobotInfo`] |
//! | `POST /api/fk`     | `{"c": [..]}`                                  | [`FkResponse`] |
//! | `POST /api/ik`     | `{"target": [..], "warm_start"?: [..], "use_s2r"?: bool}` | [`IkResponse`] |
//! | `POST /api/follow` | `{"waypoints": [[..], ..], "warm_start"?: [..], "use_s2r"?: bool}` | `[IkResponse]` |
//! | `GET /api/shape`   | `?c=c1,c2,c3`                                  | [`ShapeResponse`] |
//!
//! Errors are `{"error": code, "message": text}` with status 400 for bad
//! input (`malformed_request`, `dimension_mismatch`, `out_of_range`,
//! `invalid_input`) and 409 when no model, or no sim-to-real net, is loaded
//! (`no_model`, `no_s2r_model`).
//!
//! A request carrying an `x-session-token` header and no `warm_start` starts
//! from that session's previous IK solution. Without either, solves start
//! from a grid search, so identical requests give identical responses.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use softik::harness::approach;
use softik::ik::{follow_path, solve_waypoint, BundleView, IkResult, ModelBundle, SolveStatus, SolverConfig};
use softik::robot::{body_curve, ActuationVector, RobotSpec, WorkspaceStats};

pub const SESSION_HEADER: &str = "x-session-token";
const MAX_SESSIONS: usize = 4096;
const MAX_WAYPOINTS: usize = 100_000;
const SHAPE_SAMPLES: usize = 16;

/// A loaded bundle with its workspace and solver settings; immutable.
pub struct LoadedModel {
    pub bundle: ModelBundle,
    pub workspace: WorkspaceStats,
    pub solver: SolverConfig,
}

pub struct AppState {
    model: Option<LoadedModel>,
    sessions: Mutex<HashMap<String, Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotInfo {
    pub spec: RobotSpec,
    pub aabb_min: Vec<f64>,
    pub aabb_max: Vec<f64>,
    pub width: f64,
    pub hull: Vec<Vec<f64>>,
    pub s2r_available: bool,
    pub epsilon_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkResponse {
    pub p_sim: Vec<f64>,
    /// Equal to `p_sim` when no sim-to-real net is loaded.
    pub p_real_pred: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IkResponse {
    pub c: Vec<f64>,
    pub p_pred: Vec<f64>,
    pub residual_mm: f64,
    pub residual_pct_width: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeResponse {
    pub points: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FkRequest {
    pub c: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IkRequest {
    pub target: Vec<f64>,
    #[serde(default)]
    pub warm_start: Option<Vec<f64>>,
    #[serde(default)]
    pub use_s2r: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FollowRequest {
    pub waypoints: Vec<Vec<f64>>,
    #[serde(default)]
    pub warm_start: Option<Vec<f64>>,
    #[serde(default)]
    pub use_s2r: bool,
}

#[derive(Debug, Deserialize)]
pub struct ShapeQuery {
    pub c: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn bad(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            code,
            message: message.into(),
        }
    }

    fn conflict(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::CONFLICT,
            code,
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            message: message.into(),
        }
    }
}

impl From<softik::Error> for ApiError {
    fn from(e: softik::Error) -> Self {
        use softik::Error as E;
        let message = e.to_string();
        match e {
            E::Domain { .. } => Self::bad("out_of_range", message),
            E::DimensionMismatch { .. } => Self::bad("dimension_mismatch", message),
            E::Validation(_) | E::Parse { .. } => Self::bad("invalid_input", message),
            _ => Self::internal(message),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::bad("malformed_request", e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::bad("malformed_request", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code.into(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

impl IkResponse {
    fn new(r: IkResult, width: f64) -> Self {
        Self {
            residual_pct_width: 100.0 * r.residual / width,
            residual_mm: r.residual,
            c: r.c,
            p_pred: r.p_pred,
            iterations: r.iterations,
            status: r.status,
        }
    }
}

impl AppState {
    pub fn new(model: Option<LoadedModel>) -> Self {
        Self {
            model,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    fn loaded(&self) -> Result<&LoadedModel, ApiError> {
        self.model
            .as_ref()
            .ok_or_else(|| ApiError::conflict("no_model", "no trained bundle is loaded"))
    }

    fn view(&self, use_s2r: bool) -> Result<(&LoadedModel, BundleView<'_>), ApiError> {
        let model = self.loaded()?;
        if use_s2r && !model.bundle.has_s2r() {
            return Err(ApiError::conflict("no_s2r_model", "bundle has no sim-to-real network"));
        }
        Ok((model, model.bundle.view(use_s2r)?))
    }

    fn check_target(spec: &RobotSpec, target: &[f64], what: &str) -> Result<(), ApiError> {
        if target.len() != spec.n {
            return Err(ApiError::bad(
                "dimension_mismatch",
                format!("{what} has {} coordinates, robot needs {}", target.len(), spec.n),
            ));
        }
        Ok(())
    }

    /// Explicit warm start, else the session's last solution, else a grid search.
    fn start(&self, view: &BundleView<'_>, model: &LoadedModel, first: &[f64], warm: Option<Vec<f64>>, token: Option<&str>) -> Result<Vec<f64>, ApiError> {
        if let Some(c) = warm {
            model.bundle.spec.check_actuation(&c)?;
            return Ok(c);
        }
        if let Some(c) = token.and_then(|t| self.sessions.lock().expect("session lock").get(t).cloned()) {
            return Ok(c);
        }
        Ok(approach(view, first, &model.solver)?)
    }

    pub fn robot(&self) -> Result<RobotInfo, ApiError> {
        let model = self.loaded()?;
        Ok(RobotInfo {
            spec: model.bundle.spec.clone(),
            aabb_min: model.workspace.aabb_min.clone(),
            aabb_max: model.workspace.aabb_max.clone(),
            width: model.bundle.width,
            hull: model.workspace.sample_hull.clone(),
            s2r_available: model.bundle.has_s2r(),
            epsilon_mm: model.solver.epsilon,
        })
    }

    pub fn fk(&self, req: FkRequest) -> Result<FkResponse, ApiError> {
        let model = self.loaded()?;
        model.bundle.spec.check_actuation(&req.c)?;
        let (p_sim, p_real) = model.bundle.predict(&ActuationVector::new(req.c))?;
        Ok(FkResponse {
            p_sim: p_sim.as_slice().to_vec(),
            p_real_pred: p_real.as_slice().to_vec(),
        })
    }

    pub fn ik(&self, req: IkRequest, token: Option<&str>) -> Result<IkResponse, ApiError> {
        let (model, view) = self.view(req.use_s2r)?;
        Self::check_target(&model.bundle.spec, &req.target, "target")?;
        let c0 = self.start(&view, model, &req.target, req.warm_start, token)?;
        let r = solve_waypoint(&view, &req.target, &c0, &model.solver)?;
        if let Some(token) = token {
            let mut sessions = self.sessions.lock().expect("session lock");
            if sessions.len() >= MAX_SESSIONS && !sessions.contains_key(token) {
                sessions.clear();
            }
            sessions.insert(token.to_owned(), r.c.clone());
        }
        Ok(IkResponse::new(r, model.bundle.width))
    }

    pub fn follow(&self, req: FollowRequest) -> Result<Vec<IkResponse>, ApiError> {
        let (model, view) = self.view(req.use_s2r)?;
        if req.waypoints.is_empty() || req.waypoints.len() > MAX_WAYPOINTS {
            return Err(ApiError::bad(
                "invalid_input",
                format!("need 1 to {MAX_WAYPOINTS} waypoints, got {}", req.waypoints.len()),
            ));
        }
        for (i, w) in req.waypoints.iter().enumerate() {
            Self::check_target(&model.bundle.spec, w, &format!("waypoint {i}"))?;
        }
        let c0 = self.start(&view, model, &req.waypoints[0], req.warm_start, None)?;
        let results = follow_path(&view, &req.waypoints, &c0, &model.solver)?;
        Ok(results
            .into_iter()
            .map(|r| IkResponse::new(r, model.bundle.width))
            .collect())
    }

    pub fn shape(&self, query: ShapeQuery) -> Result<ShapeResponse, ApiError> {
        let model = self.loaded()?;
        let raw = query.c.ok_or_else(|| ApiError::bad("malformed_request", "missing query parameter c"))?;
        let c = raw
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| ApiError::bad("malformed_request", format!("c must be comma-separated numbers, got {raw:?}")))?;
        model.bundle.spec.check_actuation(&c)?;
        let points = body_curve(&model.bundle.spec, &ActuationVector::new(c), SHAPE_SAMPLES)?;
        Ok(ShapeResponse {
            points: points.iter().map(|p| p.as_slice().to_vec()).collect(),
        })
    }
}

fn session_token(headers: &HeaderMap) -> Option<String> {
    headers
        .get(SESSION_HEADER)
        .and_then(|v| v.to_str().ok())
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
}

/// Run a solver call off the async workers.
async fn blocking<T, F>(state: Arc<AppState>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&AppState) -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map(Json)
}

async fn robot(State(state): State<Arc<AppState>>) -> ApiResult<RobotInfo> {
    state.robot().map(Json)
}

async fn fk(State(state): State<Arc<AppState>>, body: Result<Json<FkRequest>, JsonRejection>) -> ApiResult<FkResponse> {
    let Json(req) = body?;
    state.fk(req).map(Json)
}

async fn ik(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Result<Json<IkRequest>, JsonRejection>,
) -> ApiResult<IkResponse> {
    let Json(req) = body?;
    let token = session_token(&headers);
    blocking(state, move |s| s.ik(req, token.as_deref())).await
}

async fn follow(
    State(state): State<Arc<AppState>>,
    body: Result<Json<FollowRequest>, JsonRejection>,
) -> ApiResult<Vec<IkResponse>> {
    let Json(req) = body?;
    blocking(state, move |s| s.follow(req)).await
}

async fn shape(State(state): State<Arc<AppState>>, query: Result<Query<ShapeQuery>, QueryRejection>) -> ApiResult<ShapeResponse> {
    let Query(q) = query?;
    state.shape(q).map(Json)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/robot", get(robot))
        .route("/api/fk", post(fk))
        .route("/api/ik", post(ik))
        .route("/api/follow", post(follow))
        .route("/api/shape", get(shape))
        .with_state(state)
}

/// Serve until Ctrl-C.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
