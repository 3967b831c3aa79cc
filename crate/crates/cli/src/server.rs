//! HTTP service: `GET /suts`, `POST /scan`, `/detect`, `/grid`, `/refine`.
//!
//! Bodies are parsed by hand so every malformed request gets the JSON error
//! envelope rather than a framework rejection.

use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use boundex_core::api::{
    self, ApiError, DetectRequest, Engine, GridRequest, RefineRequest, ScanRequest,
};
use serde::Serialize;
use tokio::sync::mpsc;

const JSON: &str = "application/json";
const NDJSON: &str = "application/x-ndjson";

pub fn router(engine: Engine) -> Router {
    Router::new()
        .route("/suts", get(suts))
        .route("/detect", post(detect))
        .route("/scan", post(scan))
        .route("/grid", post(grid))
        .route("/refine", post(refine))
        .fallback(not_found)
        .with_state(Arc::new(engine))
}

/// Binds `addr`, prints the bound address on stdout, and serves forever.
pub fn serve_blocking(engine: Engine, addr: SocketAddr) -> std::io::Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        println!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(engine)).await
    })
}

fn json_response(status: u16, body: String) -> Response {
    let status = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, [(header::CONTENT_TYPE, JSON)], body).into_response()
}

fn error_response(e: &ApiError) -> Response {
    json_response(e.http_status(), e.to_json())
}

fn body_str(body: &Bytes) -> Result<&str, ApiError> {
    std::str::from_utf8(body).map_err(|e| ApiError::BadRequest(format!("body is not UTF-8: {e}")))
}

/// Runs blocking engine work off the async executor.
async fn blocking<T, F>(f: F) -> Response
where
    T: Serialize + Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(Ok(v)) => json_response(200, api::to_json(&v)),
        Ok(Err(e)) => error_response(&e),
        Err(e) => error_response(&ApiError::Engine(format!("worker task failed: {e}"))),
    }
}

async fn suts(State(engine): State<Arc<Engine>>) -> Response {
    json_response(200, api::to_json(&engine.suts()))
}

async fn detect(State(engine): State<Arc<Engine>>, body: Bytes) -> Response {
    let req = match body_str(&body).and_then(api::parse::<DetectRequest>) {
        Ok(r) => r,
        Err(e) => return error_response(&e),
    };
    blocking(move || engine.detect(&req)).await
}

async fn scan(State(engine): State<Arc<Engine>>, body: Bytes) -> Response {
    let req = match body_str(&body).and_then(api::parse::<ScanRequest>) {
        Ok(r) => r,
        Err(e) => return error_response(&e),
    };
    if req.steps == 0 {
        return error_response(&ApiError::BadRequest("steps must be at least 1".into()));
    }
    blocking(move || engine.scan(&req)).await
}

async fn refine(State(engine): State<Arc<Engine>>, body: Bytes) -> Response {
    match body_str(&body).and_then(api::parse::<RefineRequest>) {
        Ok(req) => match engine.refine(&req) {
            Ok(r) => json_response(200, api::to_json(&r)),
            Err(e) => error_response(&e),
        },
        Err(e) => error_response(&e),
    }
}

#[derive(Serialize)]
struct Progress {
    v: u32,
    progress: ProgressBody,
}

#[derive(Serialize)]
struct ProgressBody {
    done: u64,
    total: u64,
}

async fn grid(State(engine): State<Arc<Engine>>, body: Bytes) -> Response {
    let req = match body_str(&body).and_then(api::parse::<GridRequest>) {
        Ok(r) => r,
        Err(e) => return error_response(&e),
    };
    if !req.stream {
        return blocking(move || engine.grid(&req, None)).await;
    }
    // Validate up front so budget and region errors keep their status codes.
    if let Err(e) = check_grid(&engine, &req) {
        return error_response(&e);
    }
    let (tx, rx) = mpsc::unbounded_channel::<String>();
    tokio::task::spawn_blocking(move || {
        let last = std::sync::atomic::AtomicU64::new(u64::MAX);
        let progress = |done: u64, total: u64| {
            // About a hundred progress lines per request at most.
            let bucket = (done * 100).checked_div(total).unwrap_or(0);
            if last.swap(bucket, std::sync::atomic::Ordering::Relaxed) != bucket {
                let p = Progress {
                    v: api::SCHEMA_VERSION,
                    progress: ProgressBody { done, total },
                };
                let _ = tx.send(api::to_json(&p));
            }
        };
        let last_line = match engine.grid(&req, Some(&progress)) {
            Ok(r) => api::to_json(&r),
            Err(e) => e.to_json(),
        };
        let _ = tx.send(last_line);
    });
    let stream = futures_util::stream::unfold(rx, |mut rx| async move {
        rx.recv().await.map(|line| (Ok::<_, Infallible>(line), rx))
    });
    Response::builder()
        .status(StatusCode::OK)
        .header(header::CONTENT_TYPE, NDJSON)
        .body(Body::from_stream(stream))
        .expect("static response parts")
}

fn check_grid(engine: &Engine, req: &GridRequest) -> Result<(), ApiError> {
    let sut = engine.registry().resolve(&req.config.sut)?;
    req.config.distance_function()?;
    req.region.check_against(sut.descriptor())?;
    let cells = req.region.cell_count();
    if cells > engine.budget() as u128 {
        return Err(ApiError::BudgetExceeded {
            required: cells,
            allowed: engine.budget(),
        });
    }
    Ok(())
}

async fn not_found() -> Response {
    json_response(
        404,
        format!(
            "{{\"v\":{},\"error\":{{\"kind\":\"not_found\",\"message\":\"no such endpoint\"}}}}\n",
            api::SCHEMA_VERSION
        ),
    )
}
