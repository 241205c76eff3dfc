use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use selprompt_core::api::{to_body, ApiError, PromptRequest, RecommendRequest, Service};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use tower_http::cors::CorsLayer;

fn json_response<T: Serialize>(status: StatusCode, value: &T) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], to_body(value)).into_response()
}

fn reply<T: Serialize>(result: Result<T, ApiError>) -> Response {
    match result {
        Ok(v) => json_response(StatusCode::OK, &v),
        Err(e) => {
            let status = StatusCode::from_u16(e.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            json_response(status, &e)
        }
    }
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(400, "invalid_request", "surface", e.to_string()))
}

async fn prompt(State(service): State<Arc<Service>>, body: Bytes) -> Response {
    let req: PromptRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(e) => return reply::<()>(Err(e)),
    };
    let joined = tokio::task::spawn_blocking(move || service.prompt(&req)).await;
    match joined {
        Ok(result) => reply(result),
        Err(e) => reply::<()>(Err(ApiError::new(500, "internal", "surface", e.to_string()))),
    }
}

async fn recommend(State(service): State<Arc<Service>>, body: Bytes) -> Response {
    reply(parse_body::<RecommendRequest>(&body).and_then(|req| service.recommend(&req)))
}

async fn configs(State(service): State<Arc<Service>>, Query(q): Query<HashMap<String, String>>) -> Response {
    match q.get("task") {
        Some(task) => reply(service.configs(task)),
        None => reply::<()>(Err(ApiError::new(400, "invalid_task", "surface", "missing query parameter `task`"))),
    }
}

async fn languages(State(service): State<Arc<Service>>) -> Response {
    json_response(StatusCode::OK, &service.languages())
}

async fn healthz() -> Response {
    json_response(StatusCode::OK, &json!({ "status": "ok" }))
}

async fn not_found() -> Response {
    reply::<()>(Err(ApiError::new(404, "not_found", "surface", "no such route")))
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/v1/prompt", post(prompt))
        .route("/v1/recommend", post(recommend))
        .route("/v1/configs", get(configs))
        .route("/v1/languages", get(languages))
        .route("/healthz", get(healthz))
        .fallback(not_found)
        .layer(CorsLayer::permissive())
        .with_state(service)
}
