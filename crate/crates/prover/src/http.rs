//! HTTP/JSON front-end: health, stats, token registration and lookup, and the
//! cache query path (which carries no tokens or assets).

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use puppy_core::asset::{TokenRecord, TokenRecordJson};
use puppy_core::crypto::AssetId;
use puppy_core::wire::{ErrCode, Message};
use serde::{Deserialize, Serialize};

use crate::state::AppState;

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub mode: String,
    /// Hex measurement of the enclave program, in tee modes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegisterBody {
    pub record: TokenRecordJson,
    /// Hex HMAC-SHA-256 over the binary REGISTER payload without the MAC.
    pub mac: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TokenInfo {
    pub id: AssetId,
    pub scheme: String,
    pub share_len: usize,
    pub has_c_sec: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CacheQuery {
    pub id: AssetId,
    pub h: String,
    pub sim: f64,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct CacheAnswer {
    pub present: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub res: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: msg.into() })).into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(health))
        .route("/v1/stats", get(stats))
        .route("/v1/tokens", post(register))
        .route("/v1/tokens/{id}", get(token_info))
        .route("/v1/cache/query", post(cache_query))
        .route("/v1/cache/snapshot", get(cache_snapshot))
        .with_state(state)
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        mode: state.mode().to_string(),
        measurement: state.enclave.as_ref().map(|e| hex::encode(e.measurement())),
    })
}

async fn stats(State(state): State<Arc<AppState>>) -> impl IntoResponse {
    Json(state.snapshot())
}

async fn register(State(state): State<Arc<AppState>>, Json(body): Json<RegisterBody>) -> Response {
    let record = match TokenRecord::try_from(&body.record) {
        Ok(r) if !r.share.is_empty() => r,
        Ok(_) => return error(StatusCode::BAD_REQUEST, "empty share"),
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let Ok(mac) = hex::decode(&body.mac) else {
        return error(StatusCode::BAD_REQUEST, "mac is not hex");
    };
    let signed = Message::Register {
        id: record.id,
        scheme: record.scheme.code(),
        share: record.share.clone(),
        c_sec: record.c_sec.clone().unwrap_or_default(),
        mac: [0; 32],
    }
    .register_signed_part()
    .expect("register message");
    let id = record.id;
    let state2 = state.clone();
    // The store syncs to disk on insert.
    let result = tokio::task::spawn_blocking(move || state2.register(record, &signed, &mac)).await;
    match result {
        Ok(Ok(())) => (StatusCode::CREATED, Json(serde_json::json!({ "id": id }))).into_response(),
        Ok(Err(ErrCode::Duplicate)) => error(StatusCode::CONFLICT, "duplicate id"),
        Ok(Err(ErrCode::Unauthorized)) => error(StatusCode::UNAUTHORIZED, "bad owner mac"),
        Ok(Err(ErrCode::Malformed)) => error(StatusCode::BAD_REQUEST, "record does not fit this prover's mode"),
        Ok(Err(ErrCode::Storage)) | Err(_) => error(StatusCode::SERVICE_UNAVAILABLE, "storage failure, retry"),
    }
}

async fn token_info(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let Ok(id) = AssetId::from_hex(&id) else {
        return error(StatusCode::BAD_REQUEST, "id must be 64 hex characters");
    };
    match state.store.get(&id) {
        Some(r) => Json(TokenInfo {
            id,
            scheme: r.scheme.to_string(),
            share_len: r.share.len(),
            has_c_sec: r.c_sec.is_some(),
        })
        .into_response(),
        None => error(StatusCode::NOT_FOUND, "unknown id"),
    }
}

async fn cache_query(State(state): State<Arc<AppState>>, Json(q): Json<CacheQuery>) -> Response {
    let h: [u8; 32] = match hex::decode(&q.h).ok().and_then(|v| v.try_into().ok()) {
        Some(h) => h,
        None => return error(StatusCode::BAD_REQUEST, "h must be 64 hex characters"),
    };
    if !q.sim.is_finite() {
        return error(StatusCode::BAD_REQUEST, "sim must be finite");
    }
    let res = state.cache_get(&q.id, &h, q.sim);
    Json(CacheAnswer {
        present: res.is_some(),
        res,
    })
    .into_response()
}

async fn cache_snapshot(State(state): State<Arc<AppState>>) -> Response {
    match state.cache_snapshot() {
        Some(csv) => ([(header::CONTENT_TYPE, "text/csv")], csv).into_response(),
        None => error(StatusCode::NOT_FOUND, "cache disabled"),
    }
}
