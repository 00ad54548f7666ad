//! Read-only JSON inference service over a loaded checkpoint.
//!
//! | route | body | reply |
//! |---|---|---|
//! | `GET /health` | | `{"status":"ok"}` |
//! | `GET /v1/model` | | `{"arch","classes","param_count","theta"}` |
//! | `POST /v1/predict` | `{"features":[D reals]}` | `{"predicted","probs":{label:p},"neighbors":[{"id","similarity"}]}` |
//! | `POST /v1/explain` | `{"spatial":[..],"shape":[H,W,C],"method","class"?}` | `{"heatmap":[H·W reals],"degenerate"}` |
//!
//! Unparseable bodies get 400, well-formed bodies with the wrong dimensions
//! 422. Reals carry 9 significant digits.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use leafgraph_core::explain::{eigen_cam, grad_cam, CamMethod};
use leafgraph_core::model::SageModel;
use leafgraph_core::Tensor;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{AppError, Result};

/// Rounds to 9 significant digits so replies are stable across platforms.
pub fn sig9(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.8e}").parse().unwrap_or(v)
}

struct ServiceState {
    model: SageModel,
    param_count: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    pub features: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct NeighborReply {
    pub id: String,
    pub similarity: f64,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct PredictReply {
    pub predicted: String,
    pub probs: BTreeMap<String, f64>,
    pub neighbors: Vec<NeighborReply>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainRequest {
    pub spatial: Vec<f64>,
    pub shape: [usize; 3],
    pub method: String,
    #[serde(default)]
    pub class: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ExplainReply {
    pub heatmap: Vec<f64>,
    pub degenerate: bool,
}

fn reject(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, Response> {
    serde_json::from_slice(body).map_err(|e| reject(StatusCode::BAD_REQUEST, format!("malformed body: {e}")))
}

pub fn router(model: SageModel) -> Router {
    let state = Arc::new(ServiceState {
        param_count: model.count_parameters(),
        model,
    });
    Router::new()
        .route("/health", get(health))
        .route("/v1/model", get(model_info))
        .route("/v1/predict", post(predict))
        .route("/v1/explain", post(explain))
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn model_info(State(s): State<Arc<ServiceState>>) -> Json<serde_json::Value> {
    Json(json!({
        "arch": s.model.arch().as_str(),
        "classes": s.model.class_table(),
        "param_count": s.param_count,
        "theta": sig9(s.model.config().theta),
    }))
}

async fn predict(State(s): State<Arc<ServiceState>>, body: Bytes) -> Response {
    let req: PredictRequest = match parse(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let d = s.model.input_dim();
    if req.features.len() != d {
        return reject(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("expected {d} features, got {}", req.features.len()),
        );
    }
    let x = Tensor::new(vec![1, d], req.features).expect("length checked");
    let p = match s.model.predict(&x) {
        Ok(mut p) => p.remove(0),
        Err(e) => return reject(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    };
    let classes = s.model.class_table();
    let ids = s.model.train_graph().map(|tg| tg.ids.as_slice()).unwrap_or_default();
    let reply = PredictReply {
        predicted: classes[p.class].clone(),
        probs: classes.iter().cloned().zip(p.probs.iter().map(|&v| sig9(v))).collect(),
        neighbors: p
            .neighbors
            .iter()
            .map(|&(u, sim)| NeighborReply {
                id: ids[u].clone(),
                similarity: sig9(sim),
            })
            .collect(),
    };
    Json(reply).into_response()
}

async fn explain(State(s): State<Arc<ServiceState>>, body: Bytes) -> Response {
    let req: ExplainRequest = match parse(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let method = match CamMethod::parse(&req.method) {
        Ok(m) => m,
        Err(e) => return reject(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let [h, w, c] = req.shape;
    if h == 0 || w == 0 || c == 0 || req.spatial.len() != h * w * c {
        return reject(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("spatial has {} values, shape {:?}", req.spatial.len(), req.shape),
        );
    }
    let map = Tensor::new(vec![h, w, c], req.spatial).expect("length checked");
    let heatmap = match method {
        CamMethod::EigenCam => eigen_cam(&map),
        CamMethod::GradCam => {
            if c != s.model.input_dim() {
                return reject(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    format!("gradcam needs {} channels, got {c}", s.model.input_dim()),
                );
            }
            grad_cam(&s.model, &map, req.class)
        }
    };
    match heatmap {
        Ok(hm) => Json(ExplainReply {
            heatmap: hm.grid.data().iter().map(|&v| sig9(v)).collect(),
            degenerate: hm.degenerate,
        })
        .into_response(),
        Err(e) => reject(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    }
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(model: SageModel, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| AppError::Runtime(format!("cannot bind {addr}: {e}")))?;
    log::info!("listening on {}", listener.local_addr().map_or(addr, |a| a));
    axum::serve(listener, router(model))
        .await
        .map_err(|e| AppError::Runtime(format!("server: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.123456789123), 0.123456789);
        assert_eq!(sig9(1234567891234.0), 1234567890000.0);
        assert_eq!(sig9(-2.5e-12), -2.5e-12);
        assert_eq!(sig9(0.0), 0.0);
        assert_eq!(serde_json::to_string(&sig9(1.0 / 3.0)).unwrap(), "0.333333333");
    }
}
