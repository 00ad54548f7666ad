use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use leafgraph::service::{router, ExplainReply, PredictReply};
use leafgraph_core::dataset::{split, synth_dataset, FeatureStore, Split, SplitFractions};
use leafgraph_core::model::{train, Arch, ModelConfig, ModelInputs, SageModel, SplitData};
use leafgraph_core::Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixture(arch: Arch) -> (SageModel, SplitData) {
    let (m, store): (_, FeatureStore) = synth_dataset(4, 15, 10, 0.3, &mut Rng::named(2, "synth")).unwrap();
    let m = split(&m, SplitFractions::default(), &mut Rng::named(2, "split")).unwrap();
    let cfg = ModelConfig {
        arch,
        hidden_dims: vec![8],
        layers: 1,
        fan_outs: vec![5],
        epochs: 3,
        theta: 0.3,
        min_degree: 2,
        ..ModelConfig::default()
    };
    let (model, _) = train(&cfg, ModelInputs::pooled(&store), &m).unwrap();
    let data = SplitData::gather(&store, &m, Split::Train).unwrap();
    (model, data)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, Body::from))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

fn features_body(x: &[f64]) -> String {
    json!({ "features": x }).to_string()
}

#[tokio::test]
async fn health_and_model_info() {
    let (model, _) = fixture(Arch::Sequential);
    let params = model.count_parameters();
    let classes = model.class_table().to_vec();
    let app = router(model);

    let (status, body) = call(&app, "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, br#"{"status":"ok"}"#);

    let (status, body) = call(&app, "GET", "/v1/model", None).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["arch"], "sequential");
    assert_eq!(v["param_count"], params);
    assert_eq!(v["theta"], 0.3);
    assert_eq!(v["classes"], json!(classes));
}

#[tokio::test]
async fn predictions_match_offline_for_training_samples() {
    for arch in [Arch::Sequential, Arch::CnnOnly] {
        let (model, data) = fixture(arch);
        let offline = model.predict(&data.features).unwrap();
        let classes = model.class_table().to_vec();
        let ids = data.ids.clone();
        let app = router(model);
        for i in 0..20 {
            let (status, body) = call(&app, "POST", "/v1/predict", Some(features_body(data.features.row(i)))).await;
            assert_eq!(status, StatusCode::OK);
            let reply: PredictReply = serde_json::from_slice(&body).unwrap();
            assert_eq!(reply.predicted, classes[offline[i].class]);
            let total: f64 = reply.probs.values().sum();
            assert!((total - 1.0).abs() < 1e-6);
            for (k, label) in classes.iter().enumerate() {
                assert!((reply.probs[label] - offline[i].probs[k]).abs() < 1e-6);
            }
            assert_eq!(reply.neighbors.len(), offline[i].neighbors.len());
            for (n, &(u, s)) in reply.neighbors.iter().zip(&offline[i].neighbors) {
                assert_eq!(n.id, ids[u]);
                assert!((n.similarity - s).abs() < 1e-8);
            }
        }
    }
}

#[tokio::test]
async fn malformed_and_misshapen_bodies() {
    let (model, data) = fixture(Arch::Sequential);
    let d = data.features.cols();
    let app = router(model);

    for bad in ["not json", "{", r#"{"features":"x"}"#, r#"{"feature":[1]}"#, r#"{"features":[1,"a"]}"#] {
        let (status, body) = call(&app, "POST", "/v1/predict", Some(bad.into())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
        let v: Value = serde_json::from_slice(&body).unwrap();
        assert!(v["error"].is_string());
    }
    let short = vec![0.5; d - 1];
    let (status, _) = call(&app, "POST", "/v1/predict", Some(features_body(&short))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let long = vec![0.5; d + 1];
    let (status, _) = call(&app, "POST", "/v1/predict", Some(features_body(&long))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, _) = call(&app, "POST", "/v1/explain", Some(r#"{"spatial":[1],"shape":[1,1,1],"method":"lime"}"#.into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, "POST", "/v1/explain", Some(r#"{"spatial":[1,2],"shape":[1,1,1],"method":"eigencam"}"#.into())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, "POST", "/v1/explain", Some(r#"{"spatial":[1,2],"shape":[1,2,1],"method":"gradcam"}"#.into())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn explain_endpoints() {
    let (model, data) = fixture(Arch::Sequential);
    let d = data.features.cols();
    let app = router(model);

    // rank-one map: every cell is a scaled copy of a training row
    let (h, w) = (3, 4);
    let weights: Vec<f64> = (0..h * w).map(|i| 0.5 + i as f64 / 10.0).collect();
    let mut spatial = Vec::with_capacity(h * w * d);
    for &s in &weights {
        spatial.extend(data.features.row(0).iter().map(|v| v * s));
    }
    let body = json!({ "spatial": spatial, "shape": [h, w, d], "method": "eigencam" }).to_string();
    let (status, bytes) = call(&app, "POST", "/v1/explain", Some(body)).await;
    assert_eq!(status, StatusCode::OK);
    let reply: ExplainReply = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(reply.heatmap.len(), h * w);
    assert!(!reply.degenerate);
    assert_eq!(reply.heatmap[0], 0.0);
    assert_eq!(reply.heatmap[h * w - 1], 1.0);

    let body = json!({ "spatial": spatial, "shape": [h, w, d], "method": "gradcam", "class": 1 }).to_string();
    let (status, bytes) = call(&app, "POST", "/v1/explain", Some(body)).await;
    assert_eq!(status, StatusCode::OK);
    let reply: ExplainReply = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(reply.heatmap.len(), h * w);
    assert!(reply.heatmap.iter().all(|v| (0.0..=1.0).contains(v)));

    let body = json!({ "spatial": spatial, "shape": [h, w, d], "method": "gradcam", "class": 99 }).to_string();
    let (status, _) = call(&app, "POST", "/v1/explain", Some(body)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let zeros = vec![0.0; h * w * d];
    let body = json!({ "spatial": zeros, "shape": [h, w, d], "method": "eigencam" }).to_string();
    let (_, bytes) = call(&app, "POST", "/v1/explain", Some(body)).await;
    let reply: ExplainReply = serde_json::from_slice(&bytes).unwrap();
    assert!(reply.degenerate);
    assert!(reply.heatmap.iter().all(|&v| v == 0.0));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_identical_requests_get_identical_bodies() {
    let (model, data) = fixture(Arch::Parallel);
    let app = router(model);
    let body = features_body(data.features.row(3));
    let tasks: Vec<_> = (0..50)
        .map(|_| {
            let app = app.clone();
            let body = body.clone();
            tokio::spawn(async move { call(&app, "POST", "/v1/predict", Some(body)).await })
        })
        .collect();
    let mut replies = Vec::new();
    for t in tasks {
        replies.push(t.await.unwrap());
    }
    assert!(replies.iter().all(|r| r.0 == StatusCode::OK));
    assert!(replies.iter().all(|r| r.1 == replies[0].1));
}
