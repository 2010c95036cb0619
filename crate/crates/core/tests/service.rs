use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use orderseg::mask::BinaryMask;
use orderseg::model::{Model, ModelConfig, Session};
use orderseg::prompts::Polarity;
use orderseg::scenegen::{generate_dataset, image_to_png, mask_to_png, DatasetSpec, Scene, Split, SplitRatios};
use orderseg::service::{router, AppState, ClickResponse, ServiceConfig, SessionSummary};

fn model() -> Arc<Model<f32>> {
    Arc::new(Model::new(ModelConfig::default(), 7).unwrap())
}

fn scenes() -> Vec<Scene> {
    generate_dataset(&DatasetSpec { seed: 3, count: 2, size: 64, splits: SplitRatios::only(Split::Overlap) }).unwrap()
}

fn create_body(scene: &Scene, with_gt: bool) -> Value {
    let depth = orderseg::io::write_pfm(scene.width(), scene.height(), scene.depth.values.data());
    let mut body = json!({
        "image_png": B64.encode(image_to_png(&scene.image).unwrap()),
        "depth_pfm": B64.encode(depth),
    });
    if with_gt {
        body["gt_png"] = json!(B64.encode(mask_to_png(&scene.masks[scene.focus.unwrap_or(0)]).unwrap()));
    }
    body
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, value)
}

async fn create(app: &axum::Router, scene: &Scene) -> String {
    let (status, v) = call(app, "POST", "/sessions", Some(create_body(scene, true))).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

async fn click(app: &axum::Router, id: &str, x: usize, y: usize, polarity: &str) -> (StatusCode, Value) {
    call(app, "POST", &format!("/sessions/{id}/clicks"), Some(json!({ "x": x, "y": y, "polarity": polarity }))).await
}

#[tokio::test]
async fn create_returns_distinct_ids() {
    let app = router(AppState::new(model(), ServiceConfig::default()));
    let s = &scenes()[0];
    let (a, b) = (create(&app, s).await, create(&app, s).await);
    assert_ne!(a, b);
    let (status, v) = call(&app, "GET", &format!("/sessions/{a}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let summary: SessionSummary = serde_json::from_value(v).unwrap();
    assert_eq!((summary.rounds, summary.encoder_calls, summary.width), (0, 1, 64));
}

#[tokio::test]
async fn bad_inputs_are_rejected() {
    let app = router(AppState::new(model(), ServiceConfig::default()));
    let s = &scenes()[0];

    let mut body = create_body(s, false);
    body["depth_pfm"] = json!(B64.encode(orderseg::io::write_pfm(32, 32, &vec![1.0; 32 * 32])));
    assert_eq!(call(&app, "POST", "/sessions", Some(body)).await.0, StatusCode::UNPROCESSABLE_ENTITY);

    let body = json!({ "image_png": B64.encode(b"not a png") });
    assert_eq!(call(&app, "POST", "/sessions", Some(body)).await.0, StatusCode::BAD_REQUEST);
    let body = json!({ "image_png": "%%%" });
    assert_eq!(call(&app, "POST", "/sessions", Some(body)).await.0, StatusCode::BAD_REQUEST);

    let id = create(&app, s).await;
    assert_eq!(click(&app, &id, 64, 3, "positive").await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let unknown = uuid::Uuid::new_v4();
    assert_eq!(click(&app, &unknown.to_string(), 3, 3, "positive").await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/sessions/nope", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "POST", &format!("/sessions/{id}/redo"), None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn twenty_fifth_positive_click_conflicts() {
    let app = router(AppState::new(model(), ServiceConfig::default()));
    let id = create(&app, &scenes()[0]).await;
    for i in 0..24 {
        let (status, v) = click(&app, &id, i, i, "positive").await;
        assert_eq!(status, StatusCode::OK, "{v}");
    }
    let (status, v) = click(&app, &id, 30, 30, "positive").await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(v["error"].is_string());
    assert_eq!(click(&app, &id, 30, 30, "negative").await.0, StatusCode::OK);
}

#[tokio::test]
async fn undo_restores_the_previous_round() {
    let app = router(AppState::new(model(), ServiceConfig::default()));
    let id = create(&app, &scenes()[0]).await;
    assert_eq!(call(&app, "POST", &format!("/sessions/{id}/undo"), None).await.0, StatusCode::CONFLICT);

    let (_, first) = click(&app, &id, 20, 20, "positive").await;
    let (_, before) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    let (_, second) = click(&app, &id, 40, 40, "negative").await;
    let (status, after_undo) = call(&app, "POST", &format!("/sessions/{id}/undo"), None).await;
    assert_eq!(status, StatusCode::OK);
    for key in ["rounds", "clicks", "ious"] {
        assert_eq!(before[key], after_undo[key], "{key}");
    }
    // The next click sees the restored previous mask, so it reproduces the
    // original second round exactly.
    let (_, again) = click(&app, &id, 40, 40, "negative").await;
    let (_, undone) = call(&app, "POST", &format!("/sessions/{id}/undo"), None).await;
    assert_eq!(undone["rounds"], 1);
    assert_eq!(again["round"], 2);
    assert_eq!(again["mask"], second["mask"]);
    assert_eq!(first["round"], 1);
    call(&app, "POST", &format!("/sessions/{id}/undo"), None).await;
    assert_eq!(call(&app, "POST", &format!("/sessions/{id}/undo"), None).await.0, StatusCode::CONFLICT);
}

#[tokio::test]
async fn idle_sessions_expire() {
    let state = AppState::new(model(), ServiceConfig { idle_timeout: Duration::from_millis(50) });
    let app = router(state.clone());
    let a = create(&app, &scenes()[0]).await;
    let b = create(&app, &scenes()[0]).await;
    tokio::time::sleep(Duration::from_millis(120)).await;
    assert_eq!(call(&app, "GET", &format!("/sessions/{a}"), None).await.0, StatusCode::NOT_FOUND);
    state.sweep().await;
    assert_eq!(state.session_count(), 0);
    assert_eq!(click(&app, &b, 1, 1, "positive").await.0, StatusCode::NOT_FOUND);
}

fn library_masks(model: &Model<f32>, scene: &Scene, clicks: &[(usize, usize, Polarity)]) -> Vec<BinaryMask> {
    let gt = scene.masks[scene.focus.unwrap_or(0)].clone();
    let mut s = Session::new(model, &scene.image, Some(scene.depth.clone()), Some(gt)).unwrap();
    clicks.iter().map(|&(x, y, p)| s.click(model, x, y, p).unwrap().mask).collect()
}

#[tokio::test]
async fn api_matches_library_and_sessions_stay_isolated() {
    let m = model();
    let app = router(AppState::new(m.clone(), ServiceConfig::default()));
    let sc = scenes();
    let seq_a = [(10, 12, Polarity::Positive), (40, 33, Polarity::Negative), (22, 50, Polarity::Positive)];
    let seq_b = [(50, 5, Polarity::Negative), (31, 31, Polarity::Positive), (2, 60, Polarity::Positive)];
    let expect_a = library_masks(&m, &sc[0], &seq_a);
    let expect_b = library_masks(&m, &sc[1], &seq_b);

    let (a, b) = (create(&app, &sc[0]).await, create(&app, &sc[1]).await);
    let name = |p: Polarity| if p == Polarity::Positive { "positive" } else { "negative" };
    for i in 0..3 {
        for (id, seq, expect) in [(&a, &seq_a, &expect_a), (&b, &seq_b, &expect_b)] {
            let (x, y, p) = seq[i];
            let (status, v) = click(&app, id, x, y, name(p)).await;
            assert_eq!(status, StatusCode::OK);
            let r: ClickResponse = serde_json::from_value(v).unwrap();
            assert_eq!(r.round, i + 1);
            assert_eq!(r.mask.decode().unwrap(), expect[i]);
            assert!(r.iou.is_some());
            let png = B64.decode(&r.order_map_png).unwrap();
            assert_eq!(image::load_from_memory(&png).unwrap().width(), 64);
        }
    }
    let (_, v) = call(&app, "GET", &format!("/sessions/{a}"), None).await;
    let summary: SessionSummary = serde_json::from_value(v).unwrap();
    assert_eq!((summary.rounds, summary.encoder_calls, summary.click_ms.len()), (3, 1, 3));
}

#[tokio::test]
async fn missing_depth_means_flat_order_maps() {
    let app = router(AppState::new(model(), ServiceConfig::default()));
    let body = json!({ "image_png": B64.encode(image_to_png(&scenes()[0].image).unwrap()) });
    let (status, v) = call(&app, "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(v["has_depth"], false);
    let id = v["id"].as_str().unwrap();
    let (_, v) = click(&app, id, 30, 30, "positive").await;
    let r: ClickResponse = serde_json::from_value(v).unwrap();
    let png = image::load_from_memory(&B64.decode(&r.order_map_png).unwrap()).unwrap().to_luma8();
    assert!(png.pixels().all(|p| p.0[0] == 0));
    assert!(r.iou.is_none());
}
