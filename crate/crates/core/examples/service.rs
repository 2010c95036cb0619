//! Drives the HTTP API in process: create a session from PNG and PFM
//! payloads, click, inspect, undo.
//!
//! `cargo run --example service`

use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use orderseg::io::write_pfm;
use orderseg::model::{Model, ModelConfig};
use orderseg::scenegen::{generate_dataset, image_to_png, mask_to_png, DatasetSpec, Split, SplitRatios};
use orderseg::service::{router, AppState, ClickResponse, ServiceConfig};

async fn call(app: &axum::Router, method: &str, uri: &str, body: Value) -> orderseg::Result<Value> {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(Body::from(body.to_string())).expect("request");
    let resp = app.clone().oneshot(req).await.expect("infallible");
    let status = resp.status();
    let bytes = resp.into_body().collect().await.expect("body").to_bytes();
    let v: Value = serde_json::from_slice(&bytes)?;
    println!("{method} {uri} -> {status}");
    Ok(v)
}

#[tokio::main(flavor = "current_thread")]
async fn main() -> orderseg::Result<()> {
    let model = Arc::new(Model::new(ModelConfig::default(), 0)?);
    let app = router(AppState::new(model, ServiceConfig::default()));
    let scene = generate_dataset(&DatasetSpec { seed: 1, count: 1, size: 64, splits: SplitRatios::only(Split::Overlap) })?.remove(0);
    let gt = &scene.masks[scene.focus.unwrap_or(0)];

    let created = call(
        &app,
        "POST",
        "/sessions",
        json!({
            "image_png": B64.encode(image_to_png(&scene.image)?),
            "depth_pfm": B64.encode(write_pfm(scene.width(), scene.height(), scene.depth.values.data())),
            "gt_png": B64.encode(mask_to_png(gt)?),
        }),
    )
    .await?;
    let id = created["id"].as_str().expect("session id").to_string();

    for (x, y, polarity) in [(20, 20, "positive"), (44, 40, "negative")] {
        let v = call(&app, "POST", &format!("/sessions/{id}/clicks"), json!({ "x": x, "y": y, "polarity": polarity })).await?;
        let r: ClickResponse = serde_json::from_value(v)?;
        let mask = r.mask.decode()?;
        println!("  round {} mask area {} IoU {:?}", r.round, mask.count(), r.iou);
    }
    let v = call(&app, "POST", &format!("/sessions/{id}/undo"), Value::Null).await?;
    println!("  after undo: rounds {} clicks {}", v["rounds"], v["clicks"]);
    let v = call(&app, "POST", &format!("/sessions/{id}/clicks"), json!({ "x": 99, "y": 0, "polarity": "positive" })).await?;
    println!("  {}", v["error"]);
    Ok(())
}
