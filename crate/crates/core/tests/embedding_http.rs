//! The HTTP embedding client against a local stub encoder.

use std::net::SocketAddr;
use std::time::Duration;

use axum::routing::post;
use axum::{Json, Router};
use metaflow_core::eval::{similarity, EmbeddingProvider, EvalError, HttpProvider};
use serde_json::{json, Value};

fn spawn_encoder() -> SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let app = Router::new().route(
                "/embed",
                post(|Json(body): Json<Value>| async move {
                    let text = body["text"].as_str().unwrap_or_default();
                    let v: Vec<f64> = match text {
                        "zero" => vec![0.0, 0.0, 0.0],
                        _ => vec![text.len() as f64, text.matches('a').count() as f64, 1.0],
                    };
                    Json(json!({ "vector": v }))
                }),
            );
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

#[test]
fn remote_vectors_drive_similarity() {
    let addr = spawn_encoder();
    let p = HttpProvider::new(format!("http://{addr}/embed"), Duration::from_secs(5)).unwrap();
    assert_eq!(p.embed("banana").unwrap(), vec![6.0, 3.0, 1.0]);
    assert!((similarity(&p, "banana", "banana").unwrap() - 100.0).abs() < 1e-9);
    let ab = similarity(&p, "banana", "kiwi").unwrap();
    assert!((ab - similarity(&p, "kiwi", "banana").unwrap()).abs() < 1e-12);
    assert!(matches!(similarity(&p, "zero", "banana"), Err(EvalError::ZeroVector)));
}

#[test]
fn unreachable_provider_is_reported() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let p = HttpProvider::new(format!("http://{addr}/embed"), Duration::from_millis(500)).unwrap();
    assert!(matches!(p.embed("x"), Err(EvalError::ProviderUnavailable(_))));
}
