//! Service routes driven in-process.

mod common;

use akg::config::Config;
use axum::http::{Method, StatusCode};
use common::{call, golden, mock_config, runtime, service};
use serde_json::json;

#[test]
fn read_routes() {
    let app = service(&golden(), &mock_config());
    runtime().block_on(async {
        let (status, health) = call(&app, Method::GET, "/health", None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(health["status"], "ok");
        let sha = akg::pipeline::sha256_file(&golden()).unwrap();
        assert_eq!(health["snapshot_sha256"], sha);

        let (_, schema) = call(&app, Method::GET, "/schema", None).await;
        assert_eq!((schema["entity_kind_count"].as_u64(), schema["signature_count"].as_u64()), (Some(15), Some(29)));

        let (status, found) = call(&app, Method::GET, "/entity?kind=dataset&surface=HRSC2016", None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(found.as_array().unwrap().len(), 1);

        let (status, err) = call(&app, Method::GET, "/entity?kind=dataset&surface=ImageNet", None).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
        assert_eq!(err["error"]["stage"], "lookup");

        let (status, _) = call(&app, Method::GET, "/entity?kind=spaceship&surface=x", None).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);

        let (status, paper) = call(&app, Method::GET, "/paper/C12-3001", None).await;
        assert_eq!(status, StatusCode::OK);
        assert!(paper.to_string().contains("Revisiting Arabic Semantic Role Labeling"));
        let (status, _) = call(&app, Method::GET, "/paper/NOPE", None).await;
        assert_eq!(status, StatusCode::NOT_FOUND);

        let (_, stats) = call(&app, Method::GET, "/stats", None).await;
        let g = akg_core::graph::GraphStore::load(&golden()).unwrap();
        assert_eq!(stats, serde_json::to_value(g.stats()).unwrap());

        let (status, _) = call(&app, Method::GET, "/nowhere", None).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
    });
}

#[test]
fn ask_route_and_its_limits() {
    let mut config = mock_config();
    config.service.max_question_chars = 120;
    config.service.ask_per_minute = 2;
    let app = service(&golden(), &config);
    runtime().block_on(async {
        let q = "Which datasets are used to evaluate remote sensing object detection?";
        let (status, body) = call(&app, Method::POST, "/ask", Some(json!({"question": q}))).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        assert_eq!(body["answer"], "DOTA-v1.0 and HRSC2016.");
        assert_eq!(body["completions"], 2);
        assert_eq!(body["mode"], "direct");

        let (status, _) = call(&app, Method::POST, "/ask", Some(json!({"question": "x".repeat(121)}))).await;
        assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
        let (status, _) = call(&app, Method::POST, "/ask", Some(json!({"question": "  "}))).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        let (status, _) = call(&app, Method::POST, "/ask", Some(json!({"nope": 1}))).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);

        // Unscripted question: the strict mock backend has no reply.
        let (status, err) = call(&app, Method::POST, "/ask", Some(json!({"question": "Who won in 1066?"}))).await;
        assert_eq!(status, StatusCode::BAD_GATEWAY, "{err}");

        let (status, _) = call(&app, Method::POST, "/ask", Some(json!({"question": q}))).await;
        assert_eq!(status, StatusCode::TOO_MANY_REQUESTS);
    });
}

#[test]
fn unreadable_snapshot_aborts_startup() {
    let dir = tempfile::tempdir().unwrap();
    let cut = dir.path().join("cut.snap");
    let text = std::fs::read(golden()).unwrap();
    std::fs::write(&cut, &text[..text.len() - 10]).unwrap();
    let config = mock_config();
    let gateway = akg::pipeline::make_gateway(&config).unwrap();
    assert!(akg::service::ServiceState::load(&cut, gateway, &Config::default()).is_err());
}
