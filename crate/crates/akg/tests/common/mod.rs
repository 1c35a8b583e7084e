#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use akg::config::Config;
use akg::pipeline;
use akg::service::{router, ServiceState};
use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use tower::ServiceExt;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn golden() -> PathBuf {
    fixtures().join("golden.snap")
}

pub fn corpus() -> PathBuf {
    fixtures().join("corpus.ndjson")
}

pub fn mock_config() -> Config {
    Config {
        fixtures: Some(fixtures().join("mock")),
        ..Config::default()
    }
}

/// The binary under test, pinned to the mock backend and shielded from the
/// caller's `AKG_*` environment.
pub fn akg() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_akg"));
    for (key, _) in std::env::vars() {
        if key.starts_with("AKG_") {
            cmd.env_remove(key);
        }
    }
    cmd.arg("--backend").arg("mock").arg("--fixtures").arg(fixtures().join("mock"));
    cmd
}

pub fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

pub fn stdout(output: &Output) -> String {
    assert!(
        output.status.success(),
        "exit {:?}\nstderr:\n{}",
        output.status.code(),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout.clone()).unwrap()
}

pub fn service(snapshot: &Path, config: &Config) -> Router {
    let gateway = pipeline::make_gateway(config).unwrap();
    router(Arc::new(ServiceState::load(snapshot, gateway, config).unwrap()))
}

pub fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap()
}

/// Send one request and return status plus parsed JSON body.
pub async fn call(app: &Router, method: Method, uri: &str, body: Option<serde_json::Value>) -> (StatusCode, serde_json::Value) {
    let mut request = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            request = request.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let response = app.clone().oneshot(request.body(body).unwrap()).await.unwrap();
    let status = response.status();
    let bytes = axum::body::to_bytes(response.into_body(), 1 << 24).await.unwrap();
    let value = if bytes.is_empty() { serde_json::Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}
